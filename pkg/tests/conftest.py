"""Shared pytest hooks: a per-criterion summary block for the acceptance run."""

CRITERIA = {
    "test_c1": "1 Bernstein suite (partition, endpoints, hull, derivatives, roundtrip)",
    "test_c2": "2 Autodiff finite-difference suite",
    "test_c3": "3 Collision-cost gradient (analytic vs FD, hand case)",
    "test_c4": "4 CFM sanity (Euler identities, bimodal toy, loss halving)",
    "test_c5": "5 Guidance ablation (paired candidate costs, closed-loop)",
    "test_c6": "6 Refinement boost and exact feasibility audit",
    "test_c7": "7 Scorer suite (equivariance, CE, accuracy, HLP)",
    "test_c8": "8 Per-plan latency p95",
    "test_c9": "9 Command-level determinism",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    seen = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance" not in report.nodeid:
                continue
            for key, label in CRITERIA.items():
                if key in report.nodeid:
                    seen[label] = "PASS" if status == "passed" else "FAIL"
    if not seen:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label in sorted(seen, key=lambda s: s.split()[0]):
        terminalreporter.write_line(f"criterion {label}: {seen[label]}")
