"""Benchmark harness: closed-loop episode sweeps over planner variants and
the paired open-loop HLP comparison between the learned scorer and the
hand-tuned cost selector.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .bernstein import BasisMatrix
from .config import RunConfig, config_to_dict
from .metrics import cost_select, hlp
from .planner import VARIANTS, PipelinePlanner
from .scorer import build_candidate_set, score_candidates, select_best
from .sim import run_episode
from .worlds import sample_world


@dataclass(frozen=True)
class ReportRow:
    variant: str
    world: str
    runs: int
    successes: int
    rate: float
    mean_len: float | None
    mean_time: float | None
    mean_vel: float | None


@dataclass
class BenchmarkReport:
    rows: list
    episodes: list = field(default_factory=list)   # (variant, world, run, EpisodeResult)
    hlp_pairs: list = field(default_factory=list)  # (scene_id, hlp_scorer, hlp_cost)
    seed: int = 0
    config_fingerprint: str = ""


def config_fingerprint(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), sort_keys=True)


def suite_worlds(name: str, count: int, seed: int) -> list:
    """A named world suite: sparse / dense / corridor / mixed."""
    if name == "mixed":
        kinds = ["sparse", "dense", "corridor"]
        return [sample_world(seed + i, kinds[i % 3]) for i in range(count)]
    return [sample_world(seed + i, name) for i in range(count)]


def aggregate_rows(episodes) -> list:
    """Collapse per-episode results into per (variant, world-tag) report rows."""
    groups: dict = {}
    for variant, world_tag, _, result in episodes:
        groups.setdefault((variant, world_tag), []).append(result)
    rows = []
    for (variant, world_tag), results in sorted(groups.items()):
        runs = len(results)
        wins = [r for r in results if r.outcome == "success"]
        if wins:
            mean_len = float(np.mean([r.path_length for r in wins]))
            mean_time = float(np.mean([r.duration for r in wins]))
            mean_vel = float(np.mean([r.mean_speed for r in wins]))
        else:
            mean_len = mean_time = mean_vel = None
        rows.append(ReportRow(variant, world_tag, runs, len(wins),
                              len(wins) / runs if runs else 0.0,
                              mean_len, mean_time, mean_vel))
    return rows


def run_benchmark(worlds, variants, runs_per_world: int, seed: int,
                  flow_store, stats, flow_cfg, run_cfg: RunConfig,
                  basis: BasisMatrix, scorer_store=None,
                  progress=None) -> BenchmarkReport:
    """Closed-loop sweep; deterministic in its arguments.

    Per-run variation comes from the planner's sampling seed, derived from
    (seed, variant, world index, run index).
    """
    episodes = []
    for v_idx, variant in enumerate(variants):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        for w_idx, world in enumerate(worlds):
            for run in range(runs_per_world):
                plan_seed = int(np.random.SeedSequence(
                    [seed, v_idx, w_idx, run]).generate_state(1)[0])
                planner = PipelinePlanner(variant, flow_store, stats, flow_cfg,
                                          run_cfg, basis,
                                          scorer_store=scorer_store,
                                          seed=plan_seed)
                result = run_episode(world, planner, run_cfg)
                episodes.append((variant, world.tag, run, result))
                if progress is not None:
                    progress(variant, w_idx, run, result)
    return BenchmarkReport(rows=aggregate_rows(episodes), episodes=episodes,
                           seed=seed, config_fingerprint=config_fingerprint(run_cfg))


def hlp_open_loop(records, flow_store, stats, flow_cfg, run_cfg: RunConfig,
                  basis: BasisMatrix, scorer_store, seed: int) -> list:
    """Paired HLP on stored expert scenes: both selectors, same candidates."""
    pairs = []
    for i, record in enumerate(records):
        if record.expert_xy is None:
            continue
        rng = np.random.default_rng([seed, 0x419, i])
        cands = build_candidate_set(flow_store, stats, flow_cfg,
                                    record.scenario, run_cfg, rng, basis)
        scores = score_candidates(scorer_store, cands, record.scenario, run_cfg)
        pick_scorer = select_best(scores)
        pick_cost = cost_select(cands, record.scenario, basis, run_cfg.eval,
                                d_safe=run_cfg.refine.d_safe,
                                include_dynamic=run_cfg.refine.include_dynamic,
                                dyn_margin=run_cfg.refine.dyn_inflation)
        scene_id = record.meta.get("scene", i)
        pairs.append((scene_id,
                      hlp(cands.trajectories[pick_scorer], record.expert_xy),
                      hlp(cands.trajectories[pick_cost], record.expert_xy)))
    return pairs


def _cell(value) -> str:
    return "" if value is None else repr(value)


def write_report_csv(report: BenchmarkReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("variant,world,runs,successes,rate,mean_len_m,mean_time_s,mean_vel_mps\n")
        for row in report.rows:
            fh.write(f"{row.variant},{row.world},{row.runs},{row.successes},"
                     f"{row.rate!r},{_cell(row.mean_len)},{_cell(row.mean_time)},"
                     f"{_cell(row.mean_vel)}\n")


def write_hlp_csv(pairs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("scene_id,hlp_scorer,hlp_cost\n")
        for scene_id, hlp_scorer, hlp_cost in pairs:
            fh.write(f"{scene_id},{hlp_scorer!r},{hlp_cost!r}\n")
