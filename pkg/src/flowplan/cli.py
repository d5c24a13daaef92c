"""Command-line entry point: data generation, training, rollouts, benchmarks.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
All subcommands are deterministic under a fixed --seed and config; wall-clock
latency statistics go to stdout only, never into output files.
"""

import argparse
import os
import sys
import time

import numpy as np

from .benchmark import (hlp_open_loop, run_benchmark, suite_worlds,
                        write_hlp_csv, write_report_csv)
from .bernstein import canonical_basis
from .config import (CONFIG_SCHEMA_VERSION, apply_overrides, load_config)
from .costs import scenario_clearances
from .datagen import generate_records
from .dataset import read_dataset, write_dataset
from .errors import ConfigError, FlowPlanError
from .flow import load_flow, train_flow
from .params import CHECKPOINT_VERSION
from .planner import PipelinePlanner
from .render import render_frame, render_hlp_bars
from .scene import WorldView, make_scenario
from .sim import agents_from_world, run_episode, write_episode_csv
from .scorer import build_candidate_set, label_closest, load_scorer, \
    score_candidates, select_best, train_scorer
from .worlds import sample_world


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file (default: "
                                      "$FLOWPLAN_CONFIG or built-in defaults)")
    sub.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE", help="dotted config override")
    sub.add_argument("--seed", type=int, default=0)


def _load_cfg(args):
    cfg = load_config(args.config)
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    return cfg


def _basis(cfg):
    return canonical_basis(cfg.bernstein.order, cfg.bernstein.n_waypoints,
                           cfg.bernstein.horizon)


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    os.makedirs(args.out, exist_ok=True)
    flow_records = generate_records(cfg, args.count, args.seed)
    flow_path = os.path.join(args.out, "flow.jsonl")
    write_dataset(flow_records, flow_path)

    scorer_count = args.scorer_count
    if scorer_count is None:
        scorer_count = max(args.count // 5, 0)
    scorer_records = generate_records(cfg, scorer_count, args.seed + 1_000_000,
                                      with_expert=True)
    scorer_path = os.path.join(args.out, "scorer.jsonl")
    write_dataset(scorer_records, scorer_path)

    basis = _basis(cfg)
    safe = 0
    total = 0
    for r in flow_records + scorer_records:
        c_static, c_dyn = scenario_clearances(r.target_coeffs, basis, r.scenario)
        total += 1
        safe += int(c_static >= cfg.refine.d_safe - 1e-6
                    and c_dyn >= cfg.refine.d_safe + cfg.refine.dyn_inflation - 1e-6)
    tags = {}
    for r in flow_records:
        key = r.meta.get("tag", "?").split(":")[0]
        tags[key] = tags.get(key, 0) + 1
    print(f"wrote {len(flow_records)} flow records -> {flow_path}")
    print(f"wrote {len(scorer_records)} scorer records -> {scorer_path}")
    print(f"collision-free at d_safe: {safe}/{total}")
    print(f"difficulty mix: {tags}")
    return 0


def cmd_train_flow(args) -> int:
    cfg = _load_cfg(args)
    records = read_dataset(args.data, cfg.scene)
    store, _, log = train_flow(records, cfg, steps=args.steps, seed=args.seed,
                               out_path=args.out, resume=args.resume)
    log_path = args.out + ".log.csv"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for step, loss in log:
            fh.write(f"{step},{loss!r}\n")
    first = log[0][1] if log else float("nan")
    last = log[-1][1] if log else float("nan")
    print(f"trained {len(log)} steps on {len(records)} records "
          f"({store.n_parameters()} parameters)")
    print(f"loss: first {first:.4f} last {last:.4f} -> {args.out}")
    print(f"log -> {log_path}")
    return 0


def _heldout_split(records):
    train = [r for i, r in enumerate(records) if i % 5 != 4]
    held = [r for i, r in enumerate(records) if i % 5 == 4]
    return train, held


def cmd_train_scorer(args) -> int:
    cfg = _load_cfg(args)
    records = read_dataset(args.data, cfg.scene)
    flow_store, stats, flow_cfg, _ = load_flow(args.flow)
    basis = _basis(cfg)
    train_records, held = _heldout_split(records)
    store, log = train_scorer(flow_store, stats, flow_cfg, train_records, cfg,
                              steps=args.steps, seed=args.seed, basis=basis,
                              out_path=args.out, resume=args.resume)
    log_path = args.out + ".log.csv"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("step,loss,label\n")
        for step, loss, label in log:
            fh.write(f"{step},{loss!r},{label}\n")

    hits = 0
    total = 0
    for i, record in enumerate(held):
        if record.expert_xy is None:
            continue
        rng = np.random.default_rng([args.seed, 0xE7A1, i])
        cands = build_candidate_set(flow_store, stats, flow_cfg,
                                    record.scenario, cfg, rng, basis)
        label = label_closest(cands, record.expert_xy)
        picked = select_best(score_candidates(store, cands, record.scenario, cfg))
        hits += int(picked == label)
        total += 1
    chance = 1.0 / max(flow_cfg.num_candidates, 1)
    accuracy = hits / total if total else float("nan")
    print(f"trained {len(log)} steps on {len(train_records)} records -> {args.out}")
    print(f"held-out top-1 accuracy: {accuracy:.3f} over {total} scenes "
          f"(chance {chance:.3f})")
    return 0


def cmd_rollout(args) -> int:
    cfg = _load_cfg(args)
    basis = _basis(cfg)
    flow_store, stats, flow_cfg, _ = load_flow(args.flow)
    if args.scorer:
        scorer_store, _, _ = load_scorer(args.scorer)
        variant = "refine_scorer"
    else:
        scorer_store = None
        variant = "refine_cost"
        print("no scorer checkpoint given: falling back to cost-based selection")
    world = sample_world(args.world_seed, args.difficulty)
    planner = PipelinePlanner(variant, flow_store, stats, flow_cfg, cfg, basis,
                              scorer_store=scorer_store, seed=args.seed)

    frames = []
    observer = None
    if args.render:
        os.makedirs(args.out, exist_ok=True)

        def observer(step, robot, agents):
            frame = os.path.join(args.out, f"frame_{len(frames):04d}.svg")
            render_frame(frame, world, agents, robot.pose, planner.last,
                         world.robot_goal)
            frames.append(frame)

    result = run_episode(world, planner, cfg, observer=observer)
    os.makedirs(args.out, exist_ok=True)
    episode_path = os.path.join(args.out, "episode.csv")
    write_episode_csv(result, episode_path)
    print(f"outcome: {result.outcome}"
          + (f" ({result.diagnostic})" if result.diagnostic else ""))
    print(f"path {result.path_length:.2f} m in {result.duration:.1f} s "
          f"(mean speed {result.mean_speed:.2f} m/s)")
    print(f"episode log -> {episode_path}")
    if args.render:
        print(f"{len(frames)} frames -> {args.out}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    basis = _basis(cfg)
    flow_store, stats, flow_cfg, _ = load_flow(args.flow)
    scorer_store = None
    if args.scorer:
        scorer_store, _, _ = load_scorer(args.scorer)
    variants = args.variants.split(",") if args.variants else None
    if variants is None:
        variants = ["vanilla", "guided", "refine_cost"]
        if scorer_store is not None:
            variants.append("refine_scorer")
    if "refine_scorer" in variants and scorer_store is None:
        raise ConfigError("variant refine_scorer requires --scorer")

    worlds = suite_worlds(args.suite, args.scenes, args.seed)
    os.makedirs(args.out, exist_ok=True)

    t_total = time.perf_counter()
    report = run_benchmark(worlds, variants, args.runs, args.seed, flow_store,
                           stats, flow_cfg, cfg, basis,
                           scorer_store=scorer_store)
    t_total = time.perf_counter() - t_total

    report_path = os.path.join(args.out, "report.csv")
    write_report_csv(report, report_path)
    print(f"bench: {len(worlds)} worlds x {args.runs} runs x {variants}")
    for row in report.rows:
        print(f"  {row.variant:14s} {row.world:9s} rate {row.rate:.2f} "
              f"({row.successes}/{row.runs})")
    print(f"report -> {report_path}  (wall time {t_total:.1f} s)")

    latencies = {v: [] for v in variants}
    for variant in variants:
        world = worlds[0]
        planner = PipelinePlanner(variant, flow_store, stats, flow_cfg, cfg,
                                  basis, scorer_store=scorer_store,
                                  seed=args.seed)
        rects, circles = world.shape_arrays()
        agents = agents_from_world(world)
        rows = np.array([[a.pos[0], a.pos[1], a.vel[0], a.vel[1]]
                         for a in agents]).reshape(-1, 4)
        scn = make_scenario(WorldView(rects, circles, rows,
                                      np.asarray(world.robot_goal)),
                            world.robot_start, cfg.scene)
        planner(scn)  # warm caches before timing
        for _ in range(args.latency_samples):
            t0 = time.perf_counter()
            planner(scn)
            latencies[variant].append(1e3 * (time.perf_counter() - t0))
        lat = np.array(latencies[variant])
        print(f"latency {variant:14s} mean {lat.mean():.1f} ms  "
              f"p95 {np.percentile(lat, 95):.1f} ms")

    if scorer_store is not None and args.data:
        records = read_dataset(args.data, cfg.scene)
        pairs = hlp_open_loop(records, flow_store, stats, flow_cfg, cfg, basis,
                              scorer_store, args.seed)
        hlp_csv = os.path.join(args.out, "hlp.csv")
        write_hlp_csv(pairs, hlp_csv)
        render_hlp_bars(os.path.join(args.out, "hlp.svg"), pairs)
        wins = sum(1 for _, s, c in pairs if s <= c)
        print(f"hlp pairs -> {hlp_csv} (scorer <= cost on {wins}/{len(pairs)} scenes)")
    elif scorer_store is not None:
        print("no --data given: skipping the open-loop HLP comparison")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="flowplan", description=__doc__)
    parser.add_argument("--version", action="version",
                        version=f"flowplan 0.1.0 (config schema v{CONFIG_SCHEMA_VERSION}, "
                                f"checkpoint format v{CHECKPOINT_VERSION})")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-data", help="generate synthetic training datasets")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, required=True, help="flow-set record count")
    p.add_argument("--scorer-count", type=int, default=None,
                   help="scorer-set record count (default count/5)")
    p.set_defaults(func=cmd_gen_data)

    p = subs.add_parser("train-flow", help="train the flow-matching generator")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=cmd_train_flow)

    p = subs.add_parser("train-scorer", help="train the trajectory scorer")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset with expert waypoints")
    p.add_argument("--flow", required=True, help="frozen flow checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--resume", default=None)
    p.set_defaults(func=cmd_train_scorer)

    p = subs.add_parser("rollout", help="run one closed-loop episode")
    _add_common(p)
    p.add_argument("--flow", required=True)
    p.add_argument("--scorer", default=None)
    p.add_argument("--world-seed", type=int, default=0)
    p.add_argument("--difficulty", default="dense",
                   choices=("sparse", "dense", "corridor"))
    p.add_argument("--render", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_rollout)

    p = subs.add_parser("bench", help="run the benchmark suite")
    _add_common(p)
    p.add_argument("--flow", required=True)
    p.add_argument("--scorer", default=None)
    p.add_argument("--data", default=None, help="scorer dataset for HLP pairs")
    p.add_argument("--suite", default="dense",
                   choices=("sparse", "dense", "corridor", "mixed"))
    p.add_argument("--scenes", type=int, default=6)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--variants", default=None,
                   help="comma-separated subset of vanilla,guided,refine_cost,refine_scorer")
    p.add_argument("--latency-samples", type=int, default=20)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (FlowPlanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
