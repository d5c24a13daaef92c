"""Synthetic dataset generation: worlds, warmed-up crowds, oracle targets.

Every scene is a pure function of (base seed, scene index), so generation
is reproducible and trivially parallel. Scenes whose oracle produces no
feasible trajectory are skipped deterministically.
"""

import numpy as np

from .bernstein import canonical_basis
from .config import RunConfig
from .dataset import DatasetRecord, quantize_record
from .errors import GenerationError
from .oracle import expert_oracle, expert_oracle_multi
from .scene import WorldView, make_scenario
from .sim import RobotState, agents_from_world, step_agents
from .worlds import sample_world
from ._kernels import rect_signed_distance

DIFFICULTY_CYCLE = ("sparse", "dense", "corridor")


def _robot_pose(rng, world, cfg: RunConfig):
    """A plausible mid-episode pose: partway along the route, heading jittered.

    Keeping every record at the spawn pose facing the goal would collapse the
    goal-heading input to (1, 0); the conditioning only carries signal if
    poses vary the way they do mid-episode.
    """
    start = np.asarray(world.robot_start[:2], dtype=float)
    goal = np.asarray(world.robot_goal, dtype=float)
    rects, circles = world.shape_arrays()
    xmin, ymin, xmax, ymax = world.bounds
    for _ in range(20):
        alpha = rng.uniform(0.0, 0.6)
        pos = start + alpha * (goal - start) + rng.uniform(-1.2, 1.2, size=2)
        if not (xmin + 0.5 < pos[0] < xmax - 0.5 and ymin + 0.5 < pos[1] < ymax - 0.5):
            continue
        clear = min(
            (rect_signed_distance(pos[0], pos[1], r) for r in rects),
            default=np.inf)
        circ = min((float(np.hypot(pos[0] - c[0], pos[1] - c[1])) - c[2]
                    for c in circles), default=np.inf)
        if min(clear, circ) < cfg.sim.robot_radius + 0.2:
            continue
        heading = float(np.arctan2(goal[1] - pos[1], goal[0] - pos[0])
                        + rng.uniform(-1.1, 1.1))
        return (float(pos[0]), float(pos[1]), heading)
    return world.robot_start


def scene_snapshot(cfg: RunConfig, seed: int, scene_idx: int):
    """World + warmed-up crowd + the robot's ego-frame scenario."""
    rng = np.random.default_rng([seed, 0xDA7A, scene_idx])
    difficulty = DIFFICULTY_CYCLE[scene_idx % len(DIFFICULTY_CYCLE)]
    world = sample_world(int(rng.integers(0, 2 ** 31)), difficulty)
    rects, circles = world.shape_arrays()
    agents = agents_from_world(world)
    pose = _robot_pose(rng, world, cfg)
    robot = RobotState(pose=pose, radius=cfg.sim.robot_radius,
                       v_max=cfg.sim.v_max, a_max=cfg.sim.a_max)
    for _ in range(int(rng.integers(0, 25))):
        agents = step_agents(agents, rects, circles, cfg.sim.dt, robot)
    agent_rows = np.array([[a.pos[0], a.pos[1], a.vel[0], a.vel[1]]
                           for a in agents], dtype=float).reshape(-1, 4)
    view = WorldView(rects=rects, circles=circles, agents=agent_rows,
                     robot_goal=np.asarray(world.robot_goal, dtype=float))
    scenario = make_scenario(view, pose, cfg.scene)
    return world, scenario, difficulty


def generate_records(cfg: RunConfig, count: int, seed: int,
                     with_expert: bool = False) -> list:
    """``count`` dataset records.

    Flow-training mode (default) emits up to three feasible homotopy modes
    per scene; scorer mode (``with_expert``) emits one record per scene with
    the expert waypoints attached. Raises after a bounded number of barren
    scenes.
    """
    basis = canonical_basis(cfg.bernstein.order, cfg.bernstein.n_waypoints,
                            cfg.bernstein.horizon)
    records = []
    scene_idx = 0
    barren = 0
    while len(records) < count:
        if barren > 200 + 4 * count:
            raise GenerationError(
                f"gave up after {barren} scenes without feasible oracle output")
        world, scenario, difficulty = scene_snapshot(cfg, seed, scene_idx)
        scene_idx += 1
        if with_expert:
            result = expert_oracle(scenario, basis, cfg.refine)
            if not result.feasible:
                barren += 1
                continue
            records.append(quantize_record(DatasetRecord(
                scenario, result.coeffs, result.trajectory.xy,
                {"seed": seed, "scene": scene_idx - 1, "tag": difficulty})))
        else:
            modes = expert_oracle_multi(scenario, basis, cfg.refine)
            if not modes:
                barren += 1
                continue
            for mode in modes:
                if len(records) == count:
                    break
                records.append(quantize_record(DatasetRecord(
                    scenario, mode.coeffs, None,
                    {"seed": seed, "scene": scene_idx - 1,
                     "tag": f"{difficulty}:{mode.label}"})))
    return records
