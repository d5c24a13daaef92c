"""Procedural 2D worlds: static shapes, crowd agents, robot start/goal."""

from dataclasses import dataclass

import numpy as np

from .errors import GenerationError, InvalidInputError
from ._kernels import rect_signed_distance

DIFFICULTIES = ("sparse", "dense", "corridor")


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float


@dataclass(frozen=True)
class AgentSpec:
    start: tuple
    goal: tuple
    pref_speed: float
    radius: float


@dataclass(frozen=True)
class WorldSpec:
    bounds: tuple                    # (xmin, ymin, xmax, ymax)
    rects: tuple = ()
    circles: tuple = ()
    agents: tuple = ()
    robot_start: tuple = (0.0, 0.0, 0.0)   # (x, y, theta)
    robot_goal: tuple = (8.0, 0.0)
    robot_radius: float = 0.3
    tag: str = "sparse"
    seed: int = 0

    def shape_arrays(self):
        rects = np.array([[r.xmin, r.ymin, r.xmax, r.ymax] for r in self.rects],
                         dtype=float).reshape(-1, 4)
        circles = np.array([[c.cx, c.cy, c.r] for c in self.circles],
                           dtype=float).reshape(-1, 3)
        return rects, circles


def _clearance_to_shapes(p, rects, circles):
    best = np.inf
    for r in rects:
        best = min(best, rect_signed_distance(p[0], p[1], np.array(
            [r.xmin, r.ymin, r.xmax, r.ymax])))
    for c in circles:
        best = min(best, float(np.hypot(p[0] - c.cx, p[1] - c.cy)) - c.r)
    return best


def _free_point(rng, bounds, rects, circles, margin, attempts=200):
    xmin, ymin, xmax, ymax = bounds
    for _ in range(attempts):
        p = rng.uniform([xmin + margin, ymin + margin], [xmax - margin, ymax - margin])
        if _clearance_to_shapes(p, rects, circles) >= margin:
            return p
    return None


def _sample_agents(rng, count, area, rects, circles, min_sep=0.7):
    agents = []
    placed = []
    for _ in range(count * 60):
        if len(agents) == count:
            break
        start = _free_point(rng, area, rects, circles, margin=0.4)
        goal = _free_point(rng, area, rects, circles, margin=0.4)
        if start is None or goal is None:
            continue
        if np.hypot(*(goal - start)) < 3.0:
            continue
        if any(np.hypot(*(start - q)) < min_sep for q in placed):
            continue
        placed.append(start)
        agents.append(AgentSpec(tuple(start), tuple(goal),
                                pref_speed=float(rng.uniform(0.4, 1.2)),
                                radius=float(rng.uniform(0.22, 0.32))))
    return agents if len(agents) == count else None


def _try_sparse(rng, seed):
    bounds = (-10.0, -10.0, 10.0, 10.0)
    rects, circles = [], []
    for _ in range(rng.integers(2, 5)):
        cx, cy = rng.uniform(-6, 6, size=2)
        if rng.random() < 0.5:
            w, h = rng.uniform(0.6, 2.2, size=2)
            rects.append(Rect(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2))
        else:
            circles.append(Circle(cx, cy, float(rng.uniform(0.3, 0.9))))
    agents = _sample_agents(rng, int(rng.integers(4, 7)), bounds, rects, circles)
    if agents is None:
        return None
    return _with_robot(rng, bounds, rects, circles, agents, "sparse", seed)


def _try_dense(rng, seed):
    bounds = (-8.0, -8.0, 8.0, 8.0)
    rects, circles = [], []
    for _ in range(rng.integers(3, 6)):
        cx, cy = rng.uniform(-4.5, 4.5, size=2)
        if rng.random() < 0.4:
            w, h = rng.uniform(0.5, 1.4, size=2)
            rects.append(Rect(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2))
        else:
            circles.append(Circle(cx, cy, float(rng.uniform(0.3, 0.6))))
    crowd_area = (-6.0, -6.0, 6.0, 6.0)  # agents packed inside 12 x 12 m
    agents = _sample_agents(rng, int(rng.integers(15, 19)), crowd_area,
                            rects, circles, min_sep=0.6)
    if agents is None:
        return None
    return _with_robot(rng, bounds, rects, circles, agents, "dense", seed)


def _try_corridor(rng, seed):
    bounds = (-10.0, -4.0, 10.0, 4.0)
    gap = float(rng.uniform(2.0, 3.0))
    half = gap / 2.0
    wall_len = float(rng.uniform(3.0, 5.0))
    rects = [Rect(-wall_len / 2, half, wall_len / 2, 4.0),
             Rect(-wall_len / 2, -4.0, wall_len / 2, -half)]
    circles = []
    agents = []
    count = int(rng.integers(8, 12))
    for i in range(count):
        y = float(rng.uniform(-half + 0.4, half - 0.4))
        x = float(rng.uniform(3.0, 9.0))
        if i % 2 == 0:
            start, goal = (x, y), (-x, float(rng.uniform(-half + 0.4, half - 0.4)))
        else:
            start, goal = (-x, y), (x, float(rng.uniform(-half + 0.4, half - 0.4)))
        agents.append(AgentSpec(start, goal,
                                pref_speed=float(rng.uniform(0.4, 1.0)),
                                radius=float(rng.uniform(0.22, 0.3))))
    return _with_robot(rng, bounds, rects, circles, agents, "corridor", seed,
                       start=(-8.5, 0.0, 0.0), goal=(8.5, 0.0))


def _with_robot(rng, bounds, rects, circles, agents, tag, seed, start=None, goal=None):
    margin = 0.5
    if start is None:
        for _ in range(100):
            s = _free_point(rng, bounds, rects, circles, margin)
            g = _free_point(rng, bounds, rects, circles, margin)
            if s is None or g is None:
                continue
            if np.hypot(*(g - s)) >= 8.0:
                heading = float(np.arctan2(g[1] - s[1], g[0] - s[0]))
                start = (float(s[0]), float(s[1]), heading)
                goal = (float(g[0]), float(g[1]))
                break
        else:
            return None
    if np.hypot(goal[0] - start[0], goal[1] - start[1]) < 8.0:
        return None
    return WorldSpec(bounds=bounds, rects=tuple(rects), circles=tuple(circles),
                     agents=tuple(agents), robot_start=start, robot_goal=tuple(goal),
                     tag=tag, seed=seed)


_BUILDERS = {"sparse": _try_sparse, "dense": _try_dense, "corridor": _try_corridor}


def sample_world(rng_seed: int, difficulty: str = "sparse") -> WorldSpec:
    """Deterministically generate a world of the given difficulty.

    ``dense`` packs at least 15 agents into a 12 x 12 m area; ``corridor``
    forces bidirectional flow through a gap of at most 3 m. The robot
    start-goal distance is always at least 8 m.
    """
    if difficulty not in _BUILDERS:
        raise InvalidInputError(f"unknown difficulty {difficulty!r}; pick from {DIFFICULTIES}")
    rng = np.random.default_rng([rng_seed, DIFFICULTIES.index(difficulty)])
    build = _BUILDERS[difficulty]
    for _ in range(1000):
        world = build(rng, rng_seed)
        if world is not None:
            return world
    raise GenerationError(
        f"could not generate a valid {difficulty} world for seed {rng_seed} in 1000 attempts")
