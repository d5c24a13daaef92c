"""Closed-loop 2D crowd simulator.

Agents follow a social-force model (goal attraction, exponential repulsion
from agents/robot/shapes, right-hand bias); the robot is a unicycle with
velocity and acceleration clamps tracked by a pure-pursuit follower.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import RunConfig, SimConfig
from .scene import WorldView, make_scenario
from .worlds import WorldSpec
from ._kernels import disc_clearance, social_force_step

# (tau, rep_a, rep_b, rep_cut, bias, wall_a, wall_b, slow_radius)
SOCIAL_PARAMS = np.array([0.5, 2.0, 0.9, 3.0, 0.8, 3.0, 0.15, 0.5])

OUTCOMES = ("success", "collision", "timeout", "error")


@dataclass(frozen=True)
class AgentState:
    pos: np.ndarray
    vel: np.ndarray
    goal: np.ndarray
    pref_speed: float
    radius: float


@dataclass(frozen=True)
class RobotState:
    pose: tuple            # (x, y, theta)
    vel: tuple = (0.0, 0.0)  # (v, omega)
    radius: float = 0.3
    v_max: float = 1.0
    a_max: float = 1.5


@dataclass
class StepLog:
    time: float
    pose: tuple
    v: float
    omega: float
    cand_idx: int
    min_clearance: float


@dataclass
class EpisodeResult:
    outcome: str
    path_length: float
    duration: float
    mean_speed: float
    step_log: list = field(default_factory=list)
    diagnostic: str = ""


def agents_from_world(world: WorldSpec) -> list:
    """Instantiate agents at their spawn points, moving at preferred speed."""
    agents = []
    for spec in world.agents:
        start = np.asarray(spec.start, dtype=float)
        goal = np.asarray(spec.goal, dtype=float)
        to_goal = goal - start
        dist = np.hypot(to_goal[0], to_goal[1])
        vel = spec.pref_speed * to_goal / dist if dist > 1e-9 else np.zeros(2)
        agents.append(AgentState(start, vel, goal, spec.pref_speed, spec.radius))
    return agents


def step_agents(agents, rects, circles, dt, robot: RobotState | None = None) -> list:
    """Advance every agent one social-force step (deterministic)."""
    if not agents:
        return []
    pos = np.array([a.pos for a in agents])
    vel = np.array([a.vel for a in agents])
    goals = np.array([a.goal for a in agents])
    pref = np.array([a.pref_speed for a in agents])
    radii = np.array([a.radius for a in agents])
    if robot is not None:
        robot_xyr = np.array([robot.pose[0], robot.pose[1], robot.radius])
        active = True
    else:
        robot_xyr = np.zeros(3)
        active = False
    new_pos, new_vel = social_force_step(pos, vel, goals, pref, radii, rects,
                                         circles, robot_xyr, active, dt,
                                         SOCIAL_PARAMS)
    return [replace(a, pos=new_pos[i], vel=new_vel[i]) for i, a in enumerate(agents)]


def step_robot(robot: RobotState, cmd, dt: float) -> RobotState:
    """Unicycle step with speed/acceleration clamps and exact-arc integration."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v_cmd = float(np.clip(cmd[0], -robot.v_max, robot.v_max))
    dv = float(np.clip(v_cmd - robot.vel[0], -robot.a_max * dt, robot.a_max * dt))
    v = robot.vel[0] + dv
    omega = float(cmd[1])
    x, y, theta = robot.pose
    if abs(omega) < 1e-12:
        x += v * math.cos(theta) * dt
        y += v * math.sin(theta) * dt
    else:
        radius = v / omega
        x += radius * (math.sin(theta + omega * dt) - math.sin(theta))
        y += -radius * (math.cos(theta + omega * dt) - math.cos(theta))
    theta = math.atan2(math.sin(theta + omega * dt), math.cos(theta + omega * dt))
    return replace(robot, pose=(x, y, theta), vel=(v, omega))


def check_collision(robot: RobotState, agents, rects, circles):
    """(collided, min signed surface distance); tangency does not collide."""
    agent_xyr = np.array([[a.pos[0], a.pos[1], a.radius] for a in agents],
                         dtype=float).reshape(-1, 3)
    clearance = disc_clearance(robot.pose[0], robot.pose[1], robot.radius,
                               agent_xyr, rects, circles)
    return clearance < 0.0, float(clearance)


def pure_pursuit(pose, traj_xy, traj_times, sim: SimConfig):
    """(v, omega) command tracking a world-frame waypoint sequence."""
    px, py, theta = pose
    rel = traj_xy - np.array([px, py])
    dists = np.hypot(rel[:, 0], rel[:, 1])
    nearest = int(np.argmin(dists))
    target = None
    for j in range(nearest, traj_xy.shape[0]):
        if dists[j] >= sim.lookahead:
            target = j
            break
    if target is None:
        target = traj_xy.shape[0] - 1
    if nearest + 1 < traj_xy.shape[0]:
        seg = traj_xy[nearest + 1] - traj_xy[nearest]
        seg_dt = traj_times[nearest + 1] - traj_times[nearest]
    else:
        seg = traj_xy[-1] - traj_xy[-2]
        seg_dt = traj_times[-1] - traj_times[-2]
    v_nom = min(sim.v_max, float(np.hypot(seg[0], seg[1])) / max(seg_dt, 1e-9))
    dx, dy = traj_xy[target] - np.array([px, py])
    alpha = math.atan2(dy, dx) - theta
    alpha = math.atan2(math.sin(alpha), math.cos(alpha))
    if dists[target] < 1e-6:
        return 0.0, 0.0
    if abs(alpha) > math.pi / 3:
        # target far off-axis: rotate toward it, creep forward
        return 0.2 * v_nom, float(np.clip(2.0 * alpha, -2.5, 2.5))
    v = v_nom * max(0.2, math.cos(alpha))
    lookahead = max(dists[target], 1e-6)
    omega = 2.0 * v * math.sin(alpha) / lookahead
    return v, float(np.clip(omega, -2.5, 2.5))


def ego_to_world(pose, xy_ego):
    px, py, theta = pose
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return xy_ego @ rot.T + np.array([px, py])


def run_episode(world: WorldSpec, planner, cfg: RunConfig,
                observer=None) -> EpisodeResult:
    """Run one planner-in-the-loop episode.

    ``planner`` maps a Scenario to an ego-frame Trajectory; it may instead
    return ``(Trajectory, candidate_index)``, in which case the index lands
    in the step log. A planner exception aborts with outcome ``error``.
    ``observer(step, robot, agents)``, when given, fires after every replan
    (rendering hook; it must not mutate its arguments).
    """
    sim = cfg.sim
    rects, circles = world.shape_arrays()
    agents = agents_from_world(world)
    robot = RobotState(pose=world.robot_start, radius=sim.robot_radius,
                       v_max=sim.v_max, a_max=sim.a_max)
    goal = np.asarray(world.robot_goal, dtype=float)

    max_steps = int(round(sim.timeout / sim.dt))
    log: list[StepLog] = []
    path_length = 0.0
    traj_world = None
    traj_times = None
    cand_idx = -1
    outcome = "timeout"
    diagnostic = ""
    steps_done = 0

    for step in range(max_steps):
        if step % sim.replan_every == 0:
            agent_rows = np.array([[a.pos[0], a.pos[1], a.vel[0], a.vel[1]]
                                   for a in agents], dtype=float).reshape(-1, 4)
            view = WorldView(rects=rects, circles=circles, agents=agent_rows,
                             robot_goal=goal)
            scenario = make_scenario(view, robot.pose, cfg.scene)
            try:
                plan = planner(scenario)
            except Exception as exc:  # noqa: BLE001 - planner is a callback
                outcome = "error"
                diagnostic = f"planner failed at t={step * sim.dt:.1f}s: {exc}"
                steps_done = step
                break
            if isinstance(plan, tuple):
                traj, cand_idx = plan
            else:
                traj, cand_idx = plan, -1
            traj_world = ego_to_world(robot.pose, traj.xy)
            traj_times = traj.times
            if observer is not None:
                observer(step, robot, agents)

        cmd = pure_pursuit(robot.pose, traj_world, traj_times, sim)
        prev = np.array(robot.pose[:2])
        robot = step_robot(robot, cmd, sim.dt)
        agents = step_agents(agents, rects, circles, sim.dt, robot)
        path_length += float(np.hypot(*(np.array(robot.pose[:2]) - prev)))

        collided, clearance = check_collision(robot, agents, rects, circles)
        now = (step + 1) * sim.dt
        log.append(StepLog(now, robot.pose, robot.vel[0], robot.vel[1],
                           cand_idx, clearance))
        steps_done = step + 1
        if collided:
            outcome = "collision"
            break
        if np.hypot(*(np.array(robot.pose[:2]) - goal)) <= sim.goal_tolerance:
            outcome = "success"
            break

    duration = steps_done * sim.dt
    mean_speed = path_length / duration if duration > 0 else 0.0
    return EpisodeResult(outcome=outcome, path_length=path_length,
                         duration=duration, mean_speed=mean_speed,
                         step_log=log, diagnostic=diagnostic)


def write_episode_csv(result: EpisodeResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,time,x,y,theta,v,omega,cand_idx,min_clearance\n")
        for i, entry in enumerate(result.step_log):
            x, y, theta = entry.pose
            fh.write(f"{i},{entry.time!r},{x!r},{y!r},{theta!r},"
                     f"{entry.v!r},{entry.omega!r},{entry.cand_idx},"
                     f"{entry.min_clearance!r}\n")
