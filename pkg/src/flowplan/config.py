"""Run configuration: one structured document for every pipeline knob.

A ``RunConfig`` aggregates the per-module configs, validates cross-field
consistency at load time, and round-trips through JSON. The CLI applies
dotted ``--set section.key=value`` overrides on top of the loaded file.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field, asdict

from .errors import ConfigError

CONFIG_SCHEMA_VERSION = 1
CONFIG_ENV_VAR = "FLOWPLAN_CONFIG"


@dataclass
class BernsteinConfig:
    order: int = 10
    n_waypoints: int = 50
    horizon: float = 4.9  # (n_waypoints - 1) * 0.1 s


@dataclass
class SceneConfig:
    n_pts: int = 128            # point-cloud row cap (nearest hits kept)
    n_obs: int = 10             # dynamic obstacle row cap (nearest kept)
    n_rays: int = 360
    sensing_radius: float = 8.0
    sentinel: float = 1e3       # padding value; consumers mask by length


@dataclass
class SimConfig:
    dt: float = 0.1
    replan_every: int = 1       # planner invoked every this many sim steps
    goal_tolerance: float = 0.5
    timeout: float = 120.0
    v_max: float = 1.0
    a_max: float = 1.5
    robot_radius: float = 0.3
    lookahead: float = 0.6


@dataclass
class FlowNetConfig:
    d_model: int = 64
    unet_channels: tuple = (32, 64)
    time_embed_dim: int = 64
    fusion_heads: int = 8
    fusion_layers: int = 3
    dyn_heads: int = 4
    dyn_layers: int = 2
    euler_steps: int = 5
    guidance_scale: float = 1.0
    num_candidates: int = 10


@dataclass
class RefineConfig:
    d_safe: float = 0.5
    v_max: float = 1.0
    a_max: float = 1.5
    max_iters: int = 50
    step_size: float = 0.05
    proximity_weight: float = 1.0
    collision_weight: float = 150.0
    limit_weight: float = 600.0
    sharpness: float = 10.0     # hinge-smoothing curvature inside the optimizer only
    convergence_tol: float = 1e-4
    include_dynamic: bool = True
    dyn_inflation: float = 0.25  # agent radius added to d_safe for dynamic rows


@dataclass
class ScorerConfig:
    d_model: int = 64
    trans_heads: int = 8
    trans_layers: int = 4
    traj_channels: int = 32
    reg_weight: float = 0.1
    cost_weighted_ce: bool = False


@dataclass
class TrainConfig:
    batch_size: int = 32
    flow_lr: float = 1e-3
    scorer_lr: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    flow_steps: int = 3000
    scorer_steps: int = 2500
    scorer_batch: int = 6       # scenes accumulated per scorer Adam step
    checkpoint_every: int = 500


@dataclass
class EvalConfig:
    cost_w_collision: float = 10.0
    cost_w_smooth: float = 1.0
    cost_w_progress: float = 2.0
    runs_per_world: int = 3


@dataclass
class RunConfig:
    seed: int = 0
    bernstein: BernsteinConfig = field(default_factory=BernsteinConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    flow: FlowNetConfig = field(default_factory=FlowNetConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> "RunConfig":
        b, f, s = self.bernstein, self.flow, self.scorer
        if b.order < 1:
            raise ConfigError("bernstein.order must be >= 1")
        if b.n_waypoints < b.order + 1:
            raise ConfigError("bernstein.n_waypoints must be >= order + 1")
        expected = (b.n_waypoints - 1) * self.sim.dt
        if abs(b.horizon - expected) > 1e-9:
            raise ConfigError(
                f"bernstein.horizon {b.horizon} disagrees with "
                f"(n_waypoints-1)*sim.dt = {expected}")
        for name, heads in (("flow.fusion_heads", f.fusion_heads),
                            ("flow.dyn_heads", f.dyn_heads)):
            if f.d_model % heads:
                raise ConfigError(f"flow.d_model {f.d_model} not divisible by {name} {heads}")
        if s.d_model % s.trans_heads:
            raise ConfigError(
                f"scorer.d_model {s.d_model} not divisible by scorer.trans_heads {s.trans_heads}")
        if f.euler_steps < 1:
            raise ConfigError("flow.euler_steps must be >= 1")
        if f.guidance_scale < 0:
            raise ConfigError("flow.guidance_scale must be >= 0")
        if f.num_candidates < 2:
            raise ConfigError("flow.num_candidates must be >= 2")
        if self.refine.d_safe <= 0 or self.refine.max_iters < 1:
            raise ConfigError("refine.d_safe must be > 0 and refine.max_iters >= 1")
        if not 0.0 < self.sim.dt <= 0.2:
            raise ConfigError("sim.dt must lie in (0, 0.2]")
        return self


def _from_dict(cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object for {cls.__name__}, got {type(data).__name__}")
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        current = getattr(defaults, key)
        if dataclasses.is_dataclass(current):
            kwargs[key] = _from_dict(type(current), value)
        elif isinstance(current, tuple):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def config_to_dict(cfg: RunConfig) -> dict:
    doc = asdict(cfg)
    doc["schema_version"] = CONFIG_SCHEMA_VERSION
    return doc


def config_from_dict(doc: dict) -> RunConfig:
    doc = dict(doc)
    version = doc.pop("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            f"config schema version {version} unsupported (expected {CONFIG_SCHEMA_VERSION})")
    return _from_dict(RunConfig, doc).validate()


def load_config(path: str | None = None) -> RunConfig:
    """Load a config file, or defaults when no path is given or findable."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return RunConfig().validate()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return config_from_dict(doc)


def dump_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``section.key=value`` strings on top of a config."""
    doc = config_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        keys = dotted.strip().split(".")
        target = doc
        for key in keys[:-1]:
            if key not in target or not isinstance(target[key], dict):
                raise ConfigError(f"unknown config section {dotted!r}")
            target = target[key]
        if keys[-1] not in target:
            raise ConfigError(f"unknown config key {dotted!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target[keys[-1]] = value
    return config_from_dict(doc)
