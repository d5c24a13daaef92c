"""Dataset records and JSON-lines serialization.

One record per line. Floats are stored as float32 values printed with
round-trip precision, so write -> read is bitwise lossless for f32 data.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .bernstein import TrajectoryCoeffs
from .config import SceneConfig
from .errors import ParseError, VersionError
from .scene import Scenario

DATASET_VERSION = 1


@dataclass(frozen=True)
class DatasetRecord:
    scenario: Scenario
    target_coeffs: TrajectoryCoeffs
    expert_xy: np.ndarray | None = None   # [N, 2], scorer-training records only
    meta: dict = field(default_factory=dict)


def _f32_list(arr) -> list:
    return [float(v) for v in np.asarray(arr, dtype=np.float32).reshape(-1)]


def _f32_rows(arr, width) -> list:
    a = np.asarray(arr, dtype=np.float32).reshape(-1, width)
    return [[float(v) for v in row] for row in a]


def record_to_dict(rec: DatasetRecord) -> dict:
    doc = {
        "version": DATASET_VERSION,
        "seed": int(rec.meta.get("seed", 0)),
        "pcd": _f32_rows(rec.scenario.static_points(), 2),
        "dyn": _f32_rows(rec.scenario.dynamic_rows(), 4),
        "goal": _f32_list(rec.scenario.goal_heading),
        "coeffs_x": _f32_list(rec.target_coeffs.cx),
        "coeffs_y": _f32_list(rec.target_coeffs.cy),
    }
    if rec.expert_xy is not None:
        doc["expert_xy"] = _f32_rows(rec.expert_xy, 2)
    extra = {k: v for k, v in rec.meta.items() if k != "seed"}
    if extra:
        doc["meta"] = extra
    return doc


def record_from_dict(doc: dict, cfg: SceneConfig) -> DatasetRecord:
    pcd_rows = np.array(doc["pcd"], dtype=np.float32).reshape(-1, 2).astype(float)
    dyn_rows = np.array(doc["dyn"], dtype=np.float32).reshape(-1, 4).astype(float)
    if pcd_rows.shape[0] > cfg.n_pts or dyn_rows.shape[0] > cfg.n_obs:
        raise ParseError(
            f"record holds {pcd_rows.shape[0]} pcd / {dyn_rows.shape[0]} dyn rows, "
            f"config caps are {cfg.n_pts} / {cfg.n_obs}")
    pcd = np.full((cfg.n_pts, 2), cfg.sentinel)
    pcd[:pcd_rows.shape[0]] = pcd_rows
    dyn = np.zeros((cfg.n_obs, 4))
    dyn[:, :2] = cfg.sentinel
    dyn[:dyn_rows.shape[0]] = dyn_rows
    goal = np.array(doc["goal"], dtype=np.float32).astype(float)
    scenario = Scenario(pcd, pcd_rows.shape[0], dyn, dyn_rows.shape[0], goal)
    coeffs = TrajectoryCoeffs(
        np.array(doc["coeffs_x"], dtype=np.float32).astype(float),
        np.array(doc["coeffs_y"], dtype=np.float32).astype(float))
    expert = None
    if "expert_xy" in doc:
        expert = np.array(doc["expert_xy"], dtype=np.float32).reshape(-1, 2).astype(float)
    meta = {"seed": int(doc.get("seed", 0))}
    meta.update(doc.get("meta", {}))
    return DatasetRecord(scenario, coeffs, expert, meta)


def quantize_record(rec: DatasetRecord) -> DatasetRecord:
    """Snap every float field to its float32 value (kept as float64).

    Generated records pass through this before use, so in-memory records
    and serialized-then-reloaded records are bitwise identical.
    """
    f32 = lambda a: np.asarray(a, dtype=np.float32).astype(float)
    scn = rec.scenario
    scenario = Scenario(f32(scn.pointcloud), scn.pointcloud_len,
                        f32(scn.dyn_obstacles), scn.dyn_len,
                        f32(scn.goal_heading))
    coeffs = TrajectoryCoeffs(f32(rec.target_coeffs.cx), f32(rec.target_coeffs.cy))
    expert = None if rec.expert_xy is None else f32(rec.expert_xy)
    return DatasetRecord(scenario, coeffs, expert, dict(rec.meta))


def write_dataset(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec), separators=(",", ":")))
            fh.write("\n")


def read_dataset(path, cfg: SceneConfig | None = None) -> list:
    """Read records, padding scenarios back out to the config caps."""
    cfg = cfg or SceneConfig()
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: not valid JSON ({exc.msg})") from None
            version = doc.get("version")
            if version != DATASET_VERSION:
                raise VersionError(
                    f"line {lineno}: dataset version {version} unsupported "
                    f"(expected {DATASET_VERSION})")
            try:
                records.append(record_from_dict(doc, cfg))
            except (KeyError, ValueError) as exc:
                raise ParseError(f"line {lineno}: malformed record ({exc})") from None
    return records
