"""Bernstein-basis trajectory algebra.

A planar trajectory is a pair of degree-n Bernstein polynomials over a
shared time grid. Sampling the basis once turns evaluation, differentiation
and least-squares fitting into small dense matrix products against the
per-axis control-point vectors.
"""

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import InvalidInputError, NumericalError

DEFAULT_ORDER = 10
DEFAULT_WAYPOINTS = 50
DEFAULT_HORIZON = 4.9  # 50 samples on a 0.1 s grid starting at t=0


@dataclass(frozen=True)
class BasisMatrix:
    """Sampled Bernstein basis and its first two time derivatives.

    ``P[i, j]`` is basis function j at time ``times[i]``; ``dP``/``ddP`` are
    the analytic first/second time derivatives (units 1/s and 1/s^2).
    """

    order: int
    times: np.ndarray
    P: np.ndarray
    dP: np.ndarray
    ddP: np.ndarray

    @property
    def n_waypoints(self) -> int:
        return self.times.shape[0]


@dataclass(frozen=True)
class TrajectoryCoeffs:
    """Per-axis control points; the flattened form is ``[cx; cy]``."""

    cx: np.ndarray
    cy: np.ndarray

    def __post_init__(self):
        cx = np.asarray(self.cx, dtype=float)
        cy = np.asarray(self.cy, dtype=float)
        if cx.ndim != 1 or cx.shape != cy.shape:
            raise InvalidInputError(
                f"cx and cy must be equal-length vectors, got {cx.shape} and {cy.shape}")
        if not (np.isfinite(cx).all() and np.isfinite(cy).all()):
            raise InvalidInputError("control points must be finite")
        object.__setattr__(self, "cx", cx)
        object.__setattr__(self, "cy", cy)

    @property
    def order(self) -> int:
        return self.cx.shape[0] - 1

    def flat(self) -> np.ndarray:
        return np.concatenate([self.cx, self.cy])

    @classmethod
    def from_flat(cls, vec) -> "TrajectoryCoeffs":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.shape[0] % 2:
            raise InvalidInputError(f"flat coefficient vector must have even length, got {vec.shape}")
        half = vec.shape[0] // 2
        return cls(vec[:half], vec[half:])


@dataclass(frozen=True)
class Trajectory:
    """Waypoint samples of a planar curve, optionally with derivatives."""

    times: np.ndarray
    xy: np.ndarray
    vel: np.ndarray | None = None
    acc: np.ndarray | None = None


def _bernstein_rows(s: np.ndarray, deg: int) -> np.ndarray:
    """Rows of degree-``deg`` Bernstein polynomials at parameters ``s``."""
    j = np.arange(deg + 1)
    binom = np.array([comb(deg, int(k)) for k in j], dtype=float)
    sc = s[:, None]
    return binom * sc ** j * (1.0 - sc) ** (deg - j)


def build_basis(order: int, times) -> BasisMatrix:
    """Sample the Bernstein basis of ``order`` on a strictly increasing grid."""
    if order < 1:
        raise InvalidInputError(f"order must be >= 1, got {order}")
    times = np.ascontiguousarray(times, dtype=float)
    if times.ndim != 1 or times.shape[0] < 2:
        raise InvalidInputError("times must be a vector of at least 2 samples")
    if not np.all(np.diff(times) > 0.0):
        raise InvalidInputError("times must be strictly increasing")
    span = times[-1] - times[0]
    s = (times - times[0]) / span

    P = _bernstein_rows(s, order)
    lower = _bernstein_rows(s, order - 1)
    shift_hi = np.zeros_like(P)
    shift_hi[:, 1:] = lower
    shift_lo = np.zeros_like(P)
    shift_lo[:, :-1] = lower
    dP = (order / span) * (shift_hi - shift_lo)

    if order >= 2:
        low2 = _bernstein_rows(s, order - 2)
        a = np.zeros_like(P)
        a[:, 2:] = low2
        b = np.zeros_like(P)
        b[:, 1:-1] = low2
        c = np.zeros_like(P)
        c[:, :-2] = low2
        ddP = (order * (order - 1) / span ** 2) * (a - 2.0 * b + c)
    else:
        ddP = np.zeros_like(P)
    return BasisMatrix(order=order, times=times, P=P, dP=dP, ddP=ddP)


def canonical_basis(order: int = DEFAULT_ORDER,
                    n_waypoints: int = DEFAULT_WAYPOINTS,
                    horizon: float = DEFAULT_HORIZON) -> BasisMatrix:
    """The basis every pipeline stage shares: uniform grid over [0, horizon]."""
    return build_basis(order, np.linspace(0.0, horizon, n_waypoints))


def eval_trajectory(coeffs: TrajectoryCoeffs, basis: BasisMatrix,
                    with_derivatives: bool = False) -> Trajectory:
    """Evaluate waypoints (and optionally velocity/acceleration) from coefficients."""
    if coeffs.order != basis.order:
        raise InvalidInputError(
            f"coefficient order {coeffs.order} does not match basis order {basis.order}")
    xy = np.stack([basis.P @ coeffs.cx, basis.P @ coeffs.cy], axis=1)
    vel = acc = None
    if with_derivatives:
        vel = np.stack([basis.dP @ coeffs.cx, basis.dP @ coeffs.cy], axis=1)
        acc = np.stack([basis.ddP @ coeffs.cx, basis.ddP @ coeffs.cy], axis=1)
    return Trajectory(times=basis.times, xy=xy, vel=vel, acc=acc)


def fit_coeffs(waypoints, basis: BasisMatrix) -> tuple[TrajectoryCoeffs, float]:
    """Least-squares control points for a waypoint sequence.

    Solves the per-axis normal equations with a tiny diagonal regularizer;
    returns the coefficients and the Frobenius residual norm.
    """
    wp = np.asarray(waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[1] != 2:
        raise InvalidInputError(f"waypoints must be [N, 2], got {wp.shape}")
    if wp.shape[0] != basis.n_waypoints:
        raise InvalidInputError(
            f"waypoint count {wp.shape[0]} does not match basis grid {basis.n_waypoints}")
    if wp.shape[0] < basis.order + 1:
        raise InvalidInputError(
            f"need at least order+1={basis.order + 1} waypoints, got {wp.shape[0]}")
    gram = basis.P.T @ basis.P
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(
            f"basis Gram matrix is nearly rank-deficient (cond={cond:.3e}); "
            "the time grid is degenerate for this order")
    # Regularizer kept far below sigma_min so the fit bias stays under 1e-8.
    reg = 1e-14 * np.trace(gram) / gram.shape[0]
    sol = np.linalg.solve(gram + reg * np.eye(gram.shape[0]), basis.P.T @ wp)
    residual = float(np.linalg.norm(basis.P @ sol - wp))
    return TrajectoryCoeffs(sol[:, 0], sol[:, 1]), residual
