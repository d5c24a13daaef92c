"""Hot numeric kernels with an optional numba-accelerated path.

The env flag ``FLOWPLAN_NUMBA`` selects the backend: ``0``/``false``/``off``
forces the pure-NumPy reference implementations; anything else (or unset)
uses the JIT path when numba imports. ``USING_NUMBA`` reports the choice.
"""

import os

from . import reference

_flag = os.environ.get("FLOWPLAN_NUMBA", "1").strip().lower()

if _flag in ("0", "false", "off", "no"):
    _impl = reference
    USING_NUMBA = False
else:
    try:
        from . import accel as _impl
        USING_NUMBA = True
    except ImportError:
        _impl = reference
        USING_NUMBA = False

def accel_available() -> bool:
    try:
        from . import accel  # noqa: F401
        return True
    except ImportError:
        return False


hinge_collision_cost = _impl.hinge_collision_cost
hinge_collision_cost_grad = _impl.hinge_collision_cost_grad
smooth_hinge_cost_grad = _impl.smooth_hinge_cost_grad
refine_objective = _impl.refine_objective
min_point_clearance = _impl.min_point_clearance
rect_signed_distance = _impl.rect_signed_distance
disc_clearance = _impl.disc_clearance
cast_rays = _impl.cast_rays
social_force_step = _impl.social_force_step
