"""Backend selection for the per-step scalar kernels.

Imports the compiled extension when it is available, otherwise the pure
Python module. Set ``TRAFFICFORGE_PUREPY=1`` to force the fallback (used by
the benchmark and the backend-equivalence tests). Both backends are
bit-identical, so the choice never changes simulation output.
"""

import os

if os.environ.get("TRAFFICFORGE_PUREPY") == "1":
    from trafficforge import _pykernels as _impl
else:
    try:
        from trafficforge import _corekernels as _impl
    except ImportError:
        from trafficforge import _pykernels as _impl

BACKEND = _impl.BACKEND

wrap_angle = _impl.wrap_angle
desired_gap = _impl.desired_gap
idm_accel = _impl.idm_accel
lateral_velocity = _impl.lateral_velocity
required_heading = _impl.required_heading
heading_rate = _impl.heading_rate
steering_from_rate = _impl.steering_from_rate
longitudinal_command = _impl.longitudinal_command
step_kinematics = _impl.step_kinematics
steer_to_lane = _impl.steer_to_lane
