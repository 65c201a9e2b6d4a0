"""Hot numeric kernels for policy training.

The compiled extension is preferred; the pure-NumPy implementation is used
when the extension is unavailable or ``ANIMAT_PURE_PYTHON=1`` is set.
Both expose ``mlp_forward``, ``mlp_backward`` and ``adam_step`` with
identical semantics (results may differ in the last float bits).
"""

import os

from . import pure

if os.environ.get("ANIMAT_PURE_PYTHON") == "1":
    _impl = pure
else:
    try:
        from . import _fast as _impl
    except ImportError:
        _impl = pure

BACKEND = _impl.BACKEND
mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
adam_step = _impl.adam_step

# fused hot-loop routines exist only in the extension; callers fall back to
# composing the primitives above
policy_act = getattr(_impl, "policy_act", None)
sac_update_fused = getattr(_impl, "sac_update_fused", None)
HAS_FUSED = sac_update_fused is not None

__all__ = ["BACKEND", "HAS_FUSED", "mlp_forward", "mlp_backward", "adam_step",
           "policy_act", "sac_update_fused", "pure"]
