"""Kernel backend selection.

The compiled extension is used when it imports; setting
``DYSONLAB_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _fallback

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None

BACKENDS = {"python": _fallback}
if _kernels is not None:
    BACKENDS["cython"] = _kernels

if _kernels is not None and not os.environ.get("DYSONLAB_PURE_PYTHON"):
    BACKEND = "cython"
    _impl = _kernels
else:
    BACKEND = "python"
    _impl = _fallback

interaction_sums = _impl.interaction_sums
heat_bath_sweeps = _impl.heat_bath_sweeps
transfer_apply = _impl.transfer_apply
transfer_apply_adjoint = _impl.transfer_apply_adjoint
