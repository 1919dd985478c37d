"""Hot-kernel backend selection.

The compiled extension is preferred when it imported cleanly; set
``CMINVERSE_KERNELS=python`` or ``=compiled`` to force one side.  Both
backends expose the same functions with matching semantics, so the choice
only affects speed (see benchmarks/kernel_bench.py).
"""

import os

from . import py_kernels

_choice = os.environ.get("CMINVERSE_KERNELS", "auto").lower()

if _choice == "python":
    _impl = py_kernels
elif _choice == "compiled":
    from . import _ckernels as _impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = py_kernels

BACKEND = _impl.BACKEND
ddrm_update = _impl.ddrm_update
empirical_mean = _impl.empirical_mean
ssim_mean = _impl.ssim_mean


def backend_name() -> str:
    """Name of the kernel backend in use: 'compiled' or 'python'."""
    return BACKEND
