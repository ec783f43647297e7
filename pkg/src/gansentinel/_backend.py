"""Pick the SSIM kernel at import time.

The compiled kernel is used when it was built; set
``GANSENTINEL_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _ssim_py

KERNELS = {"python": _ssim_py.ssim_stats}

try:
    from . import _ssim_kernel
except ImportError:  # extension not built
    _ssim_kernel = None
else:
    KERNELS["cython"] = _ssim_kernel.ssim_stats

if os.environ.get("GANSENTINEL_PURE_PYTHON", "") == "1" or "cython" not in KERNELS:
    BACKEND = "python"
else:
    BACKEND = "cython"

ssim_stats = KERNELS[BACKEND]
