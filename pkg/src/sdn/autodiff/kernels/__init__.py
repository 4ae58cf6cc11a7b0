"""Hot conv kernels with two interchangeable backends.

The backend is picked once at import time from the SDN_BACKEND environment
variable: "numba" (default when numba imports cleanly) or "numpy". Both
expose the same three functions; `benchmarks/bench_kernels.py` compares them.
"""

import os

# the bundled TBB is too old for numba; omp avoids a warning on import
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

from . import conv_numpy

BACKEND = os.environ.get("SDN_BACKEND", "").strip().lower()

if BACKEND in ("", "numba"):
    try:
        from . import conv_numba as _impl

        BACKEND = "numba"
    except ImportError:
        if BACKEND == "numba":
            raise
        _impl = conv_numpy
        BACKEND = "numpy"
elif BACKEND == "numpy":
    _impl = conv_numpy
else:
    raise ValueError(f"unknown SDN_BACKEND {BACKEND!r}; expected 'numba' or 'numpy'")

conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_kernel = _impl.conv2d_backward_kernel
make_plan = _impl.make_plan
