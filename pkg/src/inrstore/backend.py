"""Kernel backend selection.

Hot inner loops (grid gathers/scatters, 3D convolution, Chamfer distance,
fused optimizer updates) exist twice: a numba ``@njit`` version and a pure
numpy version. The active backend is chosen once at import time from the
``INRSTORE_BACKEND`` environment variable:

    INRSTORE_BACKEND=auto    use numba when importable, else numpy (default)
    INRSTORE_BACKEND=numba   require numba, fail if missing
    INRSTORE_BACKEND=numpy   force the pure-numpy fallback

``benchmarks/bench_backends.py`` compares the two implementations directly.
"""

import os

from .errors import ConfigError

_CHOICE = os.environ.get("INRSTORE_BACKEND", "auto").strip().lower()

if _CHOICE not in ("auto", "numba", "numpy"):
    raise ConfigError(f"INRSTORE_BACKEND must be auto|numba|numpy, got {_CHOICE!r}")

if _CHOICE == "numpy":
    HAS_NUMBA = False
    USE_NUMBA = False
else:
    try:
        import numba  # noqa: F401

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False
    if _CHOICE == "numba" and not HAS_NUMBA:
        raise ConfigError("INRSTORE_BACKEND=numba but numba is not importable")
    USE_NUMBA = HAS_NUMBA


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


# The workload interleaves many small/skinny GEMMs with numba kernels;
# multi-threaded BLAS pools spin-wait between calls and cost far more than
# they give (measured ~4x on the encoder loop). Pin them to one thread.
try:
    import threadpoolctl

    threadpoolctl.threadpool_limits(limits=1, user_api="blas")
except Exception:  # pragma: no cover - threadpoolctl is a hard dependency
    pass
