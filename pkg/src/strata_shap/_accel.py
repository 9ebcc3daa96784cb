"""Backend selection for the hot kernels.

Set ``STRATA_SHAP_NUMBA=0`` to force the pure-numpy path. When numba is not
importable the numpy path is used regardless of the flag.
"""

import os
import warnings

_FLAG = os.environ.get("STRATA_SHAP_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

# numba probes an old system TBB on first parallel launch and falls back on its own
warnings.filterwarnings("ignore", message="The TBB threading layer requires", module="numba")

USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is available, otherwise a no-op decorator."""
    if numba is None:  # pragma: no cover
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


if numba is not None:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def set_threads(threads):
    """Bound numba's worker pool; ignored on the numpy path."""
    if numba is None or threads is None:
        return
    threads = max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(threads)


def default_threads():
    env = os.environ.get("STRATA_SHAP_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1
