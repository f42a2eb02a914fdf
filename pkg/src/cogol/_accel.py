"""Backend switch for the compiled kernels.

Set ``COGOL_DISABLE_NUMBA=1`` in the environment (before importing
``cogol``) to force the pure-numpy code paths even when numba is
installed.
"""
import os

_FLAG = os.environ.get("COGOL_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no")

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED_BY_ENV


def jit(func):
    """Compile ``func`` with numba in nopython mode, or return ``None``.

    Callers keep a numpy twin for every kernel, so a missing numba
    simply means the twin is used.
    """
    if not HAVE_NUMBA:
        return None
    return _njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
