"""Optional numba acceleration.

Set ``METAQ_DISABLE_NUMBA=1`` to run everything on the pure numpy path.
When numba is missing the numpy path is used automatically.
"""
import os

_FLAG = os.environ.get("METAQ_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no")

try:
    if DISABLED_BY_ENV:
        raise ImportError
    import numba
    from numba.extending import register_jitable
except ImportError:
    numba = None

NUMBA_ENABLED = numba is not None


def jit(fn):
    """Compile ``fn`` in nopython mode when numba is enabled."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def shared(fn):
    """Mark ``fn`` callable from both plain Python and compiled kernels.

    The Python version is left untouched, so numpy arrays of any rank
    still work when it is called outside numba.
    """
    if NUMBA_ENABLED:
        return register_jitable(fn)
    return fn


def default_backend():
    return "numba" if NUMBA_ENABLED else "numpy"
