"""Kernel dispatch between numba-compiled loops and vectorized numpy.

Set ``PHYSEVO_JIT=0`` in the environment before import to force the numpy
path everywhere. Each accelerated kernel is registered with both
implementations so tests and benchmarks can call either one directly.
"""
import os

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("PHYSEVO_JIT", "1").strip().lower() not in ("0", "false", "no", "off")

_KERNELS = {}


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if not HAS_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


def dispatch(name, compiled, fallback):
    """Register a kernel pair and return the implementation selected by the env flag."""
    _KERNELS[name] = (compiled, fallback)
    return compiled if USE_NUMBA else fallback


def kernel_pair(name):
    """Return ``(numba_impl, numpy_impl)`` for a registered kernel."""
    return _KERNELS[name]


def registered_kernels():
    return sorted(_KERNELS)
