"""Kernel backend selection.

Hot inner loops (separable convolution, spline prefilter, distance
transform) exist twice: a numba @njit build and a pure-numpy build with
identical floating-point operation order. The active backend is chosen by
the HAC_REFINE_BACKEND environment variable:

    auto   - numba when importable, numpy otherwise (default)
    numba  - require numba, fail loudly if missing
    numpy  - force the pure-numpy path

``set_backend`` overrides the choice at runtime (used by the benchmark and
by tests that compare the two paths).
"""

import os

_VALID = ("auto", "numba", "numpy")
_active = None


def _numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _resolve(name):
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "auto":
        return "numba" if _numba_available() else "numpy"
    if name == "numba" and not _numba_available():
        raise ImportError("HAC_REFINE_BACKEND=numba but numba is not installed")
    return name


def active_backend():
    """Return the backend in use, resolving the env flag on first call."""
    global _active
    if _active is None:
        _active = _resolve(os.environ.get("HAC_REFINE_BACKEND", "auto"))
    return _active


def set_backend(name):
    """Force a backend ('auto', 'numba' or 'numpy'). Returns the resolved name."""
    global _active
    _active = _resolve(name)
    return _active
