"""Backend selection for the hot kernels.

numba is used when importable unless ``SDBIAS_DISABLE_NUMBA`` is set to a
truthy value (``1``, ``true``, ``yes``). The choice is fixed at import time.
Both backends agree to floating-point rounding, not bitwise; determinism is
guaranteed within one backend.
"""

import os
from types import ModuleType

from . import _numpy_kernels


def _numba_disabled() -> bool:
    return os.environ.get("SDBIAS_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


def load_backend(name: str) -> ModuleType:
    """Return the kernel module for ``"numpy"`` or ``"numba"``."""
    if name == "numpy":
        return _numpy_kernels
    if name == "numba":
        from . import _numba_kernels
        return _numba_kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _select() -> tuple[str, ModuleType]:
    if _numba_disabled():
        return "numpy", _numpy_kernels
    try:
        return "numba", load_backend("numba")
    except ImportError:
        return "numpy", _numpy_kernels


BACKEND, _impl = _select()

conv_forward = _impl.conv_forward
conv_backward = _impl.conv_backward
corr_update = _impl.corr_update
weighted_sample_without_replacement = _impl.weighted_sample_without_replacement
