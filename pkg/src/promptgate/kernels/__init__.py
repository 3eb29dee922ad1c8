"""Kernel backend selection.

The compiled extension is preferred when present; otherwise the NumPy
fallback is used. `set_backend` exists so tests and the benchmark can pin
either implementation explicitly.
"""

from types import ModuleType

from . import numpy_backend

try:  # pragma: no cover - depends on whether the extension was built
    from . import _native as _preferred
except ImportError:  # pragma: no cover
    _preferred = None

_active: ModuleType = _preferred if _preferred is not None else numpy_backend


def available_backends() -> list[str]:
    names = [numpy_backend.NAME]
    if _preferred is not None:
        names.insert(0, _preferred.NAME)
    return names


def active_backend() -> str:
    return _active.NAME


def set_backend(name: str) -> None:
    global _active
    if name == numpy_backend.NAME:
        _active = numpy_backend
    elif _preferred is not None and name == _preferred.NAME:
        _active = _preferred
    else:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}; "
                         f"available: {available_backends()}")


def mahalanobis_many(x, mean, precision):
    return _active.mahalanobis_many(x, mean, precision)


def rmd_many(x, means, md_hats, precision):
    return _active.rmd_many(x, means, md_hats, precision)


def fold_chunk(x):
    # always the NumPy path: it lowers to a BLAS rank-k update that the
    # compiled loop kernels cannot beat
    return numpy_backend.fold_chunk(x)
