"""Backend selection for the hot inner loops.

The compiled Cython extension is preferred when importable; the pure-NumPy
fallback is used otherwise. Setting VIOMC_PURE=1 forces the fallback
(useful for benchmarking and for debugging the kernels themselves).
"""
import os

_force_pure = os.environ.get("VIOMC_PURE", "").strip().lower() in ("1", "true", "yes")

if _force_pure:
    from . import pure as _impl
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as _impl

BACKEND = _impl.BACKEND_NAME
brownian_integrate = _impl.brownian_integrate
propagate_chunk = _impl.propagate_chunk

__all__ = ["BACKEND", "brownian_integrate", "propagate_chunk"]
