"""Kernel selection.

The compiled kernel is used when it was built; ``EXP3LGC_BACKEND=python``
forces the fallback and ``EXP3LGC_BACKEND=cython`` makes a missing
extension an import-time error.
"""
import os

from . import _pykernel
from ._pykernel import KernelError

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

KERNELS = {"python": _pykernel.run_block}
if _ckernel is not None:
    KERNELS["cython"] = _ckernel.run_block

_requested = os.environ.get("EXP3LGC_BACKEND", "auto").lower()
if _requested == "cython" and _ckernel is None:
    raise ImportError("EXP3LGC_BACKEND=cython but exp3lgc._ckernel is not built")
if _requested not in ("auto", "python", "cython"):
    raise ImportError(f"unknown EXP3LGC_BACKEND {_requested!r}")

BACKEND = "python" if _requested == "python" or _ckernel is None else "cython"


def get_kernel(name=None):
    """Return ``(name, run_block)`` for ``name`` or the default backend."""
    name = BACKEND if name is None else name
    try:
        return name, KERNELS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {sorted(KERNELS)}") from None


__all__ = ["BACKEND", "KERNELS", "KernelError", "get_kernel"]
