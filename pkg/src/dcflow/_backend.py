"""Select the compiled kernels when available, else the numpy fallback.

Set ``DCFLOW_BACKEND=python`` to force the fallback, or ``=cython`` to make
a missing extension an import error.
"""
import os

_choice = os.environ.get("DCFLOW_BACKEND", "auto").lower()

if _choice == "python":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels_cy as kernels
    except ImportError:
        if _choice == "cython":
            raise
        from . import _kernels_py as kernels

BACKEND = kernels.BACKEND
