"""Backend selection for the numerical kernels.

The compiled extension is used when importable; set the environment
variable ``WIKIVANDAL_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _core_py

if os.environ.get("WIKIVANDAL_PURE_PYTHON"):
    _impl = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _core_py
        BACKEND = "python"

csr_matvec = _impl.csr_matvec
csr_rmatvec = _impl.csr_rmatvec
pav = _impl.pav

__all__ = ["BACKEND", "csr_matvec", "csr_rmatvec", "pav"]
