"""Backend selection for the CSR hot loops.

The compiled extension ``_ckernels`` is used when it imports; otherwise, or
when the environment variable ``POWERMEAN_SSL_PURE`` is set to a non-empty
value other than ``0``, the NumPy fallback ``_pykernels`` is used.
"""

import os

from . import _pykernels

_force_pure = os.environ.get("POWERMEAN_SSL_PURE", "") not in ("", "0")

if _force_pure:
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND
csr_matvec = _impl.csr_matvec
csr_matmat = _impl.csr_matmat
ict_factor = _impl.ict_factor
ic_solve = _impl.ic_solve


def available_backends():
    """Return the kernel modules that can be imported, keyed by name."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
