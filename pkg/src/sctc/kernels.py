"""Kernel backend selection.

The compiled extension is used when importable; otherwise the pure-Python
implementation is loaded.  Set ``SCTC_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("SCTC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

encode_parity = _impl.encode_parity
bcjr_erasure = _impl.bcjr_erasure
transfer_batch = _impl.transfer_batch

__all__ = ["BACKEND", "bcjr_erasure", "encode_parity", "transfer_batch"]
