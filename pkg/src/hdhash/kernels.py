"""Backend selection for the hashing kernels.

The compiled Cython module is used when importable.  Setting the
environment variable ``HDHASH_PURE_PYTHON=1`` forces the numpy fallback.
Both backends produce bit-identical outputs.
"""
from __future__ import annotations

import os

from hdhash import _pykernels

if os.environ.get("HDHASH_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from hdhash import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND: str = _impl.BACKEND

murmur3_32 = _impl.murmur3_32
hash_matrix = _impl.hash_matrix
hash_paired = _impl.hash_paired
poly_hash = _impl.poly_hash


def available_backends() -> dict:
    """Map backend name to kernel module for every importable backend."""
    backends = {"numpy": _pykernels}
    try:
        from hdhash import _ckernels
    except ImportError:
        pass
    else:
        backends["cython"] = _ckernels
    return backends
