"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise (or when
``STRUCTSEQ_PURE_PYTHON=1``) the numpy fallback is used.  Both expose
``viterbi``, ``edit_distance`` and ``psi_first_order`` with the same
signatures and produce identical results.
"""

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("STRUCTSEQ_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend forced by STRUCTSEQ_PURE_PYTHON")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def get_backend(name=None):
    """Return a kernel module by name (``"cython"`` or ``"python"``), default the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def viterbi(emit, trans):
    emit = np.ascontiguousarray(emit, dtype=np.float64)
    trans = np.ascontiguousarray(trans, dtype=np.float64)
    return _impl.viterbi(emit, trans)


def edit_distance(a, b):
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    return _impl.edit_distance(a, b)


def psi_first_order(x, y, K):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    return _impl.psi_first_order(x, y, int(K))
