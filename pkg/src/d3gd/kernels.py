"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``D3GD_PURE_PYTHON=1`` before import to force the numpy path.
"""

import os

import numpy as np

from d3gd import _fallback

try:
    if os.environ.get("D3GD_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from d3gd import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"


def project_simplex(v, support):
    support = np.asarray(support, dtype=np.intp)
    if support.size == 0:
        raise ValueError("projection support must be nonempty")
    return _impl.project_simplex(v, support)


def project_rows(V, mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=1).all():
        raise ValueError("every row needs a nonempty support")
    return _impl.project_rows(V, mask)


def label_sigmoid(X, labels, theta, sign):
    return _impl.label_sigmoid(X, labels, theta, float(sign))
