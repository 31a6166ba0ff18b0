"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` module; used when
the extension is unavailable or ``D3GD_PURE_PYTHON`` is set.
"""

import numpy as np


def project_simplex(v, support):
    """Euclidean projection of ``v`` onto the unit simplex restricted to ``support``.

    Entries outside ``support`` are zero in the result. Ties in the sort are
    broken by index so the active set is deterministic.
    """
    v = np.asarray(v, dtype=np.float64)
    support = np.asarray(support, dtype=np.intp)
    out = np.zeros(v.shape[0])
    u = v[support]
    # lexsort: last key is primary -> value descending, then position ascending
    order = np.lexsort((np.arange(u.size), -u))
    us = u[order]
    css = np.cumsum(us)
    j = np.arange(1, u.size + 1)
    cond = us - (css - 1.0) / j > 0
    rho = np.nonzero(cond)[0][-1]
    tau = (css[rho] - 1.0) / (rho + 1)
    out[support] = np.maximum(u - tau, 0.0)
    return out


def project_rows(V, mask):
    """Row-wise :func:`project_simplex` with supports given by a boolean mask."""
    V = np.asarray(V, dtype=np.float64)
    out = np.empty_like(V)
    for i in range(V.shape[0]):
        out[i] = project_simplex(V[i], np.flatnonzero(mask[i]))
    return out


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def label_sigmoid(X, labels, theta, sign):
    """Sum of ``sigmoid(sign * x_m . theta[label_m])`` and its gradient.

    Returns ``(total, grad)`` where ``grad`` has the shape of ``theta`` (K, d).
    Only the labelled class of each sample is touched; the other classes
    contribute constants that the caller adds.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    grad = np.zeros_like(theta, dtype=np.float64)
    if X.shape[0] == 0:
        return 0.0, grad
    z = sign * np.einsum("md,md->m", X, theta[labels])
    s = _sigmoid(z)
    weighted = np.zeros((X.shape[0], theta.shape[0]))
    weighted[np.arange(X.shape[0]), labels] = sign * s * (1.0 - s)
    grad = weighted.T @ X
    return float(s.sum()), grad
