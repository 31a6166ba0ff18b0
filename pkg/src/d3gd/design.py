"""Design function for the mixing matrix and its projected-gradient minimisation.

For iterates ``Theta`` (n x D), local gradients ``G`` (n x D), ``Ytil =
diag(Y)`` and a frozen weight vector ``pi``::

    R(A) = (A - 1 pi^T) Theta
    W    = (I - 1 pi^T) Ytil^{-1} G
    J(A) = ||R(A)||_F^2 - (2 gamma / n) <R(A), W>

``J`` is the part of the next-step weighted consensus error that depends on
``A``. The conservative version evaluates it at the mixture
``(1 - delta) Abar + delta A0``, which keeps every candidate irreducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from d3gd import kernels


@dataclass(frozen=True)
class DesignContext:
    Theta: np.ndarray
    grads: np.ndarray
    ydiag: np.ndarray
    pi: np.ndarray
    gamma: float
    delta: float
    A0: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if np.any(self.ydiag <= 0):
            raise ValueError("ydiag must be strictly positive")
        n = self.Theta.shape[0]
        if self.grads.shape != self.Theta.shape or self.pi.shape != (n,) or self.A0.shape != (n, n):
            raise ValueError("inconsistent design-context dimensions")

    @property
    def n(self):
        return self.Theta.shape[0]

    def mixture(self, Abar):
        # written so that Abar == A0 gives A0 bit for bit
        return self.A0 + (1.0 - self.delta) * (np.asarray(Abar) - self.A0)

    def scaled_grad_residual(self):
        """``W = (I - 1 pi^T) Ytil^{-1} G``."""
        S = self.grads / self.ydiag[:, None]
        return S - (self.pi @ S)[None, :]


def design_J(A, ctx: DesignContext) -> float:
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (ctx.n, ctx.n):
        raise ValueError("matrix dimension mismatch")
    R = A @ ctx.Theta - (ctx.pi @ ctx.Theta)[None, :]
    W = ctx.scaled_grad_residual()
    return float(np.sum(R * R) - 2.0 * ctx.gamma / ctx.n * np.sum(R * W))


def design_Jbar(Abar, ctx: DesignContext) -> float:
    return design_J(ctx.mixture(Abar), ctx)


def grad_J(A, ctx: DesignContext) -> np.ndarray:
    """Gradient of ``J`` w.r.t. all entries, zeroed off the support: ``2 (R - gamma/n W) Theta^T``."""
    R = np.asarray(A) @ ctx.Theta - (ctx.pi @ ctx.Theta)[None, :]
    W = ctx.scaled_grad_residual()
    return np.where(ctx.support, 2.0 * (R - ctx.gamma / ctx.n * W) @ ctx.Theta.T, 0.0)


def grad_Jbar(Abar, ctx: DesignContext, variant: str = "chain_rule") -> np.ndarray:
    """Full-matrix gradient of the conservative design function.

    ``chain_rule`` multiplies both terms by ``1 - delta``. ``eq12`` keeps the
    consensus term unscaled and only the gradient term scaled, as in the
    closed form printed for the per-row update.
    """
    A = ctx.mixture(Abar)
    R = A @ ctx.Theta - (ctx.pi @ ctx.Theta)[None, :]
    W = ctx.scaled_grad_residual()
    scale = 1.0 - ctx.delta
    if variant == "chain_rule":
        inner = scale * (R - ctx.gamma / ctx.n * W)
    elif variant == "eq12":
        inner = R - scale * ctx.gamma / ctx.n * W
    else:
        raise ValueError(f"unknown gradient variant {variant!r}")
    return np.where(ctx.support, 2.0 * inner @ ctx.Theta.T, 0.0)


def grad_row_Jbar(i: int, Abar, ctx: DesignContext, variant: str = "chain_rule") -> np.ndarray:
    """Row ``i`` of :func:`grad_Jbar`; zero outside agent ``i``'s in-neighbourhood.

    ``[g]_j = 2 theta_j . (Theta^T (a_mix_i - pi) - (gamma/n) G^T Ytil^{-1} (e_i - pi))``
    with the ``1 - delta`` factors placed according to ``variant``.
    """
    a_mix = ctx.A0[i] + (1.0 - ctx.delta) * (np.asarray(Abar)[i] - ctx.A0[i])
    r = ctx.Theta.T @ (a_mix - ctx.pi)
    S = ctx.grads / ctx.ydiag[:, None]
    w = S[i] - ctx.pi @ S
    scale = 1.0 - ctx.delta
    if variant == "chain_rule":
        inner = scale * (r - ctx.gamma / ctx.n * w)
    elif variant == "eq12":
        inner = r - scale * ctx.gamma / ctx.n * w
    else:
        raise ValueError(f"unknown gradient variant {variant!r}")
    return np.where(ctx.support[i], 2.0 * ctx.Theta @ inner, 0.0)


def surrogate_row_grad(neighbor_thetas, mixed_theta, z, q, grad_own, y_own, gamma, delta, n, first_term="verbatim"):
    """Locally computable row gradient, entries ordered like ``neighbor_thetas``.

    ``[g]_j = 2 theta_j . (mixed_theta - z - c (grad_own - q))`` with
    ``c = gamma (1 - delta) / (n y_own)``; ``mixed_theta`` is the agent's
    current mixing of its neighbours. ``first_term="chain_rule"`` also scales
    the consensus part by ``1 - delta``, matching the exact gradient when the
    trackers hold their targets.
    """
    if y_own <= 0:
        raise ValueError("y_ii must be positive")
    c = gamma * (1.0 - delta) / (n * y_own)
    consensus = mixed_theta - z
    if first_term == "chain_rule":
        consensus = (1.0 - delta) * consensus
    elif first_term != "verbatim":
        raise ValueError(f"unknown first_term {first_term!r}")
    return 2.0 * np.asarray(neighbor_thetas) @ (consensus - c * (grad_own - q))


def project_row_simplex(v, support) -> np.ndarray:
    """Euclidean projection onto ``{a >= 0, sum a = 1, a = 0 off support}``."""
    return kernels.project_simplex(v, support)


def row_update(i: int, Abar, ctx: DesignContext, eta: float, grad_row=None, backtracking: bool = False, max_halvings: int = 20) -> np.ndarray:
    """Projected gradient step ``P(abar_i - eta g_i)`` on row ``i``.

    ``grad_row`` defaults to the exact chain-rule gradient. With
    ``backtracking`` the step is halved until the conservative design value
    decreases (other rows held fixed); if no halving helps the row is kept.
    """
    Abar = np.asarray(Abar, dtype=np.float64)
    g = grad_row_Jbar(i, Abar, ctx) if grad_row is None else np.asarray(grad_row, dtype=np.float64)
    support = np.flatnonzero(ctx.support[i])
    if eta == 0:
        return Abar[i].copy()
    if not backtracking:
        return project_row_simplex(Abar[i] - eta * g, support)
    base = design_Jbar(Abar, ctx)
    trial = Abar.copy()
    step = eta
    for _ in range(max_halvings + 1):
        trial[i] = project_row_simplex(Abar[i] - step * g, support)
        if design_Jbar(trial, ctx) < base:
            return trial[i].copy()
        step *= 0.5
    return Abar[i].copy()


def mix_conservative(Abar, A0, delta: float) -> np.ndarray:
    """``(1 - delta) Abar + delta A0``; both must share a support."""
    Abar = np.asarray(Abar, dtype=np.float64)
    A0 = np.asarray(A0, dtype=np.float64)
    if Abar.shape != A0.shape:
        raise ValueError("shape mismatch")
    if np.any((Abar != 0) & (A0 == 0)):
        raise ValueError("Abar has weight outside the support of A0")
    return A0 + (1.0 - delta) * (Abar - A0)
