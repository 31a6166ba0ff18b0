"""Dynamic-weight Di-DGD: Di-DGD rounds interleaved with projected-gradient
refinement of the mixing matrix rows.

Each iteration, in order:

1. ``A^k = (1 - delta) Abar^k + delta A0``
2. one Di-DGD round with ``A^k``
3. every active agent computes a gradient for its row of ``Abar`` from the
   pre-round iterates (exact in ``d3gd_central``, tracker-based in
   ``d3gd_decentralized``)
4. projected step on those rows
5. dynamic-consensus trackers ``z`` (parameters) and ``q`` (gradients) mix
   with ``A^k`` and add the local increments

``mode="didgd"`` skips 1 and 3-5 and runs with ``A0`` throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from d3gd import kernels, rng
from d3gd.design import DesignContext, grad_Jbar, grad_row_Jbar, row_update, surrogate_row_grad
from d3gd.didgd import DivergenceError, NetworkState, StepSchedule, check_divergence, didgd_init, didgd_step
from d3gd.graph import MixingMatrix, perron_vector, spectral_gap
from d3gd.metrics import LyapunovConfig, compute_record

MODES = ("didgd", "d3gd_central", "d3gd_decentralized")
ACTIVE_SETS = ("all", "round_robin", "random")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "d3gd_decentralized"
    T: int = 1000
    delta: float = 0.2
    gamma: StepSchedule = StepSchedule(0.1)
    eta: StepSchedule = StepSchedule(1.0)
    active_set: str = "all"
    active_m: int | None = None
    seed: int = 0
    stride: int = 1
    snapshots: tuple = ()
    pi_refresh_steps: int = 5
    central_gradient: str = "chain_rule"
    surrogate_first_term: str = "verbatim"
    backtracking: bool = False
    rho_refresh: int = 0
    # testing aid: feed the decentralized rule the exact tracker targets
    tracker_substitution: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 < self.delta < 1 and self.mode != "didgd":
            raise ValueError("delta must lie in (0, 1)")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if self.active_set not in ACTIVE_SETS:
            raise ValueError(f"active_set must be one of {ACTIVE_SETS}")
        if self.active_set != "all" and (self.active_m is None or self.active_m < 1):
            raise ValueError("round_robin/random active sets need active_m >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def active_rows(self, k: int, n: int) -> np.ndarray:
        if self.active_set == "all":
            return np.arange(n)
        m = min(self.active_m, n)
        if self.active_set == "round_robin":
            return np.sort((k * m + np.arange(m)) % n)
        return rng.Stream(self.seed, rng.AUX, 100_000 + k).choice(n, m)


@dataclass(frozen=True, slots=True)
class AgentView:
    """Everything agent ``i`` may read when refining its own row.

    Arrays indexed by neighbour follow the order of ``neighbors`` (which
    includes ``agent`` itself).
    """

    agent: int
    n: int
    neighbors: tuple
    neighbor_thetas: np.ndarray
    theta_own: np.ndarray
    y_own: float
    z: np.ndarray
    q: np.ndarray
    grad_own: np.ndarray
    abar_row: np.ndarray
    a0_row: np.ndarray
    gamma: float
    eta: float
    delta: float


def agent_weight_update(view: AgentView, first_term: str = "verbatim"):
    """New ``abar_i`` over the agent's neighbours and the surrogate gradient used."""
    a_mix = view.a0_row + (1.0 - view.delta) * (view.abar_row - view.a0_row)
    mixed = a_mix @ view.neighbor_thetas
    g = surrogate_row_grad(view.neighbor_thetas, mixed, view.z, view.q, view.grad_own, view.y_own, view.gamma, view.delta, view.n, first_term)
    new = kernels.project_simplex(view.abar_row - view.eta * g, np.arange(len(view.neighbors)))
    return new, g


@dataclass(frozen=True)
class AuditReport:
    mode: str
    scope: str
    reads: tuple


def information_audit(mode: str) -> AuditReport:
    """What an agent reads to update in ``mode``.

    ``d3gd_decentralized`` is reported from the fields of :class:`AgentView`,
    the only object its update rule receives.
    """
    if mode == "didgd":
        return AuditReport(mode, "one_hop", ("theta_j, j in N_i", "y_j, j in N_i", "grad f_i(theta_i)", "a_i"))
    if mode == "d3gd_central":
        return AuditReport(mode, "global", ("Theta", "Y", "grad F stack", "pi_A^k", "Abar", "A0"))
    if mode == "d3gd_decentralized":
        return AuditReport(mode, "one_hop", tuple(f.name for f in fields(AgentView)))
    raise ValueError(f"unknown mode {mode!r}")


def tracker_step(Z, Q, A, Theta_old, Theta_new, G_old, G_new):
    """``Z' = A Z + Theta_new - Theta_old``, ``Q' = A Q + G_new - G_old``."""
    W = np.asarray(A)
    return W @ Z + (Theta_new - Theta_old), W @ Q + (G_new - G_old)


@dataclass
class D3GDResult:
    state: NetworkState
    records: list
    snapshots: dict = field(default_factory=dict)
    diverged: DivergenceError | None = None
    final_pi: np.ndarray | None = None


def _refresh_pi(A, pi, steps):
    WT = np.asarray(A).T
    for _ in range(steps):
        pi = WT @ pi
        pi /= pi.sum()
    return pi


def run_d3gd(problem, A0: MixingMatrix, config: RunConfig, state: NetworkState | None = None, lyapunov: LyapunovConfig | None = None, hook: Callable | None = None, record: bool = True) -> D3GDResult:
    """Run ``config.T`` iterations from ``state`` (default: zeros, ``Y = I``).

    ``lyapunov`` supplies ``L`` and the Lyapunov variant; its ``rho`` is
    replaced by the spectral gap of the matrix in use (refreshed on snapshot
    iterations and every ``rho_refresh`` iterations for the dynamic modes).
    ``hook(k, info)`` sees the per-iteration internals (matrix, weights, row
    gradients) and is meant for tests.
    """
    graph = A0.graph
    n = graph.n
    W0 = np.array(A0.weights)
    support = graph.support
    in_nbrs = graph.in_neighbors
    cfg = config
    dynamic = cfg.mode != "didgd"
    snapshots_at = set(cfg.snapshots) | {0, cfg.T}

    if state is None:
        state = didgd_init(problem)
    state.ensure_grads(problem)
    if dynamic:
        if state.Abar is None:
            state.Abar = W0.copy()
        if state.Z is None:
            state.Z = state.Theta.copy()
        if state.Q is None:
            state.Q = state.grads.copy()

    pi0, _, _ = perron_vector(W0)
    pi = pi0.copy()
    rho = spectral_gap(W0, pi0)
    records, snaps = [], {}

    def current_matrix(s):
        return W0 + (1.0 - cfg.delta) * (s.Abar - W0) if dynamic else W0

    def take_record(s, A_k, gamma_k, rho_k):
        lyap = None
        if lyapunov is not None:
            lyap = LyapunovConfig(lyapunov.L, rho, lyapunov.variant)
        return compute_record(s, problem, pi, gamma_k, lyap, A0=W0, Abar=s.Abar if dynamic else W0, delta=cfg.delta if dynamic else 1.0, rho_k=rho_k)

    for k in range(cfg.T + 1):
        A_k = current_matrix(state)
        if dynamic and k > 0:
            pi = _refresh_pi(A_k, pi, cfg.pi_refresh_steps)
        rho_k = math.nan
        if dynamic and k > 0 and (k in snapshots_at or (cfg.rho_refresh and k % cfg.rho_refresh == 0)):
            rho = spectral_gap(A_k, pi)
            rho_k = rho
        elif k == 0:
            rho_k = rho
        if k in snapshots_at:
            snaps[k] = A_k.copy()
        gamma_k = cfg.gamma(k)
        if record and (k % cfg.stride == 0 or k == cfg.T):
            records.append(take_record(state, A_k, gamma_k, rho_k))
        if k == cfg.T:
            break

        G_k = state.ensure_grads(problem)
        nxt = didgd_step(state, A_k, gamma_k, problem)
        try:
            check_divergence(nxt)
        except DivergenceError as err:
            return D3GDResult(nxt, records, snaps, err, pi)

        if dynamic:
            eta_k = cfg.eta(k)
            rows = cfg.active_rows(k, n)
            ydiag = np.diagonal(state.Y).copy()
            Abar_new = state.Abar.copy()
            g_rows = np.zeros((n, n))
            if cfg.mode == "d3gd_central":
                ctx = DesignContext(state.Theta, G_k, ydiag, pi, gamma_k, cfg.delta, W0, support)
                if cfg.backtracking:
                    for i in rows:
                        g_rows[i] = grad_row_Jbar(i, state.Abar, ctx, cfg.central_gradient)
                        Abar_new[i] = row_update(i, state.Abar, ctx, eta_k, grad_row=g_rows[i], backtracking=True)
                else:
                    g_rows = grad_Jbar(state.Abar, ctx, cfg.central_gradient)
                    proj = kernels.project_rows(state.Abar - eta_k * g_rows, support)
                    Abar_new[rows] = proj[rows]
            else:
                Z, Q = state.Z, state.Q
                if cfg.tracker_substitution:
                    Z = np.tile(pi @ state.Theta, (n, 1))
                    Q = ydiag[:, None] * ((pi / ydiag) @ G_k)[None, :]
                for i in rows:
                    nb = in_nbrs[i]
                    view = AgentView(
                        agent=int(i),
                        n=n,
                        neighbors=nb,
                        neighbor_thetas=state.Theta[list(nb)],
                        theta_own=state.Theta[i],
                        y_own=float(ydiag[i]),
                        z=Z[i],
                        q=Q[i],
                        grad_own=G_k[i],
                        abar_row=state.Abar[i, list(nb)],
                        a0_row=W0[i, list(nb)],
                        gamma=gamma_k,
                        eta=eta_k,
                        delta=cfg.delta,
                    )
                    new_row, g = agent_weight_update(view, cfg.surrogate_first_term)
                    Abar_new[i] = 0.0
                    Abar_new[i, list(nb)] = new_row
                    g_rows[i, list(nb)] = g
            G_next = nxt.ensure_grads(problem)
            nxt.Z, nxt.Q = tracker_step(state.Z, state.Q, A_k, state.Theta, nxt.Theta, G_k, G_next)
            nxt.Abar = Abar_new
            if hook is not None:
                hook(k, {"A": A_k, "pi": pi, "state": state, "g_rows": g_rows, "rows": rows})
        elif hook is not None:
            hook(k, {"A": A_k, "pi": pi, "state": state})
        state = nxt

    return D3GDResult(state, records, snaps, None, pi)

