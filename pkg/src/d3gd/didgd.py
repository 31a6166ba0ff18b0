"""The Di-DGD recursion over a row-stochastic matrix.

One synchronous round, for every agent ``i``::

    theta_i <- sum_j A_ij theta_j - gamma / (n * y_ii) * grad f_i(theta_i)
    y_i     <- sum_j A_ij y_j

``y_ii`` estimates the Perron weight ``pi_i`` and rescales the local gradient
so the network tracks the uniform average of the ``f_i`` rather than the
``pi``-weighted one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from d3gd import rng
from d3gd.graph import _weights

DIVERGENCE_LIMIT = 1e12


class DivergenceError(RuntimeError):
    def __init__(self, k, norm):
        super().__init__(f"iterates diverged at k={k} (||Theta||_F = {norm:.3e})")
        self.k = k
        self.norm = norm


class InvariantError(RuntimeError):
    """A state invariant the recursion relies on was broken."""


@dataclass
class NetworkState:
    """Full algorithm state at iteration ``k``.

    ``grads`` caches ``grad f_i(theta_i^k)`` row-wise once computed. ``Z``,
    ``Q`` and ``Abar`` are only present for the dynamic-weight algorithms.
    """

    Theta: np.ndarray
    Y: np.ndarray
    k: int = 0
    grads: np.ndarray | None = None
    Z: np.ndarray | None = None
    Q: np.ndarray | None = None
    Abar: np.ndarray | None = None

    @property
    def n(self):
        return self.Theta.shape[0]

    @property
    def ydiag(self):
        return np.diagonal(self.Y).copy()

    def ensure_grads(self, problem):
        if self.grads is None:
            self.grads = problem.grad_stack(self.Theta)
        return self.grads


@dataclass(frozen=True)
class StepSchedule:
    """``constant``: ``gamma0``. ``polynomial``: ``gamma0 / (k + 1)**exponent``.

    With ``horizon`` set, the constant schedule becomes ``gamma0 / horizon**exponent``
    for the whole run (the ``c / T^(1/3)`` choice).
    """

    gamma0: float
    kind: str = "constant"
    exponent: float = 0.0
    horizon: int | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "polynomial"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.gamma0 < 0:
            raise ValueError("step sizes must be nonnegative")
        if self.exponent < 0:
            raise ValueError("exponent must be nonnegative so the schedule is nonincreasing")

    def __call__(self, k: int) -> float:
        if self.kind == "polynomial":
            return self.gamma0 / (k + 1) ** self.exponent
        if self.horizon is not None:
            return self.gamma0 / self.horizon ** self.exponent
        return self.gamma0


def initial_parameters(n, dim, rule="zeros", seed=0, scale=0.1):
    if rule == "zeros":
        return np.zeros((n, dim))
    if rule == "gaussian":
        return np.stack([scale * rng.Stream(seed, rng.INIT, 1 + i).normals(dim) for i in range(n)])
    raise ValueError(f"unknown initialisation rule {rule!r}")


def didgd_init(problem, rule="zeros", seed=0, scale=0.1, Theta0=None) -> NetworkState:
    """``Y = I`` and ``Theta`` by ``rule`` (``zeros`` or seeded ``gaussian``)."""
    n = problem.n
    Theta = initial_parameters(n, problem.dim, rule, seed, scale) if Theta0 is None else np.array(Theta0, dtype=np.float64)
    if Theta.shape != (n, problem.dim):
        raise ValueError(f"Theta0 must have shape {(n, problem.dim)}")
    return NetworkState(Theta=Theta, Y=np.eye(n), k=0)


def didgd_step(state: NetworkState, A, gamma: float, problem) -> NetworkState:
    """One synchronous Di-DGD round; the input state is not modified."""
    W = _weights(A)
    ydiag = np.diagonal(state.Y)
    if np.any(ydiag <= 0):
        bad = int(np.argmin(ydiag))
        raise InvariantError(f"nonpositive y_ii at agent {bad}, k={state.k}")
    grads = state.ensure_grads(problem)
    n = state.n
    Theta = W @ state.Theta - (gamma / (n * ydiag))[:, None] * grads
    Y = W @ state.Y
    return NetworkState(Theta=Theta, Y=Y, k=state.k + 1)


def weighted_average(state_or_theta, pi) -> np.ndarray:
    """``Theta^T pi``."""
    Theta = state_or_theta.Theta if isinstance(state_or_theta, NetworkState) else np.asarray(state_or_theta)
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (Theta.shape[0],):
        raise ValueError("weight vector length must equal the number of agents")
    return Theta.T @ pi


def check_divergence(state: NetworkState):
    norm = float(np.linalg.norm(state.Theta))
    if not np.isfinite(norm) or norm > DIVERGENCE_LIMIT:
        raise DivergenceError(state.k, norm)


@dataclass
class RunResult:
    state: NetworkState
    records: list
    diverged: DivergenceError | None = None


def run_didgd(problem, A, schedule, T: int, recorder: Callable | None = None, stride: int = 1, state: NetworkState | None = None) -> RunResult:
    """``T`` Di-DGD rounds with a fixed matrix.

    ``recorder(state)`` is called on iterations ``0, stride, 2*stride, ...`` and
    on the final iterate; whatever it returns is collected in ``records``.
    Divergence stops the run and is reported on the result.
    """
    if state is None:
        state = didgd_init(problem)
    records = []

    def record(s):
        if recorder is not None:
            records.append(recorder(s))

    record(state)
    for k in range(T):
        state = didgd_step(state, A, schedule(k), problem)
        try:
            check_divergence(state)
        except DivergenceError as err:
            return RunResult(state, records, err)
        if (k + 1) % stride == 0 or k + 1 == T:
            record(state)
    return RunResult(state, records)
