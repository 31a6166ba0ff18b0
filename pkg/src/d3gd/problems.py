"""Local objective families and the label-skewed synthetic classification data.

A :class:`Problem` exposes per-agent values and gradients of ``f_i`` on flat
parameter vectors, and the global objective ``F = (1/n) sum_i f_i``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from d3gd import kernels, rng

DEFAULT_LAMBDA = 1e-4


class Problem:
    """Base class. Subclasses implement ``value`` and ``grad`` for one agent."""

    n: int
    dim: int

    def value(self, i: int, theta) -> float:
        raise NotImplementedError

    def grad(self, i: int, theta) -> np.ndarray:
        raise NotImplementedError

    def grad_stack(self, Theta) -> np.ndarray:
        """Row ``i`` is ``grad f_i(Theta[i])``."""
        return np.stack([self.grad(i, Theta[i]) for i in range(self.n)])

    def global_value(self, theta) -> float:
        return sum(self.value(i, theta) for i in range(self.n)) / self.n

    def global_grad(self, theta) -> np.ndarray:
        return sum(self.grad(i, theta) for i in range(self.n)) / self.n

    def global_grad_points(self, Theta) -> np.ndarray:
        """Row ``r`` is ``grad F(Theta[r])``."""
        return np.stack([self.global_grad(t) for t in Theta])


# ------------------------------------------------------------------ quadratic


class QuadraticProblem(Problem):
    """``f_i(x) = 0.5 (x - b_i)^T Q_i (x - b_i)``."""

    def __init__(self, Q, b):
        self.Q = np.asarray(Q, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.n, self.dim = self.b.shape
        if self.Q.shape != (self.n, self.dim, self.dim):
            raise ValueError("Q must have shape (n, d, d)")
        self._Qb = np.einsum("nij,nj->ni", self.Q, self.b)
        self._Qbar = self.Q.mean(axis=0)
        self._Qbbar = self._Qb.mean(axis=0)

    def value(self, i, theta):
        r = np.asarray(theta) - self.b[i]
        return 0.5 * float(r @ self.Q[i] @ r)

    def grad(self, i, theta):
        return self.Q[i] @ (np.asarray(theta) - self.b[i])

    def grad_stack(self, Theta):
        return np.einsum("nij,nj->ni", self.Q, Theta) - self._Qb

    def global_grad(self, theta):
        return self._Qbar @ theta - self._Qbbar

    def global_grad_points(self, Theta):
        return Theta @ self._Qbar.T - self._Qbbar

    def minimizer(self) -> np.ndarray:
        return np.linalg.solve(self.Q.sum(axis=0), self._Qb.sum(axis=0))

    @property
    def smoothness(self) -> float:
        """Exact Lipschitz constant of the local gradients."""
        return float(max(np.linalg.eigvalsh(q)[-1] for q in self.Q))


def quadratic_problem(n: int, d: int, seed: int, condition: float = 10.0, b_scale: float = 1.0) -> QuadraticProblem:
    """Random SPD quadratics with spectra in ``[1, condition]``.

    Each ``Q_i = U diag(s) U^T`` with a random orthogonal ``U`` and ``s``
    spanning ``[1, condition]`` (both ends attained when ``d > 1``).
    """
    if condition < 1:
        raise ValueError("condition must be >= 1")
    Q = np.empty((n, d, d))
    b = np.empty((n, d))
    for i in range(n):
        s = rng.Stream(seed, rng.AUX, 1000 + i)
        U, _ = np.linalg.qr(s.normals((d, d)))
        spec = np.sort(np.concatenate([[1.0, condition], 1.0 + (condition - 1.0) * s.uniform(max(d - 2, 0))]))[:d]
        if d == 1:
            spec = np.array([1.0])
        Q[i] = (U * spec) @ U.T
        Q[i] = 0.5 * (Q[i] + Q[i].T)
        b[i] = b_scale * s.normals(d)
    return QuadraticProblem(Q, b)


class ConstantProblem(Problem):
    """``f_i = c_i``: zero gradients everywhere."""

    def __init__(self, n, dim, values=None):
        self.n, self.dim = n, dim
        self.values = np.zeros(n) if values is None else np.asarray(values, dtype=np.float64)

    def value(self, i, theta):
        return float(self.values[i])

    def grad(self, i, theta):
        return np.zeros(self.dim)

    def grad_stack(self, Theta):
        return np.zeros((self.n, self.dim))

    def global_grad_points(self, Theta):
        return np.zeros_like(np.asarray(Theta, dtype=np.float64))


# ------------------------------------------------------------ synthetic data


@dataclass(frozen=True)
class ProblemDims:
    n: int
    d: int
    K: int

    def __post_init__(self):
        if min(self.n, self.d, self.K) < 1:
            raise ValueError("all dimensions must be positive")

    @property
    def flat_dim(self) -> int:
        return self.d * self.K


@dataclass
class SyntheticDataset:
    features: list  # per agent, (M_i, d) arrays
    labels: list  # per agent, (M_i,) int arrays with values in 0..K-1
    means: np.ndarray  # (K, d)
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.features)

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.stack([np.bincount(y, minlength=self.K) for y in self.labels])

    def save(self, directory):
        """One ``agent_<i>.csv`` per agent (``label, x_1..x_d``) plus ``meta.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for i, (X, y) in enumerate(zip(self.features, self.labels)):
            with open(directory / f"agent_{i}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["label"] + [f"x_{c + 1}" for c in range(self.d)])
                for lab, row in zip(y, X):
                    w.writerow([int(lab)] + [format(v, ".17g") for v in row])
        meta = dict(self.meta)
        meta.update(n=self.n, K=self.K, d=self.d, means=self.means.tolist())
        (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "SyntheticDataset":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        means = np.array(meta.pop("means"), dtype=np.float64)
        n, d = meta["n"], meta["d"]
        feats, labs = [], []
        for i in range(n):
            data = np.loadtxt(directory / f"agent_{i}.csv", delimiter=",", skiprows=1, ndmin=2)
            data = data.reshape(-1, d + 1)
            labs.append(data[:, 0].astype(np.intp))
            feats.append(np.ascontiguousarray(data[:, 1:]))
        return cls(feats, labs, means, meta)


def dirichlet_partition(n: int, K: int, M: int, alpha, seed: int) -> np.ndarray:
    """Per-agent class counts: ``p_i ~ Dir(alpha_i 1_K)``, ``m_i ~ Mult(M, p_i)``.

    ``alpha`` may be a scalar or one value per agent.
    """
    alphas = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (n,))
    if np.any(alphas <= 0):
        raise ValueError("Dirichlet concentration must be positive")
    if M < 0:
        raise ValueError("M must be nonnegative")
    counts = np.zeros((n, K), dtype=np.int64)
    for i in range(n):
        s = rng.Stream(seed, rng.PARTITION, 1 + i)
        p = s.dirichlet([alphas[i]] * K)
        counts[i] = s.categorical_counts(p, M)
    return counts


def generate_features(counts, d: int, seed: int) -> SyntheticDataset:
    """Gaussian features around shared class means.

    Draw order: the K class means from stream 0, then agent ``i`` from
    stream ``1 + i``, classes in index order, samples grouped by class.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n, K = counts.shape
    means = rng.Stream(seed, rng.FEATURES, 0).normals((K, d))
    feats, labs = [], []
    for i in range(n):
        s = rng.Stream(seed, rng.FEATURES, 1 + i)
        Xs, ys = [], []
        for k in range(K):
            m = int(counts[i, k])
            if m:
                Xs.append(means[k] + s.normals((m, d)))
                ys.append(np.full(m, k, dtype=np.intp))
        feats.append(np.concatenate(Xs) if Xs else np.zeros((0, d)))
        labs.append(np.concatenate(ys) if ys else np.zeros(0, dtype=np.intp))
    return SyntheticDataset(feats, labs, means)


def make_dataset(n: int, K: int, M: int, d: int, alpha, seed: int) -> SyntheticDataset:
    counts = dirichlet_partition(n, K, M, alpha, seed)
    ds = generate_features(counts, d, seed)
    alpha_meta = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (n,)).tolist()
    ds.meta = {"alpha": alpha_meta, "seed": int(seed), "M": int(M)}
    return ds


# ------------------------------------------------------------ sigmoid loss

SIGN_MODES = {"verbatim": 1.0, "corrected": -1.0}


class SigmoidProblem(Problem):
    """K-class sigmoid loss with L2 regularisation.

    ``f_i(theta) = (1/M) sum_m sum_k s(y_mk x_m . theta_k) + lam/2 ||theta||^2``
    with ``y_mk`` the one-hot label and ``s(z) = 1/(1 + exp(-z))`` in
    ``verbatim`` mode, ``s(z) = 1/(1 + exp(z))`` in ``corrected`` mode.
    ``theta`` is flat of length ``K*d``; block ``k`` is ``theta[k*d:(k+1)*d]``.
    """

    def __init__(self, dataset: SyntheticDataset, lam: float = DEFAULT_LAMBDA, sign_mode: str = "verbatim"):
        if sign_mode not in SIGN_MODES:
            raise ValueError(f"sign_mode must be one of {sorted(SIGN_MODES)}")
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        self.data = dataset
        self.lam = float(lam)
        self.sign_mode = sign_mode
        self.sign = SIGN_MODES[sign_mode]
        self.dims = ProblemDims(dataset.n, dataset.d, dataset.K)
        self.n = dataset.n
        self.dim = self.dims.flat_dim
        self._X = [np.ascontiguousarray(x, dtype=np.float64) for x in dataset.features]
        self._y = [np.ascontiguousarray(y, dtype=np.intp) for y in dataset.labels]
        self._M = np.array([len(y) for y in self._y])
        self._Xpool = np.ascontiguousarray(np.concatenate(self._X)) if self.n else np.zeros((0, dataset.d))
        self._ypool = np.concatenate(self._y) if self.n else np.zeros(0, dtype=np.intp)

    def _blocks(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim,):
            raise ValueError(f"expected flat parameters of length {self.dim}, got shape {theta.shape}")
        return theta.reshape(self.dims.K, self.dims.d)

    def _local(self, i, theta):
        blocks = self._blocks(theta)
        M = self._M[i]
        if M == 0:
            return self.lam / 2 * float(theta @ theta), self.lam * np.asarray(theta, dtype=np.float64)
        total, g = kernels.label_sigmoid(self._X[i], self._y[i], blocks, self.sign)
        value = (total + 0.5 * (self.dims.K - 1) * M) / M + self.lam / 2 * float(theta @ theta)
        return value, g.ravel() / M + self.lam * theta

    def value(self, i, theta):
        return self._local(i, theta)[0]

    def grad(self, i, theta):
        return self._local(i, theta)[1]

    def _weighted_pool(self, theta):
        # F = (1/n) sum_i (1/M_i) sum_m ...; weight each sample by 1/(n M_i)
        blocks = self._blocks(theta)
        if np.all(self._M == self._M[0]) and self._M[0] > 0:
            total, g = kernels.label_sigmoid(self._Xpool, self._ypool, blocks, self.sign)
            scale = 1.0 / (self.n * self._M[0])
            const = 0.5 * (self.dims.K - 1)
            return total * scale + const, g.ravel() * scale
        vals, grads = 0.0, np.zeros(self.dim)
        for i in range(self.n):
            v, gr = self._local(i, theta)
            vals += v - self.lam / 2 * float(theta @ theta)
            grads += gr - self.lam * theta
        return vals / self.n, grads / self.n

    def global_value(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        return self._weighted_pool(theta)[0] + self.lam / 2 * float(theta @ theta)

    def global_grad(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        return self._weighted_pool(theta)[1] + self.lam * theta


# ------------------------------------------------------------ constants


@dataclass(frozen=True)
class ProblemConstants:
    """Monte-Carlo lower estimates of the smoothness, gradient bound and heterogeneity."""

    L_hat: float
    G_hat: float
    varsigma_hat: float
    samples: int
    radius: float
    note: str = "sampled lower bounds"


def estimate_constants(problem: Problem, samples: int = 64, radius: float = 1.0, seed: int = 0, center=None) -> ProblemConstants:
    """Sample points in a ball of ``radius`` around ``center`` (default origin).

    ``L_hat`` is the largest observed gradient-difference quotient over random
    pairs; ``G_hat`` and ``varsigma_hat`` are the largest observed
    ``||grad f_i||`` and ``||grad F - grad f_i||``.
    """
    s = rng.Stream(seed, rng.AUX, 11)
    D = problem.dim
    c = np.zeros(D) if center is None else np.asarray(center, dtype=np.float64)

    def draw():
        v = s.normals(D)
        nv = np.linalg.norm(v)
        r = radius * s.uniform() ** (1.0 / D)
        return c + (v / nv * r if nv > 0 else v)

    L = G = vs = 0.0
    for _ in range(samples):
        t1, t2 = draw(), draw()
        g1 = problem.grad_stack(np.tile(t1, (problem.n, 1)))
        g2 = problem.grad_stack(np.tile(t2, (problem.n, 1)))
        dist = np.linalg.norm(t1 - t2)
        if dist > 0:
            L = max(L, float(np.max(np.linalg.norm(g1 - g2, axis=1)) / dist))
        G = max(G, float(np.max(np.linalg.norm(g1, axis=1))))
        vs = max(vs, float(np.max(np.linalg.norm(g1.mean(axis=0) - g1, axis=1))))
    return ProblemConstants(L, G, vs, samples, radius)
