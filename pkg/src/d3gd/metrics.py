"""Per-iteration metrics, theorem constants and empirical rate/decay diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np
from scipy import stats

from d3gd.design import DesignContext, design_Jbar

LYAPUNOV_COEFFICIENTS = {"eq7": 3.0, "appendix": 10.0 / 3.0}


@dataclass(frozen=True)
class IterationRecord:
    k: int
    stationarity: float
    disagreement: float
    weighted_consensus_error: float
    lyapunov: float
    J_value: float
    grad_F_at_avg: float
    Y_deviation: float
    spectral_gap_k: float = math.nan


CSV_COLUMNS = tuple(f.name for f in fields(IterationRecord))


@dataclass(frozen=True)
class LyapunovConfig:
    L: float
    rho: float
    variant: str = "eq7"

    @property
    def coefficient(self):
        return LYAPUNOV_COEFFICIENTS[self.variant]


def stationarity(problem, Theta) -> float:
    """``(1/n) sum_i ||grad F(theta_i)||^2``."""
    G = problem.global_grad_points(Theta)
    return float(np.sum(G * G) / Theta.shape[0])


def disagreement(Theta) -> float:
    """``(1/n^2) sum_{i,j} ||theta_i - theta_j||^2``, via ``(2/n) sum_i ||theta_i - mean||^2``."""
    C = Theta - Theta.mean(axis=0)
    return float(2.0 * np.sum(C * C) / Theta.shape[0])


def weighted_consensus_error(Theta, pi) -> float:
    """``||Theta - 1 pi^T Theta||_F^2``."""
    C = Theta - (pi @ Theta)[None, :]
    return float(np.sum(C * C))


def compute_record(state, problem, pi, gamma, lyap: LyapunovConfig | None = None, A0=None, Abar=None, delta=1.0, rho_k=math.nan) -> IterationRecord:
    """Measure a frozen state.

    ``J_value`` is the conservative design value at ``Abar`` (``A0`` when
    ``Abar`` is omitted); it is NaN when no ``A0`` is given. ``lyapunov`` is
    NaN without a :class:`LyapunovConfig`.
    """
    Theta = state.Theta
    n = Theta.shape[0]
    avg = pi @ Theta
    wce = weighted_consensus_error(Theta, pi)
    g_avg = problem.global_grad(avg)
    lyap_value = math.nan
    if lyap is not None:
        lyap_value = problem.global_value(avg) + lyap.coefficient * gamma * lyap.L**2 / (n * lyap.rho) * wce
    J_value = math.nan
    if A0 is not None:
        A0 = np.asarray(A0)
        ctx = DesignContext(
            Theta=Theta,
            grads=state.ensure_grads(problem),
            ydiag=np.diagonal(state.Y).copy(),
            pi=pi,
            gamma=gamma,
            delta=delta,
            A0=A0,
            support=A0 > 0,
        )
        J_value = design_Jbar(A0 if Abar is None else Abar, ctx)
    return IterationRecord(
        k=state.k,
        stationarity=stationarity(problem, Theta),
        disagreement=disagreement(Theta),
        weighted_consensus_error=wce,
        lyapunov=lyap_value,
        J_value=J_value,
        grad_F_at_avg=float(g_avg @ g_avg),
        Y_deviation=float(np.linalg.norm(state.Y - np.outer(np.ones(n), pi), 2)),
        spectral_gap_k=rho_k,
    )


def format_value(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_records_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([format_value(v) for v in astuple(r)])


def read_records_csv(path) -> list[IterationRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(IterationRecord(k=int(row["k"]), **{c: float(row[c]) for c in CSV_COLUMNS[1:]}))
    return out


# ------------------------------------------------------------ theorem constants


@dataclass(frozen=True)
class DecayFit:
    C: float
    lam: float
    r2: float
    window: tuple

    @property
    def slope(self):
        return math.log(self.lam) if self.lam > 0 else -math.inf


@dataclass(frozen=True)
class TheoremConstants:
    C_pi1: float
    C_pi2: float
    rho: float
    gamma_cap: float
    C0_hat: float
    lambda_hat: float
    C_hat: float
    reliable: bool


def perron_constants(pi) -> tuple[float, float]:
    pi = np.asarray(pi, dtype=np.float64)
    n = pi.size
    c1 = float(np.sum((1.0 - pi) ** 2 + (n - 1) * pi**2))
    c2 = float(np.sum(1.0 / pi**2))
    return c1, c2


def fit_geometric_decay(values, k_min=10, k_max=200, floor=1e-10) -> DecayFit:
    """Least squares of ``log values[k]`` on ``k`` over the window.

    Values at or below ``floor`` are dropped; deviations from a Perron vector
    solved to 1e-12 plateau near that level.
    """
    values = np.asarray(values, dtype=np.float64)
    ks = np.arange(len(values))
    sel = (ks >= k_min) & (ks <= k_max) & (values > floor)
    if sel.sum() < 3:
        raise ValueError("fewer than three usable points in the fit window")
    x, y = ks[sel], np.log(values[sel])
    res = stats.linregress(x, y)
    return DecayFit(C=float(math.exp(res.intercept)), lam=float(math.exp(res.slope)), r2=float(res.rvalue**2), window=(int(x[0]), int(x[-1])))


def y_deviation_series(Y_traj, pi) -> np.ndarray:
    n = len(pi)
    target = np.outer(np.ones(n), pi)
    return np.array([np.linalg.norm(Y - target, 2) for Y in Y_traj])


def inverse_diag_excess(Y_traj, pi) -> np.ndarray:
    """``||Ytil^{-1}||_F^2 - sum_i 1/pi_i^2`` along a trajectory."""
    base = float(np.sum(1.0 / np.asarray(pi) ** 2))
    return np.array([np.sum(1.0 / np.diagonal(Y) ** 2) - base for Y in Y_traj])


def theorem_constants(pi, rho, L_hat, Y_traj, k_min=10, k_max=200) -> TheoremConstants:
    """Closed-form Perron constants plus fitted decay constants of the ``Y`` recursion.

    ``C0_hat`` is the smallest constant with ``excess_k <= C0 lam^k`` over the
    iterations where ``lam^k`` is above ``1e-10`` (beyond that the excess is
    rounding noise).
    """
    pi = np.asarray(pi, dtype=np.float64)
    n = pi.size
    c1, c2 = perron_constants(pi)
    if len(Y_traj) < 100:
        raise ValueError("need at least 100 iterations of Y for the decay fits")
    devs = y_deviation_series(Y_traj, pi)
    try:
        fit = fit_geometric_decay(devs, k_min, k_max)
    except ValueError:
        fit = DecayFit(C=float(devs[0]), lam=0.0, r2=1.0, window=(0, 0))
    excess = inverse_diag_excess(Y_traj, pi)
    C0 = 0.0
    for k, e in enumerate(excess):
        if fit.lam <= 0 or k * math.log(fit.lam) < math.log(1e-10):
            break
        C0 = max(C0, e / fit.lam**k)
    if c1 == 0:
        cap = math.inf
    else:
        cap = n * rho / (2.0 * L_hat * math.sqrt(c1 * (c2 + C0)))
    return TheoremConstants(c1, c2, float(rho), float(cap), float(C0), fit.lam, fit.C, fit.r2 >= 0.9)


# ------------------------------------------------------------ rate and descent


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci: tuple
    r2: float
    points: tuple
    excluded: tuple = ()


def rate_check(stationarity_by_T: dict, confidence: float = 0.95) -> RateFit:
    """Fit ``log(min_k stationarity)`` against ``log T``.

    ``stationarity_by_T`` maps each horizon ``T`` to its stationarity series
    (``None`` or a non-finite series marks a diverged run, which is dropped).
    """
    points, excluded = [], []
    for T, series in sorted(stationarity_by_T.items()):
        if series is None:
            excluded.append(T)
            continue
        arr = np.asarray(series, dtype=np.float64)[:T]
        if arr.size == 0 or not np.all(np.isfinite(arr)):
            excluded.append(T)
            continue
        points.append((T, max(float(arr.min()), np.finfo(float).tiny)))
    if len(points) < 2:
        raise ValueError("rate check needs at least two horizons")
    x = np.log([p[0] for p in points])
    y = np.log([p[1] for p in points])
    res = stats.linregress(x, y)
    if len(points) > 2:
        half = stats.t.ppf(0.5 + confidence / 2, len(points) - 2) * res.stderr
    else:
        half = math.inf
    return RateFit(float(res.slope), float(res.intercept), (res.slope - half, res.slope + half), float(res.rvalue**2), tuple(points), tuple(excluded))


@dataclass(frozen=True)
class DescentReport:
    fraction: float
    c: float
    residuals: np.ndarray
    fit_window: int


def descent_residuals(records, gammas, L, rho, n) -> np.ndarray:
    """Computable part of the one-step Lyapunov inequality, one entry per transition ``k -> k+1``::

        L_{k+1} - L_k + gamma/4 ||grad F(avg_k)||^2
            + 3 gamma L^2 (2 - rho)/(n rho) ||Theta_k - avg_k||^2
            - 3 gamma L^2/(n rho) ||Theta_{k+1} - avg_{k+1}||^2
    """
    out = []
    for a, b in zip(records[:-1], records[1:]):
        if b.k != a.k + 1:
            raise ValueError("descent check needs records at every iteration")
        g = gammas(a.k) if callable(gammas) else gammas[a.k]
        coef = 3.0 * g * L**2 / (n * rho)
        out.append(b.lyapunov - a.lyapunov + g / 4 * a.grad_F_at_avg + coef * (2.0 - rho) * a.weighted_consensus_error - coef * b.weighted_consensus_error)
    return np.array(out)


def descent_check(records, gammas, L, rho, n, fit_fraction: float = 0.5) -> DescentReport:
    """Check ``residual_k <= c gamma_k^3``.

    ``c`` is fitted on the first ``fit_fraction`` of the transitions as the
    largest ``residual / gamma^3`` there (floored at zero); the reported
    fraction is over the remaining, held-out transitions.
    """
    res = descent_residuals(records, gammas, L, rho, n)
    g3 = np.array([(gammas(r.k) if callable(gammas) else gammas[r.k]) ** 3 for r in records[:-1]])
    split = max(1, int(len(res) * fit_fraction))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(g3 > 0, res / g3, np.where(res > 0, np.inf, 0.0))
    c = max(0.0, float(np.max(ratio[:split]))) if len(res) else 0.0
    held = res[split:] if split < len(res) else res
    held_g3 = g3[split:] if split < len(res) else g3
    frac = float(np.mean(held <= c * held_g3 + 1e-15)) if len(held) else 1.0
    return DescentReport(frac, c, res, split)
