import math

import numpy as np
import pytest

from d3gd import graph as G, metrics as Mx, problems as P
from d3gd.didgd import NetworkState, StepSchedule, didgd_init, run_didgd


def state(Theta, n=None):
    Theta = np.asarray(Theta, dtype=float)
    return NetworkState(Theta, np.eye(Theta.shape[0]))


class TestRecord:
    def test_consensus_at_minimizer(self):
        q = P.quadratic_problem(4, 3, 0)
        x = q.minimizer()
        s = state(np.tile(x, (4, 1)))
        pi = np.full(4, 0.25)
        r = Mx.compute_record(s, q, pi, 0.1, Mx.LyapunovConfig(q.smoothness, 0.5))
        assert r.stationarity < 1e-25 and r.disagreement == 0 and r.weighted_consensus_error == 0
        assert r.lyapunov == pytest.approx(q.global_value(x), abs=1e-14)

    def test_two_agent_disagreement(self):
        assert Mx.disagreement(np.array([[0.0], [2.0]])) == 2.0

    def test_disagreement_matches_double_sum(self, rs):
        T = rs.normal(size=(6, 3))
        ref = sum(np.sum((T[i] - T[j]) ** 2) for i in range(6) for j in range(6)) / 36
        assert Mx.disagreement(T) == pytest.approx(ref, rel=1e-12)

    def test_j_value_consensus(self):
        q = P.quadratic_problem(3, 2, 0)
        A0 = G.metropolis_weights(G.complete_digraph(3)).weights
        s = state(np.tile([1.0, 2.0], (3, 1)))
        r = Mx.compute_record(s, q, np.full(3, 1 / 3), 0.1, A0=A0)
        assert abs(r.J_value) < 1e-14

    def test_nan_without_config(self):
        q = P.quadratic_problem(2, 2, 0)
        r = Mx.compute_record(state(np.zeros((2, 2))), q, np.full(2, 0.5), 0.1)
        assert math.isnan(r.lyapunov) and math.isnan(r.J_value)

    def test_permutation_invariance(self, rs):
        q = P.quadratic_problem(5, 2, 1)
        T = rs.normal(size=(5, 2))
        perm = rs.permutation(5)
        assert Mx.stationarity(q, T) == pytest.approx(Mx.stationarity(q, T[perm]), rel=1e-12)
        assert Mx.disagreement(T) == pytest.approx(Mx.disagreement(T[perm]), rel=1e-12)

    def test_consensus_detectors_agree(self, rs):
        pi = rs.dirichlet(np.ones(4))
        for _ in range(20):
            T = np.tile(rs.normal(size=3), (4, 1))
            if rs.random() < 0.5:
                T = T + rs.normal(size=T.shape)
            assert (Mx.disagreement(T) < 1e-24) == (Mx.weighted_consensus_error(T, pi) < 1e-24)

    def test_lyapunov_bounded_below(self, rs):
        q = P.quadratic_problem(4, 2, 3)
        fmin = q.global_value(q.minimizer())
        for _ in range(20):
            s = state(rs.normal(size=(4, 2)))
            r = Mx.compute_record(s, q, rs.dirichlet(np.ones(4)), 0.05, Mx.LyapunovConfig(3.0, 0.4, "appendix"))
            assert r.lyapunov >= fmin

    def test_lyapunov_coefficients(self):
        assert Mx.LyapunovConfig(1, 1).coefficient == 3.0
        assert Mx.LyapunovConfig(1, 1, "appendix").coefficient == pytest.approx(10 / 3)


class TestCSV:
    def test_roundtrip(self, tmp_path):
        recs = [Mx.IterationRecord(k, 1 / 3 + k, 2e-300, 0.1, math.nan, -1.5, 7.0, 0.0) for k in range(3)]
        p = tmp_path / "m.csv"
        Mx.write_records_csv(recs, p)
        lines = p.read_text().splitlines()
        assert lines[0].split(",") == list(Mx.CSV_COLUMNS)
        assert lines[1].split(",")[1] == "0.33333333333333331"
        back = Mx.read_records_csv(p)
        assert [r.stationarity for r in back] == [r.stationarity for r in recs]
        assert math.isnan(back[0].lyapunov)


class TestTheoremConstants:
    @pytest.mark.parametrize("pi,c1,c2", [(np.full(4, 0.25), 3.0, 64.0), (np.ones(1), 0.0, 1.0), (np.full(2, 0.5), 1.0, 8.0)])
    def test_closed_forms(self, pi, c1, c2):
        a, b = Mx.perron_constants(pi)
        assert a == pytest.approx(c1, abs=1e-12) and b == pytest.approx(c2, abs=1e-12)

    def test_c_pi2_power_mean(self, rs):
        for n in (2, 5, 9):
            pi = rs.dirichlet(np.ones(n))
            assert Mx.perron_constants(pi)[1] > n**3
            assert Mx.perron_constants(np.full(n, 1 / n))[1] == pytest.approx(n**3)

    def test_fit_exact_geometric(self):
        v = 3.0 * 0.9 ** np.arange(300)
        fit = Mx.fit_geometric_decay(v)
        assert fit.lam == pytest.approx(0.9, rel=1e-10) and fit.C == pytest.approx(3.0, rel=1e-8) and fit.r2 > 0.999999

    def test_fit_too_few_points(self):
        with pytest.raises(ValueError):
            Mx.fit_geometric_decay(np.zeros(300))

    def test_on_real_trajectory(self, metro10):
        W = metro10.weights
        pi, _, _ = G.perron_vector(W)
        Ys = [np.eye(10)]
        for _ in range(300):
            Ys.append(W @ Ys[-1])
        tc = Mx.theorem_constants(pi, G.spectral_gap(W, pi), 1.0, Ys)
        assert tc.reliable and 0 < tc.lambda_hat < 1 and tc.C0_hat >= 0
        assert tc.gamma_cap > 0

    def test_short_trajectory(self):
        with pytest.raises(ValueError):
            Mx.theorem_constants(np.full(2, 0.5), 0.5, 1.0, [np.eye(2)] * 10)


def _rate_series(prob, A, Ts, c):
    out = {}
    for T in Ts:
        sched = StepSchedule(c, exponent=1 / 3, horizon=T)
        r = run_didgd(prob, A, sched, T, recorder=lambda s: Mx.stationarity(prob, s.Theta), state=didgd_init(prob, "gaussian", 0, 1.0))
        out[T] = None if r.diverged else r.records
    return out


class TestRate:
    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            Mx.rate_check({200: [1.0, 0.5]})

    def test_diverged_excluded(self):
        fit = Mx.rate_check({100: np.full(100, 1e-2), 200: np.full(200, 1e-3), 400: None, 800: [np.inf]})
        assert fit.excluded == (400, 800) and len(fit.points) == 2

    def test_exact_power_law(self):
        fit = Mx.rate_check({T: [T ** (-2 / 3)] for T in (200, 400, 800, 1600)})
        assert fit.slope == pytest.approx(-2 / 3, abs=1e-12) and fit.ci[0] <= fit.slope <= fit.ci[1]

    def test_homogeneous_quadratic(self):
        n = 5
        Qi = np.diag([1.0, 2.0, 4.0])
        q = P.QuadraticProblem(np.stack([Qi] * n), np.tile([1.0, -1.0, 0.5], (n, 1)))
        A = G.metropolis_weights(G.generate_er_digraph(n, 0.6, 0))
        fit = Mx.rate_check(_rate_series(q, A, (200, 400, 800, 1600), 0.05))
        assert fit.slope <= -0.6


class TestDescent:
    def test_zero_gradient_consensus(self):
        prob = P.ConstantProblem(3, 2)
        A = G.metropolis_weights(G.complete_digraph(3))
        lyap = Mx.LyapunovConfig(1.0, 0.5)
        recs = run_didgd(prob, A, StepSchedule(0.1), 20, recorder=lambda s: Mx.compute_record(s, prob, np.full(3, 1 / 3), 0.1, lyap), state=didgd_init(prob, Theta0=np.ones((3, 2)))).records
        rep = Mx.descent_check(recs, lambda k: 0.1, 1.0, 0.5, 3)
        assert np.all(rep.residuals == 0) and rep.fraction == 1.0

    def test_single_agent_descent_lemma(self):
        q = P.QuadraticProblem(np.array([[[2.0]]]), np.array([[1.0]]))
        L = 2.0
        gamma = 1 / (4 * L)
        lyap = Mx.LyapunovConfig(L, 1.0)
        recs = run_didgd(q, np.ones((1, 1)), StepSchedule(gamma), 50, recorder=lambda s: Mx.compute_record(s, q, np.ones(1), gamma, lyap), state=didgd_init(q, Theta0=np.array([[5.0]]))).records
        res = Mx.descent_residuals(recs, lambda k: gamma, L, 1.0, 1)
        assert np.all(res <= 1e-14)

    def test_needs_every_iteration(self):
        recs = [Mx.IterationRecord(k, 0, 0, 0, 0, 0, 0, 0) for k in (0, 2)]
        with pytest.raises(ValueError):
            Mx.descent_residuals(recs, lambda k: 0.1, 1, 1, 1)
