import numpy as np
import pytest
from scipy import stats

from d3gd import rng


def test_streams_are_addressed():
    a = rng.Stream(1, rng.INIT, 3).uniform(5)
    rng.Stream(1, rng.INIT, 2).uniform(100)
    assert np.array_equal(a, rng.Stream(1, rng.INIT, 3).uniform(5))
    assert not np.array_equal(a, rng.Stream(1, rng.INIT, 4).uniform(5))
    assert not np.array_equal(a, rng.Stream(1, rng.FEATURES, 3).uniform(5))


def test_normals_distribution():
    z = rng.Stream(0, rng.AUX, 0).normals(20_000)
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_scalar_normal_pairs():
    s = rng.Stream(0, rng.AUX, 1)
    z = np.array([s.normal() for _ in range(4000)])
    assert abs(z.mean()) < 0.1 and abs(z.std() - 1) < 0.05


@pytest.mark.parametrize("shape", [0.1, 0.5, 1.0, 3.7, 100.0])
def test_gamma_moments(shape):
    s = rng.Stream(2, rng.AUX, 9)
    g = np.array([s.gamma(shape) for _ in range(6000)])
    assert stats.kstest(g, "gamma", args=(shape,)).pvalue > 1e-3


def test_gamma_rejects_nonpositive():
    with pytest.raises(ValueError):
        rng.Stream(0, 0).gamma(0.0)


def test_dirichlet_on_simplex():
    p = rng.Stream(0, 0).dirichlet([0.1] * 10)
    assert abs(p.sum() - 1) < 1e-12 and np.all(p >= 0)


def test_categorical_counts():
    s = rng.Stream(0, 0)
    c = s.categorical_counts(np.array([0.2, 0.3, 0.5]), 10_000)
    assert c.sum() == 10_000
    assert np.allclose(c / 1e4, [0.2, 0.3, 0.5], atol=0.03)
    assert s.categorical_counts(np.array([1.0]), 0).tolist() == [0]


def test_choice_distinct_sorted():
    c = rng.Stream(0, rng.AUX, 5).choice(10, 4)
    assert len(set(c)) == 4 and list(c) == sorted(c)
