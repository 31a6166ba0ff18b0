"""Deterministic random streams.

Every random quantity comes from a Philox (counter-based) generator keyed by
``(seed, purpose, stream)``. Streams are addressed, not consumed in sequence,
so adding agents never perturbs the draws of existing ones.

Purposes
--------
PARTITION  class-count draws; stream ``1 + i`` for agent ``i``
FEATURES   stream 0 for class means, ``1 + i`` for agent ``i``'s features
INIT       initial parameters; stream ``1 + i`` for agent ``i``
GRAPH      random graph generation; stream = retry attempt
AUX        anything else (estimation probes, active sets, spectral starts)
"""

import math

import numpy as np

PARTITION = 0
FEATURES = 1
INIT = 2
GRAPH = 3
AUX = 4


class Stream:
    """Uniform source with Box-Muller normals and Marsaglia-Tsang gammas."""

    def __init__(self, seed, purpose, stream=0):
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(stream)))
        self._gen = np.random.Generator(np.random.Philox(ss))
        self._spare = None

    def uniform(self, size=None):
        """Uniform draws on [0, 1)."""
        return self._gen.random(size)

    def _open_uniform(self, size):
        # (0, 1] so log() is finite
        return 1.0 - self._gen.random(size)

    def normal(self):
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1, u2 = self._open_uniform(2)
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, size):
        """Vector of standard normals by Box-Muller; does not touch the scalar spare."""
        count = int(np.prod(size)) if np.ndim(size) else int(size)
        pairs = (count + 1) // 2
        u1 = self._open_uniform(pairs)
        u2 = self._gen.random(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:count].reshape(size)

    def gamma(self, shape):
        """Gamma(shape, 1) by Marsaglia-Tsang, with the U^(1/a) boost for shape < 1."""
        if shape <= 0:
            raise ValueError(f"gamma shape must be positive, got {shape}")
        if shape < 1.0:
            g = self.gamma(shape + 1.0)
            return g * self._open_uniform(None) ** (1.0 / shape)
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal()
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = self._open_uniform(None)
            if math.log(u) < 0.5 * x * x + d - d * v + d * math.log(v):
                return d * v

    def dirichlet(self, alphas):
        g = np.array([self.gamma(a) for a in alphas])
        total = g.sum()
        if total == 0.0:
            # all gammas underflowed (tiny alpha): mass goes to the largest log-draw
            out = np.zeros(len(alphas))
            out[int(np.argmax(g))] = 1.0
            return out
        return g / total

    def categorical_counts(self, p, draws):
        """Counts from ``draws`` sequential categorical draws (one multinomial sample)."""
        counts = np.zeros(len(p), dtype=np.int64)
        if draws == 0:
            return counts
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        picks = np.searchsorted(cdf, self.uniform(draws), side="right")
        np.add.at(counts, np.minimum(picks, len(p) - 1), 1)
        return counts

    def choice(self, n, m):
        """``m`` distinct indices from ``range(n)``, sorted."""
        return np.sort(self._gen.permutation(n)[:m])
