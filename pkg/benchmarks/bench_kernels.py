"""Compiled vs numpy kernels: wall time per call and agreement.

    python3 benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import timeit

import numpy as np

from d3gd import _fallback

try:
    from d3gd import _kernels
except ImportError:
    _kernels = None


def cases(rs):
    v = rs.normal(size=40)
    sup = np.sort(rs.choice(40, 12, replace=False)).astype(np.intp)
    mask = rs.random((30, 30)) < 0.4
    mask |= np.eye(30, dtype=bool)
    V = rs.normal(size=(30, 30))
    X = rs.normal(size=(200, 10))
    y = rs.integers(0, 5, 200).astype(np.intp)
    theta = rs.normal(size=(5, 10))
    return {
        "project_simplex (m=12)": lambda mod: mod.project_simplex(v, sup),
        "project_rows (30x30)": lambda mod: mod.project_rows(V, mask),
        "label_sigmoid (M=200, K=5, d=10)": lambda mod: mod.label_sigmoid(X, y, theta, 1.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels not built; only the numpy backend is available")
    print(f"{'kernel':<34}{'numpy us':>11}{'cython us':>11}{'speedup':>9}{'max diff':>11}")
    for name, call in cases(np.random.default_rng(0)).items():
        t_py = min(timeit.repeat(lambda: call(_fallback), number=args.repeat, repeat=3)) / args.repeat * 1e6
        if _kernels is None:
            print(f"{name:<34}{t_py:>11.1f}{'-':>11}{'-':>9}{'-':>11}")
            continue
        t_cy = min(timeit.repeat(lambda: call(_kernels), number=args.repeat, repeat=3)) / args.repeat * 1e6
        a, b = call(_fallback), call(_kernels)
        pairs = zip(a, b) if isinstance(a, tuple) else [(a, b)]
        diff = max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in pairs)
        print(f"{name:<34}{t_py:>11.1f}{t_cy:>11.1f}{t_py / t_cy:>9.1f}{diff:>11.1e}")


if __name__ == "__main__":
    main()
