"""Experiment specs, cell execution and output bundles.

A spec file (YAML) names a scenario and overrides any of its defaults. Each
``(algorithm, seed)`` cell writes::

    <output>/<scenario>/<algorithm>/<seed>/metrics.csv
    <output>/<scenario>/<algorithm>/<seed>/A_snapshot_<k>.csv  (+ .dot)
    <output>/<scenario>/<algorithm>/<seed>/summary.json

and the run writes ``<output>/<scenario>/manifest.json`` with the resolved
spec, enough to re-create every cell.
"""

from __future__ import annotations

import copy
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from d3gd import __version__, graph as G, kernels, metrics, problems as P
from d3gd.didgd import StepSchedule, didgd_init
from d3gd.engine import MODES, RunConfig, run_d3gd

SCENARIOS = ("er_convergence", "ring_outlier", "custom")
RING_OUTLIER_EDGES = ((0, 1), (0, 2), (1, 0), (2, 3), (3, 1))
RING_OUTLIER_NAMES = ("A", "B", "C", "D")


class SpecError(ValueError):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def _default_algorithms():
    return [
        {"name": "didgd", "mode": "didgd"},
        {"name": "d3gd_central", "mode": "d3gd_central"},
        {"name": "d3gd_decentralized", "mode": "d3gd_decentralized"},
    ]


_COMMON = {
    "seeds": [0],
    "output": "out",
    "workers": 1,
    "data": {"K": 10, "d": 10, "M": 100, "alpha": 0.1, "lam": P.DEFAULT_LAMBDA, "sign_mode": "verbatim"},
    "init": {"rule": "gaussian", "scale": 0.1},
    "stride": 1,
    "snapshots": [],
    "threshold": {"fraction": 0.6, "value": None},
    "baseline": "didgd",
    "lyapunov": {"variant": "eq7", "L": None, "samples": 32, "radius": 1.0},
    "defaults": {"weights": "metropolis", "gamma": 0.1, "eta": 1.0, "delta": 0.2},
}

SCENARIO_DEFAULTS = {
    "er_convergence": {
        "graph": {"kind": "er", "n": 20, "p": 0.6},
        "T": 2000,
        "algorithms": _default_algorithms(),
    },
    "ring_outlier": {
        "graph": {"kind": "ring_outlier", "n": 4},
        "data": {"alpha": [0.1, 100.0, 100.0, 100.0]},
        "T": 1000,
        "snapshots": [0, 1000],
        "algorithms": _default_algorithms(),
    },
    "custom": {
        "graph": {"kind": "er", "n": 10, "p": 0.6},
        "T": 1000,
        "algorithms": _default_algorithms(),
    },
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def apply_override(raw: dict, assignment: str) -> dict:
    """Apply ``dotted.key=value`` (value parsed as YAML) to a raw spec dict."""
    if "=" not in assignment:
        raise SpecError([f"override {assignment!r} is not of the form key=value"])
    key, text = assignment.split("=", 1)
    value = yaml.safe_load(text)
    node = raw
    parts = key.strip().split(".")
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node.setdefault(part, {})
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return raw


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    mode: str
    weights: str = "metropolis"
    gamma: float = 0.1
    gamma_kind: str = "constant"
    gamma_exponent: float = 0.0
    eta: float = 1.0
    delta: float = 0.2
    active_set: str = "all"
    active_m: int | None = None
    central_gradient: str = "chain_rule"
    surrogate_first_term: str = "verbatim"
    backtracking: bool = False
    pi_refresh_steps: int = 5

    def run_config(self, T, seed, stride, snapshots) -> RunConfig:
        return RunConfig(
            mode=self.mode,
            T=T,
            delta=self.delta,
            gamma=StepSchedule(self.gamma, self.gamma_kind, self.gamma_exponent),
            eta=StepSchedule(self.eta),
            active_set=self.active_set,
            active_m=self.active_m,
            seed=seed,
            stride=stride,
            snapshots=tuple(snapshots),
            pi_refresh_steps=self.pi_refresh_steps,
            central_gradient=self.central_gradient,
            surrogate_first_term=self.surrogate_first_term,
            backtracking=self.backtracking,
        )


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    graph: dict
    data: dict
    algorithms: tuple
    seeds: tuple
    output: str = "out"
    T: int = 1000
    workers: int = 1
    init: dict = field(default_factory=dict)
    stride: int = 1
    snapshots: tuple = ()
    threshold: dict = field(default_factory=dict)
    baseline: str = "didgd"
    lyapunov: dict = field(default_factory=dict)
    problem: str = "sigmoid"

    @classmethod
    def from_dict(cls, raw: dict, overrides=()) -> "ExperimentSpec":
        errors = []
        scenario = raw.get("scenario")
        if scenario not in SCENARIOS:
            raise SpecError([f"scenario: must be one of {list(SCENARIOS)}, got {scenario!r}"])
        base = _merge(_COMMON, SCENARIO_DEFAULTS[scenario])
        user_graph = raw.get("graph") or {}
        if "kind" in user_graph and user_graph["kind"] != base["graph"]["kind"]:
            # a different topology family shares none of the default parameters
            base["graph"] = {}
        resolved = _merge(base, raw)
        for ov in overrides:
            apply_override(resolved, ov)
        defaults = resolved.pop("defaults", {})
        algos = []
        names = set()
        for idx, a in enumerate(resolved.get("algorithms") or []):
            if not isinstance(a, dict):
                errors.append(f"algorithms.{idx}: must be a mapping")
                continue
            merged = {**defaults, **a}
            merged.setdefault("name", merged.get("mode"))
            try:
                spec = AlgorithmSpec(**merged)
            except TypeError as exc:
                errors.append(f"algorithms.{idx}: {exc}")
                continue
            if spec.mode not in MODES:
                errors.append(f"algorithms.{idx}.mode: must be one of {list(MODES)}")
            if spec.weights not in ("metropolis", "uniform"):
                errors.append(f"algorithms.{idx}.weights: must be 'metropolis' or 'uniform'")
            if spec.mode != "didgd" and not 0 < spec.delta < 1:
                errors.append(f"algorithms.{idx}.delta: must lie in (0, 1)")
            if spec.name in names:
                errors.append(f"algorithms.{idx}.name: duplicate name {spec.name!r}")
            names.add(spec.name)
            algos.append(spec)
        if not algos:
            errors.append("algorithms: at least one algorithm is required")
        seeds = resolved.get("seeds")
        if not isinstance(seeds, list) or not seeds:
            errors.append("seeds: must be a nonempty list")
            seeds = []
        T = resolved.get("T")
        if not isinstance(T, int) or T < 0:
            errors.append("T: must be a nonnegative integer")
        g = resolved.get("graph", {})
        if g.get("kind") not in ("er", "ring", "ring_outlier", "complete", "edgelist"):
            errors.append("graph.kind: must be one of er, ring, ring_outlier, complete, edgelist")
        if g.get("kind") == "er" and not 0 < float(g.get("p", 0)) <= 1:
            errors.append("graph.p: must lie in (0, 1]")
        if g.get("kind") == "edgelist" and not g.get("path"):
            errors.append("graph.path: required for edgelist graphs")
        if g.get("kind") == "ring_outlier" and g.get("n", 4) != 4:
            errors.append("graph.n: the ring_outlier topology has exactly 4 agents")
        n = g.get("n")
        if g.get("kind") != "edgelist" and (not isinstance(n, int) or n < 1):
            errors.append("graph.n: must be a positive integer")
        data = resolved.get("data", {})
        alpha = np.asarray(data.get("alpha", 0.1), dtype=float)
        if np.any(alpha <= 0):
            errors.append("data.alpha: must be positive")
        if alpha.ndim == 1 and isinstance(n, int) and alpha.size != n:
            errors.append(f"data.alpha: per-agent list must have {n} entries")
        if data.get("sign_mode", "verbatim") not in P.SIGN_MODES:
            errors.append("data.sign_mode: must be 'verbatim' or 'corrected'")
        problem = resolved.get("problem", "sigmoid")
        if problem not in ("sigmoid", "quadratic"):
            errors.append("problem: must be 'sigmoid' or 'quadratic'")
        baseline = resolved.get("baseline")
        if baseline is not None and baseline not in names:
            errors.append(f"baseline: {baseline!r} is not one of the algorithms")
        if int(resolved.get("stride", 1)) < 1:
            errors.append("stride: must be >= 1")
        if errors:
            raise SpecError(errors)
        return cls(
            scenario=scenario,
            graph=dict(g),
            data=dict(data),
            algorithms=tuple(algos),
            seeds=tuple(int(s) for s in seeds),
            output=str(resolved.get("output", "out")),
            T=int(T),
            workers=int(resolved.get("workers", 1)),
            init=dict(resolved.get("init", {})),
            stride=int(resolved.get("stride", 1)),
            snapshots=tuple(int(s) for s in resolved.get("snapshots", ())),
            threshold=dict(resolved.get("threshold", {})),
            baseline=baseline,
            lyapunov=dict(resolved.get("lyapunov", {})),
            problem=problem,
        )

    @classmethod
    def load(cls, path, overrides=()) -> "ExperimentSpec":
        raw = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(raw, dict):
            raise SpecError(["spec file must contain a mapping"])
        return cls.from_dict(raw, overrides)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["algorithms"] = [asdict(a) for a in self.algorithms]
        out["seeds"] = list(self.seeds)
        out["snapshots"] = list(self.snapshots)
        return out

    @property
    def directory(self) -> Path:
        return Path(self.output) / self.scenario


# ------------------------------------------------------------ building blocks


def build_graph(spec: ExperimentSpec, seed: int) -> G.DirectedGraph:
    g = spec.graph
    kind = g["kind"]
    if kind == "er":
        return G.generate_er_digraph(int(g["n"]), float(g["p"]), int(g.get("seed", seed)))
    if kind == "ring":
        return G.directed_ring(int(g["n"]))
    if kind == "ring_outlier":
        return G.DirectedGraph.from_edges(4, RING_OUTLIER_EDGES)
    if kind == "complete":
        return G.complete_digraph(int(g["n"]))
    return G.read_edgelist(g["path"], g.get("n"))


def build_problem(spec: ExperimentSpec, n: int, seed: int):
    d = spec.data
    if spec.problem == "quadratic":
        return P.quadratic_problem(n, int(d.get("d", 5)), seed, float(d.get("condition", 10.0)), float(d.get("b_scale", 1.0)))
    ds = P.make_dataset(n, int(d["K"]), int(d["M"]), int(d["d"]), d["alpha"], seed)
    return P.SigmoidProblem(ds, float(d.get("lam", P.DEFAULT_LAMBDA)), d.get("sign_mode", "verbatim"))


def initial_matrix(graph, weights):
    return G.metropolis_weights(graph) if weights == "metropolis" else G.uniform_in_weights(graph)


def _cell_dir(spec, algo_name, seed) -> Path:
    return spec.directory / algo_name / str(seed)


def run_cell(spec: ExperimentSpec, algo: AlgorithmSpec, seed: int) -> dict:
    """Run one ``(algorithm, seed)`` cell and write its metrics and snapshots."""
    out = _cell_dir(spec, algo.name, seed)
    out.mkdir(parents=True, exist_ok=True)
    info = {"algorithm": algo.name, "mode": algo.mode, "seed": seed, "failed": None}
    try:
        graph = build_graph(spec, seed)
        problem = build_problem(spec, graph.n, seed)
        A0 = initial_matrix(graph, algo.weights)
        init = spec.init
        state = didgd_init(problem, init.get("rule", "gaussian"), seed, float(init.get("scale", 0.1)))
        lcfg = spec.lyapunov
        L = lcfg.get("L")
        if L is None:
            if isinstance(problem, P.QuadraticProblem):
                L = problem.smoothness
            else:
                L = P.estimate_constants(problem, int(lcfg.get("samples", 32)), float(lcfg.get("radius", 1.0)), seed).L_hat
        lyap = metrics.LyapunovConfig(float(L), 1.0, lcfg.get("variant", "eq7"))
        cfg = algo.run_config(spec.T, seed, spec.stride, spec.snapshots)
        result = run_d3gd(problem, A0, cfg, state=state, lyapunov=lyap)
    except Exception as exc:  # noqa: BLE001
        info["failed"] = f"{type(exc).__name__}: {exc}"
        return info
    metrics.write_records_csv(result.records, out / "metrics.csv")
    names = list(RING_OUTLIER_NAMES) if spec.graph["kind"] == "ring_outlier" else None
    for k, A in sorted(result.snapshots.items()):
        G.write_matrix_csv(out / f"A_snapshot_{k}.csv", A)
        (out / f"A_snapshot_{k}.dot").write_text(G.matrix_to_dot(A, names))
    if result.diverged is not None:
        info["failed"] = str(result.diverged)
    info["L_hat"] = float(L)
    return info


# ------------------------------------------------------------ summaries


def iterations_to_threshold(records, tau):
    """First recorded ``k`` with stationarity <= tau, or ``None``."""
    for r in records:
        if r.stationarity <= tau:
            return r.k
    return None


def summarize_speedup(baseline_records, candidate_records, tau):
    """``iters_baseline(tau) / iters_candidate(tau)`` with first-crossing semantics.

    ``None`` when either run never reaches ``tau``. Two runs that both start
    below ``tau`` have ratio 1.
    """
    kb = iterations_to_threshold(baseline_records, tau)
    kc = iterations_to_threshold(candidate_records, tau)
    if kb is None or kc is None:
        return None
    if kc == 0:
        return 1.0 if kb == 0 else math.inf
    return kb / kc


def baseline_threshold(spec: ExperimentSpec, records) -> float | None:
    th = spec.threshold or {}
    if th.get("value") is not None:
        return float(th["value"])
    if not records:
        return None
    target = round(float(th.get("fraction", 0.6)) * spec.T)
    best = min(records, key=lambda r: abs(r.k - target))
    return best.stationarity


def _final(records):
    if not records:
        return None
    return {k: (v if not (isinstance(v, float) and math.isnan(v)) else None) for k, v in asdict(records[-1]).items()}


def write_summaries(spec: ExperimentSpec, cells: list[dict]) -> list[dict]:
    summaries = []
    by_seed = {}
    for c in cells:
        path = _cell_dir(spec, c["algorithm"], c["seed"]) / "metrics.csv"
        recs = metrics.read_records_csv(path) if c["failed"] is None and path.exists() else []
        by_seed.setdefault(c["seed"], {})[c["algorithm"]] = recs
    for c in cells:
        recs = by_seed[c["seed"]][c["algorithm"]]
        base = by_seed[c["seed"]].get(spec.baseline, [])
        tau = baseline_threshold(spec, base)
        s = dict(c)
        s["threshold"] = tau
        s["iterations_to_threshold"] = iterations_to_threshold(recs, tau) if tau is not None else None
        s["speedup_vs_baseline"] = summarize_speedup(base, recs, tau) if tau is not None and recs and base else None
        s["speedup_defined"] = s["speedup_vs_baseline"] is not None
        s["final"] = _final(recs)
        out = _cell_dir(spec, c["algorithm"], c["seed"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(s, indent=2, sort_keys=True, default=_json_default))
        summaries.append(s)
    return summaries


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(type(x))


def _run_cell_args(args):
    spec_dict, algo_index, seed = args
    spec = ExperimentSpec.from_dict(spec_dict)
    return run_cell(spec, spec.algorithms[algo_index], seed)


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> dict:
    """Run every cell, write summaries and the manifest; return the manifest dict."""
    workers = spec.workers if workers is None else workers
    jobs = [(a_idx, seed) for seed in spec.seeds for a_idx in range(len(spec.algorithms))]
    raw = {**spec.to_dict()}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell_args, [(raw, a, s) for a, s in jobs]))
    else:
        cells = [run_cell(spec, spec.algorithms[a], s) for a, s in jobs]
    summaries = write_summaries(spec, cells)
    manifest = {
        "spec": spec.to_dict(),
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "cells": [{"algorithm": s["algorithm"], "seed": s["seed"], "failed": s["failed"]} for s in summaries],
    }
    spec.directory.mkdir(parents=True, exist_ok=True)
    (spec.directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default))
    return manifest


def spec_from_manifest(path) -> ExperimentSpec:
    manifest = json.loads(Path(path).read_text())
    return ExperimentSpec.from_dict(manifest["spec"])


def summarize(out_dir) -> list[dict]:
    """Collect every ``summary.json`` below ``out_dir``."""
    rows = []
    for p in sorted(Path(out_dir).rglob("summary.json")):
        rows.append(json.loads(p.read_text()))
    return rows


def median_speedups(rows) -> dict:
    per = {}
    for r in rows:
        if r.get("speedup_vs_baseline") is not None:
            per.setdefault(r["algorithm"], []).append(r["speedup_vs_baseline"])
    return {k: float(np.median(v)) for k, v in per.items()}


__all__ = [
    "AlgorithmSpec",
    "ExperimentSpec",
    "SpecError",
    "run_experiment",
    "run_cell",
    "summarize",
    "summarize_speedup",
    "spec_from_manifest",
]
