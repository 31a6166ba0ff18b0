"""Command line: ``d3gd run|validate|summarize``.

Exit codes: 0 success, 1 invalid spec, 2 at least one cell failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from d3gd import harness

log = logging.getLogger("d3gd")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _parse_seeds(text):
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


def _load(args):
    overrides = list(args.override or [])
    if args.seeds is not None:
        overrides.append(f"seeds={_parse_seeds(args.seeds)}")
    if getattr(args, "workers", None) is not None:
        overrides.append(f"workers={args.workers}")
    if getattr(args, "output", None) is not None:
        overrides.append(f"output={args.output}")
    return harness.ExperimentSpec.load(args.spec, overrides)


def _report_errors(err):
    for e in getattr(err, "errors", [str(err)]):
        print(f"invalid spec: {e}", file=sys.stderr)


def cmd_validate(args) -> int:
    try:
        spec = _load(args)
    except (harness.SpecError, OSError, ValueError, IndexError) as err:
        _report_errors(err)
        return EXIT_INVALID
    print(json.dumps(spec.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        spec = _load(args)
    except (harness.SpecError, OSError, ValueError, IndexError) as err:
        _report_errors(err)
        return EXIT_INVALID
    manifest = harness.run_experiment(spec)
    failed = [c for c in manifest["cells"] if c["failed"]]
    for c in failed:
        print(f"cell {c['algorithm']}/{c['seed']} failed: {c['failed']}", file=sys.stderr)
    rows = harness.summarize(spec.directory)
    _print_table(rows)
    return EXIT_RUNTIME if failed else EXIT_OK


def _fmt(x, spec="{:.4g}"):
    return "undefined" if x is None else spec.format(x)


def _print_table(rows):
    print(f"{'algorithm':<22}{'seed':>6}{'k(tau)':>10}{'speedup':>11}{'final stat':>14}")
    for r in rows:
        final = (r.get("final") or {}).get("stationarity")
        k = r.get("iterations_to_threshold")
        print(f"{r['algorithm']:<22}{r['seed']:>6}{_fmt(k, '{}'):>10}{_fmt(r.get('speedup_vs_baseline')):>11}{_fmt(final):>14}")
    med = harness.median_speedups(rows)
    for name, v in sorted(med.items()):
        print(f"median speedup {name}: {v:.4g}")


def cmd_summarize(args) -> int:
    rows = harness.summarize(args.out_dir)
    if not rows:
        print(f"no summary.json files under {args.out_dir}", file=sys.stderr)
        return EXIT_INVALID
    if args.json:
        print(json.dumps(rows, indent=2, sort_keys=True))
    else:
        _print_table(rows)
    return EXIT_RUNTIME if any(r.get("failed") for r in rows) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="d3gd", description="Run and summarize dynamic-weight decentralized optimization experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def spec_args(sp):
        sp.add_argument("spec", help="YAML experiment spec")
        sp.add_argument("--seeds", help="comma list or ranges, e.g. 0,1,5-7")
        sp.add_argument("--override", action="append", metavar="KEY=VALUE", help="dotted key, YAML value; repeatable")

    r = sub.add_parser("run", help="run every (algorithm, seed) cell")
    spec_args(r)
    r.add_argument("--workers", type=int)
    r.add_argument("--output", help="output root (default from spec)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a spec and print it fully resolved")
    spec_args(v)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("summarize", help="tabulate summary.json files")
    s.add_argument("out_dir")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
