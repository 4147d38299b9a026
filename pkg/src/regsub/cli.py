"""Command-line front end.

Exit codes: 0 success (all bounds hold), 1 bound violated, 2 usage error,
3 capacity error. ``REGSUB_JOBS`` sets the default sweep parallelism.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from regsub.core import CapacityError
from regsub.evaluation import evaluate_exact, evaluate_monte_carlo
from regsub.instances import (
    GenerationError,
    InstanceFormatError,
    demo2,
    gen_coverage,
    gen_table_nonmonotone,
    load_instance,
    save_instance,
)
from regsub.objective import check_adaptive_monotone, check_adaptive_submodular
from regsub.oracle_dp import check_bound, default_ratio, optimal_policy, tree_value_decomposition
from regsub.policies import PolicyKind, PolicySpec

log = logging.getLogger("regsub")

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_CAPACITY = 0, 1, 2, 3

RUN_COLUMNS = ["policy", "k", "epsilon", "g_avg", "c_avg", "objective", "std_error", "oracle_queries", "seed", "mode", "trials"]
VERIFY_COLUMNS = ["policy", "k", "epsilon", "ratio_name", "ratio", "policy_objective", "g_opt", "c_opt", "bound", "slack", "std_error", "satisfied"]
SWEEP_COLUMNS = ["instance", "seed", "policy", "k", "epsilon", "mode", "trials", "g_avg", "c_avg", "objective", "std_error", "oracle_queries"]
RATIO_NAMES = {"dg": "1-1/e", "ltdg": "1-1/e-eps", "rdg": "1/e"}


class UsageError(Exception):
    pass


def _instance(args):
    if getattr(args, "instance", None):
        return load_instance(args.instance)
    kind = getattr(args, "kind", None)
    if kind is None:
        raise UsageError("give --instance PATH or --kind {demo2,coverage,table}")
    return _generate(kind, args.n, args.seed)


def _generate(kind: str, n: int | None, seed: int):
    if kind == "demo2":
        if n is not None:
            raise UsageError("--n does not apply to --kind demo2")
        return demo2()
    n = 5 if n is None else n
    if kind == "coverage":
        return gen_coverage(n, seed)
    return gen_table_nonmonotone(n, seed)


def _spec(policy: str, k: int, epsilon, seed: int, negate: bool = False) -> PolicySpec:
    if policy != "ltdg":
        epsilon = None
    elif epsilon is None:
        raise UsageError("--epsilon is required for ltdg")
    try:
        return PolicySpec(PolicyKind(policy), k, epsilon, seed, negate=negate)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _evaluate(spec: PolicySpec, instance, mode: str, trials: int):
    if mode == "exact":
        if spec.kind is PolicyKind.LINEAR_TIME:
            raise UsageError("exact evaluation is not available for ltdg; use --mode mc --trials N")
        return evaluate_exact(spec, instance)
    return evaluate_monte_carlo(spec, instance, trials=trials, seed=spec.seed)


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _emit(rows: list[dict], columns: list[str], fmt: str, out: str | None) -> None:
    if fmt == "json":
        text = json.dumps(rows[0] if len(rows) == 1 else rows, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
        text = buf.getvalue()
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _row(spec: PolicySpec, result) -> dict:
    return {
        "policy": spec.kind.value,
        "k": spec.k,
        "epsilon": spec.epsilon,
        "g_avg": result.g_avg,
        "c_avg": result.c_avg,
        "objective": result.objective,
        "std_error": result.std_error,
        "oracle_queries": result.oracle_queries,
        "seed": spec.seed,
        "mode": result.mode,
        "trials": result.trials,
    }


def cmd_generate(args) -> int:
    if args.kind == "demo2" and args.n is not None:
        raise UsageError("--n does not apply to --kind demo2")
    instance = _generate(args.kind, args.n, args.seed)
    save_instance(instance, args.out, budget_hint=args.k)
    for label, check in (("adaptive-submodular", check_adaptive_submodular), ("adaptive-monotone", check_adaptive_monotone)):
        try:
            report = check(instance)
            print(f"{label}: {'PASS' if report.passed else 'FAIL'} ({len(report.violations)} violations, {report.pairs_checked} checked)")
        except CapacityError:
            print(f"{label}: SKIPPED (instance too large for exhaustive check)")
    return EXIT_OK


def cmd_run(args) -> int:
    instance = _instance(args)
    spec = _spec(args.policy, args.k, args.epsilon, args.seed)
    result = _evaluate(spec, instance, args.mode, args.trials)
    _emit([_row(spec, result)], RUN_COLUMNS, args.format, args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    instance = _instance(args)
    policies = ["dg", "ltdg", "rdg"] if args.policy == "all" else [args.policy]
    tree = optimal_policy(instance, args.k)
    g_opt, c_opt = tree_value_decomposition(tree, instance)
    rows = []
    for name in policies:
        eps = args.epsilon if args.epsilon is not None else (0.1 if name == "ltdg" else None)
        spec = _spec(name, args.k, eps, args.seed, negate=args.corrupt)
        mode = "mc" if name == "ltdg" else "exact"
        result = _evaluate(spec, instance, mode, args.trials)
        check = check_bound(result, g_opt, c_opt, default_ratio(spec))
        rows.append({
            "policy": name, "k": args.k, "epsilon": spec.epsilon,
            "ratio_name": RATIO_NAMES[name], "ratio": check.ratio,
            "policy_objective": check.policy_objective, "g_opt": g_opt, "c_opt": c_opt,
            "bound": check.bound, "slack": check.slack, "std_error": check.std_error,
            "satisfied": check.satisfied,
        })
    _emit(rows, VERIFY_COLUMNS, args.format, args.out)
    return EXIT_OK if all(r["satisfied"] for r in rows) else EXIT_VIOLATION


def _sweep_cell(cell: dict) -> dict:
    if cell["instance_path"]:
        instance = load_instance(cell["instance_path"])
    else:
        instance = _generate(cell["kind"], cell["n"], cell["seed"])
    spec = PolicySpec(PolicyKind(cell["policy"]), cell["k"], cell["epsilon"], cell["seed"])
    mode = cell["mode"]
    if spec.kind is PolicyKind.LINEAR_TIME:
        mode = "mc"
    result = _evaluate(spec, instance, mode, cell["trials"])
    return {
        "instance": instance.name, "seed": spec.seed, "policy": spec.kind.value, "k": spec.k,
        "epsilon": spec.epsilon, "mode": result.mode, "trials": result.trials,
        "g_avg": result.g_avg, "c_avg": result.c_avg, "objective": result.objective,
        "std_error": result.std_error, "oracle_queries": result.oracle_queries,
    }


def _csv_list(text: str, cast):
    try:
        return [cast(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad list {text!r}: {exc}") from exc


def cmd_sweep(args) -> int:
    if not args.instance and not args.kind:
        raise UsageError("give --instance PATH or --kind {demo2,coverage,table}")
    policies = _csv_list(args.policies, str)
    for p in policies:
        if p not in RATIO_NAMES:
            raise UsageError(f"unknown policy {p!r}")
    epsilons = _csv_list(args.epsilons, float)
    if any(not 0 < e < 1 for e in epsilons):
        raise UsageError("epsilons must lie in (0, 1)")
    cells = []
    for seed in _csv_list(args.seeds, int):
        for policy in policies:
            for eps in epsilons if policy == "ltdg" else [None]:
                cells.append({
                    "instance_path": args.instance, "kind": args.kind, "n": args.n, "seed": seed,
                    "policy": policy, "k": args.k, "epsilon": eps, "mode": args.mode, "trials": args.trials,
                })
    done = {}
    if args.resume and args.out and Path(args.out).exists():
        with open(args.out, newline="") as fh:
            for row in csv.DictReader(fh):
                done[(row["seed"], row["policy"], row["epsilon"])] = row
    todo = [c for c in cells if (str(c["seed"]), c["policy"], _fmt(c["epsilon"])) not in done]
    log.info("sweep: %d cells, %d reused from %s", len(cells), len(cells) - len(todo), args.out)
    if args.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            fresh = list(pool.map(_sweep_cell, todo))
    else:
        fresh = [_sweep_cell(c) for c in todo]
    computed = {(str(r["seed"]), r["policy"], _fmt(r["epsilon"])): r for r in fresh}
    rows = []
    for c in cells:
        key = (str(c["seed"]), c["policy"], _fmt(c["epsilon"]))
        rows.append(computed.get(key) or done[key])
    _emit(rows, SWEEP_COLUMNS, args.format, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regsub", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def source(p):
        p.add_argument("--instance", help="instance JSON file")
        p.add_argument("--kind", choices=["demo2", "coverage", "table"], help="generate the instance instead")
        p.add_argument("--n", type=int, default=None, help="items for generated instances")

    def output(p, default_format="json"):
        p.add_argument("--format", choices=["json", "csv"], default=default_format)
        p.add_argument("--out", "-o", default=None)

    g = sub.add_parser("generate", help="write an instance file and report checker results")
    g.add_argument("--kind", choices=["demo2", "coverage", "table"], required=True)
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--k", type=int, default=None, help="budget hint stored in the file")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", "-o", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="evaluate one policy")
    source(r)
    r.add_argument("--policy", choices=["dg", "ltdg", "rdg"], default="dg")
    r.add_argument("--k", type=int, required=True)
    r.add_argument("--epsilon", type=float, default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--trials", type=int, default=100_000)
    r.add_argument("--mode", choices=["exact", "mc"], default="exact")
    output(r)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check approximation bounds against the DP optimum")
    source(v)
    v.add_argument("--policy", choices=["dg", "ltdg", "rdg", "all"], default="dg")
    v.add_argument("--k", type=int, required=True)
    v.add_argument("--epsilon", type=float, default=None)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=int, default=100_000)
    v.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    output(v)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="evaluate a seed x policy x epsilon grid")
    source(s)
    s.add_argument("--policies", default="dg,ltdg")
    s.add_argument("--seeds", default="0,1,2")
    s.add_argument("--epsilons", default="0.1")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--mode", choices=["exact", "mc"], default="mc")
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--jobs", type=int, default=int(os.environ.get("REGSUB_JOBS", "1")))
    s.add_argument("--resume", action="store_true", help="reuse rows already present in --out")
    output(s, "csv")
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if getattr(args, "instance", None) and getattr(args, "kind", None) and args.command != "generate":
        parser.error("--instance and --kind are mutually exclusive")
    if getattr(args, "k", None) is not None and args.k < 1:
        parser.error("--k must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"capacity error: {exc} (try a smaller --n or --k)", file=sys.stderr)
        return EXIT_CAPACITY
    except (GenerationError, InstanceFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
