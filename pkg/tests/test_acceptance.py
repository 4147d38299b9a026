"""Acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (also collected into the
pytest terminal summary). Run on its own with::

    pytest tests/test_acceptance.py -s
"""

import dataclasses
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from regsub.evaluation import evaluate_exact, evaluate_monte_carlo, exact_branches, verify_step_identity
from regsub.instances import demo2, gen_coverage, gen_table_nonmonotone
from regsub.objective import TOL, check_adaptive_monotone, check_adaptive_submodular
from regsub.oracle_dp import check_bound, optimal_policy, tree_value_decomposition
from regsub.policies import (
    Environment,
    PolicySpec,
    augment_with_dummies,
    run_distorted_greedy,
    run_linear_time,
    sample_size,
)

E = math.e
MC_TRIALS = 100_000


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@dataclasses.dataclass
class Case:
    instance: object
    k: int
    g_opt: float
    c_opt: float


def _case(inst, k):
    g, c = tree_value_decomposition(optimal_policy(inst, k), inst)
    return Case(inst, k, g, c)


@pytest.fixture(scope="module")
def monotone_batch():
    """100 seeded coverage instances, n <= 6, |O| = 2, k in {2, 3}, both checks pass."""
    cases = []
    for seed in range(100):
        inst = gen_coverage(3 + seed % 4, seed)
        assert inst.n_states == 2
        assert check_adaptive_submodular(inst).passed and check_adaptive_monotone(inst).passed
        cases.append(_case(inst, 2 + seed % 2))
    return cases


@pytest.fixture(scope="module")
def table_batch():
    """50 non-monotone adaptive submodular table instances, n <= 4."""
    cases = []
    for seed in range(50):
        inst = gen_table_nonmonotone(2 + seed % 3, seed)
        cases.append(_case(inst, 2 + seed % 2))
    return cases


def _bound_sweep(cases, spec_for, ratio, trials=None):
    worst, failures = math.inf, []
    for case in cases:
        spec = spec_for(case)
        if trials is None:
            res = evaluate_exact(spec, case.instance)
        else:
            res = evaluate_monte_carlo(spec, case.instance, trials=trials, seed=spec.seed)
        check = check_bound(res, case.g_opt, case.c_opt, ratio)
        worst = min(worst, check.slack)
        if not check.satisfied:
            failures.append((case.instance.name, case.k, check.slack))
    return worst, failures


def test_distorted_greedy_bound(monotone_batch):
    worst, failures = _bound_sweep(monotone_batch, lambda c: PolicySpec("dg", c.k), 1 - 1 / E)
    ok = not failures
    report("DG ratio bound (DG >= (1-1/e) g_opt - c_opt, exact)",
           ok, f"{len(monotone_batch) - len(failures)}/{len(monotone_batch)} instances, min slack {worst:.6g}")
    assert ok, failures


def test_random_distorted_greedy_bound(monotone_batch, table_batch):
    cases = monotone_batch + table_batch
    worst, failures = _bound_sweep(cases, lambda c: PolicySpec("rdg", c.k), 1 / E)
    ok = not failures
    report("RDG ratio bound (RDG >= (1/e) g_opt - c_opt, exact)",
           ok, f"{len(cases) - len(failures)}/{len(cases)} instances "
           f"({len(monotone_batch)} monotone + {len(table_batch)} non-monotone), min slack {worst:.6g}")
    assert ok, failures


def test_linear_time_bound(monotone_batch):
    lines, all_failures = [], []
    for eps in (0.1, 0.2):
        worst, failures = _bound_sweep(
            monotone_batch, lambda c: PolicySpec("ltdg", c.k, eps, seed=c.instance.n * 1000 + c.k), 1 - 1 / E - eps,
            trials=MC_TRIALS,
        )
        lines.append(f"eps={eps}: {len(monotone_batch) - len(failures)}/{len(monotone_batch)}, min slack {worst:.4g}")
        all_failures += [(eps, *f) for f in failures]
    ok = not all_failures
    report("LTDG ratio bound (>= (1-1/e-eps) g_opt - c_opt - 4 se, MC 1e5 trials)", ok, "; ".join(lines))
    assert ok, all_failures


def test_per_step_increment_identity(monotone_batch, table_batch):
    branches = steps = 0
    bad = []
    for case in monotone_batch + table_batch:
        for kind in ("dg", "rdg"):
            for _, trace, _ in exact_branches(PolicySpec(kind, case.k), case.instance):
                rep = verify_step_identity(trace, case.instance, case.k, TOL)
                branches += 1
                steps += rep.pairs_checked
                if not rep.passed:
                    bad.append((case.instance.name, kind, rep.violations[0]))
    ok = not bad
    report("Per-step identity E[G_(i+1)] - G_i = H_i + (1/k)(1-1/k)^(k-i-1) g (tol 1e-9)", ok,
           f"{branches} exact branches, {steps} steps, {len(bad)} violating branches")
    assert ok, bad[:3]


def test_zero_cost_degeneration(monotone_batch):
    failures, worst = [], math.inf
    for case in monotone_batch:
        free = dataclasses.replace(case.instance, costs=(0.0,) * case.instance.n)
        opt = optimal_policy(free, case.k).value
        got = evaluate_exact(PolicySpec("dg", case.k), free).objective
        slack = got - (1 - 1 / E) * opt
        worst = min(worst, slack)
        if slack < -TOL:
            failures.append((free.name, case.k, slack))
    ok = not failures
    report("Degeneration with zero costs (DG >= (1-1/e) OPT)", ok,
           f"{len(monotone_batch) - len(failures)}/{len(monotone_batch)} instances, min slack {worst:.6g}")
    assert ok, failures


def test_sampling_consistency(monotone_batch):
    eps = 1e-6
    mismatches, runs = [], 0
    for case in monotone_batch[:20]:
        inst, k = case.instance, case.k
        aug = augment_with_dummies(inst, max(1, k - 1))
        assert sample_size(inst.n, k, eps, aug.size) == aug.size
        rng = np.random.default_rng(inst.n)
        for seed in range(10):
            env = Environment(inst.prior.sample(rng, 1)[0])
            lt = run_linear_time(aug, k, eps, seed, env)
            dg = run_distorted_greedy(aug, k, env)
            runs += 1
            if [s[:4] for s in lt.steps] != [s[:4] for s in dg.steps]:
                mismatches.append((inst.name, seed))
    ok = not mismatches
    report("Sampling consistency (s >= |E'| => LTDG trace == DG trace)", ok,
           f"{runs - len(mismatches)}/{runs} runs on 20 instances x 10 seeds")
    assert ok, mismatches


def test_query_count_accounting(monotone_batch):
    problems, runs = [], 0
    for case in monotone_batch:
        inst, k = case.instance, case.k
        n = inst.n
        rng = np.random.default_rng(k)
        aug_dg = augment_with_dummies(inst, 1)
        aug_lt = augment_with_dummies(inst, max(1, k - 1))
        for eps in (0.1, 0.5):
            s = sample_size(n, k, eps, aug_lt.size)
            for seed in range(5):
                env = Environment(inst.prior.sample(rng, 1)[0])
                runs += 1
                dg = run_distorted_greedy(aug_dg, k, env)
                # DG scores every unselected real item at every step
                expected, chosen = 0, 0
                for step in dg.steps:
                    expected += n - chosen
                    chosen += step.state is not None
                if dg.oracle_queries != expected or dg.oracle_queries > (n + 1) * k:
                    problems.append(("dg", inst.name, dg.oracle_queries, expected))
                lt = run_linear_time(aug_lt, k, eps, seed, env)
                counted = sum(sum(1 for e in step.pool if e < n) for step in lt.steps)
                if lt.oracle_queries != counted or lt.oracle_queries > s * k:
                    problems.append(("ltdg", inst.name, lt.oracle_queries, s * k))
    ok = not problems
    report("Query-count accounting (DG <= (n+1)k, LTDG <= s k, exact counters)", ok,
           f"{runs} DG runs and {runs} LTDG runs, {len(problems)} mismatches")
    assert ok, problems[:3]


def test_monte_carlo_matches_exact(monotone_batch):
    cases = [Case(demo2(), 2, 0.0, 0.0)] + monotone_batch[:10]
    worst, failures, checks = 0.0, [], 0
    for case in cases:
        for kind in ("dg", "rdg"):
            spec = PolicySpec(kind, case.k)
            exact = evaluate_exact(spec, case.instance).objective
            mc = evaluate_monte_carlo(spec, case.instance, trials=MC_TRIALS, seed=checks)
            checks += 1
            gap = abs(mc.objective - exact)
            # a zero-variance estimate must hit the exact value up to rounding
            allowed = 4 * mc.std_error + 1e-12
            if mc.std_error:
                worst = max(worst, gap / mc.std_error)
            if gap > allowed:
                failures.append((case.instance.name, kind, gap, mc.std_error))
    ok = not failures
    report("Monte Carlo vs exact (|mc - exact| <= 4 se, 1e5 trials)", ok,
           f"{checks - len(failures)}/{checks} (demo2 + 10 instances, DG and RDG), max |z| {worst:.3g}")
    assert ok, failures


def test_demo2_golden_values():
    inst = demo2()
    dg = evaluate_exact(PolicySpec("dg", 2), inst)
    tree = optimal_policy(inst, 2)
    g_opt, c_opt = tree_value_decomposition(tree, inst)
    got = (dg.objective, tree.value, g_opt, c_opt)
    want = (0.75, 0.8, 1.25, 0.45)
    ok = all(abs(a - b) <= 1e-12 for a, b in zip(got, want))
    report("demo2 golden values", ok,
           f"DG objective {dg.objective!r}, oracle {tree.value!r}, (g_opt, c_opt) = ({g_opt!r}, {c_opt!r})")
    assert ok, got


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-q"]))
