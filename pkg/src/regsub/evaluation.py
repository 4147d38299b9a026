"""Exact and Monte Carlo evaluation of policies, and the per-step check of
the distorted-objective increment identity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from regsub.core import EMPTY, Instance, PartialRealization, enumerate_realizations
from regsub.objective import (
    TOL,
    CheckReport,
    Violation,
    distortion,
    expected_revenue,
    modular_cost,
    revenue_value,
)
from regsub.policies import (
    AdaptivePolicy,
    ConcatenatedPolicy,
    PolicySpec,
    Step,
    ensure_dummies,
    make_policy,
    selection_distribution,
)

MC_CHUNK = 1 << 16


@dataclass(frozen=True)
class EvalResult:
    g_avg: float
    c_avg: float
    objective: float
    mode: str  # "exact" or "mc"
    trials: int = 0
    std_error: float = 0.0
    oracle_queries: int = 0

    @classmethod
    def build(cls, g_avg, c_avg, mode, **kw) -> "EvalResult":
        return cls(float(g_avg), float(c_avg), float(g_avg) - float(c_avg), mode, **kw)


def _policy(policy, k):
    if isinstance(policy, PolicySpec) and k is not None and k != policy.k:
        raise ValueError(f"budget mismatch: spec has k={policy.k}, got k={k}")
    return make_policy(policy)


def evaluate_exact(policy: PolicySpec | AdaptivePolicy, instance: Instance, k: int | None = None) -> EvalResult:
    """Exact g_avg and c_avg by recursion over (psi, step).

    Branches on the policy's decision law, then on p(Phi(e) | psi).
    Memoized on the canonical psi, since the policies decide on psi as a set.
    ``oracle_queries`` counts the marginals requested across distinct nodes.
    """
    policy = _policy(policy, k)
    instance = policy.prepare(instance)
    memo: dict = {}
    queries = 0

    def value(psi: PartialRealization, i: int) -> tuple[float, float]:
        nonlocal queries
        key = (psi.key, i)
        if key in memo:
            return memo[key]
        choices, q = policy.distribution(psi, i, instance) if i < policy.horizon else ([], 0)
        queries += q
        if not choices:
            out = (expected_revenue(psi, instance), modular_cost(psi.dom, instance))
        else:
            g = c = 0.0
            for item, p, _ in choices:
                if instance.is_dummy(item):
                    gg, cc = value(psi, i + 1)
                    g, c = g + p * gg, c + p * cc
                    continue
                for o, po in instance.prior.state_distribution(psi, item):
                    gg, cc = value(psi.extend(item, o), i + 1)
                    g, c = g + p * po * gg, c + p * po * cc
            out = (g, c)
        memo[key] = out
        return out

    g, c = value(EMPTY, 0)
    return EvalResult.build(g, c, "exact", oracle_queries=queries)


def exact_branches(policy, instance: Instance, k: int | None = None) -> Iterator[tuple[float, list[Step], PartialRealization]]:
    """Every execution branch as ``(probability, steps, final psi)``.

    No memoization: this walks the full tree of policy choices and observed
    states, so it doubles as an independent route to the exact value.
    """
    policy = _policy(policy, k)
    instance = policy.prepare(instance)

    def walk(psi, i, prob, steps):
        choices = policy.distribution(psi, i, instance)[0] if i < policy.horizon else []
        if not choices:
            yield prob, steps, psi
            return
        for item, p, h in choices:
            if instance.is_dummy(item):
                yield from walk(psi, i + 1, prob * p, steps + [Step(i, item, None, h)])
                continue
            for o, po in instance.prior.state_distribution(psi, item):
                yield from walk(psi.extend(item, o), i + 1, prob * p * po, steps + [Step(i, item, o, h)])

    yield from walk(EMPTY, 0, 1.0, [])


def _group_rows(rows: np.ndarray, base: int):
    """Yield ``(unique_row, member_positions)`` in sorted row order.

    Entries lie in ``[-1, base - 1)``. Rows are packed into one integer per
    row (an order-preserving base-``base`` code) when that fits in int64,
    which is far faster than sorting rows directly.
    """
    width = rows.shape[1]
    if width * math.log2(base) < 62:
        codes = (rows + 1) @ (base ** np.arange(width - 1, -1, -1, dtype=np.int64))
        _, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
        uniq = rows[first]
    else:
        uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.cumsum(np.bincount(inverse, minlength=len(uniq)))
    start = 0
    for g, stop in enumerate(bounds):
        yield uniq[g], order[start:stop]
        start = stop


def _simulate(policy, instance: Instance, states: np.ndarray, rng: np.random.Generator):
    """Run ``policy`` on every row of ``states`` at once.

    Trials sharing an information state are served by one ``choose_batch``
    call, which draws an independent decision per trial.
    """
    m, n = states.shape
    base = instance.n_states + 1
    obs = np.full((m, n), -1, dtype=np.int64)
    alive = np.ones(m, dtype=bool)
    queries = np.zeros(m, dtype=np.int64)
    for i in range(policy.horizon):
        active = np.flatnonzero(alive)
        if active.size == 0:
            break
        for row, pos in _group_rows(obs[active], base):
            members = active[pos]
            psi = PartialRealization.from_array(row)
            batch = policy.choose_batch(psi, i, instance, rng, len(members))
            queries[members] += batch.queries
            stop = batch.items < 0
            alive[members[stop]] = False
            real = ~stop & (batch.items < instance.n)
            t, e = members[real], batch.items[real]
            obs[t, e] = states[t, e]

    revenue = np.empty(m)
    if getattr(instance.revenue, "local", False):
        for row, pos in _group_rows(obs, base):
            revenue[pos] = expected_revenue(PartialRealization.from_array(row), instance)
    else:
        for row, pos in _group_rows(np.hstack([obs, states]), base):
            dom = [e for e in range(n) if row[e] >= 0]
            revenue[pos] = revenue_value(dom, row[n:], instance)
    cost = (obs >= 0) @ np.asarray(instance.costs)
    return revenue, cost, queries


def _mean(x: np.ndarray) -> float:
    # a constant sample reproduces its value exactly
    return float(x[0]) if np.ptp(x) == 0 else float(x.mean())


def evaluate_monte_carlo(policy, instance: Instance, k: int | None = None, trials: int = 10_000, seed: int = 0) -> EvalResult:
    """Average realized revenue and cost over ``trials`` sampled episodes.

    Realizations and policy randomness use separate streams, each split
    into fixed-size chunks seeded from ``seed``; the result does not depend
    on how chunks are scheduled.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    policy = _policy(policy, k)
    instance = policy.prepare(instance)
    n_chunks = -(-trials // MC_CHUNK)
    env_root, pol_root = np.random.SeedSequence(seed).spawn(2)
    revs, costs, queries = [], [], 0
    for c, (env_seq, pol_seq) in enumerate(zip(env_root.spawn(n_chunks), pol_root.spawn(n_chunks))):
        size = min(MC_CHUNK, trials - c * MC_CHUNK)
        states = instance.prior.sample(np.random.default_rng(env_seq), size)
        rev, cost, q = _simulate(policy, instance, states, np.random.default_rng(pol_seq))
        revs.append(rev)
        costs.append(cost)
        queries += int(q.sum())
    rev, cost = np.concatenate(revs), np.concatenate(costs)
    obj = rev - cost
    se = 0.0 if np.ptp(obj) == 0 else float(obj.std(ddof=1) / math.sqrt(trials))
    g, c = _mean(rev), _mean(cost)
    return EvalResult.build(g, c, "mc", trials=trials, std_error=se, oracle_queries=queries)


def evaluate_concatenation_exact(policy: ConcatenatedPolicy, instance: Instance) -> tuple[float, float]:
    """Exact (g_avg, c_avg) of ``first @ second`` by enumerating realizations."""
    g = c = 0.0
    for r in enumerate_realizations(instance.prior):
        d1 = selection_distribution(policy.first, instance, r.states)
        d2 = selection_distribution(policy.second, instance, r.states)
        for s1, p1 in d1.items():
            for s2, p2 in d2.items():
                w = r.probability * p1 * p2
                union = s1 | s2
                g += w * revenue_value(union, r.states, instance)
                c += w * modular_cost(union, instance)
    return g, c


def step_increment(psi: PartialRealization, item: int, i: int, k: int, instance: Instance) -> float:
    """E[G_{i+1}(psi + observation of item)] - G_i(psi), by posterior enumeration."""

    def G(p, j):
        return distortion(k, k - j) * expected_revenue(p, instance, method="enumerate") - modular_cost(p.dom, instance)

    if instance.is_dummy(item) or item in psi:
        nxt = G(psi, i + 1)
    else:
        nxt = math.fsum(po * G(psi.extend(item, o), i + 1) for o, po in instance.prior.state_distribution(psi, item))
    return nxt - G(psi, i)


def verify_step_identity(trace, instance: Instance, k: int, tolerance: float = TOL) -> CheckReport:
    """Check E[G_{i+1}] - G_i = H_i(psi_i, e_i) + (1/k)(1-1/k)^(k-i-1) g(psi_i)
    at every step of ``trace``, using the H value recorded in the trace."""
    steps = trace.steps if hasattr(trace, "steps") else trace
    top = max((s.item for s in steps), default=-1)
    instance = ensure_dummies(instance, top - instance.n + 1)
    psi, violations = EMPTY, []
    for step in steps:
        i, item = step.i, step.item
        lhs = step_increment(psi, item, i, k, instance)
        rhs = step.h + distortion(k, k - (i + 1)) / k * expected_revenue(psi, instance, method="enumerate")
        nxt = psi if step.state is None else psi.extend(item, step.state)
        if abs(lhs - rhs) > tolerance:
            violations.append(Violation(psi, nxt, item, lhs, rhs))
        psi = nxt
    return CheckReport.from_violations(violations, len(steps))
