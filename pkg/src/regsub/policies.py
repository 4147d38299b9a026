"""Adaptive distorted greedy policies and the machinery to run them.

Every policy here decides from ``(psi, step)`` alone, which lets the same
selection code serve single runs, batched Monte Carlo and exact
enumeration. ``choose_batch`` draws ``size`` independent decisions for one
information state; ``distribution`` returns the exact decision law.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from regsub.core import EMPTY, Instance, PartialRealization
from regsub.objective import distorted_marginal, modular_cost, revenue_value


class UnsupportedEvaluationError(ValueError):
    pass


class PolicyKind(str, enum.Enum):
    DISTORTED_GREEDY = "dg"
    LINEAR_TIME = "ltdg"
    RANDOM_DISTORTED_GREEDY = "rdg"


@dataclass(frozen=True)
class PolicySpec:
    """What to run. ``stop_after`` implements level-t truncation and
    ``negate`` flips the score order (a negative-control hook for tests)."""

    kind: PolicyKind
    k: int
    epsilon: float | None = None
    seed: int = 0
    stop_after: int | None = None
    negate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.k < 1:
            raise ValueError(f"budget k must be >= 1, got {self.k}")
        if self.kind is PolicyKind.LINEAR_TIME:
            if self.epsilon is None or not 0 < self.epsilon < 1:
                raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.stop_after is not None and not 0 <= self.stop_after <= self.k:
            raise ValueError(f"truncation level {self.stop_after} outside [0, {self.k}]")


class Step(NamedTuple):
    i: int
    item: int
    state: int | None  # None for dummy selections
    h: float
    pool: tuple[int, ...] | None = None  # R_i for ltdg, M(psi_i) for rdg
    queries: int = 0


@dataclass
class PolicyTrace:
    steps: list[Step]
    selected: frozenset[int]
    realized_revenue: float
    realized_cost: float

    @property
    def oracle_queries(self) -> int:
        return sum(s.queries for s in self.steps)

    @property
    def objective(self) -> float:
        return self.realized_revenue - self.realized_cost

    @property
    def items(self) -> list[int]:
        return [s.item for s in self.steps]


class Environment:
    """Reveals item states of one hidden realization."""

    def __init__(self, states: Sequence[int]):
        self.realization = tuple(int(s) for s in states)

    def reveal(self, item: int) -> int:
        return self.realization[item]


def sample_environment(instance: Instance, rng: np.random.Generator) -> Environment:
    return Environment(instance.prior.sample(rng, 1)[0])


class Batch(NamedTuple):
    items: np.ndarray  # -1 means stop
    h: np.ndarray
    queries: np.ndarray
    pools: list | None = None


def augment_with_dummies(instance: Instance, count: int) -> Instance:
    """Copy of ``instance`` with ``count`` extra zero-cost, zero-marginal items."""
    if count < 1:
        raise ValueError(f"dummy count must be >= 1, got {count}")
    out = dataclasses.replace(instance, dummy_count=instance.dummy_count + count)
    # marginals never depend on dummies, so the cache carries over
    object.__setattr__(out, "memo", instance.memo)
    return out


def ensure_dummies(instance: Instance, count: int) -> Instance:
    missing = count - instance.dummy_count
    return augment_with_dummies(instance, missing) if missing > 0 else instance


def sample_size(n: int, k: int, epsilon: float, pool: int) -> int:
    """ceil((n/k) ln(1/eps)), clamped to [1, pool]."""
    s = math.ceil((n / k) * math.log(1.0 / epsilon))
    return max(1, min(pool, s))


def scored_candidates(psi: PartialRealization, i: int, k: int, instance: Instance):
    """Candidates (unselected real items, then every dummy) with their H_i.

    Returns ``(items, h, queries)``; ``queries`` counts the real-item
    marginals a run would request at this step.
    """
    key = ("H", psi.key, i, k, instance.dummy_count)
    hit = instance.memo.get(key)
    if hit is None:
        items = np.array([e for e in range(instance.size) if e not in psi], dtype=np.int64)
        h = np.array([distorted_marginal(psi, int(e), i, k, instance) for e in items])
        queries = int(np.count_nonzero(items < instance.n))
        hit = (items, h, queries)
        instance.memo[key] = hit
    return hit


def preference_order(items: np.ndarray, h: np.ndarray, negate: bool = False) -> np.ndarray:
    """Positions sorted best-first: larger H, then lower index."""
    score = h if not negate else -h
    return np.lexsort((items, -score))


class AdaptivePolicy:
    """Base class: a policy whose decision depends on (psi, step) only."""

    k: int
    stop_after: int | None = None
    dummies_required = 0

    @property
    def horizon(self) -> int:
        return self.k if self.stop_after is None else self.stop_after

    def prepare(self, instance: Instance) -> Instance:
        return ensure_dummies(instance, self.dummies_required) if self.dummies_required else instance

    def truncated(self, t: int) -> "AdaptivePolicy":
        if not 0 <= t <= self.k:
            raise ValueError(f"truncation level {t} outside [0, {self.k}]")
        clone = _copy(self)
        clone.stop_after = t
        return clone

    def distribution(self, psi, i, instance) -> tuple[list[tuple[int, float, float]], int]:
        """Exact decision law: ``([(item, prob, h), ...], queries)``; empty means stop."""
        raise NotImplementedError

    def choose_batch(self, psi, i, instance, rng, size, with_pool=False) -> Batch:
        raise NotImplementedError


def _copy(obj):
    clone = object.__new__(type(obj))
    clone.__dict__.update(obj.__dict__)
    return clone


class DistortedGreedy(AdaptivePolicy):
    """Pick argmax of H_i over E' (one dummy keeps the best value >= 0)."""

    dummies_required = 1

    def __init__(self, k: int, negate: bool = False):
        self.k, self.negate = k, negate

    def _best(self, psi, i, instance):
        items, h, queries = scored_candidates(psi, i, self.k, instance)
        j = int(preference_order(items, h, self.negate)[0])
        return int(items[j]), float(h[j]), queries

    def distribution(self, psi, i, instance):
        item, h, queries = self._best(psi, i, instance)
        return [(item, 1.0, h)], queries

    def choose_batch(self, psi, i, instance, rng, size, with_pool=False):
        item, h, queries = self._best(psi, i, instance)
        return Batch(
            np.full(size, item), np.full(size, h), np.full(size, queries),
            [None] * size if with_pool else None,
        )


class LinearTimeDistortedGreedy(AdaptivePolicy):
    """Pick argmax of H_i over a uniform random subset R_i of the candidates.

    If the best sampled item has negative H_i, nothing is added that step.
    """

    def __init__(self, k: int, epsilon: float, negate: bool = False):
        self.k, self.epsilon, self.negate = k, epsilon, negate
        self.dummies_required = max(1, k - 1)

    def sample_size(self, instance: Instance) -> int:
        return sample_size(instance.n, self.k, self.epsilon, instance.size)

    def distribution(self, psi, i, instance):
        raise UnsupportedEvaluationError(
            "exact evaluation of the linear-time policy is not supported; use Monte Carlo"
        )

    def choose_batch(self, psi, i, instance, rng, size, with_pool=False):
        items, h, _ = scored_candidates(psi, i, self.k, instance)
        order = preference_order(items, h, self.negate)
        rank = np.empty(len(items), dtype=np.int64)
        rank[order] = np.arange(len(items))
        s = min(self.sample_size(instance), len(items))
        keys = rng.random((size, len(items)))
        picked = np.argpartition(keys, s - 1, axis=1)[:, :s]
        best = picked[np.arange(size), np.argmin(rank[picked], axis=1)]
        queries = np.count_nonzero(items[picked] < instance.n, axis=1)
        pools = [tuple(sorted(int(e) for e in items[row])) for row in picked] if with_pool else None
        chosen, gain = items[best], h[best]
        if not self.negate:
            # a sample that misses every dummy may top out below zero;
            # adding that item can only hurt, so the step becomes a no-op
            worse = gain < 0
            chosen, gain = np.where(worse, instance.n, chosen), np.where(worse, 0.0, gain)
        return Batch(chosen, gain, queries, pools)


def top_k_set(psi: PartialRealization, i: int, k: int, instance: Instance, negate: bool = False):
    """M(psi_i): a maximum-sum set of at most k candidates by H_i.

    That is the k best candidates (lowest index on ties) minus any with
    negative H. Dummies stay candidates for the whole run, so M is never
    empty and holds exactly k items whenever some real item has H >= 0.
    """
    items, h, _ = scored_candidates(psi, i, k, instance)
    order = preference_order(items, h, negate)[:k]
    score = h[order] if not negate else -h[order]
    order = order[score >= 0]
    return items[order], h[order]


class RandomDistortedGreedy(AdaptivePolicy):
    """Pick uniformly at random from the top-k set by H_i."""

    def __init__(self, k: int, negate: bool = False):
        self.k, self.negate = k, negate
        self.dummies_required = max(1, k - 1)

    def distribution(self, psi, i, instance):
        top, h = top_k_set(psi, i, self.k, instance, self.negate)
        _, _, queries = scored_candidates(psi, i, self.k, instance)
        p = 1.0 / len(top)
        return [(int(e), p, float(v)) for e, v in zip(top, h)], queries

    def choose_batch(self, psi, i, instance, rng, size, with_pool=False):
        top, h = top_k_set(psi, i, self.k, instance, self.negate)
        _, _, queries = scored_candidates(psi, i, self.k, instance)
        pick = rng.integers(len(top), size=size)
        pools = [tuple(int(e) for e in top)] * size if with_pool else None
        return Batch(top[pick], h[pick], np.full(size, queries), pools)


class FixedSequencePolicy(AdaptivePolicy):
    """Non-adaptive: select a fixed list of real items in order."""

    def __init__(self, items: Sequence[int]):
        self.sequence = tuple(int(e) for e in items)
        self.k = len(self.sequence)

    def _next(self, i):
        return self.sequence[i] if i < len(self.sequence) else -1

    def distribution(self, psi, i, instance):
        e = self._next(i)
        return ([] if e < 0 else [(e, 1.0, math.nan)]), 0

    def choose_batch(self, psi, i, instance, rng, size, with_pool=False):
        e = self._next(i)
        return Batch(np.full(size, e), np.full(size, math.nan), np.zeros(size, dtype=np.int64),
                     [None] * size if with_pool else None)


def make_policy(spec: PolicySpec | AdaptivePolicy) -> AdaptivePolicy:
    if isinstance(spec, AdaptivePolicy):
        return spec
    if spec.kind is PolicyKind.DISTORTED_GREEDY:
        policy = DistortedGreedy(spec.k, spec.negate)
    elif spec.kind is PolicyKind.LINEAR_TIME:
        policy = LinearTimeDistortedGreedy(spec.k, spec.epsilon, spec.negate)
    else:
        policy = RandomDistortedGreedy(spec.k, spec.negate)
    policy.stop_after = spec.stop_after
    return policy


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def run_policy(policy, instance: Instance, env: Environment, rng=None) -> PolicyTrace:
    """Execute one episode of ``policy`` against ``env``."""
    policy = make_policy(policy)
    instance = policy.prepare(instance)
    rng = _as_rng(rng)
    psi, steps = EMPTY, []
    for i in range(policy.horizon):
        batch = policy.choose_batch(psi, i, instance, rng, 1, with_pool=True)
        item = int(batch.items[0])
        if item < 0:
            break
        state = None
        if not instance.is_dummy(item):
            state = env.reveal(item)
            psi = psi.extend(item, state)
        steps.append(Step(i, item, state, float(batch.h[0]), batch.pools[0], int(batch.queries[0])))
    selected = psi.dom
    return PolicyTrace(
        steps,
        selected,
        revenue_value(selected, env.realization, instance),
        modular_cost(selected, instance),
    )


def _require_dummies(instance: Instance, count: int) -> None:
    if instance.dummy_count < count:
        raise ValueError(
            f"instance needs at least {count} dummy items (has {instance.dummy_count}); "
            "call augment_with_dummies first"
        )


def run_distorted_greedy(instance: Instance, k: int, env: Environment) -> PolicyTrace:
    _require_dummies(instance, 1)
    return run_policy(DistortedGreedy(k), instance, env)


def run_linear_time(instance: Instance, k: int, epsilon: float, rng, env: Environment) -> PolicyTrace:
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    _require_dummies(instance, max(1, k - 1))
    return run_policy(LinearTimeDistortedGreedy(k, epsilon), instance, env, rng)


def run_random_distorted_greedy(instance: Instance, k: int, rng, env: Environment) -> PolicyTrace:
    _require_dummies(instance, max(1, k - 1))
    return run_policy(RandomDistortedGreedy(k), instance, env, rng)


def truncate(policy, t: int):
    """Level-t truncation: stop after ``t`` selections."""
    if isinstance(policy, PolicySpec):
        return dataclasses.replace(policy, stop_after=t)
    return policy.truncated(t)


class EmptyPolicy(AdaptivePolicy):
    k = 0

    def distribution(self, psi, i, instance):
        return [], 0

    def choose_batch(self, psi, i, instance, rng, size, with_pool=False):
        return Batch(np.full(size, -1), np.zeros(size), np.zeros(size, dtype=np.int64))


@dataclass
class ConcatenatedPolicy:
    """``first @ second``: run ``first``, then ``second`` from an empty
    partial realization against the same hidden realization."""

    first: object
    second: object

    def run(self, instance: Instance, env: Environment, rng=None) -> tuple[PolicyTrace, PolicyTrace, frozenset]:
        rng = _as_rng(rng)
        t1 = run_policy(self.first, instance, env, rng)
        t2 = run_policy(self.second, instance, env, rng)
        selected = t1.selected | t2.selected
        return t1, t2, selected


def concatenate(p1, p2) -> ConcatenatedPolicy:
    return ConcatenatedPolicy(make_policy(p1), make_policy(p2))


def selection_distribution(policy, instance: Instance, states: Sequence[int]) -> dict[frozenset, float]:
    """Law of the selected real-item set under a fixed full realization,
    enumerating the policy's own randomness."""
    policy = make_policy(policy)
    instance = policy.prepare(instance)
    out: dict[frozenset, float] = {}

    def walk(psi, i, prob):
        choices = policy.distribution(psi, i, instance)[0] if i < policy.horizon else []
        if not choices:
            out[psi.dom] = out.get(psi.dom, 0.0) + prob
            return
        for item, p, _ in choices:
            nxt = psi if instance.is_dummy(item) else psi.extend(item, states[item])
            walk(nxt, i + 1, prob * p)

    walk(EMPTY, 0, 1.0)
    return out
