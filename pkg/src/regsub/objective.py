"""Revenue oracles, expected values, conditional marginals and the distorted
objective, plus exhaustive adaptive monotonicity/submodularity checkers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from regsub.core import (
    CapacityError,
    Instance,
    MalformedInputError,
    PartialRealization,
    realization_index,
)

TOL = 1e-9
CHECK_LIMIT = 10**6


class InvalidBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class CoverageRevenue:
    """Weighted coverage: item ``e`` in state ``o`` covers ``covers[e][o]``.

    The revenue of a set only depends on the states of its own items, so
    expected revenue and marginals have closed forms given the observed
    states (``local = True``).
    """

    weights: tuple[float, ...]
    covers: tuple[tuple[frozenset[int], ...], ...]
    local = True

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(
            self, "covers", tuple(tuple(frozenset(c) for c in row) for row in self.covers)
        )
        if any(not w >= 0 for w in self.weights):
            raise MalformedInputError("coverage weights must be non-negative")
        m = len(self.weights)
        for e, row in enumerate(self.covers):
            for cov in row:
                if any(not 0 <= x < m for x in cov):
                    raise MalformedInputError(f"item {e} covers an unknown element")

    def _weight(self, pairs) -> float:
        covered = set()
        for e, o in pairs:
            covered |= self.covers[e][o]
        return math.fsum(self.weights[x] for x in sorted(covered))

    def value(self, items, states: Sequence[int]) -> float:
        return self._weight((e, states[e]) for e in items)

    def local_value(self, psi: PartialRealization) -> float:
        return self._weight(psi)


@dataclass(frozen=True)
class TableRevenue:
    """Explicit table ``entries[mask][r]`` of g(Y, phi).

    ``mask`` is the bitmask of Y (bit e set iff item e in Y) and ``r`` is
    the lexicographic index of the realization.
    """

    n_items: int
    n_states: int
    entries: tuple[tuple[float, ...], ...]
    local = False

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in row) for row in self.entries)
        object.__setattr__(self, "entries", rows)
        if len(rows) != 2**self.n_items:
            raise MalformedInputError(f"table needs {2**self.n_items} rows, got {len(rows)}")
        width = self.n_states**self.n_items
        for mask, row in enumerate(rows):
            if len(row) != width:
                raise MalformedInputError(f"table row {mask}: expected {width} entries")
            if any(not v >= 0 for v in row):
                raise MalformedInputError(f"table row {mask} has a negative entry")
        if any(v != 0 for v in rows[0]):
            raise MalformedInputError("g(empty set, phi) must be 0")

    def value(self, items, states: Sequence[int]) -> float:
        mask = 0
        for e in items:
            mask |= 1 << e
        return self.entries[mask][realization_index(states, self.n_states)]


class Violation(NamedTuple):
    psi: PartialRealization
    psi2: PartialRealization
    item: int
    lhs: float
    rhs: float


@dataclass
class CheckReport:
    passed: bool
    violations: list[Violation] = field(default_factory=list)
    pairs_checked: int = 0

    @classmethod
    def from_violations(cls, violations: list[Violation], pairs_checked: int) -> "CheckReport":
        return cls(not violations, violations, pairs_checked)

    def merge(self, other: "CheckReport") -> "CheckReport":
        return CheckReport.from_violations(
            self.violations + other.violations, self.pairs_checked + other.pairs_checked
        )


def _real(items, instance: Instance) -> list[int]:
    return [e for e in items if not instance.is_dummy(e)]


def revenue_value(items, states: Sequence[int], instance: Instance) -> float:
    """g(Y, phi) with dummy items stripped."""
    return instance.revenue.value(sorted(_real(items, instance)), states)


def _use_closed_form(instance: Instance, method: str) -> bool:
    if method not in ("auto", "enumerate"):
        raise ValueError(f"unknown method {method!r}")
    return method == "auto" and getattr(instance.revenue, "local", False)


def expected_revenue(psi: PartialRealization, instance: Instance, method: str = "auto") -> float:
    """g(psi) = E[g(dom(psi), Phi) | Phi ~ psi].

    ``method="enumerate"`` always averages over the posterior; ``"auto"``
    uses the oracle's closed form when it has one.
    """
    if not psi:
        return 0.0
    if _use_closed_form(instance, method):
        return instance.revenue.local_value(psi)
    key = ("g", method, psi.key)
    hit = instance.memo.get(key)
    if hit is not None:
        return hit
    dom = sorted(psi.dom)
    val = math.fsum(
        r.probability * instance.revenue.value(dom, r.states) for r in instance.prior.posterior(psi)
    )
    instance.memo[key] = val
    return val


def conditional_marginal(
    item: int, psi: PartialRealization, instance: Instance, method: str = "auto"
) -> float:
    """g(e | psi); zero for dummies and for items already in dom(psi)."""
    if instance.is_dummy(item) or item in psi:
        return 0.0
    key = ("m", method, psi.key, item)
    hit = instance.memo.get(key)
    if hit is not None:
        return hit
    if _use_closed_form(instance, method):
        base = instance.revenue.local_value(psi)
        val = math.fsum(
            p * (instance.revenue.local_value(psi.extend(item, o)) - base)
            for o, p in instance.prior.state_distribution(psi, item)
        )
    else:
        dom = sorted(psi.dom)
        grown = sorted(psi.dom | {item})
        g = instance.revenue.value
        val = math.fsum(
            r.probability * (g(grown, r.states) - g(dom, r.states))
            for r in instance.prior.posterior(psi)
        )
    instance.memo[key] = val
    return val


def modular_cost(items, instance: Instance) -> float:
    return math.fsum(instance.cost(e) for e in sorted(set(items)))


def distortion(k: int, exponent: int) -> float:
    """(1 - 1/k) ** exponent, with 0 ** 0 == 1."""
    if k < 1:
        raise InvalidBudgetError(f"budget k must be >= 1, got {k}")
    return (1.0 - 1.0 / k) ** exponent


def distorted_value(psi: PartialRealization, i: int, k: int, instance: Instance) -> float:
    """G_i(psi) = (1-1/k)^(k-i) g(psi) - c(dom(psi))."""
    if k < 1:
        raise InvalidBudgetError(f"budget k must be >= 1, got {k}")
    if not 0 <= i <= k:
        raise ValueError(f"iteration {i} outside [0, {k}]")
    return distortion(k, k - i) * expected_revenue(psi, instance) - modular_cost(psi.dom, instance)


def distorted_marginal(
    psi: PartialRealization, item: int, i: int, k: int, instance: Instance
) -> float:
    """H_i(psi, e) = (1-1/k)^(k-(i+1)) g(e|psi) - c_e; zero if e is in dom(psi)."""
    if k < 1:
        raise InvalidBudgetError(f"budget k must be >= 1, got {k}")
    if not 0 <= i <= k - 1:
        raise ValueError(f"iteration {i} outside [0, {k - 1}]")
    if item in psi:
        return 0.0
    return distortion(k, k - (i + 1)) * conditional_marginal(item, psi, instance) - instance.cost(item)


def reachable_partial_realizations(instance: Instance) -> list[PartialRealization]:
    """Every positive-probability partial realization over the real items."""
    n, m = instance.n, instance.n_states
    if (m + 1) ** n > CHECK_LIMIT:
        raise CapacityError(f"(|O|+1)^n = {(m + 1) ** n} exceeds {CHECK_LIMIT}")
    prior = instance.prior
    out = []
    for code in itertools.product(range(-1, m), repeat=n):
        psi = PartialRealization((e, o) for e, o in enumerate(code) if o >= 0)
        if prior.probability(psi) > 0:
            out.append(psi)
    return out


def _marginal_table(instance: Instance, psis) -> dict:
    return {
        psi.key: {e: conditional_marginal(e, psi, instance) for e in range(instance.n) if e not in psi}
        for psi in psis
    }


def check_adaptive_submodular(instance: Instance, tolerance: float = TOL) -> CheckReport:
    """Exhaustive check of g(e|psi) >= g(e|psi') for all psi within psi'."""
    psis = reachable_partial_realizations(instance)
    table = _marginal_table(instance, psis)
    violations, checked = [], 0
    for big in psis:
        obs = big.observations
        outside = [e for e in range(instance.n) if e not in big]
        if not outside:
            continue
        for r in range(len(obs)):
            for sub in itertools.combinations(obs, r):
                small = PartialRealization(sub)
                for e in outside:
                    checked += 1
                    lhs, rhs = table[small.key][e], table[big.key][e]
                    if lhs < rhs - tolerance:
                        violations.append(Violation(small, big, e, lhs, rhs))
    return CheckReport.from_violations(violations, checked)


def check_adaptive_monotone(instance: Instance, tolerance: float = TOL) -> CheckReport:
    """Exhaustive check of g(e|psi) >= 0 over reachable psi."""
    psis = reachable_partial_realizations(instance)
    violations, checked = [], 0
    for psi in psis:
        for e in range(instance.size):
            if e in psi:
                continue
            checked += 1
            val = conditional_marginal(e, psi, instance)
            if val < -tolerance:
                violations.append(Violation(psi, psi, e, val, 0.0))
    return CheckReport.from_violations(violations, checked)
