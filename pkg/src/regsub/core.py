"""Items, states, realizations and priors.

Items are plain integers ``0..n-1``; dummy items (added by
:func:`regsub.policies.augment_with_dummies`) take indices ``n..n+d-1`` and
never appear in a realization. States are integers ``0..|O|-1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

ENUMERATION_LIMIT = 10**7
PROB_TOL = 1e-12


class MalformedInputError(ValueError):
    """An item or state index is out of range, or a structure is inconsistent."""


class ConditioningError(ValueError):
    """Conditioning on a partial realization of probability zero."""


class CapacityError(RuntimeError):
    """An exhaustive computation would exceed its enumeration guard."""


class Realization(NamedTuple):
    states: tuple[int, ...]
    probability: float


class PartialRealization:
    """Ordered observations ``(item, state)``; compares as a set.

    The insertion order is kept for traces, but equality and hashing only
    look at the underlying set of observations.
    """

    __slots__ = ("observations", "_key", "_states")

    def __init__(self, observations: Iterable[tuple[int, int]] = ()):
        obs = tuple((int(e), int(o)) for e, o in observations)
        states = dict(obs)
        if len(states) != len(obs):
            raise MalformedInputError(f"repeated item in observations {obs}")
        self.observations = obs
        self._states = states
        self._key = tuple(sorted(obs))

    @property
    def key(self) -> tuple[tuple[int, int], ...]:
        """Canonical (sorted) form, used for memoization."""
        return self._key

    @property
    def dom(self) -> frozenset[int]:
        return frozenset(self._states)

    def state(self, item: int) -> int | None:
        return self._states.get(item)

    def __contains__(self, item: int) -> bool:
        return item in self._states

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PartialRealization):
            return NotImplemented
        return self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return f"PartialRealization({list(self.observations)})"

    def extend(self, item: int, state: int) -> "PartialRealization":
        if item in self._states:
            raise MalformedInputError(f"item {item} already observed")
        return PartialRealization(self.observations + ((item, state),))

    def to_array(self, n: int) -> np.ndarray:
        """Length-``n`` int array with -1 for unobserved items."""
        arr = np.full(n, -1, dtype=np.int64)
        for e, o in self.observations:
            arr[e] = o
        return arr

    @classmethod
    def from_array(cls, arr) -> "PartialRealization":
        return cls((int(e), int(o)) for e, o in enumerate(arr) if o >= 0)


EMPTY = PartialRealization()


def consistent(states: Sequence[int], psi: PartialRealization) -> bool:
    """True iff the full realization agrees with ``psi`` on ``dom(psi)``."""
    if isinstance(states, Realization):
        states = states.states
    n = len(states)
    for e, o in psi:
        if not 0 <= e < n:
            raise MalformedInputError(f"item {e} out of range for {n} items")
        if states[e] != o:
            return False
    return True


def is_subrealization(psi: PartialRealization, psi2: PartialRealization) -> bool:
    return all(psi2.state(e) == o for e, o in psi)


def _check_psi(psi: PartialRealization, n: int, n_states: int) -> None:
    for e, o in psi:
        if not 0 <= e < n:
            raise MalformedInputError(f"item {e} out of range for {n} items")
        if not 0 <= o < n_states:
            raise MalformedInputError(f"state {o} out of range for |O|={n_states}")


def _guard(n_states: int, n: int) -> None:
    if n_states**n > ENUMERATION_LIMIT:
        raise CapacityError(f"|O|^n = {n_states}^{n} exceeds {ENUMERATION_LIMIT}")


@dataclass(frozen=True)
class IndependentPrior:
    """Each item's state is drawn independently from its own categorical."""

    marginals: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        marg = tuple(tuple(float(p) for p in row) for row in self.marginals)
        object.__setattr__(self, "marginals", marg)
        if not marg:
            raise MalformedInputError("prior needs at least one item")
        width = len(marg[0])
        for e, row in enumerate(marg):
            if len(row) != width:
                raise MalformedInputError(f"item {e}: expected {width} state probabilities")
            if any(p < 0 for p in row) or abs(math.fsum(row) - 1.0) > PROB_TOL:
                raise MalformedInputError(f"item {e}: probabilities {row} do not form a distribution")

    @property
    def n_items(self) -> int:
        return len(self.marginals)

    @property
    def n_states(self) -> int:
        return len(self.marginals[0])

    def probability(self, psi: PartialRealization) -> float:
        """Pr[Phi ~ psi]."""
        _check_psi(psi, self.n_items, self.n_states)
        return math.prod(self.marginals[e][o] for e, o in psi)

    def state_distribution(self, psi: PartialRealization, item: int) -> list[tuple[int, float]]:
        """p(Phi(item) | psi), restricted to positive-probability states."""
        if self.probability(psi) <= 0:
            raise ConditioningError(f"Pr[{psi}] = 0")
        return [(o, p) for o, p in enumerate(self.marginals[item]) if p > 0]

    def posterior(self, psi: PartialRealization) -> list[Realization]:
        if self.probability(psi) <= 0:
            raise ConditioningError(f"Pr[{psi}] = 0")
        free = [e for e in range(self.n_items) if e not in psi]
        _guard(self.n_states, len(free))
        choices = []
        for e in range(self.n_items):
            o = psi.state(e)
            if o is None:
                choices.append([(s, p) for s, p in enumerate(self.marginals[e]) if p > 0])
            else:
                choices.append([(o, 1.0)])
        out = []
        for combo in itertools.product(*choices):
            out.append(Realization(tuple(s for s, _ in combo), math.prod(p for _, p in combo)))
        return out

    def enumerate(self) -> list[Realization]:
        _guard(self.n_states, self.n_items)
        return self.posterior(EMPTY)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty((size, self.n_items), dtype=np.int64)
        for e, row in enumerate(self.marginals):
            out[:, e] = rng.choice(len(row), size=size, p=row)
        return out


@dataclass(frozen=True)
class ExplicitPrior:
    """Arbitrary joint distribution given as a list of realizations."""

    realizations: tuple[Realization, ...]
    n_states: int

    def __post_init__(self):
        reals = tuple(
            sorted(Realization(tuple(int(s) for s in r[0]), float(r[1])) for r in self.realizations)
        )
        object.__setattr__(self, "realizations", reals)
        if not reals:
            raise MalformedInputError("explicit prior is empty")
        n = len(reals[0].states)
        seen = set()
        for r in reals:
            if len(r.states) != n:
                raise MalformedInputError("realizations have different lengths")
            if any(not 0 <= s < self.n_states for s in r.states):
                raise MalformedInputError(f"state out of range in {r.states}")
            if r.probability < 0:
                raise MalformedInputError(f"negative probability for {r.states}")
            if r.states in seen:
                raise MalformedInputError(f"duplicate realization {r.states}")
            seen.add(r.states)
        total = math.fsum(r.probability for r in reals)
        if abs(total - 1.0) > PROB_TOL:
            raise MalformedInputError(f"probabilities sum to {total}, not 1")

    @property
    def n_items(self) -> int:
        return len(self.realizations[0].states)

    def probability(self, psi: PartialRealization) -> float:
        _check_psi(psi, self.n_items, self.n_states)
        return math.fsum(r.probability for r in self.realizations if consistent(r.states, psi))

    def posterior(self, psi: PartialRealization) -> list[Realization]:
        _check_psi(psi, self.n_items, self.n_states)
        hits = [r for r in self.realizations if r.probability > 0 and consistent(r.states, psi)]
        total = math.fsum(r.probability for r in hits)
        if total <= 0:
            raise ConditioningError(f"Pr[{psi}] = 0")
        return [Realization(r.states, r.probability / total) for r in hits]

    def state_distribution(self, psi: PartialRealization, item: int) -> list[tuple[int, float]]:
        acc: dict[int, float] = {}
        for r in self.posterior(psi):
            acc[r.states[item]] = acc.get(r.states[item], 0.0) + r.probability
        return sorted(acc.items())

    def enumerate(self) -> list[Realization]:
        return [r for r in self.realizations if r.probability > 0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        table = np.array([r.states for r in self.realizations], dtype=np.int64)
        probs = np.array([r.probability for r in self.realizations])
        idx = rng.choice(len(table), size=size, p=probs / probs.sum())
        return table[idx]


Prior = IndependentPrior | ExplicitPrior


def posterior(prior: Prior, psi: PartialRealization) -> list[Realization]:
    """Realizations consistent with ``psi`` with renormalized probabilities."""
    return prior.posterior(psi)


def enumerate_realizations(prior: Prior) -> list[Realization]:
    """Full support of the prior, in lexicographic order of the state tuple."""
    return prior.enumerate()


def realization_index(states: Sequence[int], n_states: int) -> int:
    """Lexicographic rank of a state tuple (item 0 most significant)."""
    idx = 0
    for s in states:
        idx = idx * n_states + int(s)
    return idx


@dataclass(frozen=True, eq=False)
class Instance:
    """A problem instance: costs, prior, revenue oracle and dummy count.

    ``costs`` covers the real items only; dummies always cost 0. The
    ``memo`` dict caches expected revenues and marginals (which do not
    depend on the dummies) and is shared by augmented copies.
    """

    name: str
    costs: tuple[float, ...]
    prior: Prior
    revenue: "object"
    dummy_count: int = 0
    memo: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        costs = tuple(float(c) for c in self.costs)
        object.__setattr__(self, "costs", costs)
        if any(not c >= 0 for c in costs):
            raise MalformedInputError(f"costs must be non-negative: {costs}")
        if len(costs) != self.prior.n_items:
            raise MalformedInputError(
                f"{len(costs)} costs for a prior over {self.prior.n_items} items"
            )
        if self.dummy_count < 0:
            raise MalformedInputError("dummy_count must be >= 0")

    @property
    def n(self) -> int:
        return len(self.costs)

    @property
    def n_states(self) -> int:
        return self.prior.n_states

    @property
    def size(self) -> int:
        """|E'|: real items plus dummies."""
        return self.n + self.dummy_count

    def is_dummy(self, item: int) -> bool:
        if not 0 <= item < self.size:
            raise MalformedInputError(f"item {item} out of range for |E'|={self.size}")
        return item >= self.n

    def cost(self, item: int) -> float:
        return 0.0 if self.is_dummy(item) else self.costs[item]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.name == other.name
            and self.costs == other.costs
            and self.prior == other.prior
            and self.revenue == other.revenue
            and self.dummy_count == other.dummy_count
        )

    def __hash__(self) -> int:
        return hash((self.name, self.costs, self.dummy_count))
