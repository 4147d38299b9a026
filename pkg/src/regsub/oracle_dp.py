"""Optimal adaptive policy by backward induction, and approximation-bound checks.

V(psi, t) = max(g(psi) - c(dom psi), max_e E_o[V(psi + (e, o), t - 1)]),
with V(psi, 0) = g(psi) - c(dom psi). The stop option realizes "at most k
items"; ties go to stopping first, then to the lowest item index.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from regsub.core import EMPTY, CapacityError, Instance, PartialRealization
from regsub.evaluation import EvalResult, evaluate_exact, evaluate_monte_carlo
from regsub.objective import TOL, expected_revenue, modular_cost
from regsub.policies import AdaptivePolicy, Batch, PolicyKind, PolicySpec

DP_LIMIT = 10**6
TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DecisionNode:
    """Stop (``item is None``) or select ``item`` and branch on its state.

    ``value``, ``revenue`` and ``cost`` are the expected final objective,
    revenue and cost conditioned on reaching this node.
    """

    item: int | None
    children: Mapping[int, "DecisionNode"]
    value: float
    revenue: float
    cost: float

    @property
    def is_stop(self) -> bool:
        return self.item is None

    def to_dict(self) -> dict:
        out = {
            "kind": "stop" if self.is_stop else "select",
            "value": repr(self.value),
            "revenue": repr(self.revenue),
            "cost": repr(self.cost),
        }
        if not self.is_stop:
            out["item"] = self.item
            out["children"] = {str(o): ch.to_dict() for o, ch in sorted(self.children.items())}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionNode":
        children = {int(o): cls.from_dict(ch) for o, ch in d.get("children", {}).items()}
        item = None if d["kind"] == "stop" else int(d["item"])
        return cls(item, children, float(d["value"]), float(d["revenue"]), float(d["cost"]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, DecisionNode):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass
class DecisionTree:
    root: DecisionNode
    k: int
    _index: dict = field(default=None, init=False, repr=False)

    @property
    def value(self) -> float:
        return self.root.value

    def node_at(self, psi: PartialRealization) -> DecisionNode | None:
        if self._index is None:
            index = {}

            def walk(node, psi):
                index[psi.key] = node
                for o, ch in node.children.items():
                    walk(ch, psi.extend(node.item, o))

            walk(self.root, EMPTY)
            self._index = index
        return self._index.get(psi.key)

    def depth(self) -> int:
        def d(node):
            return 0 if node.is_stop else 1 + max(d(ch) for ch in node.children.values())
        return d(self.root)

    def paths(self):
        """Item sequences along every root-to-leaf path."""
        def walk(node, prefix):
            if node.is_stop:
                yield prefix
                return
            for ch in node.children.values():
                yield from walk(ch, prefix + [node.item])
        yield from walk(self.root, [])

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "root": self.root.to_dict()}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DecisionTree":
        d = json.loads(text)
        return cls(DecisionNode.from_dict(d["root"]), int(d["k"]))


def _dp_size(n: int, n_states: int, k: int) -> int:
    return sum(math.comb(n, j) * n_states**j for j in range(min(n, k) + 1))


def optimal_policy(instance: Instance, k: int) -> DecisionTree:
    """Backward induction over canonical partial realizations."""
    if k < 0:
        raise ValueError("k must be >= 0")
    size = _dp_size(instance.n, instance.n_states, k)
    if size > DP_LIMIT:
        raise CapacityError(f"{size} DP states exceed {DP_LIMIT}; shrink n or k")
    memo: dict = {}

    def solve(psi: PartialRealization, t: int) -> DecisionNode:
        hit = memo.get(psi.key)
        if hit is not None:
            return hit
        g = expected_revenue(psi, instance)
        c = modular_cost(psi.dom, instance)
        best = DecisionNode(None, {}, g - c, g, c)
        if t > 0:
            for e in range(instance.n):
                if e in psi:
                    continue
                children, val, rev, cost = {}, 0.0, 0.0, 0.0
                for o, p in instance.prior.state_distribution(psi, e):
                    ch = solve(psi.extend(e, o), t - 1)
                    children[o] = ch
                    val += p * ch.value
                    rev += p * ch.revenue
                    cost += p * ch.cost
                if val > best.value + TIE_TOL:
                    best = DecisionNode(e, children, val, rev, cost)
        memo[psi.key] = best
        return best

    # remaining budget is k - |dom psi|, so psi alone keys the memo
    return DecisionTree(solve(EMPTY, k), k)


def tree_value_decomposition(tree: DecisionTree, instance: Instance) -> tuple[float, float]:
    """Exact (g_avg, c_avg) of the tree policy by branch enumeration."""
    g = c = 0.0

    def walk(node, psi, prob):
        nonlocal g, c
        if node.is_stop:
            g += prob * expected_revenue(psi, instance)
            c += prob * modular_cost(psi.dom, instance)
            return
        for o, p in instance.prior.state_distribution(psi, node.item):
            walk(node.children[o], psi.extend(node.item, o), prob * p)

    walk(tree.root, EMPTY, 1.0)
    return g, c


class TreePolicy(AdaptivePolicy):
    """Adapter so a decision tree can be run or evaluated like any policy."""

    def __init__(self, tree: DecisionTree):
        self.tree, self.k = tree, tree.k

    def _item(self, psi) -> int:
        node = self.tree.node_at(psi)
        return -1 if node is None or node.is_stop else node.item

    def distribution(self, psi, i, instance):
        e = self._item(psi)
        return ([] if e < 0 else [(e, 1.0, math.nan)]), 0

    def choose_batch(self, psi, i, instance, rng, size, with_pool=False):
        e = self._item(psi)
        return Batch(np.full(size, e), np.full(size, math.nan), np.zeros(size, dtype=np.int64),
                     [None] * size if with_pool else None)


@dataclass(frozen=True)
class BoundCheck:
    policy_objective: float
    ratio: float
    g_opt: float
    c_opt: float
    bound: float
    satisfied: bool
    slack: float
    std_error: float = 0.0


def default_ratio(spec: PolicySpec) -> float:
    if spec.kind is PolicyKind.DISTORTED_GREEDY:
        return 1 - 1 / math.e
    if spec.kind is PolicyKind.LINEAR_TIME:
        return 1 - 1 / math.e - spec.epsilon
    return 1 / math.e


def check_bound(result: EvalResult, g_opt: float, c_opt: float, ratio: float, sigmas: float = 4.0) -> BoundCheck:
    """objective >= ratio * g_opt - c_opt, allowing ``sigmas`` standard
    errors for Monte Carlo estimates on top of the 1e-9 float tolerance."""
    bound = ratio * g_opt - c_opt
    slack = result.objective - bound
    ok = slack >= -TOL - sigmas * result.std_error
    return BoundCheck(result.objective, ratio, g_opt, c_opt, bound, bool(ok), slack, result.std_error)


def verify_bound(
    policy: PolicySpec,
    instance: Instance,
    k: int | None = None,
    ratio: float | None = None,
    *,
    trials: int | None = None,
    tree: DecisionTree | None = None,
) -> BoundCheck:
    """Compare a policy against the DP optimum under ``ratio``.

    The policy is evaluated exactly unless it is the linear-time kind or
    ``trials`` is given, in which case Monte Carlo with ``policy.seed``.
    """
    k = policy.k if k is None else k
    if tree is None:
        tree = optimal_policy(instance, k)
    g_opt, c_opt = tree_value_decomposition(tree, instance)
    if ratio is None:
        ratio = default_ratio(policy)
    if trials is None and policy.kind is not PolicyKind.LINEAR_TIME:
        result = evaluate_exact(policy, instance, k)
    else:
        result = evaluate_monte_carlo(policy, instance, k, trials=trials or 100_000, seed=policy.seed)
    return check_bound(result, g_opt, c_opt, ratio)

