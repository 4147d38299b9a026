"""Benchmark instances and the JSON instance format.

Numbers in instance files are decimal strings (``repr`` of the float), so
files round-trip bit-exactly and diff cleanly.
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path

import jsonschema
import numpy as np

from regsub.core import ExplicitPrior, IndependentPrior, Instance, MalformedInputError, Realization
from regsub.objective import CoverageRevenue, TableRevenue, check_adaptive_monotone, check_adaptive_submodular

SCHEMA_VERSION = 1


class GenerationError(RuntimeError):
    pass


class InstanceFormatError(ValueError):
    pass


def demo2() -> Instance:
    """Two items: a (cost 0.1) covers {x}; b (cost 0.4) covers {x, y}.

    Each works independently with probability 1/2; x and y weigh 1.
    """
    revenue = CoverageRevenue(
        weights=(1.0, 1.0),
        covers=((frozenset(), frozenset({0})), (frozenset(), frozenset({0, 1}))),
    )
    prior = IndependentPrior(((0.5, 0.5), (0.5, 0.5)))
    return Instance("demo2", (0.1, 0.4), prior, revenue)


def gen_coverage(
    n: int,
    seed: int,
    *,
    n_elements: int = 8,
    density: float = 0.35,
    prob_range: tuple[float, float] = (0.2, 0.9),
    cost_range: tuple[float, float] = (0.0, 1.0),
    weight_range: tuple[float, float] = (0.0, 1.0),
) -> Instance:
    """Random stochastic coverage: a working item covers its set, a failed one nothing."""
    if n < 1 or n_elements < 1:
        raise ValueError("need at least one item and one element")
    rng = np.random.default_rng(seed)
    weights = rng.uniform(*weight_range, size=n_elements)
    covers = []
    for _ in range(n):
        mask = rng.random(n_elements) < density
        if not mask.any():
            mask[rng.integers(n_elements)] = True
        covers.append((frozenset(), frozenset(int(x) for x in np.flatnonzero(mask))))
    p = rng.uniform(*prob_range, size=n)
    costs = rng.uniform(*cost_range, size=n)
    prior = IndependentPrior(tuple((1.0 - float(q), float(q)) for q in p))
    return Instance(
        f"coverage-n{n}-s{seed}",
        tuple(float(c) for c in costs),
        prior,
        CoverageRevenue(tuple(float(w) for w in weights), tuple(covers)),
    )


def _concave_table(n: int, n_states: int, rng: np.random.Generator) -> tuple[IndependentPrior, TableRevenue]:
    # g(Y, phi) = s (T - s) / T with s = sum of per-(item, state) loads over Y.
    # Concave of modular per realization, so pointwise submodular; it only
    # reads the states of Y, and priors are independent.
    loads = rng.uniform(0.0, 1.0, size=(n, n_states))
    total = loads.max(axis=1).sum() * rng.uniform(1.0, 1.6)
    prior = IndependentPrior(tuple(tuple(float(v) for v in rng.dirichlet(np.ones(n_states))) for _ in range(n)))
    rows = []
    for mask in range(2**n):
        members = [e for e in range(n) if mask >> e & 1]
        row = []
        for states in itertools.product(range(n_states), repeat=n):
            s = sum(loads[e, states[e]] for e in members)
            row.append(max(0.0, float(s * (total - s) / total)))
        rows.append(tuple(row))
    return prior, TableRevenue(n, n_states, tuple(rows))


def gen_table_nonmonotone(
    n: int,
    seed: int,
    *,
    n_states: int = 2,
    cost_range: tuple[float, float] = (0.0, 0.3),
    max_retries: int = 50,
) -> Instance:
    """Random table instance that is adaptive submodular but not adaptive monotone.

    Candidates are drawn until the exhaustive checkers accept one.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        prior, revenue = _concave_table(n, n_states, rng)
        costs = tuple(float(c) for c in rng.uniform(*cost_range, size=n))
        inst = Instance(f"table-n{n}-s{seed}", costs, prior, revenue)
        if check_adaptive_submodular(inst).passed and not check_adaptive_monotone(inst).passed:
            return inst
    raise GenerationError(f"no non-monotone adaptive submodular table found for n={n} in {max_retries} tries")


_DECIMAL = {"type": "string", "pattern": r"^-?[0-9]+(\.[0-9]+)?([eE][-+]?[0-9]+)?$"}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "name", "n", "state_space", "costs", "prior", "revenue"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "state_space": {"type": "integer", "minimum": 1},
        "dummy_count": {"type": "integer", "minimum": 0},
        "budget_hint": {"type": "integer", "minimum": 1},
        "costs": {"type": "array", "items": _DECIMAL},
        "prior": {
            "type": "object",
            "required": ["kind", "params"],
            "oneOf": [
                {
                    "properties": {
                        "kind": {"const": "independent"},
                        "params": {
                            "type": "object",
                            "required": ["marginals"],
                            "properties": {"marginals": {"type": "array", "items": {"type": "array", "items": _DECIMAL}}},
                        },
                    }
                },
                {
                    "properties": {
                        "kind": {"const": "explicit"},
                        "params": {
                            "type": "object",
                            "required": ["realizations"],
                            "properties": {
                                "realizations": {
                                    "type": "array",
                                    "items": {
                                        "type": "object",
                                        "required": ["states", "probability"],
                                        "properties": {
                                            "states": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                                            "probability": _DECIMAL,
                                        },
                                    },
                                }
                            },
                        },
                    }
                },
            ],
        },
        "revenue": {
            "type": "object",
            "required": ["kind", "params"],
            "oneOf": [
                {
                    "properties": {
                        "kind": {"const": "coverage"},
                        "params": {
                            "type": "object",
                            "required": ["weights", "covers"],
                            "properties": {
                                "weights": {"type": "array", "items": _DECIMAL},
                                "covers": {
                                    "type": "array",
                                    "items": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
                                },
                            },
                        },
                    }
                },
                {
                    "properties": {
                        "kind": {"const": "table"},
                        "params": {
                            "type": "object",
                            "required": ["entries"],
                            "properties": {"entries": {"type": "array", "items": {"type": "array", "items": _DECIMAL}}},
                        },
                    }
                },
            ],
        },
    },
}


def _num(x: float) -> str:
    return repr(float(x))


def instance_to_dict(instance: Instance, budget_hint: int | None = None) -> dict:
    prior = instance.prior
    if isinstance(prior, IndependentPrior):
        prior_doc = {"kind": "independent", "params": {"marginals": [[_num(p) for p in row] for row in prior.marginals]}}
    else:
        prior_doc = {
            "kind": "explicit",
            "params": {
                "realizations": [{"states": list(r.states), "probability": _num(r.probability)} for r in prior.realizations]
            },
        }
    rev = instance.revenue
    if isinstance(rev, CoverageRevenue):
        rev_doc = {
            "kind": "coverage",
            "params": {
                "weights": [_num(w) for w in rev.weights],
                "covers": [[sorted(c) for c in row] for row in rev.covers],
            },
        }
    elif isinstance(rev, TableRevenue):
        rev_doc = {"kind": "table", "params": {"entries": [[_num(v) for v in row] for row in rev.entries]}}
    else:
        raise TypeError(f"cannot serialize revenue oracle {type(rev).__name__}")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": instance.name,
        "n": instance.n,
        "state_space": instance.n_states,
        "dummy_count": instance.dummy_count,
        "costs": [_num(c) for c in instance.costs],
        "prior": prior_doc,
        "revenue": rev_doc,
    }
    if budget_hint is not None:
        doc["budget_hint"] = budget_hint
    return doc


def _where(error: jsonschema.ValidationError) -> str:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in error.absolute_path)
    return path.lstrip(".") or "<root>"


def instance_from_dict(doc: dict) -> Instance:
    validator = jsonschema.Draft202012Validator(INSTANCE_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise InstanceFormatError(f"{_where(err)}: {err.message}")
    n, m = doc["n"], doc["state_space"]
    try:
        if doc["prior"]["kind"] == "independent":
            prior = IndependentPrior(tuple(tuple(float(p) for p in row) for row in doc["prior"]["params"]["marginals"]))
        else:
            prior = ExplicitPrior(
                tuple(Realization(tuple(r["states"]), float(r["probability"])) for r in doc["prior"]["params"]["realizations"]),
                m,
            )
        if prior.n_items != n or prior.n_states != m:
            raise MalformedInputError(f"prior covers {prior.n_items} items x {prior.n_states} states, expected {n} x {m}")
        params = doc["revenue"]["params"]
        if doc["revenue"]["kind"] == "coverage":
            if len(params["covers"]) != n or any(len(row) != m for row in params["covers"]):
                raise MalformedInputError(f"revenue.params.covers must be {n} x {m}")
            revenue = CoverageRevenue(tuple(float(w) for w in params["weights"]), tuple(tuple(frozenset(c) for c in row) for row in params["covers"]))
        else:
            revenue = TableRevenue(n, m, tuple(tuple(float(v) for v in row) for row in params["entries"]))
        return Instance(doc["name"], tuple(float(c) for c in doc["costs"]), prior, revenue, doc.get("dummy_count", 0))
    except MalformedInputError as exc:
        raise InstanceFormatError(str(exc)) from exc


def dumps_instance(instance: Instance, budget_hint: int | None = None) -> str:
    return json.dumps(instance_to_dict(instance, budget_hint), indent=2) + "\n"


def loads_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return instance_from_dict(doc)


def save_instance(instance: Instance, path, budget_hint: int | None = None) -> None:
    Path(path).write_text(dumps_instance(instance, budget_hint))


def load_instance(path) -> Instance:
    return loads_instance(Path(path).read_text())
