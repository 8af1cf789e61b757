"""Random small schemas, corpora and expressions for property tests."""

from __future__ import annotations

import random

from precond import expr as ex
from precond.schema import schema_from_dict
from precond.synth import enumerate_atoms
from precond.trajectory import Call, Corpus, Trajectory


def random_schema(rng: random.Random, name: str = "toy"):
    """Flags, one BoolMap over a small vocabulary, a TriState and a string
    set, with observation functions that touch each of them and two or
    three actions (one nullary, the others keyed by the map vocabulary)."""
    n_flags = rng.randint(1, 3)
    keys = [f"k{i}" for i in range(rng.randint(2, 4))]
    items = [f"box {i}" for i in range(1, rng.randint(2, 3) + 1)]
    state_vars = [{"name": f"f{i}", "kind": "BoolFlag"} for i in range(n_flags)]
    state_vars += [
        {"name": "m", "kind": "BoolMap", "keys": ["key"]},
        {"name": "q", "kind": "TriState"},
        {"name": "seen", "kind": "StringSet"},
    ]
    fns = []
    for i in range(n_flags):
        fns.append({"name": f"env.raise{i}", "kind": "observation", "effects": [{"target": f"f{i}", "op": "set_true"}]})
        if rng.random() < 0.6:
            fns.append({"name": f"env.drop{i}", "kind": "observation", "effects": [{"target": f"f{i}", "op": "set_false"}]})
    fns.append(
        {
            "name": "env.mark",
            "kind": "observation",
            "params": [{"name": "key", "vocab": "key"}],
            "effects": [{"target": "m", "op": "set_true", "key": ["key"]}],
        }
    )
    fns.append(
        {
            "name": "env.status",
            "kind": "observation",
            "params": [{"name": "v", "vocab": "status"}],
            "effects": [{"target": "q", "op": "set_value", "value": "v"}],
        }
    )
    fns.append(
        {
            "name": "env.see",
            "kind": "observation",
            "params": [{"name": "item", "vocab": "item"}],
            "effects": [{"target": "seen", "op": "insert", "args": ["item"]}],
        }
    )
    fns.append({"name": "agent.stop", "kind": "action", "gt_precondition": "f0"})
    fns.append(
        {
            "name": "agent.use",
            "kind": "action",
            "params": [{"name": "key", "vocab": "key"}],
            "gt_precondition": "m[key] and not f0" if n_flags else "m[key]",
        }
    )
    if rng.random() < 0.5:
        fns.append(
            {
                "name": "agent.pick",
                "kind": "action",
                "params": [{"name": "item", "vocab": "item"}],
                "gt_precondition": "item in seen",
            }
        )
    data = {
        "name": name,
        "state_vars": state_vars,
        "vocabularies": {"key": keys, "status": [True, False], "item": items},
        "functions": fns,
    }
    return schema_from_dict(data)


def random_call(schema, fn, rng: random.Random) -> Call:
    return Call(fn.name, tuple(rng.choice(schema.vocab(p.vocab)) for p in fn.params))


def random_trajectory(schema, rng: random.Random, tid: str, length: int | None = None) -> Trajectory:
    length = length if length is not None else rng.randint(1, 10)
    fns = list(schema.functions)
    calls = tuple(random_call(schema, rng.choice(fns), rng) for _ in range(length))
    return Trajectory(tid, calls)


def random_corpus(schema, rng: random.Random, n: int | None = None) -> Corpus:
    n = n if n is not None else rng.randint(1, 4)
    return Corpus(schema.name, tuple(random_trajectory(schema, rng, f"t{i}") for i in range(n)))


def random_expr(schema, fn, rng: random.Random, depth: int = 3):
    """A well-typed expression for ``fn`` built from enumerated atoms."""
    atoms = enumerate_atoms(schema, fn) or [ex.TRUE]
    if depth == 0 or rng.random() < 0.3:
        return rng.choice(atoms + [ex.TRUE, ex.FALSE])
    kind = rng.choice(["and", "or", "not"])
    if kind == "not":
        return ex.Not(random_expr(schema, fn, rng, depth - 1))
    left = random_expr(schema, fn, rng, depth - 1)
    right = random_expr(schema, fn, rng, depth - 1)
    return ex.And(left, right) if kind == "and" else ex.Or(left, right)


# summary lines printed by the acceptance tests, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []
