"""Built-in domain packs: two dialog domains and a household text world."""

from __future__ import annotations

import json
from importlib import resources

from precond.schema import DomainSchema, schema_from_dict
from precond.trajectory import Corpus, parse_corpus_text

BUILTIN = ("restaurants", "buses", "household")


def _data(name: str) -> str:
    return resources.files("precond.domains").joinpath("data", name).read_text()


def builtin_schema(name: str) -> DomainSchema:
    if name not in BUILTIN:
        raise KeyError(f"unknown built-in domain {name!r} (choose from {', '.join(BUILTIN)})")
    return schema_from_dict(json.loads(_data(f"{name}.schema.json")))


def builtin_schemas() -> list[DomainSchema]:
    return [builtin_schema(n) for n in BUILTIN]


def example_corpus(name: str) -> Corpus:
    """The hand-written example trajectory shipped with a domain."""
    schema = builtin_schema(name)
    return parse_corpus_text(_data(f"{name}_example.traj"), schema)
