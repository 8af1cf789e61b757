"""Domain schemas: state variables, observation/action functions, effect
rules and argument vocabularies, plus JSON load/save."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from precond import expr as ex

VAR_KINDS = ("BoolFlag", "BoolMap", "TriState", "StringSet", "OptString", "PropMap")
EFFECT_OPS = ("set_true", "set_false", "set_value", "insert", "clear")
_KEY_ARITY = {"BoolMap": 1, "PropMap": 2}

_EFFECT_KINDS = {
    "set_true": {"BoolFlag", "BoolMap", "PropMap", "TriState"},
    "set_false": {"BoolFlag", "BoolMap", "PropMap", "TriState"},
    "set_value": {"BoolFlag", "BoolMap", "PropMap", "TriState", "OptString"},
    "insert": {"StringSet"},
    "clear": set(VAR_KINDS),
}


class SchemaError(ValueError):
    """Malformed or inconsistent schema file."""


@dataclass(frozen=True)
class StateVarDecl:
    name: str
    kind: str
    keys: tuple[str, ...] = ()  # key vocabularies for BoolMap / PropMap
    owner: str | None = None  # class the variable lives on, for prompt rendering


@dataclass(frozen=True)
class ParamDecl:
    name: str
    vocab: str
    variadic: bool = False


@dataclass(frozen=True)
class EffectRule:
    target: str
    op: str
    key: tuple = ()  # Lit / Param terms
    value: Any = None  # Lit / Param / Const term for set_value
    args: tuple[str, ...] = ()  # parameter names for insert


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    kind: str  # "observation" | "action"
    params: tuple[ParamDecl, ...] = ()
    effects: tuple[EffectRule, ...] = ()
    gt_precondition: Any = None

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    @property
    def namespace(self) -> str:
        return self.name.rsplit(".", 1)[0] if "." in self.name else ""

    @property
    def short_name(self) -> str:
        return self.name.rsplit(".", 1)[-1]


@dataclass(frozen=True)
class Helper:
    """Named accessor that expands inline during expression parsing, e.g.
    ``is_visible(obj)`` -> ``obj in visible_objects``."""

    name: str
    params: tuple[str, ...]
    body: str


@dataclass(frozen=True)
class DomainSchema:
    name: str
    state_vars: tuple[StateVarDecl, ...]
    functions: tuple[FunctionDecl, ...]
    vocabularies: dict = field(hash=False, compare=True)
    helpers: dict = field(default_factory=dict, hash=False, compare=True)

    def __post_init__(self):
        object.__setattr__(self, "_vars", {v.name: v for v in self.state_vars})
        object.__setattr__(self, "_fns", {f.name: f for f in self.functions})

    def has_var(self, name: str) -> bool:
        return name in self._vars

    def var(self, name: str) -> StateVarDecl:
        return self._vars[name]

    def has_function(self, name: str) -> bool:
        return name in self._fns

    def function(self, name: str) -> FunctionDecl:
        try:
            return self._fns[name]
        except KeyError:
            raise KeyError(f"unknown function {name!r} in schema {self.name!r}") from None

    @property
    def actions(self) -> tuple[FunctionDecl, ...]:
        return tuple(f for f in self.functions if f.kind == "action")

    @property
    def observations(self) -> tuple[FunctionDecl, ...]:
        return tuple(f for f in self.functions if f.kind == "observation")

    def vocab(self, vocab_id: str) -> tuple:
        return tuple(self.vocabularies[vocab_id])

    def param(self, fn: FunctionDecl, name: str) -> ParamDecl:
        for p in fn.params:
            if p.name == name:
                return p
        raise KeyError(f"{fn.name} has no parameter {name!r}")

    def param_type(self, fn: FunctionDecl, name: str) -> str:
        values = self.vocab(self.param(fn, name).vocab)
        return ex.BOOL if values and all(isinstance(v, bool) for v in values) else ex.STR

    def gt_preconditions(self) -> dict:
        return {f.name: (f.gt_precondition if f.gt_precondition is not None else ex.TRUE) for f in self.actions}


def action_groundings(schema: DomainSchema, fn: FunctionDecl) -> list[tuple]:
    """All argument bindings of ``fn``: the product of its parameter vocabularies."""
    if fn.kind != "action":
        raise ValueError(f"{fn.name} is not an action function")
    return list(itertools.product(*(schema.vocab(p.vocab) for p in fn.params)))


# ---------------------------------------------------------------- validation


def _check_term(term, fn: FunctionDecl, where: str):
    if isinstance(term, ex.Param) and term.name not in fn.param_names:
        raise SchemaError(f"{where}: unknown parameter {term.name!r}")


def validate_schema(schema: DomainSchema) -> DomainSchema:
    names = [v.name for v in schema.state_vars]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise SchemaError(f"duplicate state variable(s): {sorted(dup)}")
    for v in schema.state_vars:
        if v.kind not in VAR_KINDS:
            raise SchemaError(f"state variable {v.name!r}: unknown kind {v.kind!r}")
        if v.name in ("true", "false", "none"):
            raise SchemaError(f"state variable {v.name!r}: reserved name")
        arity = _KEY_ARITY.get(v.kind, 0)
        if v.keys and len(v.keys) != arity:
            raise SchemaError(f"state variable {v.name!r}: {v.kind} takes {arity} key vocabularies")
        for k in v.keys:
            if k not in schema.vocabularies:
                raise SchemaError(f"state variable {v.name!r}: dangling vocabulary {k!r}")

    for vid, values in schema.vocabularies.items():
        if not values:
            raise SchemaError(f"vocabulary {vid!r} is empty")
        if not (all(isinstance(x, str) for x in values) or all(isinstance(x, bool) for x in values)):
            raise SchemaError(f"vocabulary {vid!r} mixes strings and booleans")
        if len(set(values)) != len(values):
            raise SchemaError(f"vocabulary {vid!r} has duplicate entries")

    fnames = [f.name for f in schema.functions]
    dup = {n for n in fnames if fnames.count(n) > 1}
    if dup:
        raise SchemaError(f"duplicate function(s): {sorted(dup)}")
    if not schema.actions:
        raise SchemaError(f"schema {schema.name!r} declares no action functions")

    for fn in schema.functions:
        where = f"function {fn.name!r}"
        if fn.kind not in ("observation", "action"):
            raise SchemaError(f"{where}: unknown kind {fn.kind!r}")
        pnames = fn.param_names
        if len(set(pnames)) != len(pnames):
            raise SchemaError(f"{where}: duplicate parameter names")
        for i, p in enumerate(fn.params):
            if p.vocab not in schema.vocabularies:
                raise SchemaError(f"{where}: parameter {p.name!r} has dangling vocabulary {p.vocab!r}")
            if p.variadic and (i != len(fn.params) - 1 or fn.kind == "action"):
                raise SchemaError(f"{where}: only the last parameter of an observation may be variadic")
        if fn.kind == "action" and fn.effects:
            raise SchemaError(f"{where}: action functions cannot carry effects")
        for eff in fn.effects:
            _validate_effect(schema, fn, eff)
        if fn.gt_precondition is not None:
            if fn.kind != "action":
                raise SchemaError(f"{where}: only actions carry ground-truth preconditions")
            try:
                ex.typecheck(fn.gt_precondition, schema, fn)
            except ex.ExprTypeError as exc:
                raise SchemaError(f"{where}: ground-truth precondition: {exc}") from None
    return schema


def _validate_effect(schema: DomainSchema, fn: FunctionDecl, eff: EffectRule):
    where = f"function {fn.name!r} effect on {eff.target!r}"
    if not schema.has_var(eff.target):
        raise SchemaError(f"{where}: unknown state variable")
    kind = schema.var(eff.target).kind
    if eff.op not in EFFECT_OPS:
        raise SchemaError(f"{where}: unknown op {eff.op!r}")
    if kind not in _EFFECT_KINDS[eff.op]:
        raise SchemaError(f"{where}: op {eff.op} is incompatible with {kind}")
    arity = _KEY_ARITY.get(kind, 0)
    if eff.op != "clear" and len(eff.key) != arity:
        raise SchemaError(f"{where}: {kind} needs {arity} key term(s), got {len(eff.key)}")
    for k in eff.key:
        _check_term(k, fn, where)
    if eff.op == "set_value":
        if eff.value is None:
            raise SchemaError(f"{where}: set_value needs a value")
        _check_term(eff.value, fn, where)
    if eff.op == "insert":
        if not eff.args:
            raise SchemaError(f"{where}: insert needs parameter arguments")
        for a in eff.args:
            if a not in fn.param_names:
                raise SchemaError(f"{where}: unknown parameter {a!r}")


# ---------------------------------------------------------------- JSON


def _effect_from_dict(d: dict, fn_name: str, params: tuple[str, ...]) -> EffectRule:
    try:
        return EffectRule(
            target=d["target"],
            op=d["op"],
            key=tuple(ex.parse_term(k, params) for k in d.get("key", ())),
            value=ex.parse_term(d["value"], params) if d.get("value") is not None else None,
            args=tuple(d.get("args", ())),
        )
    except (KeyError, ex.ExprSyntaxError) as exc:
        raise SchemaError(f"function {fn_name!r}: bad effect {d!r}: {exc}") from None


def _effect_to_dict(eff: EffectRule) -> dict:
    d: dict[str, Any] = {"target": eff.target, "op": eff.op}
    if eff.key:
        d["key"] = [ex.render(k) for k in eff.key]
    if eff.value is not None:
        d["value"] = ex.render_python(eff.value)
    if eff.args:
        d["args"] = list(eff.args)
    return d


def schema_from_dict(data: dict) -> DomainSchema:
    try:
        state_vars = tuple(
            StateVarDecl(
                name=v["name"],
                kind=v["kind"],
                keys=tuple(v.get("keys", ()) if not isinstance(v.get("keys"), str) else (v["keys"],)),
                owner=v.get("owner"),
            )
            for v in data["state_vars"]
        )
        vocabularies = {k: list(vs) for k, vs in data["vocabularies"].items()}
        helpers = {
            name: Helper(name, tuple(h["params"]), h["body"]) for name, h in data.get("helpers", {}).items()
        }
        raw_fns = data["functions"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed schema: missing or bad field {exc}") from None

    functions = []
    for f in raw_fns:
        try:
            params = tuple(
                ParamDecl(p["name"], p["vocab"], bool(p.get("variadic", False))) for p in f.get("params", ())
            )
            name, kind = f["name"], f["kind"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed function declaration {f!r}: {exc}") from None
        pnames = tuple(p.name for p in params)
        effects = tuple(_effect_from_dict(e, name, pnames) for e in f.get("effects", ()))
        for p in params:
            if p.vocab not in vocabularies:
                raise SchemaError(f"function {name!r}: parameter {p.name!r} uses undeclared vocabulary {p.vocab!r}")
        functions.append(FunctionDecl(name, kind, params, effects, None))
    # gt preconditions need the rest of the schema to resolve names
    bare = DomainSchema(data.get("name", ""), state_vars, tuple(functions), vocabularies, helpers)
    resolved = []
    for f, decl in zip(raw_fns, functions):
        gt = f.get("gt_precondition")
        if gt is not None:
            try:
                gt = ex.parse_expr(gt, bare, decl)
            except (ex.ExprSyntaxError, ex.ExprTypeError) as exc:
                raise SchemaError(f"function {decl.name!r}: ground-truth precondition: {exc}") from None
        resolved.append(FunctionDecl(decl.name, decl.kind, decl.params, decl.effects, gt))
    if "name" not in data:
        raise SchemaError("malformed schema: missing 'name'")
    schema = DomainSchema(data["name"], state_vars, tuple(resolved), vocabularies, helpers)
    return validate_schema(schema)


def schema_to_dict(schema: DomainSchema) -> dict:
    def var(v: StateVarDecl) -> dict:
        d: dict[str, Any] = {"name": v.name, "kind": v.kind}
        if v.keys:
            d["keys"] = list(v.keys)
        if v.owner:
            d["owner"] = v.owner
        return d

    def fn(f: FunctionDecl) -> dict:
        params = []
        for p in f.params:
            pd: dict[str, Any] = {"name": p.name, "vocab": p.vocab}
            if p.variadic:
                pd["variadic"] = True
            params.append(pd)
        return {
            "name": f.name,
            "kind": f.kind,
            "params": params,
            "effects": [_effect_to_dict(e) for e in f.effects],
            "gt_precondition": ex.render(f.gt_precondition) if f.gt_precondition is not None else None,
        }

    out: dict[str, Any] = {
        "name": schema.name,
        "state_vars": [var(v) for v in schema.state_vars],
        "vocabularies": {k: list(v) for k, v in schema.vocabularies.items()},
        "functions": [fn(f) for f in schema.functions],
    }
    if schema.helpers:
        out["helpers"] = {h.name: {"params": list(h.params), "body": h.body} for h in schema.helpers.values()}
    return out


def load_schema(path: str | Path) -> DomainSchema:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return schema_from_dict(data)


def dump_schema(schema: DomainSchema) -> str:
    return json.dumps(schema_to_dict(schema), indent=2) + "\n"


def save_schema(schema: DomainSchema, path: str | Path) -> None:
    Path(path).write_text(dump_schema(schema))
