"""Candidate precondition pools: grammar enumeration (default) and sampling
from an external code model."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from precond import expr as ex
from precond.client import CompletionClient, ModelError
from precond.schema import DomainSchema, FunctionDecl
from precond.trajectory import Corpus, Trajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Candidate:
    expr: object  # None when unparseable
    source: str  # "enumerated" | "model" | "curated"
    raw: str
    error: str = ""

    @property
    def typed(self) -> bool:
        return self.expr is not None


@dataclass
class CandidatePool:
    action: str
    candidates: list[Candidate] = field(default_factory=list)

    @property
    def typed(self) -> list:
        return [c.expr for c in self.candidates if c.typed]

    @property
    def unparseable(self) -> list[Candidate]:
        return [c for c in self.candidates if not c.typed]

    def __len__(self) -> int:
        return len(self.candidates)

    def to_json(self) -> list[dict]:
        return [
            {
                "action": self.action,
                "expr_text": ex.render(c.expr) if c.typed else None,
                "source": c.source,
                "raw": c.raw,
            }
            for c in self.candidates
        ]


@dataclass
class GeneratorConfig:
    max_depth: int = 2
    max_pool: int = 20000
    model_endpoint: str | None = None
    samples_per_demo: int = 5
    temperature: float = 0.8
    max_tokens: int = 64
    max_in_flight: int = 4

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.model_endpoint and self.samples_per_demo < 1:
            raise ValueError("samples_per_demo must be >= 1 when a model endpoint is set")


def build_pool(action: str, entries, schema: DomainSchema, source: str = "curated") -> CandidatePool:
    """Parse raw assertion texts into a pool, flagging the unparseable ones
    and dropping AST duplicates (first occurrence wins)."""
    fn = schema.function(action)
    pool = CandidatePool(action)
    seen = set()
    for raw in entries:
        try:
            e = ex.parse_expr(raw, schema, fn)
        except (ex.ExprSyntaxError, ex.ExprTypeError) as exc:
            pool.candidates.append(Candidate(None, source, raw, str(exc)))
            continue
        if e in seen:
            continue
        seen.add(e)
        pool.candidates.append(Candidate(e, source, raw))
    return pool


# ---------------------------------------------------------------- enumeration


def _stems(values) -> list[str]:
    """Type stems of instance-numbered entries ('sinkbasin 1' -> 'sinkbasin')."""
    out = []
    for v in values:
        m = re.fullmatch(r"([A-Za-z_]+) \d+", v) if isinstance(v, str) else None
        if m and m.group(1) not in out:
            out.append(m.group(1))
    return out


def _str_params(schema: DomainSchema, fn: FunctionDecl) -> list:
    return [p for p in fn.params if schema.param_type(fn, p.name) == ex.STR]


def _overlaps(schema: DomainSchema, vocab_a: str, vocab_b: str) -> bool:
    return bool(set(schema.vocab(vocab_a)) & set(schema.vocab(vocab_b)))


def enumerate_atoms(schema: DomainSchema, fn: FunctionDecl) -> list:
    """Depth-1 atoms for ``fn`` in a fixed order (state-variable order, then
    positive before negated)."""
    atoms: list = []

    def both(a):
        atoms.append(a)
        atoms.append(ex.Not(a))

    sparams = _str_params(schema, fn)
    for v in schema.state_vars:
        if v.kind == "BoolFlag":
            both(ex.Var(v.name))
        elif v.kind == "BoolMap":
            key_vocab = v.keys[0] if v.keys else None
            for p in sparams:
                if key_vocab is None or _overlaps(schema, p.vocab, key_vocab):
                    both(ex.Lookup(v.name, (ex.Param(p.name),)))
            if key_vocab is not None:
                for k in schema.vocab(key_vocab):
                    both(ex.Lookup(v.name, (ex.Lit(k),)))
        elif v.kind == "PropMap":
            if len(v.keys) != 2:
                continue
            ent_vocab, prop_vocab = v.keys
            for p in sparams:
                if _overlaps(schema, p.vocab, ent_vocab):
                    for prop in schema.vocab(prop_vocab):
                        both(ex.Lookup(v.name, (ex.Param(p.name), ex.Lit(prop))))
        elif v.kind == "TriState":
            for c in (ex.TRUE, ex.FALSE, ex.NONE):
                atoms.append(ex.Cmp(ex.Var(v.name), "==", c))
                atoms.append(ex.Cmp(ex.Var(v.name), "!=", c))
        elif v.kind == "StringSet":
            for p in sparams:
                both(ex.In(ex.Param(p.name), ex.Var(v.name)))
        elif v.kind == "OptString":
            for p in sparams:
                atoms.append(ex.Cmp(ex.Var(v.name), "==", ex.Param(p.name)))
                atoms.append(ex.Cmp(ex.Var(v.name), "!=", ex.Param(p.name)))
            atoms.append(ex.Cmp(ex.Var(v.name), "==", ex.NONE))
            atoms.append(ex.Cmp(ex.Var(v.name), "!=", ex.NONE))
    # type tests on string parameters; positive form only
    for p in sparams:
        stems = _stems(schema.vocab(p.vocab))
        if len(stems) > 1:
            for s in stems:
                atoms.append(ex.In(ex.Lit(s), ex.Param(p.name)))
    out, seen = [], set()
    for a in atoms:
        if a not in seen:
            seen.add(a)
            out.append(a)
    return out


def enumerate_candidates(schema: DomainSchema, action: str, cfg: GeneratorConfig) -> CandidatePool:
    """``true`` plus every atom (depth 1) plus AND/OR of two distinct atoms
    (depth 2).  Order: ``true``, atoms, then binary connectives by size and
    atom index; truncated to ``cfg.max_pool``."""
    fn = schema.function(action)
    if fn.kind != "action":
        raise ValueError(f"{action} is not an action function")
    exprs = [ex.TRUE]
    if cfg.max_depth >= 1:
        atoms = enumerate_atoms(schema, fn)
        exprs += atoms
        if cfg.max_depth >= 2:
            pairs = []
            for i in range(len(atoms)):
                for j in range(i + 1, len(atoms)):
                    a, b = atoms[i], atoms[j]
                    if ex.Not(a) == b or ex.Not(b) == a:
                        continue
                    pairs.append((ex.size(a) + ex.size(b), i, j, 0, ex.And(a, b)))
                    pairs.append((ex.size(a) + ex.size(b), i, j, 1, ex.Or(a, b)))
            pairs.sort(key=lambda t: t[:4])
            exprs += [p[-1] for p in pairs]
    exprs = exprs[: cfg.max_pool]
    return CandidatePool(action, [Candidate(e, "enumerated", ex.render(e)) for e in exprs])


# ---------------------------------------------------------------- prompts


def var_prefix_for(schema: DomainSchema, fn: FunctionDecl):
    """``self.`` / ``self.user.`` style prefixes for a function's class."""
    ns = fn.namespace

    def prefix(name: str) -> str:
        owner = schema.var(name).owner if schema.has_var(name) else None
        if owner is None or owner == ns:
            return "self."
        return f"self.{owner}."

    return prefix


def _render_effect(schema: DomainSchema, fn: FunctionDecl, eff) -> str:
    target = var_prefix_for(schema, fn)(eff.target) + eff.target
    kind = schema.var(eff.target).kind
    if kind in ("BoolMap", "PropMap") and eff.key:
        keys = [ex.render_python(k) for k in eff.key]
        target += "[" + (keys[0] if len(keys) == 1 else "(" + ", ".join(keys) + ")") + "]"
    if eff.op == "set_true":
        return f"{target} = True"
    if eff.op == "set_false":
        return f"{target} = False"
    if eff.op == "set_value":
        return f"{target} = {ex.render_python(eff.value)}"
    if eff.op == "insert":
        return f"{target}.update(list({', '.join(eff.args)}))"
    cleared = {"StringSet": "set()", "BoolMap": "defaultdict(lambda: False)", "PropMap": "defaultdict(lambda: False)"}
    return f"{target} = {cleared.get(kind, 'None')}"


def _signature(fn: FunctionDecl) -> str:
    params = ["self"] + [("*" if p.variadic else "") + p.name for p in fn.params]
    return f"def {fn.short_name}({', '.join(params)}):"


def render_function(schema: DomainSchema, fn: FunctionDecl, precondition=None, indent: str = "  ") -> str:
    """Python-style definition of ``fn``; action bodies hold ``assert`` lines
    (one per conjunct of ``precondition``) or ``pass``."""
    lines = [_signature(fn)]
    if fn.kind == "observation":
        body = [_render_effect(schema, fn, e) for e in fn.effects] or ["pass"]
    else:
        conj = ex.conjuncts(precondition) if precondition is not None else []
        pre = var_prefix_for(schema, fn)
        body = [f"assert {ex.render_python(c, pre)}" for c in conj] or ["pass"]
    return "\n".join([lines[0]] + [indent + b for b in body])


def render_program(traj: Trajectory) -> str:
    head = f"# {traj.goal}" if traj.goal else f"# trajectory {traj.id}"
    return "\n".join([head] + [c.render() for c in traj.calls])


def candidate_prompt(schema: DomainSchema, action: str, demo: Trajectory) -> str:
    """Demonstration program, observation-function definitions, then the
    action header with an open ``assert``."""
    fn = schema.function(action)
    obs = "\n\n".join(render_function(schema, f) for f in schema.observations)
    parts = [
        "# Demonstration",
        render_program(demo),
        "",
        "# Observation functions",
        obs,
        "",
        "# Action",
        _signature(fn),
        "  assert ",
    ]
    return "\n".join(parts)


def sample_candidates_via_model(
    schema: DomainSchema, action: str, demos: Corpus, cfg: GeneratorConfig, client: CompletionClient | None = None
) -> CandidatePool:
    if client is None:
        if not cfg.model_endpoint:
            raise ModelError("model generator selected but no endpoint configured")
        client = CompletionClient(cfg.model_endpoint)
    jobs = [(d, k) for d in demos for k in range(cfg.samples_per_demo)]

    def run(job):
        demo, _ = job
        return client.complete(candidate_prompt(schema, action, demo), cfg.max_tokens, cfg.temperature)

    with ThreadPoolExecutor(max_workers=max(1, cfg.max_in_flight)) as pool:
        texts = list(pool.map(run, jobs))
    raws = []
    for t in texts:
        line = t.split("\n", 1)[0].strip()
        if line:
            raws.append(line)
    # order-independent merge: dedup is by AST, keep a canonical order
    raws = sorted(set(raws))
    return build_pool(action, raws, schema, source="model")


def save_pools(pools: dict, path: str | Path) -> None:
    rows = [row for a in sorted(pools) for row in pools[a].to_json()]
    Path(path).write_text(json.dumps(rows, indent=2) + "\n")


def load_pools(path: str | Path, schema: DomainSchema) -> dict:
    rows = json.loads(Path(path).read_text())
    by_action: dict[str, list] = {}
    for r in rows:
        by_action.setdefault(r["action"], []).append(r)
    pools = {}
    for action, items in by_action.items():
        fn = schema.function(action)
        pool = CandidatePool(action)
        for r in items:
            if r.get("expr_text") is None:
                pool.candidates.append(Candidate(None, r["source"], r["raw"], "unparseable"))
            else:
                pool.candidates.append(Candidate(ex.parse_expr(r["expr_text"], schema, fn), r["source"], r["raw"]))
        pools[action] = pool
    return pools
