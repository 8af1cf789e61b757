"""Validation and subsumption ranking of candidate preconditions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from precond import expr as ex
from precond.client import CompletionClient
from precond.execute import InstanceGrid
from precond.schema import DomainSchema
from precond.synth import CandidatePool, GeneratorConfig, enumerate_candidates, sample_candidates_via_model
from precond.trajectory import Corpus

log = logging.getLogger(__name__)


@dataclass
class SatisfactionSet:
    """Instances of a grid at which an expression holds."""

    action: str
    expr: object
    grid: InstanceGrid = field(repr=False)
    mask: np.ndarray = field(repr=False)

    @property
    def instances(self) -> frozenset:
        return self.grid.instances(self.mask)

    def __len__(self) -> int:
        return int(self.mask.sum())

    def bits(self) -> int:
        return mask_bits(self.mask)


def mask_bits(mask: np.ndarray) -> int:
    return int.from_bytes(np.packbits(mask).tobytes(), "big") if len(mask) else 0


@dataclass
class RankedResult:
    action: str
    valid: list
    clusters: list[list]
    opt: list
    conjunction: object
    initial_count: int = 0
    unparseable: int = 0
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "initial_count": self.initial_count,
            "unparseable": self.unparseable,
            "valid": [ex.render(e) for e in self.valid],
            "clusters": [[ex.render(e) for e in c] for c in self.clusters],
            "opt": [ex.render(e) for e in self.opt],
            "conjunction": ex.render(self.conjunction),
            "flags": list(self.flags),
        }


def validate(schema: DomainSchema, pool: CandidatePool, demos: Corpus, sites: InstanceGrid | None = None) -> list:
    """Typed candidates that pass at every call of the action in every demo.

    Equivalent to ``execute_with_precondition(...).ok`` on each demo: the
    assertion is only ever evaluated where the action is called.
    """
    sites = sites or InstanceGrid.call_sites(schema, pool.action, demos, distinct=True)
    out = []
    for e in pool.typed:
        if len(sites) == 0 or bool(sites.holds(e).all()):
            out.append(e)
    return out


def satisfaction_set(schema: DomainSchema, expr, action: str, corpus, grid: InstanceGrid | None = None) -> SatisfactionSet:
    """Grounded instances (trajectory, step, binding) where ``expr`` holds,
    over steps ``0..len`` of every trajectory.  A run-time fault counts as
    not satisfied, since the assertion would not pass there."""
    grid = grid or InstanceGrid.full(schema, action, corpus)
    ex.typecheck(expr, schema, schema.function(action))
    return SatisfactionSet(action, expr, grid, grid.holds(expr))


def representative(cluster: list):
    return min(cluster, key=lambda e: (ex.size(e), ex.render(e)))


def minimal_keys(bitsets: list[int]) -> list[int]:
    """Indices of bitsets with no other bitset strictly contained in them."""
    order = sorted(range(len(bitsets)), key=lambda i: (bin(bitsets[i]).count("1"), i))
    minimal: list[int] = []
    for i in order:
        b = bitsets[i]
        if not any((bitsets[m] & ~b) == 0 and bitsets[m] != b for m in minimal):
            minimal.append(i)
    return sorted(minimal)


def rank(schema: DomainSchema, action: str, valid: list, demos, grid: InstanceGrid | None = None) -> RankedResult:
    """Cluster ``valid`` by identical satisfaction sets and keep a
    representative of every cluster whose set has no strict subset among
    the other clusters.  Sets are compared on the distinct-state grid,
    which preserves every equality and subset relation of the full one."""
    grid = grid or InstanceGrid.full(schema, action, demos, distinct=True)
    keys: dict[bytes, int] = {}
    clusters: list[list] = []
    bitsets: list[int] = []
    for e in valid:
        mask = grid.holds(e)
        k = np.packbits(mask).tobytes()
        if k not in keys:
            keys[k] = len(clusters)
            clusters.append([])
            bitsets.append(int.from_bytes(k, "big"))
        clusters[keys[k]].append(e)
    winners = minimal_keys(bitsets)
    opt = [representative(clusters[i]) for i in winners]
    return RankedResult(action, list(valid), clusters, opt, ex.conjoin(opt))


def brute_force_opt(sets: dict) -> set:
    """Reference ranking: members of ``sets`` (expr -> frozenset)
    that have no strict subset among the others.  Quadratic."""
    return {h for h, c in sets.items() if not any(c2 < c for c2 in sets.values())}


def mine_action(
    schema: DomainSchema,
    action: str,
    demos: Corpus,
    cfg: GeneratorConfig,
    pool: CandidatePool | None = None,
    generator: str = "enumerate",
    client: CompletionClient | None = None,
) -> RankedResult:
    if pool is None:
        if generator == "model":
            pool = sample_candidates_via_model(schema, action, demos, cfg, client)
        else:
            pool = enumerate_candidates(schema, action, cfg)
    sites = InstanceGrid.call_sites(schema, action, demos, distinct=True)
    valid = validate(schema, pool, demos, sites)
    result = rank(schema, action, valid, demos)
    result.initial_count = len(pool)
    result.unparseable = len(pool.unparseable)
    if not pool.typed:
        result.flags.append("no candidates")
    if len(sites) == 0:
        result.flags.append("action never observed")
    return result


def mine_all(
    schema: DomainSchema,
    demos: Corpus,
    cfg: GeneratorConfig | None = None,
    generator: str = "enumerate",
    pools: dict | None = None,
    client: CompletionClient | None = None,
    actions=None,
) -> dict[str, RankedResult]:
    """generate -> validate -> rank, independently for every action."""
    if not len(demos):
        raise ValueError("mining needs at least one demonstration")
    cfg = cfg or GeneratorConfig()
    out: dict[str, RankedResult] = {}
    for fn in schema.actions:
        if actions is not None and fn.name not in actions:
            continue
        pool = pools.get(fn.name) if pools is not None else None
        if pools is not None and pool is None:
            pool = CandidatePool(fn.name)
        try:
            out[fn.name] = mine_action(schema, fn.name, demos, cfg, pool, generator, client)
        except Exception as exc:  # one action's generator failure must not abort the rest
            log.error("mining %s failed: %s", fn.name, exc)
            out[fn.name] = RankedResult(fn.name, [], [], [], ex.TRUE, flags=[f"error: {exc}"])
    return out


# ---------------------------------------------------------------- reports


def report_json(results: dict[str, RankedResult]) -> dict:
    return {a: results[a].to_json() for a in results}


def _listing(items: list[str], limit: int) -> list[str]:
    shown = [f"    {t}" for t in items[:limit]]
    if len(items) > limit:
        shown.append(f"    ... ({len(items) - limit} more)")
    return shown


def report_text(results: dict[str, RankedResult], limit: int = 40) -> str:
    lines = []
    for action, r in results.items():
        lines.append(f"== {action}")
        if r.flags:
            lines.append(f"  flags: {', '.join(r.flags)}")
        lines.append(f"  candidates: {r.initial_count} ({r.unparseable} unparseable)")
        lines.append(f"  valid candidates: {len(r.valid)}")
        lines += _listing([ex.render(e) for e in r.valid], limit)
        lines.append(f"  equivalence clusters: {len(r.clusters)}")
        shown = 0
        for i, c in enumerate(r.clusters):
            if shown >= limit:
                lines.append(f"    ... ({len(r.clusters) - i} more clusters)")
                break
            lines.append(f"    # cluster {i}")
            lines += _listing([ex.render(e) for e in c], 8)
            shown += 1
        lines.append("  selected:")
        lines += _listing([ex.render(e) for e in r.opt], limit)
        lines.append(f"  precondition: {ex.render(r.conjunction)}")
        lines.append("")
    return "\n".join(lines)


def conjunctions(results: dict[str, RankedResult]) -> dict:
    return {a: r.conjunction for a, r in results.items()}


def load_report_conjunctions(data: dict, schema: DomainSchema) -> dict:
    """Read ``{action: {conjunction: text}}`` back into expressions."""
    out = {}
    for action, row in data.items():
        if action.startswith("_"):
            continue
        out[action] = ex.parse_expr(row["conjunction"], schema, schema.function(action))
    return out
