"""Trajectories as programs: one function call per line.

Corpus file layout::

    #schema restaurants
    #manifest 3f2a...            (optional; other header comments are ignored)

    #trajectory t000 goal: put some spraybottle on garbagecan
    user.INFORM_INTENT('FindRestaurants')
    system.REQUEST('city')
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from pathlib import Path

from precond.schema import DomainSchema


class CorpusError(ValueError):
    """Malformed corpus file or a call that does not match the schema."""


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple = ()

    def render(self) -> str:
        return f"{self.fn}({', '.join(repr(a) for a in self.args)})"

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class Trajectory:
    id: str
    calls: tuple[Call, ...]
    goal: str | None = None

    def __len__(self) -> int:
        return len(self.calls)


@dataclass(frozen=True)
class Corpus:
    schema_name: str
    trajectories: tuple[Trajectory, ...] = ()
    header: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        ids = [t.id for t in self.trajectories]
        if len(set(ids)) != len(ids):
            raise CorpusError("trajectory ids must be unique")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)


_PREFIX_ID = re.compile(r"@\d+$")


def prefix(traj: Trajectory, t: int) -> Trajectory:
    """First ``t`` calls of ``traj``.  The full length returns ``traj`` itself;
    shorter prefixes get the id ``<base>@<t>``."""
    if not 0 <= t <= len(traj.calls):
        raise IndexError(f"prefix length {t} out of range for trajectory of length {len(traj.calls)}")
    if t == len(traj.calls):
        return traj
    base = _PREFIX_ID.sub("", traj.id)
    return Trajectory(f"{base}@{t}", traj.calls[:t], traj.goal)


def _dotted(node) -> str | None:
    parts = []
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if not isinstance(node, ast.Name):
        return None
    parts.append(node.id)
    return ".".join(reversed(parts))


def parse_call(text: str) -> Call:
    """Parse ``ns.fn('a', True)`` into a :class:`Call` (no schema checks)."""
    try:
        node = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise CorpusError(f"not a function call: {text.strip()!r} ({exc.msg})") from None
    if not isinstance(node, ast.Call) or node.keywords:
        raise CorpusError(f"not a function call: {text.strip()!r}")
    name = _dotted(node.func)
    if name is None:
        raise CorpusError(f"bad function name in {text.strip()!r}")
    args = []
    for a in node.args:
        if not isinstance(a, ast.Constant) or not isinstance(a.value, (str, bool)):
            raise CorpusError(f"arguments must be string or boolean literals: {text.strip()!r}")
        args.append(a.value)
    return Call(name, tuple(args))


def check_call(schema: DomainSchema, call: Call) -> None:
    if not schema.has_function(call.fn):
        raise CorpusError(f"unknown function {call.fn!r}")
    fn = schema.function(call.fn)
    variadic = bool(fn.params) and fn.params[-1].variadic
    n_fixed = len(fn.params) - (1 if variadic else 0)
    if (variadic and len(call.args) < n_fixed + 1) or (not variadic and len(call.args) != len(fn.params)):
        raise CorpusError(f"arity mismatch: {call.fn} takes {len(fn.params)} argument(s), got {len(call.args)}")
    for i, arg in enumerate(call.args):
        p = fn.params[min(i, len(fn.params) - 1)]
        if arg not in schema.vocab(p.vocab) or type(arg) is not type(schema.vocab(p.vocab)[0]):
            raise CorpusError(f"argument {arg!r} of {call.fn} is outside vocabulary {p.vocab!r}")


def parse_corpus_text(text: str, schema: DomainSchema) -> Corpus:
    lines = text.splitlines()
    schema_name = None
    header: list[str] = []
    trajs: list[Trajectory] = []
    current: tuple[str, str | None, int] | None = None
    calls: list[Call] = []

    def close(lineno: int):
        if current is None:
            return
        if not calls:
            raise CorpusError(f"line {current[2]}: trajectory {current[0]!r} is empty")
        trajs.append(Trajectory(current[0], tuple(calls), current[1]))

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#schema"):
            schema_name = line[len("#schema"):].strip()
            continue
        if line.startswith("#trajectory"):
            close(lineno)
            rest = line[len("#trajectory"):].strip()
            tid, _, goal = rest.partition(" goal: ")
            if not tid or " " in tid:
                raise CorpusError(f"line {lineno}: bad trajectory header {line!r}")
            current = (tid, goal if goal else None, lineno)
            calls = []
            continue
        if line.startswith("#"):
            if current is None:
                header.append(line)
            continue
        if current is None:
            raise CorpusError(f"line {lineno}: call outside a trajectory block")
        try:
            call = parse_call(line)
            check_call(schema, call)
        except CorpusError as exc:
            raise CorpusError(f"line {lineno}: {exc}") from None
        calls.append(call)
    close(len(lines))
    if schema_name is None:
        raise CorpusError("missing '#schema <name>' header")
    if schema_name != schema.name:
        raise CorpusError(f"corpus is for schema {schema_name!r}, not {schema.name!r}")
    try:
        return Corpus(schema_name, tuple(trajs), tuple(header))
    except CorpusError as exc:
        raise CorpusError(f"{exc}") from None


def parse_corpus(path: str | Path, schema: DomainSchema) -> Corpus:
    return parse_corpus_text(Path(path).read_text(), schema)


def serialize_trajectory(traj: Trajectory) -> str:
    head = f"#trajectory {traj.id}" + (f" goal: {traj.goal}" if traj.goal else "")
    return "\n".join([head] + [c.render() for c in traj.calls])


def serialize_corpus(corpus: Corpus, header: tuple[str, ...] | None = None) -> str:
    header = corpus.header if header is None else header
    parts = ["\n".join([f"#schema {corpus.schema_name}", *header])]
    parts += [serialize_trajectory(t) for t in corpus.trajectories]
    return "\n\n".join(parts) + "\n"


def write_corpus(corpus: Corpus, path: str | Path, header: tuple[str, ...] | None = None) -> None:
    Path(path).write_text(serialize_corpus(corpus, header))


def validate_trajectory(schema: DomainSchema, traj: Trajectory) -> None:
    for i, call in enumerate(traj.calls):
        try:
            check_call(schema, call)
        except CorpusError as exc:
            raise CorpusError(f"{traj.id} step {i}: {exc}") from None
