"""State-machine replay of trajectory programs and assertion evaluation.

:func:`eval_expr` is the reference semantics.  :class:`InstanceGrid`
evaluates an expression over many (state, binding) instances at once; it
calls the scalar evaluator on every maximal connective-free subterm and
combines the results with numpy, caching per subterm.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from precond import expr as ex
from precond.schema import DomainSchema, FunctionDecl, action_groundings
from precond.trajectory import Call, Corpus, Trajectory


class EvalError(RuntimeError):
    """Run-time failure while evaluating an assertion or applying an effect."""


# ---------------------------------------------------------------- state


class State:
    """Snapshot of every declared state variable.

    Maps are plain dicts with default-false reads; sets are frozensets.
    Instances are treated as immutable: :func:`apply_call` returns a copy.
    """

    __slots__ = ("_values", "_key")

    def __init__(self, values: dict):
        self._values = values
        self._key = None

    def key(self) -> tuple:
        """Hashable identity of the snapshot."""
        if self._key is None:
            self._key = tuple(
                (k, frozenset(v.items()) if isinstance(v, dict) else v) for k, v in sorted(self._values.items())
            )
        return self._key

    def __getitem__(self, name: str):
        return self._values[name]

    def __eq__(self, other) -> bool:
        return isinstance(other, State) and self._values == other._values

    def __repr__(self) -> str:
        return f"State({self._values!r})"

    @property
    def values(self) -> Mapping:
        return MappingProxyType(self._values)

    def replace(self, name: str, value) -> "State":
        values = dict(self._values)
        values[name] = value
        return State(values)


_DEFAULTS = {
    "BoolFlag": lambda: False,
    "BoolMap": dict,
    "PropMap": dict,
    "TriState": lambda: None,
    "StringSet": frozenset,
    "OptString": lambda: None,
}


def initial_state(schema: DomainSchema) -> State:
    return State({v.name: _DEFAULTS[v.kind]() for v in schema.state_vars})


def bind(fn: FunctionDecl, args: Sequence) -> dict:
    """Map call arguments onto parameter names (variadic tail -> tuple)."""
    out = {}
    for i, p in enumerate(fn.params):
        if p.variadic:
            out[p.name] = tuple(args[i:])
        elif i < len(args):
            out[p.name] = args[i]
    return out


def _term_value(term, binding: Mapping):
    if isinstance(term, ex.Param):
        try:
            return binding[term.name]
        except KeyError:
            raise EvalError(f"missing parameter {term.name!r}") from None
    if isinstance(term, (ex.Lit, ex.Const)):
        return term.value
    raise EvalError(f"bad effect term {term!r}")


def apply_call(schema: DomainSchema, state: State, call: Call) -> State:
    """Apply the effect rules of an observation call; action calls are no-ops."""
    fn = schema.function(call.fn)
    if fn.kind == "action" or not fn.effects:
        return state
    binding = bind(fn, call.args)
    values = dict(state.values)
    for eff in fn.effects:
        kind = schema.var(eff.target).kind
        cur = values[eff.target]
        if eff.op == "clear":
            values[eff.target] = _DEFAULTS[kind]()
            continue
        if eff.op == "insert":
            new = set(cur)
            for a in eff.args:
                v = _term_value(ex.Param(a), binding)
                new.update(v if isinstance(v, tuple) else (v,))
            values[eff.target] = frozenset(new)
            continue
        if eff.op == "set_true":
            val = True
        elif eff.op == "set_false":
            val = False
        else:
            val = _term_value(eff.value, binding)
        if kind in ("BoolMap", "PropMap"):
            key = tuple(_term_value(k, binding) for k in eff.key)
            new_map = dict(cur)
            new_map[key[0] if kind == "BoolMap" else key] = bool(val)
            values[eff.target] = new_map
        else:
            values[eff.target] = val
    return State(values)


def replay(schema: DomainSchema, traj: Trajectory, upto: int | None = None) -> State:
    """State after the first ``upto`` calls of ``traj``."""
    upto = len(traj.calls) if upto is None else upto
    if not 0 <= upto <= len(traj.calls):
        raise IndexError(f"upto={upto} out of range for trajectory of length {len(traj.calls)}")
    state = initial_state(schema)
    for call in traj.calls[:upto]:
        state = apply_call(schema, state, call)
    return state


def replay_all(schema: DomainSchema, traj: Trajectory) -> list[State]:
    """States before each call plus the final state (``len + 1`` entries)."""
    states = [initial_state(schema)]
    for call in traj.calls:
        states.append(apply_call(schema, states[-1], call))
    return states


# ---------------------------------------------------------------- evaluation


def _lookup(state: State, node: ex.Lookup, binding):
    keys = tuple(eval_term(k, state, binding) for k in node.keys)
    table = state[node.var]
    return bool(table.get(keys[0] if len(keys) == 1 else keys, False))


def eval_term(node, state: State, binding: Mapping):
    if isinstance(node, ex.Const):
        return node.value
    if isinstance(node, ex.Lit):
        return node.value
    if isinstance(node, ex.Param):
        try:
            return binding[node.name]
        except KeyError:
            raise EvalError(f"unbound parameter {node.name!r}") from None
    if isinstance(node, ex.Var):
        return state[node.name]
    if isinstance(node, ex.Lookup):
        return _lookup(state, node, binding)
    if isinstance(node, ex.TupleLit):
        return tuple(eval_term(i, state, binding) for i in node.items)
    return eval_expr(node, state, binding)


def eval_expr(expr, state: State, binding: Mapping) -> bool:
    """Truth value of ``expr``; raises :class:`EvalError` on run-time faults
    (such as a membership test against an unset optional string)."""
    if isinstance(expr, ex.Not):
        return not eval_expr(expr.operand, state, binding)
    if isinstance(expr, ex.And):
        return eval_expr(expr.left, state, binding) and eval_expr(expr.right, state, binding)
    if isinstance(expr, ex.Or):
        return eval_expr(expr.left, state, binding) or eval_expr(expr.right, state, binding)
    if isinstance(expr, ex.Cmp):
        a = eval_term(expr.left, state, binding)
        b = eval_term(expr.right, state, binding)
        if isinstance(a, (frozenset, dict)) or isinstance(b, (frozenset, dict)):
            raise EvalError(f"cannot compare container values in {ex.render(expr)}")
        return (a == b) if expr.op in ("==", "is") else (a != b)
    if isinstance(expr, ex.In):
        item = eval_term(expr.item, state, binding)
        container = eval_term(expr.container, state, binding)
        if container is None:
            raise EvalError(f"membership test against none in {ex.render(expr)}")
        if isinstance(container, str) and not isinstance(item, str):
            raise EvalError(f"substring test needs a string in {ex.render(expr)}")
        return item in container
    if isinstance(expr, ex.IsStr):
        return isinstance(eval_term(expr.operand, state, binding), str)
    value = eval_term(expr, state, binding)
    if isinstance(value, (frozenset, dict)):
        raise EvalError(f"container has no truth value: {ex.render(expr)}")
    return bool(value)


# ---------------------------------------------------------------- execution


@dataclass(frozen=True)
class ExecOutcome:
    status: str  # "ok" | "assertion_failed" | "runtime_error"
    step: int | None = None
    expr: object = None
    message: str = ""
    final_state: State | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def execute_with_precondition(schema: DomainSchema, traj: Trajectory, action: str, expr) -> ExecOutcome:
    """Replay ``traj`` with ``expr`` installed as the body of ``action``."""
    fn = schema.function(action)
    if fn.kind != "action":
        raise ValueError(f"{action} is not an action function")
    state = initial_state(schema)
    for step, call in enumerate(traj.calls):
        try:
            if call.fn == action:
                if not eval_expr(expr, state, bind(fn, call.args)):
                    return ExecOutcome("assertion_failed", step, expr)
            state = apply_call(schema, state, call)
        except (EvalError, TypeError, KeyError) as exc:
            return ExecOutcome("runtime_error", step, expr, str(exc))
    return ExecOutcome("ok", final_state=state)


# ---------------------------------------------------------------- grids


class InstanceGrid:
    """A set of grounded instances ``(trajectory id, step, binding)`` for one
    action, with vectorized expression evaluation.

    ``rows``/``cols`` index into ``states`` and ``bindings``.  Results are
    boolean arrays aligned with the instance order.
    """

    def __init__(self, schema: DomainSchema, action: str, states, keys, bindings, rows, cols):
        self.schema = schema
        self.fn = schema.function(action)
        self.action = action
        self.states = list(states)
        self.keys = list(keys)  # (trajectory id, step) per state
        self.bindings = list(bindings)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self._pnames = self.fn.param_names
        self._cache: dict = {}
        self._proj: dict = {}

    @classmethod
    def full(
        cls, schema: DomainSchema, action: str, corpus: Corpus | Sequence[Trajectory], distinct: bool = False
    ) -> "InstanceGrid":
        """Every step ``0..len`` of every trajectory times every grounding.

        With ``distinct`` only the first occurrence of each state is kept.
        Equal states give equal rows for every expression, so subset and
        equality relations between satisfaction sets are unchanged.
        """
        fn = schema.function(action)
        bindings = action_groundings(schema, fn)
        states, keys, seen = [], [], set()
        for traj in corpus:
            for j, st in enumerate(replay_all(schema, traj)):
                if distinct:
                    if st.key() in seen:
                        continue
                    seen.add(st.key())
                states.append(st)
                keys.append((traj.id, j))
        n_s, n_b = len(states), len(bindings)
        rows = np.repeat(np.arange(n_s), n_b)
        cols = np.tile(np.arange(n_b), n_s)
        return cls(schema, action, states, keys, bindings, rows, cols)

    @classmethod
    def call_sites(
        cls, schema: DomainSchema, action: str, corpus: Corpus | Sequence[Trajectory], distinct: bool = False
    ) -> "InstanceGrid":
        """The instances at which ``action`` is actually called (with
        ``distinct``, each (state, binding) pair once)."""
        fn = schema.function(action)
        bindings = action_groundings(schema, fn)
        index = {b: i for i, b in enumerate(bindings)}
        states, keys, cols, seen = [], [], [], set()
        for traj in corpus:
            sts = None
            for j, call in enumerate(traj.calls):
                if call.fn != action:
                    continue
                if sts is None:
                    sts = replay_all(schema, traj)
                col = index[tuple(call.args)]
                if distinct:
                    if (sts[j].key(), col) in seen:
                        continue
                    seen.add((sts[j].key(), col))
                states.append(sts[j])
                keys.append((traj.id, j))
                cols.append(col)
        return cls(schema, action, states, keys, bindings, np.arange(len(states)), cols)

    def __len__(self) -> int:
        return len(self.rows)

    def instance(self, k: int) -> tuple:
        tid, step = self.keys[self.rows[k]]
        return (tid, step, self.bindings[self.cols[k]])

    def instances(self, mask=None) -> frozenset:
        idx = range(len(self.rows)) if mask is None else np.flatnonzero(mask)
        return frozenset(self.instance(int(k)) for k in idx)

    def _projection(self, params: frozenset):
        key = tuple(sorted(params))
        if key not in self._proj:
            pos = [self._pnames.index(p) for p in key]
            sub = [tuple(b[i] for i in pos) for b in self.bindings]
            uniq = sorted(set(sub), key=sub.index)
            where = {s: i for i, s in enumerate(uniq)}
            self._proj[key] = (key, uniq, np.array([where[s] for s in sub], dtype=np.int64))
        return self._proj[key]

    def _atom(self, node):
        names, uniq, col_to_sub = self._projection(ex.params_of(node))
        sub = col_to_sub[self.cols] if len(self.cols) else self.cols
        code = self.rows * len(uniq) + sub
        codes, inverse = np.unique(code, return_inverse=True)
        val = np.zeros(len(codes), dtype=bool)
        err = np.zeros(len(codes), dtype=bool)
        for k, c in enumerate(codes):
            r, s = divmod(int(c), len(uniq))
            binding = dict(zip(names, uniq[s]))
            try:
                val[k] = eval_expr(node, self.states[r], binding)
            except EvalError:
                err[k] = True
        return val[inverse], err[inverse]

    def evaluate(self, node):
        """``(value, error)`` boolean arrays; an error cell means evaluation
        raised there (Python short-circuit rules decide propagation)."""
        hit = self._cache.get(node)
        if hit is not None:
            return hit
        if isinstance(node, ex.Not):
            v, e = self.evaluate(node.operand)
            out = (~v & ~e, e)
        elif isinstance(node, ex.And):
            lv, le = self.evaluate(node.left)
            rv, re_ = self.evaluate(node.right)
            go_right = lv & ~le
            out = (go_right & rv & ~re_, le | (go_right & re_))
        elif isinstance(node, ex.Or):
            lv, le = self.evaluate(node.left)
            rv, re_ = self.evaluate(node.right)
            go_right = ~lv & ~le
            out = ((lv & ~le) | (go_right & rv & ~re_), le | (go_right & re_))
        else:
            out = self._atom(node)
        # binary nodes are cheap to rebuild and numerous; cache the leaves only
        if not isinstance(node, (ex.And, ex.Or)):
            self._cache[node] = out
        return out

    def holds(self, node) -> np.ndarray:
        """Instances where the assertion passes (true and no run-time error)."""
        v, e = self.evaluate(node)
        return v & ~e

    def clear_cache(self) -> None:
        self._cache.clear()
