"""Affordance sweeps for demonstration generators.

A sweep at a state emits one grounding (drawn uniformly) of every action
whose ground-truth precondition holds there.  Actions carry no effects, so
a sweep never changes the state sequence of the trajectory it is inserted
into.  Sweeps give the miner positive evidence for each action across the
whole range of states a domain visits, which scripted experts otherwise
never provide.
"""

from __future__ import annotations

import random

from precond import expr as ex
from precond.execute import EvalError, bind, eval_expr, replay_all
from precond.schema import DomainSchema, action_groundings
from precond.trajectory import Call, Trajectory


def holds_gt(schema: DomainSchema, state, call: Call) -> bool:
    fn = schema.function(call.fn)
    gt = fn.gt_precondition if fn.gt_precondition is not None else ex.TRUE
    try:
        return eval_expr(gt, state, bind(fn, call.args))
    except EvalError:
        return False


def valid_actions(schema: DomainSchema, state) -> list[Call]:
    """Every grounded action call whose ground-truth precondition holds."""
    out = []
    for fn in schema.actions:
        for b in action_groundings(schema, fn):
            call = Call(fn.name, tuple(b))
            if holds_gt(schema, state, call):
                out.append(call)
    return out


def sweep_calls(schema: DomainSchema, state, rng: random.Random) -> list[Call]:
    by_fn: dict[str, list[Call]] = {}
    for c in valid_actions(schema, state):
        by_fn.setdefault(c.fn, []).append(c)
    return [rng.choice(by_fn[fn]) for fn in sorted(by_fn)]


def add_sweeps(schema: DomainSchema, traj: Trajectory, rate: float, rng: random.Random) -> Trajectory:
    """Insert a sweep before each call and after the last one, each with
    probability ``rate``."""
    if rate <= 0:
        return traj
    states = replay_all(schema, traj)
    calls: list[Call] = []
    for k, st in enumerate(states):
        if rng.random() < rate:
            calls += sweep_calls(schema, st, rng)
        if k < len(traj.calls):
            calls.append(traj.calls[k])
    return Trajectory(traj.id, tuple(calls), traj.goal)
