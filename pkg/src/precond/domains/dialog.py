"""Scripted demonstration generator for the dialog domains.

A scenario fixes what the user wants and which branches the conversation
takes.  The system side is a fixed expert: it requests unfilled slots in the
scenario's order, queries, offers, confirms and notifies.  Every system act
is checked against its ground-truth precondition as it is emitted, so a
scenario that would force a violating act fails loudly instead of producing
a bad demonstration.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from precond import expr as ex
from precond.execute import EvalError, apply_call, bind, eval_expr, initial_state
from precond.domains.affordance import add_sweeps
from precond.schema import DomainSchema
from precond.seeding import derive_seed
from precond.trajectory import Call, Corpus, Trajectory


class DialogGenerationError(ValueError):
    """A scenario asked the expert for an act whose precondition is false."""


@dataclass(frozen=True)
class DialogScript:
    """What the expert system knows about one dialog domain."""

    search_intent: str
    search_action: str
    search_slots: tuple[str, ...]
    transaction_intent: str
    transaction_action: str
    transaction_slots: tuple[str, ...]  # must be informed before confirming
    confirm_slots: tuple[str, ...]
    offer_slots: tuple[str, ...]
    name_slot: str | None = None  # requested when the user never selected an offer
    failure_notice: bool = False  # schema has NOTIFY_FAILURE


SCRIPTS = {
    "restaurants": DialogScript(
        search_intent="FindRestaurants",
        search_action="system.FindRestaurants",
        search_slots=("city", "cuisine"),
        transaction_intent="ReserveRestaurant",
        transaction_action="system.ReserveRestaurant",
        transaction_slots=("city", "time"),
        confirm_slots=("restaurant_name", "city", "time", "party_size", "date"),
        offer_slots=("restaurant_name", "city"),
        name_slot="restaurant_name",
        failure_notice=True,
    ),
    "buses": DialogScript(
        search_intent="FindBus",
        search_action="system.FindBus",
        search_slots=("from_location", "to_location", "leaving_date"),
        transaction_intent="BuyBusTicket",
        transaction_action="system.BuyBusTicket",
        transaction_slots=("from_location", "to_location", "leaving_date", "travelers"),
        confirm_slots=("from_location", "to_location", "leaving_date", "leaving_time", "travelers"),
        offer_slots=("leaving_time", "from_location"),
    ),
}


@dataclass(frozen=True)
class DialogScenario:
    intents: tuple[str, ...]
    slot_order: tuple[str, ...]
    prefilled: tuple[str, ...] = ()  # volunteered together with the first intent
    requests: tuple[str, ...] = ()  # attributes asked about after an offer
    late_requests: tuple[str, ...] = ()  # asked about after the transaction
    request_alts: bool = False
    inform_count: bool = False
    query_failure: bool = False
    retry_after_failure: bool = True
    offer_intent: bool = False
    negate_then_affirm: bool = False
    transaction_failure: bool = False
    closing: str = "GOODBYE"  # or "THANK_YOU"


_DIGRESSIONS = (
    "user.INFORM",
    "user.REQUEST",
    "user.SELECT",
    "user.AFFIRM",
    "user.NEGATE",
    "user.REQUEST_ALTS",
    "user.AFFIRM_INTENT",
    "user.NEGATE_INTENT",
    "user.INFORM_INTENT",
    "user.THANK_YOU",
)


def digression_call(schema: DomainSchema, rng: random.Random) -> Call:
    """An off-script user act with uniformly drawn arguments."""
    fn = schema.function(rng.choice(_DIGRESSIONS))
    return Call(fn.name, tuple(rng.choice(schema.vocab(p.vocab)) for p in fn.params))


@dataclass
class _Dialog:
    schema: DomainSchema
    noise: float = 0.0
    rng: random.Random | None = None
    calls: list[Call] = field(default_factory=list)
    state: object = None

    def __post_init__(self):
        self.state = initial_state(self.schema)

    def emit(self, fn: str, *args) -> None:
        if self.rng is not None and self.calls and fn.startswith("user.") and self.rng.random() < self.noise:
            self._put(digression_call(self.schema, self.rng))
        self._put(Call(fn, tuple(args)))

    def _put(self, call: Call) -> None:
        fn = call.fn
        decl = self.schema.function(fn)
        if decl.kind == "action" and decl.gt_precondition is not None:
            binding = bind(decl, call.args)
            for conj in ex.conjuncts(decl.gt_precondition):
                try:
                    ok = eval_expr(conj, self.state, binding)
                except EvalError:
                    ok = False
                if not ok:
                    raise DialogGenerationError(
                        f"{call.render()} at step {len(self.calls)} violates 'assert {ex.render(conj)}'"
                    )
        self.state = apply_call(self.schema, self.state, call)
        self.calls.append(call)

    def informed(self, slot: str) -> bool:
        return bool(self.state["informed_slot"].get(slot, False))


def _search(d: _Dialog, sc: DialogScenario, script: DialogScript) -> bool:
    for s in sc.slot_order:
        if s in script.search_slots and not d.informed(s):
            d.emit("system.REQUEST", s)
            d.emit("user.INFORM", s)
    d.emit(script.search_action)
    d.emit("system.set_query_status", not sc.query_failure)
    if sc.query_failure:
        if script.failure_notice:
            d.emit("system.NOTIFY_FAILURE")
            d.emit("system.REQ_MORE")
        if not sc.retry_after_failure:
            return False
        d.emit("user.INFORM", script.search_slots[-1])
        d.emit(script.search_action)
        d.emit("system.set_query_status", True)
    for s in script.offer_slots:
        d.emit("system.OFFER", s)
    if sc.inform_count:
        d.emit("system.INFORM_COUNT")
    if sc.request_alts:
        d.emit("user.REQUEST_ALTS")
        for s in script.offer_slots:
            d.emit("system.OFFER", s)
    for a in sc.requests:
        d.emit("user.REQUEST", a)
        d.emit("system.INFORM", a)
    return True


def _transaction(d: _Dialog, sc: DialogScenario, script: DialogScript, found: bool) -> None:
    if found:
        d.emit("user.SELECT")
        if sc.offer_intent:
            d.emit("system.OFFER_INTENT", script.transaction_intent)
            d.emit("user.AFFIRM_INTENT")
    needed = list(script.transaction_slots)
    if not found and script.name_slot:
        needed.insert(0, script.name_slot)
    ordered = [s for s in sc.slot_order if s in needed] + [s for s in needed if s not in sc.slot_order]
    for s in ordered:
        if not d.informed(s):
            d.emit("system.REQUEST", s)
            d.emit("user.INFORM", s)
    for s in script.confirm_slots:
        d.emit("system.CONFIRM", s)
    if sc.negate_then_affirm:
        fix = script.confirm_slots[-1]
        d.emit("user.INFORM", fix)
        d.emit("user.NEGATE")
        d.emit("system.CONFIRM", fix)
    d.emit("user.AFFIRM")
    d.emit(script.transaction_action)
    d.emit("system.set_query_status", not sc.transaction_failure)
    if sc.transaction_failure:
        if script.failure_notice:
            d.emit("system.NOTIFY_FAILURE")
    else:
        d.emit("system.NOTIFY_SUCCESS")
    for a in sc.late_requests:
        d.emit("user.REQUEST", a)
        d.emit("system.INFORM", a)


def run_scenario(
    schema: DomainSchema,
    sc: DialogScenario,
    traj_id: str = "dialog",
    sweep: float = 0.0,
    noise: float = 0.0,
    rng: random.Random | None = None,
) -> Trajectory:
    """Emit the expert conversation for ``sc``.

    Two optional perturbations, both drawn from ``rng``:

    * ``noise``: before a scripted user act, the user first makes one
      off-script act (a random request, inform, select, thanks, ...).
    * ``sweep``: before a call (and after the last), the expert demonstrates
      every action that is plausible at that point; see
      :mod:`precond.domains.affordance`.
    """
    if (sweep > 0 or noise > 0) and rng is None:
        raise ValueError("sweeps and noise need an rng")
    script = SCRIPTS.get(schema.name)
    if script is None:
        raise ValueError(f"no dialog script for domain {schema.name!r}")
    if not sc.intents:
        raise ValueError("scenario needs at least one intent")
    d = _Dialog(schema, noise, rng)
    found = False
    for k, intent in enumerate(sc.intents):
        d.emit("user.INFORM_INTENT", intent)
        if k == 0:
            for s in sc.prefilled:
                d.emit("user.INFORM", s)
        if intent == script.search_intent:
            found = _search(d, sc, script)
        elif intent == script.transaction_intent:
            _transaction(d, sc, script, found)
        else:
            raise ValueError(f"intent {intent!r} is not handled by the {schema.name} script")
    if sc.closing == "THANK_YOU":
        d.emit("user.THANK_YOU")
        d.emit("system.REQ_MORE")
    d.emit("user.GOODBYE")
    d.emit("system.GOODBYE")
    traj = Trajectory(traj_id, tuple(d.calls))
    return add_sweeps(schema, traj, sweep, rng) if sweep > 0 else traj


def sample_scenario(schema: DomainSchema, rng: random.Random) -> DialogScenario:
    """A random feasible scenario."""
    script = SCRIPTS[schema.name]
    slots = list(schema.vocab("slot"))
    attrs = list(schema.vocab("attribute"))
    order = slots[:]
    rng.shuffle(order)
    kind = rng.choice(["search", "search", "search_then_buy", "search_then_buy", "buy_only"])
    if kind == "buy_only":
        intents = (script.transaction_intent,)
    elif kind == "search":
        intents = (script.search_intent,)
    else:
        intents = (script.search_intent, script.transaction_intent)
    failure = kind != "buy_only" and rng.random() < 0.3
    retry = not failure or kind == "search_then_buy" or rng.random() < 0.5
    found = kind != "buy_only" and retry
    n_pre = rng.choice([0, 0, 1, 2])
    return DialogScenario(
        intents=intents,
        slot_order=tuple(order),
        prefilled=tuple(rng.sample(slots, n_pre)),
        requests=tuple(rng.sample(attrs, rng.choice([0, 1, 1, 2]))) if found else (),
        late_requests=tuple(rng.sample(attrs, rng.choice([0, 0, 1]))) if kind != "search" else (),
        request_alts=found and rng.random() < 0.4,
        inform_count=found and rng.random() < 0.5,
        query_failure=failure,
        retry_after_failure=retry,
        offer_intent=kind == "search_then_buy" and rng.random() < 0.5,
        negate_then_affirm=kind != "search" and rng.random() < 0.4,
        transaction_failure=kind != "search" and rng.random() < 0.25,
        closing=rng.choice(["GOODBYE", "THANK_YOU"]),
    )


def generate_dialog_demos(
    schema: DomainSchema,
    scenarios: list[DialogScenario],
    seed: int = 0,
    prefix: str = "d",
    sweep: float = 0.0,
    noise: float = 0.0,
) -> Corpus:
    """One expert trajectory per scenario.  ``seed`` drives the perturbations
    only; the scenarios fix everything else."""
    trajs = []
    for i, sc in enumerate(scenarios):
        tid = f"{prefix}{i:03d}"
        r = random.Random(derive_seed(seed, schema.name, "perturb", tid))
        trajs.append(run_scenario(schema, sc, tid, sweep, noise, r))
    return Corpus(schema.name, tuple(trajs))


def generate_dialog_corpus(
    schema: DomainSchema,
    n: int,
    seed: int,
    split: str = "demo",
    sweep: float = 0.0,
    noise: float = 0.0,
) -> Corpus:
    """``n`` sampled scenarios rendered by the expert."""
    rng = random.Random(derive_seed(seed, schema.name, split))
    scenarios = [sample_scenario(schema, rng) for _ in range(n)]
    return generate_dialog_demos(schema, scenarios, seed, split, sweep, noise)
