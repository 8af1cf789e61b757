"""Next-action policies and precondition-verified sampling.

A base policy maps a context (demonstrations plus the trajectory so far) to
a distribution over grounded action calls, optionally including the
end-of-turn marker ``None``.  :func:`sample_with_verification` wraps any base
policy: it tries the greedy prediction first, then random draws, and returns
the first call whose precondition holds on the replayed prefix.
"""

from __future__ import annotations

import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Protocol

from precond import expr as ex
from precond.client import CompletionClient, ModelError
from precond.execute import EvalError, bind, eval_expr, replay
from precond.schema import DomainSchema, action_groundings
from precond.synth import render_function, render_program
from precond.trajectory import Call, Corpus, CorpusError, Trajectory, check_call, parse_call

log = logging.getLogger(__name__)

EOT = None  # end-of-turn marker
EOT_TOKEN = "<eot>"


class PolicyError(RuntimeError):
    """The base policy could not produce a call (e.g. unparseable output)."""


@dataclass
class PolicyContext:
    schema: DomainSchema
    demos: Corpus
    prefix: Trajectory
    preconditions: dict | None = None  # action -> expression; None means no checking
    include_preconditions_in_prompt: bool = False

    def __post_init__(self):
        if self.demos.schema_name != self.schema.name:
            raise ValueError("demonstrations and schema disagree")


@dataclass(frozen=True)
class SampleResult:
    call: Call | None
    verified: bool
    attempts: int
    fallback_used: bool


class BasePolicy(Protocol):
    def predict(self, ctx: PolicyContext, mode: str, rng: random.Random) -> Call | None: ...


def token(call: Call | None) -> str:
    return EOT_TOKEN if call is None else call.render()


def _is_target(schema: DomainSchema, call: Call) -> bool:
    return schema.function(call.fn).kind == "action"


class FrequencyPolicy:
    """Smoothed n-gram model over call tokens.

    For every action call in the demonstrations (and, with ``turn_taking``,
    every end of a system turn) the previous ``k`` call tokens are counted
    as its history.  At prediction time the longest history with any counts
    is used (backing off to shorter ones), and each candidate gets
    ``count + 1``.  Greedy picks the highest score, ties broken by the
    rendered call text.
    """

    def __init__(self, schema: DomainSchema, demos: Corpus, k: int = 2, turn_taking: bool = False, agent_prefix: str = "system."):
        if not len(demos):
            raise ValueError("frequency policy needs at least one demonstration")
        self.schema = schema
        self.k = k
        self.turn_taking = turn_taking
        self.agent_prefix = agent_prefix
        self.counts: list[dict[tuple, Counter]] = [defaultdict(Counter) for _ in range(k + 1)]
        for traj in demos:
            toks = [c.render() for c in traj.calls]
            for i, call in enumerate(traj.calls):
                if _is_target(schema, call):
                    self._count(toks, i, call.render())
                if turn_taking and self._ends_turn(traj.calls, i):
                    self._count(toks, i + 1, EOT_TOKEN)
        cands = [Call(fn.name, tuple(b)) for fn in schema.actions for b in action_groundings(schema, fn)]
        self.candidates: list[Call | None] = sorted(cands, key=token)
        if turn_taking:
            self.candidates.append(EOT)

    def _ends_turn(self, calls, i: int) -> bool:
        if not calls[i].fn.startswith(self.agent_prefix):
            return False
        return i + 1 == len(calls) or not calls[i + 1].fn.startswith(self.agent_prefix)

    def _count(self, toks: list[str], i: int, target: str) -> None:
        for n in range(self.k + 1):
            if i - n < 0:
                break
            self.counts[n][tuple(toks[i - n : i])][target] += 1

    def scores(self, prefix: Trajectory) -> list[float]:
        toks = [c.render() for c in prefix.calls]
        table = Counter()
        for n in range(min(self.k, len(toks)), -1, -1):
            hist = tuple(toks[len(toks) - n :]) if n else ()
            if hist in self.counts[n]:
                table = self.counts[n][hist]
                break
        return [table.get(token(c), 0) + 1.0 for c in self.candidates]

    def distribution(self, prefix: Trajectory) -> list[tuple[Call | None, float]]:
        s = self.scores(prefix)
        z = sum(s)
        return [(c, v / z) for c, v in zip(self.candidates, s)]

    def predict(self, ctx: PolicyContext, mode: str = "greedy", rng: random.Random | None = None) -> Call | None:
        s = self.scores(ctx.prefix)
        if mode == "greedy":
            best = max(s)
            return next(c for c, v in zip(self.candidates, s) if v == best)
        if rng is None:
            raise ValueError("random mode needs an rng")
        return rng.choices(self.candidates, weights=s, k=1)[0]


class UniformPolicy:
    """Uniform over every grounded action call (a floor baseline)."""

    def __init__(self, schema: DomainSchema):
        self.candidates = sorted(
            (Call(fn.name, tuple(b)) for fn in schema.actions for b in action_groundings(schema, fn)), key=token
        )

    def predict(self, ctx: PolicyContext, mode: str = "greedy", rng: random.Random | None = None) -> Call | None:
        if rng is None:
            raise ValueError("uniform policy needs an rng")
        return rng.choice(self.candidates)


class FixedPolicy:
    """Greedy pick and random distribution given up front (for tests and
    rigged comparisons)."""

    def __init__(self, greedy: Call | None, weights: dict):
        self.greedy = greedy
        self.items = sorted(weights.items(), key=lambda kv: token(kv[0]))

    def predict(self, ctx: PolicyContext, mode: str = "greedy", rng: random.Random | None = None) -> Call | None:
        if mode == "greedy":
            return self.greedy
        calls, w = zip(*self.items)
        return rng.choices(calls, weights=w, k=1)[0]


@dataclass
class ModelPolicyConfig:
    temperature: float = 0.8
    max_tokens: int = 48
    max_demos: int = 3


class ModelPolicy:
    """Next call completed by an external text model.

    The prompt holds the function definitions (with ``assert`` lines when
    preconditions are included), a few demonstrations as programs, and the
    current prefix; the model completes one line.
    """

    def __init__(self, client: CompletionClient, cfg: ModelPolicyConfig | None = None, agent_prefix: str = "system."):
        self.client = client
        self.cfg = cfg or ModelPolicyConfig()
        self.agent_prefix = agent_prefix

    def prompt(self, ctx: PolicyContext) -> str:
        schema = ctx.schema
        defs = [render_function(schema, f) for f in schema.observations]
        for f in schema.actions:
            pre = None
            if ctx.include_preconditions_in_prompt and ctx.preconditions:
                pre = ctx.preconditions.get(f.name)
            defs.append(render_function(schema, f, pre))
        demos = [render_program(t) for t in list(ctx.demos)[: self.cfg.max_demos]]
        current = render_program(Trajectory(ctx.prefix.id, ctx.prefix.calls, ctx.prefix.goal))
        return "\n\n".join(["# Functions", *defs, "# Demonstrations", *demos, "# Current", current]) + "\n"

    def parse(self, schema: DomainSchema, text: str) -> Call | None:
        line = text.strip().split("\n", 1)[0].strip()
        if not line or (self.agent_prefix and not line.startswith(self.agent_prefix) and line.startswith("user.")):
            return EOT
        try:
            call = parse_call(line)
            check_call(schema, call)
        except CorpusError as exc:
            raise PolicyError(f"unusable completion {line!r}: {exc}") from None
        if schema.function(call.fn).kind != "action":
            raise PolicyError(f"completion {line!r} is not an action call")
        return call

    def predict(self, ctx: PolicyContext, mode: str = "greedy", rng: random.Random | None = None) -> Call | None:
        temperature = 0.0 if mode == "greedy" else self.cfg.temperature
        try:
            text = self.client.complete(self.prompt(ctx), self.cfg.max_tokens, temperature)
        except ModelError as exc:
            raise PolicyError(str(exc)) from exc
        return self.parse(ctx.schema, text)


# ---------------------------------------------------------------- verification


def verify(schema: DomainSchema, state, call: Call | None, preconditions: dict | None) -> bool:
    """Does ``call``'s precondition hold in ``state``?  The end-of-turn
    marker and actions without a precondition always verify; a run-time
    fault does not."""
    if call is None or not preconditions:
        return True
    pre = preconditions.get(call.fn, ex.TRUE)
    try:
        return bool(eval_expr(pre, state, bind(schema.function(call.fn), call.args)))
    except EvalError:
        return False


def sample_with_verification(
    ctx: PolicyContext, base: BasePolicy, max_attempts: int = 8, rng: random.Random | None = None, max_draws: int | None = None
) -> SampleResult:
    """Greedy first; then random draws until one verifies or
    ``max_attempts`` calls have been checked.  Duplicate draws are skipped
    without using an attempt (at most ``max_draws`` draws in total).  If
    nothing verifies, the greedy call is returned unverified."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    state = replay(ctx.schema, ctx.prefix)
    greedy = base.predict(ctx, "greedy", rng)
    if verify(ctx.schema, state, greedy, ctx.preconditions):
        return SampleResult(greedy, True, 1, False)
    tried = {token(greedy)}
    attempts, draws = 1, 0
    max_draws = max_draws if max_draws is not None else 10 * max_attempts
    while attempts < max_attempts and draws < max_draws:
        if rng is None:
            raise ValueError("random attempts need an rng")
        draws += 1
        cand = base.predict(ctx, "random", rng)
        if token(cand) in tried:
            continue
        tried.add(token(cand))
        attempts += 1
        if verify(ctx.schema, state, cand, ctx.preconditions):
            return SampleResult(cand, True, attempts, False)
    return SampleResult(greedy, False, attempts, True)


# ---------------------------------------------------------------- agents


@dataclass
class Agent:
    """A base policy plus (optional) verification, bound to demonstrations.
    Every decision is appended to ``log``."""

    schema: DomainSchema
    demos: Corpus
    base: BasePolicy
    preconditions: dict | None = None
    max_attempts: int = 8
    verify: bool = True
    include_preconditions_in_prompt: bool = False
    rng: random.Random = field(default_factory=lambda: random.Random(0))
    log: list[SampleResult] = field(default_factory=list)

    def act(self, prefix: Trajectory) -> SampleResult:
        ctx = PolicyContext(self.schema, self.demos, prefix, self.preconditions, self.include_preconditions_in_prompt)
        if self.verify and self.preconditions is not None:
            res = sample_with_verification(ctx, self.base, self.max_attempts, self.rng)
        else:
            call = self.base.predict(ctx, "greedy", self.rng)
            res = SampleResult(call, False, 1, False)
        self.log.append(res)
        return res

    def __call__(self, prefix: Trajectory) -> Call | None:
        return self.act(prefix).call


class ReferenceAgent:
    """Replays the reference continuation (the oracle for dialog turns)."""

    def __init__(self, reference: Trajectory, agent_prefix: str = "system."):
        self.reference = reference
        self.agent_prefix = agent_prefix
        self.log: list[SampleResult] = []

    def act(self, prefix: Trajectory) -> SampleResult:
        calls = self.reference.calls
        i = len(prefix.calls)
        call = None
        if prefix.calls == calls[:i] and i < len(calls) and calls[i].fn.startswith(self.agent_prefix):
            call = calls[i]
        res = SampleResult(call, False, 1, False)
        self.log.append(res)
        return res

    def __call__(self, prefix: Trajectory) -> Call | None:
        return self.act(prefix).call
