"""A minimal household text world: hidden world state, six task kinds, a
simulator that speaks the household schema, and a scripted expert.

The simulator only knows what the world looks like; whether a proposed
action is *plausible* is decided by the schema's ground-truth precondition
on the observable state (the replayed trajectory).  Implausible proposals
are recorded as failed no-ops.  Plausible ones may still do nothing in the
world (taking an object that is not there, say); they are kept in the
trajectory without follow-up observations.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from precond.domains.affordance import add_sweeps, holds_gt
from precond.execute import apply_call, initial_state
from precond.schema import DomainSchema
from precond.seeding import derive_seed
from precond.trajectory import Call, Corpus, Trajectory

TASK_KINDS = (
    "pick_and_place",
    "clean_and_place",
    "heat_and_place",
    "cool_and_place",
    "examine_with_light",
    "pick_two_and_place",
)

SINK, MICROWAVE, FRIDGE, LAMP = "sinkbasin 1", "microwave 1", "fridge 1", "desklamp 1"
# objects that are fixtures, never task targets
FIXTURES = ("sink 1", LAMP)
OPENABLE_STEMS = ("drawer", "cabinet", "fridge", "microwave")


def stem(name: str) -> str:
    m = re.fullmatch(r"(.+) \d+", name)
    return m.group(1) if m else name


class WorldError(ValueError):
    pass


@dataclass
class WorldState:
    receptacles: list[str]
    objects: list[str]
    placement: dict[str, str]  # object -> receptacle (absent while carried)
    openable: list[str]
    receptacle_open: dict[str, bool] = field(default_factory=dict)
    object_prop: dict[tuple[str, str], bool] = field(default_factory=dict)
    agent_at: str | None = None
    inventory: str | None = None

    def __post_init__(self):
        for r in self.openable:
            self.receptacle_open.setdefault(r, False)
        self.check()

    def check(self) -> None:
        """Every object is in exactly one place; at most one is carried."""
        for o in self.objects:
            where = (o in self.placement) + (self.inventory == o)
            if where != 1:
                raise WorldError(f"object {o!r} has {where} locations")
        for o, r in self.placement.items():
            if r not in self.receptacles:
                raise WorldError(f"object {o!r} placed on unknown receptacle {r!r}")

    def copy(self) -> "WorldState":
        return WorldState(
            list(self.receptacles),
            list(self.objects),
            dict(self.placement),
            list(self.openable),
            dict(self.receptacle_open),
            dict(self.object_prop),
            self.agent_at,
            self.inventory,
        )

    def accessible(self, recep: str) -> bool:
        return recep not in self.openable or self.receptacle_open[recep]

    def contents(self, recep: str) -> list[str]:
        return [o for o in self.objects if self.placement.get(o) == recep]

    def to_json(self) -> dict:
        return {
            "receptacles": self.receptacles,
            "objects": self.objects,
            "placement": self.placement,
            "openable": self.openable,
        }

    @classmethod
    def from_json(cls, data: dict) -> "WorldState":
        return cls(list(data["receptacles"]), list(data["objects"]), dict(data["placement"]), list(data.get("openable", [])))


@dataclass(frozen=True)
class Task:
    kind: str
    object: str
    receptacle: str

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")

    @property
    def goal(self) -> str:
        o, r = stem(self.object), stem(self.receptacle)
        return {
            "pick_and_place": f"put some {o} on {r}",
            "clean_and_place": f"put a clean {o} in {r}",
            "heat_and_place": f"put a hot {o} in {r}",
            "cool_and_place": f"put a cool {o} in {r}",
            "examine_with_light": f"look at {o} under the {stem(LAMP)}",
            "pick_two_and_place": f"put two {o} in {r}",
        }[self.kind]

    def check_world(self, world: WorldState) -> None:
        if self.object not in world.objects:
            raise WorldError(f"task object {self.object!r} is not in the world")
        if self.kind != "examine_with_light" and self.receptacle not in world.receptacles:
            raise WorldError(f"task receptacle {self.receptacle!r} is not in the world")
        if self.kind == "examine_with_light" and LAMP not in world.objects:
            raise WorldError("examine_with_light needs a desk lamp")
        if self.kind == "pick_two_and_place" and len(_same_kind(world, self.object)) < 2:
            raise WorldError(f"pick_two_and_place needs two {stem(self.object)} objects")

    def satisfied(self, world: WorldState) -> bool:
        at = world.placement.get(self.object) == self.receptacle
        prop = world.object_prop
        if self.kind == "pick_and_place":
            return at
        if self.kind == "clean_and_place":
            return at and prop.get((self.object, "clean"), False)
        if self.kind == "heat_and_place":
            return at and prop.get((self.object, "hot"), False)
        if self.kind == "cool_and_place":
            return at and prop.get((self.object, "cold"), False)
        if self.kind == "examine_with_light":
            # interpretation: the lamp is on while the target is in hand
            return world.inventory == self.object and prop.get((LAMP, "on"), False)
        placed = [o for o in _same_kind(world, self.object) if world.placement.get(o) == self.receptacle]
        return len(placed) >= 2


def _same_kind(world: WorldState, obj: str) -> list[str]:
    return [o for o in world.objects if stem(o) == stem(obj)]


# ---------------------------------------------------------------- files


def save_world(world: WorldState, path: str | Path) -> None:
    Path(path).write_text(json.dumps(world.to_json(), indent=2) + "\n")


def load_world(path: str | Path) -> WorldState:
    return WorldState.from_json(json.loads(Path(path).read_text()))


def save_tasks(tasks: list[Task], path: str | Path) -> None:
    Path(path).write_text(json.dumps([asdict(t) for t in tasks], indent=2) + "\n")


def load_tasks(path: str | Path) -> list[Task]:
    return [Task(**row) for row in json.loads(Path(path).read_text())]


# ---------------------------------------------------------------- simulator


@dataclass(frozen=True)
class StepRecord:
    step: int
    call: Call | None  # None when the policy gave up
    compatible: bool  # ground-truth precondition held on the observable state
    effective: bool  # the world changed (or revealed something)


@dataclass
class SimResult:
    trajectory: Trajectory
    success: bool
    steps: list[StepRecord]

    def __iter__(self):
        # allows ``traj, success = simulate(...)``
        return iter((self.trajectory, self.success))


Policy = Callable[[Trajectory], "Call | None"]


class Simulator:
    """Steps a world forward from action calls and narrates the observable
    effects as observation calls."""

    def __init__(self, schema: DomainSchema, world: WorldState, task: Task, traj_id: str = "episode"):
        task.check_world(world)
        self.schema = schema
        self.world = world.copy()
        self.task = task
        self.traj_id = traj_id
        self.calls: list[Call] = []
        self.state = initial_state(schema)
        self._observe("agent.update_visible_objects", *self.world.receptacles)

    def _observe(self, fn: str, *args) -> None:
        call = Call(fn, tuple(args))
        self.state = apply_call(self.schema, self.state, call)
        self.calls.append(call)

    @property
    def trajectory(self) -> Trajectory:
        return Trajectory(self.traj_id, tuple(self.calls), self.task.goal)

    def compatible(self, call: Call) -> bool:
        return holds_gt(self.schema, self.state, call)

    def step(self, call: Call) -> StepRecord:
        k = len(self.calls)
        if not self.schema.has_function(call.fn) or self.schema.function(call.fn).kind != "action":
            raise ValueError(f"{call.fn} is not an action of {self.schema.name}")
        if not self.compatible(call):
            return StepRecord(k, call, False, False)
        self.calls.append(call)
        effective = self._transition(call)
        self.world.check()
        return StepRecord(k, call, True, effective)

    def _transition(self, call: Call) -> bool:
        w = self.world
        name = call.fn.split(".")[-1]
        args = call.args
        if name == "goto":
            (r,) = args
            w.agent_at = r
            if r in w.openable:
                self._observe("env.set_property", r, "open", w.receptacle_open[r])
            if w.accessible(r):
                self._observe("agent.update_visible_objects", r, *w.contents(r))
            return True
        if name in ("open", "close"):
            (r,) = args
            if w.agent_at != r or r not in w.openable:
                return False
            w.receptacle_open[r] = name == "open"
            self._observe("env.set_property", r, "open", name == "open")
            if name == "open" and w.contents(r):
                self._observe("agent.update_visible_objects", r, *w.contents(r))
            return True
        if name == "take":
            o, r = args
            if w.agent_at != r or w.placement.get(o) != r or not w.accessible(r) or o in FIXTURES:
                return False
            del w.placement[o]
            w.inventory = o
            self._observe("agent.add_inventory", o)
            return True
        if name == "put":
            o, r = args
            if w.agent_at != r or w.inventory != o or not w.accessible(r):
                return False
            w.placement[o] = r
            w.inventory = None
            self._observe("agent.remove_inventory", o)
            return True
        if name in ("clean", "heat", "cool"):
            o, r = args
            if w.agent_at != r or w.inventory != o:
                return False
            prop = {"clean": "clean", "heat": "hot", "cool": "cold"}[name]
            w.object_prop[(o, prop)] = True
            self._observe("env.set_property", o, prop, True)
            return True
        if name == "toggle":
            (o,) = args
            if w.placement.get(o) != w.agent_at and w.inventory != o:
                return False
            value = not w.object_prop.get((o, "on"), False)
            w.object_prop[(o, "on")] = value
            self._observe("env.set_property", o, "on", value)
            return True
        raise ValueError(f"unsupported action {call.fn}")

    def success(self) -> bool:
        return self.task.satisfied(self.world)


def simulate(
    schema: DomainSchema, world: WorldState, task: Task, policy: Policy, max_steps: int = 50, traj_id: str = "episode"
) -> SimResult:
    """Run ``policy`` until the task is done, the policy returns ``None``, or
    ``max_steps`` proposals have been made."""
    sim = Simulator(schema, world, task, traj_id)
    records: list[StepRecord] = []
    for _ in range(max_steps):
        if sim.success():
            break
        call = policy(sim.trajectory)
        if call is None:
            records.append(StepRecord(len(sim.calls), None, True, False))
            break
        records.append(sim.step(call))
    return SimResult(sim.trajectory, sim.success(), records)


# ---------------------------------------------------------------- expert


def expert_plan(world: WorldState, task: Task, rng: random.Random) -> list[Call]:
    """Action calls that solve ``task``: search receptacles in a random
    order (opening and re-closing containers), carry, process, place."""
    task.check_world(world)
    w = world.copy()
    plan: list[Call] = []

    def act(fn: str, *args):
        plan.append(Call(f"agent.{fn}", tuple(args)))

    def goto(r: str):
        if w.agent_at != r:
            act("goto", r)
            w.agent_at = r

    def fetch(obj: str):
        order = [r for r in w.receptacles]
        rng.shuffle(order)
        target = w.placement[obj]
        for r in order:
            goto(r)
            opened = False
            if r in w.openable and not w.receptacle_open[r]:
                act("open", r)
                w.receptacle_open[r] = opened = True
            if r == target:
                act("take", obj, r)
                del w.placement[obj]
                w.inventory = obj
                return
            if opened:
                act("close", r)
                w.receptacle_open[r] = False
        raise WorldError(f"object {obj!r} not found")

    def place(obj: str, r: str):
        goto(r)
        if r in w.openable and not w.receptacle_open[r]:
            act("open", r)
            w.receptacle_open[r] = True
        act("put", obj, r)
        w.placement[obj] = r
        w.inventory = None

    def process(obj: str, fn: str, r: str):
        goto(r)
        act(fn, obj, r)

    if task.kind == "pick_two_and_place":
        targets = [o for o in _same_kind(w, task.object) if w.placement.get(o) != task.receptacle][:2]
        for o in targets:
            fetch(o)
            place(o, task.receptacle)
        return plan
    fetch(task.object)
    if task.kind == "clean_and_place":
        process(task.object, "clean", SINK)
    elif task.kind == "heat_and_place":
        process(task.object, "heat", MICROWAVE)
    elif task.kind == "cool_and_place":
        process(task.object, "cool", FRIDGE)
    if task.kind == "examine_with_light":
        goto(w.placement[LAMP])
        act("toggle", LAMP)
        return plan
    place(task.object, task.receptacle)
    return plan


class ScriptedExpert:
    """Replays a precomputed plan; returns ``None`` when it runs out."""

    def __init__(self, world: WorldState, task: Task, rng: random.Random):
        self.plan = expert_plan(world, task, rng)
        self.k = 0

    def __call__(self, prefix: Trajectory) -> Call | None:
        if self.k >= len(self.plan):
            return None
        call = self.plan[self.k]
        self.k += 1
        return call


# ---------------------------------------------------------------- generators


def generate_world(schema: DomainSchema, rng: random.Random) -> WorldState:
    """All schema receptacles; every non-fixture object on a random ordinary
    receptacle; the sink on the countertop and the lamp on the side table."""
    receps = list(schema.vocab("receptacle"))
    objects = list(schema.vocab("object"))
    openable = [r for r in receps if stem(r) in OPENABLE_STEMS]
    ordinary = [r for r in receps if r not in (SINK, MICROWAVE, FRIDGE)]
    placement = {}
    for o in objects:
        if o == "sink 1":
            placement[o] = "countertop 1" if "countertop 1" in receps else ordinary[0]
        elif o == LAMP:
            placement[o] = "sidetable 1" if "sidetable 1" in receps else ordinary[0]
        else:
            placement[o] = rng.choice(ordinary)
    return WorldState(receps, objects, placement, openable)


def sample_task(world: WorldState, kind: str, rng: random.Random) -> Task:
    movable = [o for o in world.objects if o not in FIXTURES]
    if kind == "pick_two_and_place":
        stems = sorted({stem(o) for o in movable if len(_same_kind(world, o)) >= 2})
        if not stems:
            raise WorldError("no object kind has two instances")
        obj = sorted(o for o in movable if stem(o) == rng.choice(stems))[0]
    else:
        obj = rng.choice(movable)
    homes = [r for r in world.receptacles if r not in (SINK, MICROWAVE, FRIDGE)]
    if kind == "pick_two_and_place":
        homes = [r for r in homes if all(world.placement.get(o) != r for o in _same_kind(world, obj))]
    else:
        homes = [r for r in homes if world.placement.get(obj) != r]
    recep = world.placement[LAMP] if kind == "examine_with_light" else rng.choice(homes)
    return Task(kind, obj, recep)


def generate_episodes(schema: DomainSchema, n: int, seed: int, split: str = "demo") -> list[tuple[WorldState, Task]]:
    """``n`` (world, task) pairs cycling through the task kinds in order, so
    12 episodes cover every kind twice."""
    out = []
    for i in range(n):
        r = random.Random(derive_seed(seed, schema.name, split, i))
        world = generate_world(schema, r)
        out.append((world, sample_task(world, TASK_KINDS[i % len(TASK_KINDS)], r)))
    return out


def expert_corpus(
    schema: DomainSchema,
    episodes: list[tuple[WorldState, Task]],
    seed: int,
    split: str = "demo",
    sweep: float = 0.0,
    max_steps: int = 200,
) -> Corpus:
    """Expert trajectories for ``episodes`` (optionally with affordance
    sweeps).  Raises if the expert fails, so every emitted trajectory is a
    successful, precondition-respecting demonstration."""
    trajs = []
    for i, (world, task) in enumerate(episodes):
        tid = f"{split}{i:03d}"
        r = random.Random(derive_seed(seed, schema.name, split, "expert", i))
        res = simulate(schema, world, task, ScriptedExpert(world, task, r), max_steps, tid)
        bad = [s for s in res.steps if s.call is not None and not s.compatible]
        if bad or not res.success:
            raise WorldError(f"expert failed on {tid} ({task.goal})")
        trajs.append(add_sweeps(schema, res.trajectory, sweep, r) if sweep > 0 else res.trajectory)
    return Corpus(schema.name, tuple(trajs))


def generate_household_corpus(schema: DomainSchema, n: int, seed: int, split: str = "demo", sweep: float = 0.0) -> Corpus:
    return expert_corpus(schema, generate_episodes(schema, n, seed, split), seed, split, sweep)
