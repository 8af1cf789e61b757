"""Metrics for mined preconditions and for policies, plus the
demonstration-labelled classifier baseline."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from precond.execute import InstanceGrid, State, bind, replay, replay_all
from precond.mine import satisfaction_set
from precond.policy import SampleResult, verify
from precond.schema import DomainSchema
from precond.trajectory import Call, Corpus, Trajectory

# ---------------------------------------------------------------- precision / recall


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float
    n_pred: int = 0
    n_gt: int = 0
    n_both: int = 0


@dataclass
class PrecondMetrics:
    per_action: dict[str, PRF]
    macro: PRF

    def to_json(self) -> dict:
        return {"per_action": {a: asdict(m) for a, m in self.per_action.items()}, "macro": asdict(self.macro)}


def f1_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def prf_from_masks(pred: np.ndarray, gt: np.ndarray) -> PRF:
    """Set precision/recall.  An empty predicted set makes no false
    claims, so its precision is 1; an empty ground-truth set likewise has
    recall 1.  This keeps swap(pred, gt) == swap(precision, recall)."""
    n_p, n_g, n_b = int(pred.sum()), int(gt.sum()), int((pred & gt).sum())
    p = n_b / n_p if n_p else 1.0
    r = n_b / n_g if n_g else 1.0
    return PRF(p, r, f1_score(p, r), n_p, n_g, n_b)


def macro_average(per_action: dict[str, PRF]) -> PRF:
    if not per_action:
        return PRF(0.0, 0.0, 0.0)
    names = sorted(per_action)
    return PRF(
        float(np.mean([per_action[a].precision for a in names])),
        float(np.mean([per_action[a].recall for a in names])),
        float(np.mean([per_action[a].f1 for a in names])),
        sum(per_action[a].n_pred for a in names),
        sum(per_action[a].n_gt for a in names),
        sum(per_action[a].n_both for a in names),
    )


def precond_prf(schema: DomainSchema, pred: dict, gt: dict, test: Corpus) -> PrecondMetrics:
    """Per-action precision/recall/F1 of predicted against ground-truth
    satisfaction sets on the grounded grid of ``test``, then the unweighted
    mean over actions."""
    if set(pred) != set(gt):
        raise ValueError("predicted and ground-truth preconditions must cover the same actions")
    per = {}
    for a in sorted(gt):
        grid = InstanceGrid.full(schema, a, test)
        pm = satisfaction_set(schema, pred[a], a, test, grid).mask
        gm = satisfaction_set(schema, gt[a], a, test, grid).mask
        per[a] = prf_from_masks(pm, gm)
    return PrecondMetrics(per, macro_average(per))


def masks_prf(schema: DomainSchema, predict_mask: Callable, gt: dict, test: Corpus) -> PrecondMetrics:
    """Like :func:`precond_prf` for a predictor given as
    ``predict_mask(grid) -> bool array`` instead of expressions."""
    per = {}
    for a in sorted(gt):
        grid = InstanceGrid.full(schema, a, test)
        per[a] = prf_from_masks(np.asarray(predict_mask(grid), dtype=bool), grid.holds(gt[a]))
    return PrecondMetrics(per, macro_average(per))


def recovered(schema: DomainSchema, pred: dict, gt: dict, test: Corpus) -> dict[str, bool]:
    """Per action: do the predicted and ground-truth satisfaction sets
    coincide on the grid of ``test``?"""
    out = {}
    for a in sorted(gt):
        grid = InstanceGrid.full(schema, a, test, distinct=True)
        out[a] = bool(np.array_equal(grid.holds(pred[a]), grid.holds(gt[a])))
    return out


# ---------------------------------------------------------------- policies


@dataclass
class PolicyMetrics:
    f1: float | None = None
    sr: float | None = None
    compatibility: float = 0.0
    n_predictions: int = 0
    n_verified: int = 0
    n_fallback: int = 0
    verified_compatibility: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def _ratio(a: int, b: int) -> float:
    return a / b if b else 1.0


def multiset_f1(pred: list, ref: list) -> float:
    if not pred and not ref:
        return 1.0
    both = sum((Counter(pred) & Counter(ref)).values())
    p = both / len(pred) if pred else 0.0
    r = both / len(ref) if ref else 0.0
    return f1_score(p, r)


def system_turns(traj: Trajectory, agent_prefix: str = "system.") -> list[tuple[int, int]]:
    """``(start, end)`` call ranges of maximal runs of agent calls."""
    turns, start = [], None
    for i, c in enumerate(traj.calls):
        mine = c.fn.startswith(agent_prefix)
        if mine and start is None:
            start = i
        if not mine and start is not None:
            turns.append((start, i))
            start = None
    if start is not None:
        turns.append((start, len(traj.calls)))
    return turns


def policy_eval_dialog(
    schema: DomainSchema,
    make_agent: Callable[[Trajectory], object],
    test: Corpus,
    agent_prefix: str = "system.",
    slack: int = 2,
) -> PolicyMetrics:
    """Turn-level F1 and compatibility.

    For every system turn of every test dialog the agent starts from the
    reference prefix and predicts until it emits the end-of-turn marker or
    ``len(reference turn) + slack`` calls.  When a prediction matches the
    next reference action, the observations that follow it in the reference
    (query results) are appended too.  ``make_agent(reference)`` returns an
    object with ``act(prefix) -> SampleResult``.
    """
    gt = schema.gt_preconditions()
    f1s: list[float] = []
    n_pred = n_ok = n_ver = n_ver_ok = n_fb = 0
    for traj in test:
        agent = make_agent(traj)
        for start, end in system_turns(traj, agent_prefix):
            ref_turn = list(traj.calls[start:end])
            ref_actions = [c for c in ref_turn if schema.function(c.fn).kind == "action"]
            prefix = list(traj.calls[:start])
            ptr = 0
            predicted: list[Call] = []
            try:
                while len(predicted) < len(ref_actions) + slack:
                    res: SampleResult = agent.act(Trajectory(traj.id, tuple(prefix), traj.goal))
                    if res.call is None:
                        break
                    predicted.append(res.call)
                    state = replay(schema, Trajectory(traj.id, tuple(prefix)))
                    ok = verify(schema, state, res.call, gt)
                    n_pred += 1
                    n_ok += ok
                    n_fb += res.fallback_used
                    if res.verified:
                        n_ver += 1
                        n_ver_ok += ok
                    prefix.append(res.call)
                    if ptr < len(ref_turn) and ref_turn[ptr] == res.call:
                        ptr += 1
                        while ptr < len(ref_turn) and schema.function(ref_turn[ptr].fn).kind == "observation":
                            prefix.append(ref_turn[ptr])
                            ptr += 1
                f1s.append(multiset_f1([c.render() for c in predicted], [c.render() for c in ref_actions]))
            except Exception:  # a failing policy scores the turn as zero
                f1s.append(0.0)
    return PolicyMetrics(
        f1=float(np.mean(f1s)) if f1s else 0.0,
        compatibility=_ratio(n_ok, n_pred),
        n_predictions=n_pred,
        n_verified=n_ver,
        n_fallback=n_fb,
        verified_compatibility=_ratio(n_ver_ok, n_ver) if n_ver else None,
        extra={"turns": len(f1s)},
    )


def policy_eval_household(schema: DomainSchema, make_agent: Callable, episodes, max_steps: int = 30) -> PolicyMetrics:
    """Success rate and compatibility over simulated ``(world, task)``
    episodes.  ``make_agent(i)`` returns a fresh agent for episode ``i``
    (a callable ``prefix -> Call``, optionally with a ``log`` of
    :class:`SampleResult`)."""
    from precond.domains.household import simulate

    wins = n_pred = n_ok = n_ver = n_ver_ok = n_fb = 0
    for i, (world, task) in enumerate(episodes):
        agent = make_agent(i)
        res = simulate(schema, world, task, agent, max_steps, traj_id=f"ep{i:03d}")
        wins += res.success
        log = getattr(agent, "log", None)
        proposals = [s for s in res.steps if s.call is not None]
        for k, step in enumerate(proposals):
            n_pred += 1
            n_ok += step.compatible
            if log is not None and k < len(log):
                if log[k].verified:
                    n_ver += 1
                    n_ver_ok += step.compatible
                n_fb += log[k].fallback_used
    return PolicyMetrics(
        sr=_ratio(wins, len(episodes)),
        compatibility=_ratio(n_ok, n_pred),
        n_predictions=n_pred,
        n_verified=n_ver,
        n_fallback=n_fb,
        verified_compatibility=_ratio(n_ver_ok, n_ver) if n_ver else None,
        extra={"episodes": len(episodes)},
    )


# ---------------------------------------------------------------- labelled data


@dataclass(frozen=True)
class LabeledInstance:
    traj_id: str
    step: int
    action: str
    binding: tuple
    label: int


def build_labeled_dataset(schema: DomainSchema, demos: Corpus, seed: int | None = None) -> list[LabeledInstance]:
    """Positives: each observed action call at its own step.  Negatives:
    at each such step, every later action call that differs from the
    current one.  With ``seed`` the larger class is subsampled to the size
    of the smaller."""
    if not len(demos):
        raise ValueError("labelled dataset needs at least one demonstration")
    pos, neg = [], []
    for traj in demos:
        acts = [(t, c) for t, c in enumerate(traj.calls) if schema.function(c.fn).kind == "action"]
        for k, (t, c) in enumerate(acts):
            pos.append(LabeledInstance(traj.id, t, c.fn, c.args, 1))
            seen = set()
            for _, c2 in acts[k + 1 :]:
                if c2 != c and c2 not in seen:
                    seen.add(c2)
                    neg.append(LabeledInstance(traj.id, t, c2.fn, c2.args, 0))
    if seed is not None and pos and neg:
        rng = random.Random(seed)
        n = min(len(pos), len(neg))
        pos = rng.sample(pos, n) if len(pos) > n else pos
        neg = rng.sample(neg, n) if len(neg) > n else neg
    return pos + neg


def _states_by_traj(schema: DomainSchema, demos: Corpus) -> dict[str, list[State]]:
    return {t.id: replay_all(schema, t) for t in demos}


def label_quality(schema: DomainSchema, dataset: list[LabeledInstance], demos: Corpus, gt: dict) -> tuple[float, float]:
    """Precision and recall of the constructed labels when the ground-truth
    preconditions define the true labels."""
    states = _states_by_traj(schema, demos)
    tp = fp = fn = 0
    for inst in dataset:
        truth = verify(schema, states[inst.traj_id][inst.step], Call(inst.action, inst.binding), gt)
        if inst.label and truth:
            tp += 1
        elif inst.label:
            fp += 1
        elif truth:
            fn += 1
    return _ratio(tp, tp + fp), _ratio(tp, tp + fn)


# ---------------------------------------------------------------- linear baseline


class FeatureMap:
    """Fixed-length boolean features: the state snapshot (declared
    vocabulary keys only), a one-hot action, and one indicator per
    (parameter name, value) of the binding."""

    def __init__(self, schema: DomainSchema):
        self.schema = schema
        names: list[str] = []
        self._state_spec = []
        for v in schema.state_vars:
            if v.kind == "BoolFlag":
                self._state_spec.append((v.name, v.kind, None))
                names.append(v.name)
            elif v.kind == "TriState":
                self._state_spec.append((v.name, v.kind, (True, False, None)))
                names += [f"{v.name}=={c}" for c in (True, False, None)]
            elif v.kind == "BoolMap":
                keys = tuple(schema.vocab(v.keys[0])) if v.keys else ()
                self._state_spec.append((v.name, v.kind, keys))
                names += [f"{v.name}[{k}]" for k in keys]
            elif v.kind == "PropMap":
                keys = tuple((a, b) for a in schema.vocab(v.keys[0]) for b in schema.vocab(v.keys[1]))
                self._state_spec.append((v.name, v.kind, keys))
                names += [f"{v.name}[{a},{b}]" for a, b in keys]
            elif v.kind in ("StringSet", "OptString"):
                keys = tuple(sorted({x for vocab in schema.vocabularies.values() for x in vocab if isinstance(x, str)}))
                self._state_spec.append((v.name, v.kind, keys))
                names += [f"{x} in {v.name}" for x in keys]
                if v.kind == "OptString":
                    names.append(f"{v.name} is none")
        self.n_state = len(names)
        self.actions = [f.name for f in schema.actions]
        names += [f"action={a}" for a in self.actions]
        self.bind_keys = sorted(
            {(p.name, val) for f in schema.actions for p in f.params for val in schema.vocab(p.vocab)}, key=repr
        )
        self._bind_index = {k: i for i, k in enumerate(self.bind_keys)}
        names += [f"{p}={val}" for p, val in self.bind_keys]
        self.names = names

    @property
    def dim(self) -> int:
        return len(self.names)

    def state_vector(self, state: State) -> np.ndarray:
        out = []
        for name, kind, keys in self._state_spec:
            val = state[name]
            if kind == "BoolFlag":
                out.append(bool(val))
            elif kind == "TriState":
                out += [val is c for c in keys]
            elif kind == "BoolMap":
                out += [bool(val.get(k, False)) for k in keys]
            elif kind == "PropMap":
                out += [bool(val.get(k, False)) for k in keys]
            elif kind == "StringSet":
                out += [k in val for k in keys]
            else:
                out += [val == k for k in keys] + [val is None]
        return np.asarray(out, dtype=np.float64)

    def action_vector(self, action: str) -> np.ndarray:
        v = np.zeros(len(self.actions))
        v[self.actions.index(action)] = 1.0
        return v

    def binding_vector(self, action: str, args: tuple) -> np.ndarray:
        v = np.zeros(len(self.bind_keys))
        for k, val in bind(self.schema.function(action), args).items():
            vals = val if isinstance(val, tuple) else (val,)
            for x in vals:
                i = self._bind_index.get((k, x))
                if i is not None:
                    v[i] = 1.0
        return v

    def vector(self, state: State, action: str, args: tuple) -> np.ndarray:
        return np.concatenate([self.state_vector(state), self.action_vector(action), self.binding_vector(action, args)])


def logistic_loss(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> float:
    z = X @ w + b
    # log(1 + exp(-z)) for y=1 and log(1 + exp(z)) for y=0, computed stably
    loss = np.logaddexp(0.0, z) - y * z
    return float(loss.mean() + 0.5 * l2 * (w @ w))


def logistic_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> tuple[np.ndarray, float]:
    z = X @ w + b
    p = 0.5 * (1.0 + np.tanh(0.5 * z))  # sigmoid without overflow
    err = (p - y) / len(y)
    return X.T @ err + l2 * w, float(err.sum())


@dataclass
class LinearPrecondClassifier:
    features: FeatureMap
    w: np.ndarray
    b: float
    losses: list[float] = field(default_factory=list)
    l2: float = 0.0

    def score(self, state: State, action: str, args: tuple) -> float:
        return float(self.features.vector(state, action, args) @ self.w + self.b)

    def predict(self, state: State, action: str, args: tuple) -> int:
        return int(self.score(state, action, args) >= 0.0)  # sigmoid >= 0.5

    def grid_mask(self, grid: InstanceGrid) -> np.ndarray:
        """Vectorised predictions over a grid of one action."""
        fm = self.features
        n_s = fm.n_state
        n_a = len(fm.actions)
        ws, wa, wb = self.w[:n_s], self.w[n_s : n_s + n_a], self.w[n_s + n_a :]
        s_score = np.array([fm.state_vector(st) @ ws for st in grid.states]) if grid.states else np.zeros(0)
        b_score = np.array([fm.binding_vector(grid.action, b) @ wb for b in grid.bindings])
        a_score = fm.action_vector(grid.action) @ wa
        z = s_score[grid.rows] + b_score[grid.cols] + a_score + self.b
        return z >= 0.0


def dataset_matrix(schema: DomainSchema, dataset: list[LabeledInstance], demos: Corpus, fm: FeatureMap):
    states = _states_by_traj(schema, demos)
    X = np.array([fm.vector(states[i.traj_id][i.step], i.action, i.binding) for i in dataset])
    y = np.array([i.label for i in dataset], dtype=np.float64)
    return X, y


def train_linear_precond_classifier(
    schema: DomainSchema,
    dataset: list[LabeledInstance],
    demos: Corpus,
    epochs: int = 300,
    lr: float = 0.5,
    seed: int = 0,
    l2: float = 1e-4,
) -> LinearPrecondClassifier:
    """Full-batch gradient descent on the mean logistic loss."""
    labels = {i.label for i in dataset}
    if labels != {0, 1}:
        raise ValueError("classifier needs both positive and negative instances")
    fm = FeatureMap(schema)
    X, y = dataset_matrix(schema, dataset, demos, fm)
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 0.01, fm.dim)
    b = 0.0
    losses = []
    for _ in range(epochs):
        losses.append(logistic_loss(w, b, X, y, l2))
        gw, gb = logistic_grad(w, b, X, y, l2)
        w = w - lr * gw
        b = b - lr * gb
    losses.append(logistic_loss(w, b, X, y, l2))
    return LinearPrecondClassifier(fm, w, b, losses, l2)


def gradient_check(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float = 0.0, eps: float = 1e-5) -> float:
    """Largest relative difference between the analytic gradient and
    central finite differences (over all weights and the bias)."""
    gw, gb = logistic_grad(w, b, X, y, l2)
    analytic = np.append(gw, gb)
    numeric = np.zeros_like(analytic)
    for k in range(len(w) + 1):
        wp, wm = w.copy(), w.copy()
        bp = bm = b
        if k < len(w):
            wp[k] += eps
            wm[k] -= eps
        else:
            bp += eps
            bm -= eps
        numeric[k] = (logistic_loss(wp, bp, X, y, l2) - logistic_loss(wm, bm, X, y, l2)) / (2 * eps)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))


def classifier_prf(schema: DomainSchema, clf: LinearPrecondClassifier, gt: dict, test: Corpus) -> PrecondMetrics:
    return masks_prf(schema, clf.grid_mask, gt, test)


# ---------------------------------------------------------------- tables


def precond_table(rows: dict[str, PrecondMetrics], per_action: bool = True) -> str:
    """Prec/Rec/F1 table; one block per named system."""
    lines = [f"{'':40s} {'Prec':>6s} {'Rec':>6s} {'F1':>6s}"]
    for name, m in rows.items():
        lines.append(f"{name:40s} {m.macro.precision:6.3f} {m.macro.recall:6.3f} {m.macro.f1:6.3f}")
        if per_action:
            for a, r in m.per_action.items():
                lines.append(f"  {a:38s} {r.precision:6.3f} {r.recall:6.3f} {r.f1:6.3f}")
    return "\n".join(lines) + "\n"


def policy_table(rows: dict[str, PolicyMetrics]) -> str:
    def fmt(x):
        return "   -  " if x is None else f"{x:6.3f}"

    lines = [f"{'':40s} {'F1':>6s} {'SR':>6s} {'Cmp':>6s}"]
    for name, m in rows.items():
        lines.append(f"{name:40s} {fmt(m.f1)} {fmt(m.sr)} {fmt(m.compatibility)}")
    return "\n".join(lines) + "\n"
