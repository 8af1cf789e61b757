import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from precond import expr as ex
from precond.domains.dialog import generate_dialog_corpus
from precond.domains.household import expert_corpus, generate_episodes
from precond.evalkit import (
    PRF,
    LabeledInstance,
    PolicyMetrics,
    build_labeled_dataset,
    dataset_matrix,
    gradient_check,
    label_quality,
    logistic_grad,
    logistic_loss,
    macro_average,
    multiset_f1,
    policy_eval_dialog,
    policy_eval_household,
    policy_table,
    precond_prf,
    precond_table,
    prf_from_masks,
    recovered,
    system_turns,
    train_linear_precond_classifier,
)
from precond.execute import InstanceGrid, replay_all
from precond.policy import SampleResult, ReferenceAgent, UniformPolicy, Agent
from precond.trajectory import Call, Corpus, Trajectory
from support import random_corpus, random_expr, random_schema


@pytest.fixture(scope="module")
def rest_test(restaurants):
    return generate_dialog_corpus(restaurants, 8, 3, "test")


# ---------------------------------------------------------------- identities


def _setup(rng):
    s = random_schema(rng)
    test = random_corpus(s, rng, 3)
    gt = {fn.name: random_expr(s, fn, rng, 2) for fn in s.actions}
    return s, test, gt


@given(st.randoms(use_true_random=False))
def test_identity_gives_ones(rng):
    s, test, gt = _setup(rng)
    m = precond_prf(s, gt, gt, test)
    assert (m.macro.precision, m.macro.recall, m.macro.f1) == (1.0, 1.0, 1.0)
    assert all(recovered(s, gt, gt, test).values())


@given(st.randoms(use_true_random=False))
def test_strengthening_keeps_precision_one(rng):
    s, test, gt = _setup(rng)
    pred = {a: ex.And(e, random_expr(s, s.function(a), rng, 2)) for a, e in gt.items()}
    m = precond_prf(s, pred, gt, test)
    assert all(r.precision == 1.0 for r in m.per_action.values())
    assert m.macro.precision == 1.0


@given(st.randoms(use_true_random=False))
def test_swap_exchanges_precision_and_recall(rng):
    s, test, gt = _setup(rng)
    pred = {fn.name: random_expr(s, fn, rng, 2) for fn in s.actions}
    a, b = precond_prf(s, pred, gt, test), precond_prf(s, gt, pred, test)
    for k in gt:
        assert a.per_action[k].precision == b.per_action[k].recall
        assert a.per_action[k].recall == b.per_action[k].precision
        assert a.per_action[k].f1 == pytest.approx(b.per_action[k].f1)


def test_empty_set_convention():
    e, full = np.zeros(4, bool), np.ones(4, bool)
    assert (prf_from_masks(e, e).precision, prf_from_masks(e, e).recall) == (1.0, 1.0)
    r = prf_from_masks(e, full)
    assert (r.precision, r.recall, r.f1) == (1.0, 0.0, 0.0)
    r = prf_from_masks(full, e)
    assert (r.precision, r.recall, r.f1) == (0.0, 1.0, 0.0)


def test_prf_hand_example():
    pred = np.array([1, 1, 0, 0], bool)
    gt = np.array([1, 0, 1, 0], bool)
    r = prf_from_masks(pred, gt)
    assert (r.precision, r.recall, r.f1) == (0.5, 0.5, 0.5)
    assert (r.n_pred, r.n_gt, r.n_both) == (2, 2, 1)


def test_macro_is_order_invariant():
    rows = {"b": PRF(0.5, 1.0, 2 / 3), "a": PRF(1.0, 0.25, 0.4), "c": PRF(0.1, 0.2, 0.3)}
    assert macro_average(rows) == macro_average(dict(reversed(list(rows.items()))))
    assert macro_average(rows).precision == pytest.approx(1.6 / 3)


def test_action_sets_must_agree(restaurants, restaurants_example):
    gt = restaurants.gt_preconditions()
    with pytest.raises(ValueError):
        precond_prf(restaurants, {"system.GOODBYE": ex.TRUE}, gt, restaurants_example)


def test_true_has_full_recall(restaurants, rest_test):
    gt = restaurants.gt_preconditions()
    m = precond_prf(restaurants, {a: ex.TRUE for a in gt}, gt, rest_test)
    assert m.macro.recall == 1.0 and m.macro.precision < 1.0


# ---------------------------------------------------------------- policy metrics


def test_multiset_f1():
    assert multiset_f1([], []) == 1.0
    assert multiset_f1(["a"], []) == 0.0
    assert multiset_f1(["a", "a"], ["a"]) == pytest.approx(2 / 3)
    assert multiset_f1(["b", "a"], ["a", "b"]) == 1.0


def test_system_turns():
    t = Trajectory("t", (Call("user.GOODBYE"), Call("system.GOODBYE"), Call("system.NOTIFY_FAILURE"), Call("user.THANK_YOU")))
    assert system_turns(t) == [(1, 3)]
    assert system_turns(Trajectory("t", (Call("system.GOODBYE"),))) == [(0, 1)]


def test_oracle_scores_one(restaurants, rest_test):
    m = policy_eval_dialog(restaurants, ReferenceAgent, rest_test)
    assert m.f1 == 1.0 and m.compatibility == 1.0
    assert m.verified_compatibility is None and m.n_verified == 0
    assert m.extra["turns"] == sum(len(system_turns(t)) for t in rest_test)


class _Always:
    def __init__(self, call):
        self.call = call

    def act(self, prefix):
        return SampleResult(self.call, False, 1, False)


def test_always_goodbye_is_mostly_incompatible(restaurants, rest_test):
    m = policy_eval_dialog(restaurants, lambda t: _Always(Call("system.GOODBYE")), rest_test)
    assert 0.0 < m.compatibility < 0.5
    assert m.f1 < 0.5
    # every turn runs to its cap
    caps = sum(
        sum(restaurants.function(c.fn).kind == "action" for c in t.calls[a:b]) + 2 for t in rest_test for a, b in system_turns(t)
    )
    assert m.n_predictions == caps


def test_uniform_household_rarely_succeeds(household):
    eps = generate_episodes(household, 6, 0, "test")
    make = lambda i: Agent(household, Corpus("household"), UniformPolicy(household), rng=random.Random(i))  # noqa: E731
    m = policy_eval_household(household, make, eps, max_steps=30)
    assert m.sr <= 1 / 6
    assert m.compatibility < 0.5
    assert m.n_predictions > 0 and m.verified_compatibility is None


def test_tables_render():
    txt = policy_table({"x": PolicyMetrics(f1=0.5, compatibility=1.0)})
    assert "0.500" in txt and "-" in txt
    from precond.evalkit import PrecondMetrics

    m = PrecondMetrics({"a": PRF(1.0, 0.5, 2 / 3)}, PRF(1.0, 0.5, 2 / 3))
    assert precond_table({"mined": m}).count("\n") == 3
    assert precond_table({"mined": m}, per_action=False).count("\n") == 2


# ---------------------------------------------------------------- labelled data


def test_single_action_has_no_negatives(restaurants):
    demos = Corpus("restaurants", (Trajectory("d", (Call("user.GOODBYE"), Call("system.GOODBYE"))),))
    ds = build_labeled_dataset(restaurants, demos)
    assert [(i.action, i.label) for i in ds] == [("system.GOODBYE", 1)]


def test_later_call_is_negative(restaurants, restaurants_example):
    (traj,) = restaurants_example
    ds = build_labeled_dataset(restaurants, restaurants_example)
    t = next(i for i, c in enumerate(traj.calls) if c.fn == "system.REQUEST")
    negs = {i.action for i in ds if i.step == t and i.label == 0}
    assert "system.FindRestaurants" in negs
    assert sum(i.label for i in ds) == sum(restaurants.function(c.fn).kind == "action" for c in traj.calls)


def test_label_quality(restaurants, household):
    demos = generate_dialog_corpus(restaurants, 6, 0, "demo")
    p, _ = label_quality(restaurants, build_labeled_dataset(restaurants, demos), demos, restaurants.gt_preconditions())
    assert p == 1.0
    hh = expert_corpus(household, generate_episodes(household, 6, 0, "demo"), 0)
    p, r = label_quality(household, build_labeled_dataset(household, hh), hh, household.gt_preconditions())
    assert p == 1.0 and r < 1.0  # some later actions were already possible


def test_balanced_subsample(restaurants):
    demos = generate_dialog_corpus(restaurants, 4, 0, "demo")
    ds = build_labeled_dataset(restaurants, demos, seed=1)
    assert sum(i.label for i in ds) * 2 == len(ds)
    assert ds == build_labeled_dataset(restaurants, demos, seed=1)


# ---------------------------------------------------------------- linear baseline


@given(st.integers(0, 10**6))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 2, size=(30, 12)).astype(float)
    y = rng.integers(0, 2, size=30).astype(float)
    w = rng.normal(0.0, 1.0, 12)
    assert gradient_check(w, float(rng.normal()), X, y, l2=0.01) < 1e-6


def test_loss_at_zero_is_log_two():
    X, y = np.ones((4, 3)), np.array([0.0, 1.0, 1.0, 0.0])
    assert logistic_loss(np.zeros(3), 0.0, X, y) == pytest.approx(np.log(2))
    gw, gb = logistic_grad(np.zeros(3), 0.0, X, y)
    assert np.allclose(gw, 0.0) and gb == 0.0


def test_separable_labels_are_learned(restaurants):
    demos = generate_dialog_corpus(restaurants, 4, 0, "demo")
    base = build_labeled_dataset(restaurants, demos)
    ds = [LabeledInstance(i.traj_id, i.step, i.action, i.binding, int(i.action == "system.GOODBYE")) for i in base]
    clf = train_linear_precond_classifier(restaurants, ds, demos, epochs=400)
    states = {t.id: replay_all(restaurants, t) for t in demos}
    assert all(clf.predict(states[i.traj_id][i.step], i.action, i.binding) == i.label for i in ds)


def test_training_decreases_loss_and_grid_agrees(restaurants):
    demos = generate_dialog_corpus(restaurants, 6, 0, "demo")
    ds = build_labeled_dataset(restaurants, demos, seed=0)
    clf = train_linear_precond_classifier(restaurants, ds, demos)
    assert all(b <= a + 1e-12 for a, b in zip(clf.losses, clf.losses[1:]))
    X, y = dataset_matrix(restaurants, ds, demos, clf.features)
    assert gradient_check(clf.w, clf.b, X, y, clf.l2) <= 1e-4
    grid = InstanceGrid.full(restaurants, "system.INFORM", demos)
    mask = clf.grid_mask(grid)
    for k in range(0, len(grid), 37):
        st_, b = grid.states[grid.rows[k]], grid.bindings[grid.cols[k]]
        assert mask[k] == clf.predict(st_, "system.INFORM", b)


def test_training_needs_both_labels(restaurants, restaurants_example):
    ds = [i for i in build_labeled_dataset(restaurants, restaurants_example) if i.label == 1]
    with pytest.raises(ValueError):
        train_linear_precond_classifier(restaurants, ds, restaurants_example)
