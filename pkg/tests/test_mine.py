from hypothesis import given, strategies as st

from precond import expr as ex
from precond.execute import InstanceGrid, execute_with_precondition
from precond.mine import (
    brute_force_opt,
    load_report_conjunctions,
    mine_action,
    mine_all,
    rank,
    report_json,
    report_text,
    satisfaction_set,
    validate,
)
from precond.synth import CandidatePool, Candidate, GeneratorConfig, enumerate_candidates
from precond.trajectory import Corpus
from support import random_corpus, random_schema


def _pool(action, exprs):
    return CandidatePool(action, [Candidate(e, "curated", ex.render(e)) for e in exprs])


def test_true_always_valid(restaurants, restaurants_example):
    for fn in restaurants.actions:
        assert ex.TRUE in validate(restaurants, _pool(fn.name, [ex.TRUE]), restaurants_example)


def test_not_no_more_discarded_for_goodbye(restaurants, restaurants_example):
    pool = _pool("system.GOODBYE", [ex.Var("no_more"), ex.Not(ex.Var("no_more"))])
    assert validate(restaurants, pool, restaurants_example) == [ex.Var("no_more")]


def test_no_more_satisfaction_set(restaurants, restaurants_example):
    (traj,) = restaurants_example
    sat = satisfaction_set(restaurants, ex.Var("no_more"), "system.GOODBYE", restaurants_example)
    first = next(i for i, c in enumerate(traj.calls) if c.fn in ("user.THANK_YOU", "user.GOODBYE"))
    assert {step for _, step, _ in sat.instances} == set(range(first + 1, len(traj.calls) + 1))


def test_requested_slot_satisfaction_set(restaurants, restaurants_example):
    (traj,) = restaurants_example
    req = ex.Lookup("requested_slot", (ex.Param("slot"),))
    sat = satisfaction_set(restaurants, req, "system.INFORM", restaurants_example)
    k = next(i for i, c in enumerate(traj.calls) if c.fn == "user.REQUEST" and c.args == ("has_live_music",))
    steps = {step for _, step, b in sat.instances if b == ("has_live_music",)}
    assert steps == set(range(k + 1, len(traj.calls) + 1))


def test_true_covers_full_grid(restaurants, restaurants_example):
    sat = satisfaction_set(restaurants, ex.TRUE, "system.INFORM", restaurants_example)
    assert len(sat) == len(sat.grid) == 42 * len(restaurants.vocab("attribute"))


def test_rank_trivial_cases(restaurants, restaurants_example):
    r = rank(restaurants, "system.GOODBYE", [ex.TRUE], restaurants_example)
    assert r.opt == [ex.TRUE]
    r = rank(restaurants, "system.GOODBYE", [ex.TRUE, ex.Var("no_more")], restaurants_example)
    assert r.opt == [ex.Var("no_more")]
    assert r.conjunction == ex.Var("no_more")


def test_goodbye_mined_on_example(restaurants, restaurants_example):
    r = mine_action(restaurants, "system.GOODBYE", restaurants_example, GeneratorConfig())
    assert r.conjunction == ex.Var("no_more")


def test_empty_pool(restaurants, restaurants_example):
    r = mine_action(restaurants, "system.GOODBYE", restaurants_example, GeneratorConfig(), pool=CandidatePool("system.GOODBYE"))
    assert r.opt == [] and r.conjunction == ex.TRUE
    assert "no candidates" in r.flags


def test_put_on_household_example(household, household_example):
    r = mine_action(household, "agent.put", household_example, GeneratorConfig())
    held = ex.Cmp(ex.Var("inventory"), "==", ex.Param("obj"))
    assert held in r.valid
    # one demo leaves a more specific pair winning; it still contains the atom
    assert any(held in ex.walk(o) for o in r.opt)
    grid = InstanceGrid.full(household, "agent.put", household_example)
    assert (grid.holds(r.conjunction) <= grid.holds(held)).all()


def test_inform_golden_path(restaurants, inform_demos, inform_pool):
    valid = validate(restaurants, inform_pool, inform_demos)
    assert sorted(ex.render(e) for e in valid) == sorted(
        [
            "query_success != none",
            "query_success == true",
            "query_success",
            "query_success is not none",
            "isinstance(slot, str)",
            "slot != 'date'",
            "query_success in (true, false)",
            "requested_slot[slot]",
        ]
    )
    r = rank(restaurants, "system.INFORM", valid, inform_demos)
    clusters = sorted(sorted(ex.render(e) for e in c) for c in r.clusters)
    assert clusters == sorted(
        [
            sorted(["query_success != none", "query_success is not none", "query_success in (true, false)"]),
            sorted(["query_success == true", "query_success"]),
            sorted(["isinstance(slot, str)", "slot != 'date'"]),
            ["requested_slot[slot]"],
        ]
    )
    assert sorted(ex.render(e) for e in r.opt) == ["query_success", "requested_slot[slot]"]


def test_report_round_trip(restaurants, restaurants_example):
    results = mine_all(restaurants, restaurants_example)
    data = report_json(results)
    data["_meta"] = {"manifest": "x"}
    back = load_report_conjunctions(data, restaurants)
    assert back == {a: r.conjunction for a, r in results.items()}
    text = report_text(results)
    assert "system.GOODBYE" in text


def test_mining_is_deterministic(household, household_example):
    a = report_json(mine_all(household, household_example))
    b = report_json(mine_all(household, household_example))
    assert a == b


# ---------------------------------------------------------------- properties


def _random_setup(rng, max_pool=64):
    s = random_schema(rng)
    fn = rng.choice(s.actions)
    demos = random_corpus(s, rng)
    pool = enumerate_candidates(s, fn.name, GeneratorConfig()).typed
    pool = rng.sample(pool, min(len(pool), rng.randint(1, max_pool)))
    return s, fn, demos, pool


@given(st.randoms(use_true_random=False))
def test_validate_agrees_with_execution(rng):
    s, fn, demos, pool = _random_setup(rng)
    valid = validate(s, _pool(fn.name, pool), demos)
    expected = [e for e in pool if all(execute_with_precondition(s, t, fn.name, e).ok for t in demos)]
    assert valid == expected
    # re-validating the survivors keeps all of them
    assert validate(s, _pool(fn.name, valid), demos) == valid


@given(st.randoms(use_true_random=False))
def test_adding_a_demo_never_grows_valid(rng):
    s, fn, demos, pool = _random_setup(rng)
    before = set(validate(s, _pool(fn.name, pool), demos))
    extra = random_corpus(s, rng, 1).trajectories[0]
    from precond.trajectory import Trajectory

    more = Corpus(s.name, demos.trajectories + (Trajectory("extra", extra.calls),))
    assert set(validate(s, _pool(fn.name, pool), more)) <= before


def _brute_sets(s, fn, demos, valid):
    sets = {}
    for e in valid:
        sets[e] = satisfaction_set(s, e, fn.name, demos).instances
    return sets


@given(st.randoms(use_true_random=False))
def test_rank_matches_brute_force(rng):
    s, fn, demos, pool = _random_setup(rng)
    valid = validate(s, _pool(fn.name, pool), demos)
    r = rank(s, fn.name, valid, demos)
    sets = _brute_sets(s, fn, demos, valid)
    brute = brute_force_opt(sets)
    winners = {e for c in r.clusters for e in c if any(o in c for o in r.opt)}
    assert winners == brute
    # anti-chain
    for a in r.opt:
        for b in r.opt:
            assert not sets[a] < sets[b]


@given(st.randoms(use_true_random=False))
def test_conjunction_equivalence_on_demos(rng):
    s, fn, demos, pool = _random_setup(rng)
    valid = validate(s, _pool(fn.name, pool), demos)
    r = rank(s, fn.name, valid, demos)
    grid = InstanceGrid.full(s, fn.name, demos)
    assert (grid.holds(r.conjunction) == grid.holds(ex.conjoin(valid))).all()


@given(st.randoms(use_true_random=False))
def test_representative_is_smallest(rng):
    s, fn, demos, pool = _random_setup(rng)
    valid = validate(s, _pool(fn.name, pool), demos)
    r = rank(s, fn.name, valid, demos)
    for c in r.clusters:
        sizes = [ex.size(e) for e in c]
        hits = [o for o in r.opt if o in c]
        if hits:
            assert ex.size(hits[0]) == min(sizes)
