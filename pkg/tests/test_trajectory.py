import pytest
from hypothesis import given, strategies as st

from precond.trajectory import (
    Call,
    Corpus,
    CorpusError,
    Trajectory,
    parse_call,
    parse_corpus_text,
    prefix,
    serialize_corpus,
)
from support import random_corpus, random_schema


def test_restaurants_example(restaurants_example):
    (traj,) = restaurants_example
    assert len(traj.calls) == 41
    assert traj.calls[0] == Call("user.INFORM_INTENT", ("FindRestaurants",))


def test_household_example(household_example):
    (traj,) = household_example
    assert traj.calls[-2:] == (
        Call("agent.put", ("spraybottle 1", "garbagecan 1")),
        Call("agent.remove_inventory", ("spraybottle 1",)),
    )
    assert traj.goal == "put some spraybottle on garbagecan"


def test_prefix_examples(restaurants_example):
    (traj,) = restaurants_example
    assert prefix(traj, 0).calls == ()
    assert prefix(traj, len(traj.calls)) == traj
    assert prefix(traj, 5).calls[-1] == Call("user.INFORM", ("cuisine",))
    with pytest.raises(IndexError):
        prefix(traj, len(traj.calls) + 1)


@given(st.integers(0, 41), st.integers(0, 41))
def test_prefix_composes(restaurants_example, a, b):
    (traj,) = restaurants_example
    a, b = max(a, b), min(a, b)
    assert prefix(prefix(traj, a), b).calls == prefix(traj, b).calls


def test_parse_call():
    assert parse_call("system.REQUEST('city')") == Call("system.REQUEST", ("city",))
    assert parse_call("system.set_query_status(False)") == Call("system.set_query_status", (False,))
    with pytest.raises(CorpusError):
        parse_call("system.REQUEST(city=1)")
    with pytest.raises(CorpusError):
        parse_call("not a call")


def test_arity_error(restaurants):
    with pytest.raises(CorpusError, match="arity"):
        parse_corpus_text("#schema restaurants\n#trajectory t\nuser.INFORM()\n", restaurants)


def test_vocabulary_error(restaurants):
    with pytest.raises(CorpusError, match="vocabulary"):
        parse_corpus_text("#schema restaurants\n#trajectory t\nuser.INFORM('shoe_size')\n", restaurants)


def test_wrong_schema_header(restaurants):
    with pytest.raises(CorpusError, match="schema"):
        parse_corpus_text("#schema buses\n#trajectory t\nsystem.GOODBYE()\n", restaurants)


def test_duplicate_ids_rejected():
    t = Trajectory("x", (Call("system.GOODBYE"),))
    with pytest.raises(CorpusError):
        Corpus("restaurants", (t, t))


def test_round_trip_examples(restaurants, restaurants_example, household, household_example):
    for schema, corpus in ((restaurants, restaurants_example), (household, household_example)):
        text = serialize_corpus(corpus)
        again = parse_corpus_text(text, schema)
        assert again == corpus
        assert serialize_corpus(again) == text


@given(st.randoms(use_true_random=False))
def test_round_trip_random(rng):
    s = random_schema(rng)
    c = random_corpus(s, rng)
    text = serialize_corpus(c, ("#note generated",))
    again = parse_corpus_text(text, s)
    assert again == c
    assert again.header == ("#note generated",)
    assert serialize_corpus(again) == text
