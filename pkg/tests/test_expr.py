import pytest
from hypothesis import given, strategies as st

from precond import expr as ex
from precond.execute import InstanceGrid, eval_expr, initial_state
from support import random_corpus, random_expr, random_schema


def _inform(restaurants):
    return restaurants.function("system.INFORM")


@pytest.mark.parametrize(
    "text, expected",
    [
        ("self.user.requested_slot[slot]", ex.Lookup("requested_slot", (ex.Param("slot"),))),
        ("self.query_success == True", ex.Cmp(ex.Var("query_success"), "==", ex.TRUE)),
        ("query_success is not None", ex.Cmp(ex.Var("query_success"), "is not", ex.NONE)),
        ("not user.no_more", ex.Not(ex.Var("no_more"))),
        ("slot != 'date'", ex.Cmp(ex.Param("slot"), "!=", ex.Lit("date"))),
        ("isinstance(slot, str)", ex.IsStr(ex.Param("slot"))),
        ("True", ex.TRUE),
    ],
)
def test_parse_examples(restaurants, text, expected):
    assert ex.parse_expr(text, restaurants, _inform(restaurants)) == expected


def test_multiway_and_is_left_nested(restaurants):
    e = ex.parse_expr("no_more and selected and affirmed", restaurants, _inform(restaurants))
    assert e == ex.And(ex.And(ex.Var("no_more"), ex.Var("selected")), ex.Var("affirmed"))
    assert ex.conjuncts(e) == [ex.Var("no_more"), ex.Var("selected"), ex.Var("affirmed")]


@pytest.mark.parametrize(
    "text",
    ["hasattr(slot, '__name__')", "no_more +", "len(slot) > 2", "self.user.unknown_flag", "lambda: 1"],
)
def test_unparseable(restaurants, text):
    with pytest.raises((ex.ExprSyntaxError, ex.ExprTypeError)):
        ex.parse_expr(text, restaurants, _inform(restaurants))


def test_unknown_param_is_type_error(restaurants):
    goodbye = restaurants.function("system.GOODBYE")
    with pytest.raises((ex.ExprSyntaxError, ex.ExprTypeError)):
        ex.parse_expr("requested_slot[slot]", restaurants, goodbye)


def test_render_lowercase_constants():
    assert ex.render(ex.Cmp(ex.Var("q"), "is not", ex.NONE)) == "q is not none"
    assert ex.render(ex.Cmp(ex.Var("q"), "==", ex.TRUE)) == "q == true"
    assert ex.render_python(ex.Cmp(ex.Var("q"), "==", ex.TRUE)) == "q == True"


def test_size_and_depth():
    e = ex.And(ex.Var("a"), ex.Not(ex.Var("b")))
    assert ex.size(e) == 4
    assert ex.depth(ex.Var("a")) <= ex.depth(e)


def test_conjoin_inverse():
    parts = [ex.Var("a"), ex.Var("b"), ex.Var("c")]
    assert ex.conjuncts(ex.conjoin(parts)) == parts
    assert ex.conjoin([]) == ex.TRUE


def test_tristate_unset_is_not_true(restaurants):
    e = ex.Cmp(ex.Var("query_success"), "==", ex.TRUE)
    assert eval_expr(e, initial_state(restaurants), {}) is False
    assert eval_expr(ex.Cmp(ex.Var("query_success"), "==", ex.FALSE), initial_state(restaurants), {}) is False


@given(st.randoms(use_true_random=False))
def test_render_parse_round_trip(rng):
    s = random_schema(rng)
    fn = rng.choice(s.actions)
    e = random_expr(s, fn, rng)
    assert ex.parse_expr(ex.render(e), s, fn) == e


@given(st.randoms(use_true_random=False))
def test_de_morgan(rng):
    s = random_schema(rng)
    fn = rng.choice(s.actions)
    a, b = random_expr(s, fn, rng, 2), random_expr(s, fn, rng, 2)
    grid = InstanceGrid.full(s, fn.name, random_corpus(s, rng))
    lhs = grid.holds(ex.Not(ex.And(a, b)))
    rhs = grid.holds(ex.Or(ex.Not(a), ex.Not(b)))
    assert (lhs == rhs).all()
    lhs = grid.holds(ex.Not(ex.Or(a, b)))
    rhs = grid.holds(ex.And(ex.Not(a), ex.Not(b)))
    assert (lhs == rhs).all()


@given(st.randoms(use_true_random=False))
def test_grid_matches_scalar_evaluator(rng):
    s = random_schema(rng)
    fn = rng.choice(s.actions)
    e = random_expr(s, fn, rng)
    grid = InstanceGrid.full(s, fn.name, random_corpus(s, rng))
    got = grid.holds(e)
    for k in range(len(grid)):
        state = grid.states[grid.rows[k]]
        binding = dict(zip(fn.param_names, grid.bindings[grid.cols[k]]))
        assert got[k] == eval_expr(e, state, binding)
