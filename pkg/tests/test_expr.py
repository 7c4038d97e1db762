import random

import pytest

from domainflow.expr import (
    BOOL,
    INT,
    Env,
    EvalError,
    ExprError,
    Scope,
    TypeErr,
    evaluate,
    parse_expr,
    print_expr,
    type_of,
)
from domainflow.values import ValueType

from expr_oracle import SCOPE, VARIABLES, oracle_eval, random_env, random_expr


def ev(src, **env):
    return evaluate(parse_expr(src), Env(env))


def test_equality_on_integers():
    assert ev("guess == secret", guess=5, secret=5) is True
    assert ev("guess == secret", guess=4, secret=5) is False


def test_boolean_tautology():
    for x in (True, False):
        assert ev("x and not x", x=x) is False


def test_membership():
    assert ev("n in bag", n=2, bag=[1, 2, 3]) is True
    assert ev("n in bag", n=9, bag=[1, 2, 3]) is False
    assert ev("n in bag", n=9, bag=[]) is False


def test_arithmetic_and_precedence():
    assert ev("1 + 2 * 3") == 7
    assert ev("(1 + 2) * 3") == 9
    assert ev("7 / 2") == 3
    assert ev("-7 / 2") == -4  # floor division
    assert ev("7.0 / 2.0") == 3.5
    assert ev("succ - (succ / 2) * 2", succ=2) == 0
    assert ev("succ - (succ / 2) * 2", succ=1) == 1


def test_comparison_chain_not_allowed():
    with pytest.raises(ExprError):
        parse_expr("1 < 2 < 3")


def test_division_by_zero():
    with pytest.raises(EvalError):
        ev("1 / 0")
    with pytest.raises(EvalError):
        ev("1.0 / 0.0")


def test_missing_variable():
    with pytest.raises(EvalError):
        ev("ghost + 1")


def test_short_circuit_masks_missing_name():
    assert ev("yes or ghost", yes=True) is True


def test_record_field_walk():
    assert ev("rec.id", rec={"id": 4, "tv": "x"}) == 4
    with pytest.raises(EvalError):
        ev("rec.nope", rec={"id": 4})


def test_string_ordering_and_concat_rejected():
    assert ev('"a" < "b"') is True
    scope = Scope({})
    with pytest.raises(TypeErr):
        type_of(parse_expr('"a" + "b"'), scope)


def test_type_checker_rejects_mixed_comparison():
    scope = Scope({"s": ValueType("String"), "n": INT})
    with pytest.raises(TypeErr):
        type_of(parse_expr("s == n"), scope)
    with pytest.raises(TypeErr):
        type_of(parse_expr("n + 1.0"), scope)
    assert type_of(parse_expr("n + 1 > 2"), scope) == BOOL


def test_guard_must_be_boolean():
    assert type_of(parse_expr("1 + 1"), Scope({})) == INT


def test_print_round_trip_simple():
    for src in ("1 + 2 * 3", "not (a and b)", "(not a) == b", "n in bag", '-x / 2.0', 'p.q.r == "s"'):
        tree = parse_expr(src)
        assert parse_expr(print_expr(tree)) == tree


def test_print_round_trip_random():
    rng = random.Random(7)
    for _ in range(500):
        want = rng.choice([BOOL, INT])
        tree = random_expr(rng, want, 4)
        assert parse_expr(print_expr(tree)) == tree


def test_oracle_agreement_sample():
    # The full 10^4-expression run lives in the acceptance suite.
    rng = random.Random(99)
    for _ in range(1500):
        want = rng.choice([BOOL, INT, ValueType("Float")])
        tree = random_expr(rng, want, 4)
        type_of(tree, SCOPE)  # generator must only emit well-typed trees
        env = random_env(rng)
        expected, err = oracle_eval(tree, env)
        try:
            got = evaluate(tree, Env(env))
        except EvalError:
            assert err == "error", f"{print_expr(tree)} with {env}"
            continue
        assert err is None, f"{print_expr(tree)} with {env}"
        assert got == expected and type(got) == type(expected), f"{print_expr(tree)} with {env}"


def test_scope_covers_all_generator_variables():
    assert set(SCOPE.variables) == set(VARIABLES)
