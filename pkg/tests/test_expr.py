import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affconn import expr as ex
from conftest import central_diff, rand_expr

P = ex.parse


class TestParse:
    def test_basic_tree(self):
        e = P("x1 + 2*y1")
        assert e == ex.Add(ex.Var("x1"), ex.Mul(ex.Const(2.0), ex.Var("y1")))

    def test_term_level_minus_binds_product(self):
        # -x1*y1 negates the whole product
        assert P("-x1*y1") == ex.Neg(ex.Mul(ex.Var("x1"), ex.Var("y1")))

    def test_pow_signed_exponent(self):
        e = P("(1 + x1)^-2")
        assert isinstance(e, ex.Pow)
        assert e.exponent == -2.0

    def test_functions(self):
        assert P("sin(cos(x1))") == ex.Sin(ex.Cos(ex.Var("x1")))

    def test_scientific_numbers(self):
        assert ex.evaluate(P("1.5e-3 + 2E2"), {}) == pytest.approx(200.0015)

    def test_parameters_must_be_declared(self):
        with pytest.raises(ex.ParseError):
            P("c*x1")
        e = P("c*x1", params=("c",))
        assert ex.free_vars(e) == frozenset({"c", "x1"})

    def test_error_carries_offset(self):
        with pytest.raises(ex.ParseError) as err:
            P("x1 + *2")
        assert err.value.offset == 5

    def test_unbalanced_paren(self):
        with pytest.raises(ex.ParseError):
            P("(x1 + 1")

    def test_trailing_garbage(self):
        with pytest.raises(ex.ParseError):
            P("x1 )")

    @pytest.mark.parametrize("text", [
        "x1 + y1*y2 - 3",
        "-x1*y1",
        "(x1 - 1)/(x1 + 2)",
        "sin(x1)^2 + cos(x1)^2",
        "(1 + x1)^-2",
        "exp(-0.5*u)",
        "2/(1 + x1) - sqrt(x1 + 2)",
        "-(x1 + y1)",
        "x1 - -y1",
        "0.001*log(x1 + 3)",
    ])
    def test_print_parse_round_trip(self, text):
        e = P(text)
        s = ex.to_str(e)
        assert P(s) == e
        assert ex.to_str(P(s)) == s


class TestEvaluate:
    def test_env_lookup(self):
        assert ex.evaluate(P("x1*y1 - u"), {"x1": 2, "y1": 3, "u": 1}) == 5

    def test_missing_variable(self):
        with pytest.raises(ex.ExprError):
            ex.evaluate(P("x1"), {})

    @pytest.mark.parametrize("text,env", [
        ("1/x1", {"x1": 0.0}),
        ("log(x1)", {"x1": -1.0}),
        ("sqrt(x1)", {"x1": -4.0}),
        ("x1^-1", {"x1": 0.0}),
        ("(-2)^0.5", {}),
    ])
    def test_domain_errors(self, text, env):
        with pytest.raises(ex.EvalDomainError):
            ex.evaluate(P(text), env)

    def test_overflow_is_domain_error(self):
        with pytest.raises(ex.EvalDomainError):
            ex.evaluate(P("exp(x1)"), {"x1": 1e4})


class TestFold:
    def test_constant_arithmetic(self):
        assert ex.fold(P("2*3 + 1")) == ex.Const(7.0)

    def test_identities(self):
        x = ex.Var("x1")
        assert ex.fold(ex.Add(x, ex.Const(0.0))) == x
        assert ex.fold(ex.Mul(x, ex.Const(1.0))) == x
        assert ex.fold(ex.Mul(x, ex.Const(0.0))) == ex.Const(0.0)
        assert ex.fold(ex.Sub(x, x)) == ex.Const(0.0)
        assert ex.fold(ex.Add(x, ex.Neg(x))) == ex.Const(0.0)
        assert ex.fold(ex.Neg(ex.Neg(x))) == x
        assert ex.fold(ex.Mul(ex.Const(-1.0), x)) == ex.Neg(x)

    def test_division_folds(self):
        assert ex.fold(ex.Div(ex.Const(0.0), ex.Var("x1"))) == ex.Const(0.0)
        x = ex.Var("x1")
        assert ex.fold(ex.Div(x, ex.Const(1.0))) == x
        # a literal zero denominator is left alone, not evaluated
        e = ex.Div(ex.Const(1.0), ex.Const(0.0))
        assert ex.fold(e) == e

    def test_fold_preserves_value(self, rng):
        for _ in range(50):
            e = rand_expr(rng, ["x1", "y1"], 4)
            f = ex.fold(e)
            env = {"x1": float(rng.uniform(-0.8, 0.8)),
                   "y1": float(rng.uniform(-0.8, 0.8))}
            assert ex.evaluate(f, env) == pytest.approx(
                ex.evaluate(e, env), rel=1e-12, abs=1e-12)


class TestDifferentiate:
    def test_polynomial(self):
        d = ex.differentiate(P("x1^3 - 2*x1"), "x1")
        assert ex.evaluate(d, {"x1": 2.0}) == pytest.approx(10.0)

    def test_chain_rule_against_fd(self, rng):
        for _ in range(30):
            e = rand_expr(rng, ["x1", "y1", "u"], 3)
            d = ex.differentiate(e, "y1")
            env = {n: float(rng.uniform(-0.7, 0.7)) for n in ("x1", "y1", "u")}
            assert ex.evaluate(d, env) == pytest.approx(
                central_diff(e, "y1", env), rel=1e-6, abs=1e-6)

    def test_derivative_of_free_variable_absent(self):
        assert ex.differentiate(P("x1 + 1"), "y1") == ex.Const(0.0)


class TestIsZero:
    def test_structural(self):
        assert ex.is_zero(P("x1 - x1"))
        assert ex.is_zero(P("0*y1"))

    def test_sampled_cancellation(self):
        # numerically zero but not structurally foldable
        assert ex.is_zero(P("sin(x1)^2 + cos(x1)^2 - 1"))

    def test_nonzero(self):
        assert not ex.is_zero(P("x1*y1"))
        assert not ex.is_zero(P("1e-5*x1"))


class TestSubst:
    def test_replaces_and_keeps_rest(self):
        e = ex.subst(P("x1 + y1"), {"y1": P("2*u")})
        assert ex.evaluate(e, {"x1": 1.0, "u": 3.0}) == 7.0

    def test_var_sort_key_orders_names(self):
        names = ["y2", "x10", "u", "x2", "y1", "x1"]
        ordered = sorted(names, key=ex.var_sort_key)
        assert ordered == ["u", "x1", "x2", "x10", "y1", "y2"]


@st.composite
def _const_exprs(draw):
    v = draw(st.floats(min_value=-50, max_value=50,
                       allow_nan=False, allow_infinity=False))
    return ex.Const(round(v, 4))


@settings(max_examples=60, deadline=None)
@given(st.recursive(
    _const_exprs() | st.sampled_from([ex.Var("x1"), ex.Var("y1")]),
    lambda inner: st.builds(ex.Add, inner, inner)
    | st.builds(ex.Sub, inner, inner)
    | st.builds(ex.Mul, inner, inner)
    | st.builds(ex.Neg, inner)
    | st.builds(ex.Sin, inner)
    | st.builds(ex.Cos, inner),
    max_leaves=12))
def test_print_parse_is_identity_on_trees(e):
    s = ex.to_str(e)
    back = P(s)
    env = {"x1": 0.37, "y1": -0.52}
    assert ex.evaluate(back, env) == pytest.approx(
        ex.evaluate(e, env), rel=1e-12, abs=1e-12)
    assert ex.to_str(back) == s


def test_esum_empty_and_single():
    assert ex.esum([]) == ex.Const(0.0)
    assert ex.esum([ex.Var("x1")]) == ex.Var("x1")
