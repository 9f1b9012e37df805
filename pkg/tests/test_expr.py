import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adapted_mech import expr
from adapted_mech.expr import (
    Add, Const, Coord, CoordinateIndexError, Div, EvalDomainError,
    ExprSyntaxError, Fun, Mul, Neg, Param, Pow, Sub, UnknownIdentifierError,
    eval_jet, eval_value, eval_value_grad, free_coordinates, free_parameters,
    parse, print_expression,
)
from adapted_mech.frame import BundlePoint


def test_parse_literal_product():
    assert parse("0.5*y1^2", 1) == Mul(Const(0.5), Pow(Coord("y", 1), Const(2.0)))


def test_parse_unary_minus_precedence():
    assert parse("x1 - -x1", 1) == Sub(Coord("x", 1), Neg(Coord("x", 1)))


def test_parse_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse("k*z1", 1, {"k"})


def test_parse_coordinate_out_of_range():
    with pytest.raises(CoordinateIndexError):
        parse("x3 + y1", 2)
    with pytest.raises(CoordinateIndexError):
        parse("x0", 2)


def test_parse_syntax_error_has_position():
    with pytest.raises(ExprSyntaxError) as err:
        parse("x1 + * 2", 1)
    assert err.value.position == 5


def test_parse_rejects_empty_and_trailing():
    with pytest.raises(ExprSyntaxError):
        parse("   ", 1)
    with pytest.raises(ExprSyntaxError):
        parse("x1 x1", 1)
    with pytest.raises(ExprSyntaxError):
        parse("(x1", 1)


def test_pow_is_right_associative_and_tighter_than_neg():
    assert eval_value(parse("2^3^2", 1), BundlePoint([0.0], [0.0])) == 512.0
    assert parse("-x1^2", 1) == Neg(Pow(Coord("x", 1), Const(2.0)))
    assert parse("2^-3", 1) == Pow(Const(2.0), Neg(Const(3.0)))


def test_function_call_parses():
    assert parse("sin(x1)*cos(y1)", 1) == Mul(Fun("sin", Coord("x", 1)),
                                              Fun("cos", Coord("y", 1)))


def test_print_examples():
    assert print_expression(Mul(Const(0.5), Pow(Coord("y", 1), Const(2.0)))) == "0.5*y1^2"
    assert print_expression(Const(3.0)) == "3"
    assert print_expression(Neg(Coord("x", 1))) == "-x1"


@pytest.mark.parametrize("tree", [
    Pow(Pow(Coord("x", 1), Const(2.0)), Const(3.0)),
    Pow(Coord("x", 1), Pow(Const(2.0), Const(3.0))),
    Pow(Neg(Coord("x", 1)), Const(2.0)),
    Neg(Pow(Coord("x", 1), Const(2.0))),
    Sub(Coord("x", 1), Sub(Coord("y", 1), Const(1.0))),
    Sub(Sub(Coord("x", 1), Coord("y", 1)), Const(1.0)),
    Mul(Coord("x", 1), Neg(Coord("y", 1))),
    Neg(Neg(Coord("x", 1))),
    Div(Const(1.0), Add(Const(2.0), Pow(Coord("y", 1), Const(2.0)))),
    Pow(Coord("x", 1), Neg(Coord("y", 1))),
    Fun("exp", Add(Coord("x", 1), Const(1.0))),
])
def test_print_parse_round_trip_tricky(tree):
    assert parse(print_expression(tree), 1) == tree


def _expressions(n: int = 2):
    coords = st.builds(Coord, st.sampled_from(["x", "y"]),
                       st.integers(min_value=1, max_value=n))
    consts = st.one_of(
        st.integers(min_value=0, max_value=9).map(lambda v: Const(float(v))),
        st.floats(min_value=0.0, max_value=10.0, allow_nan=False,
                  allow_infinity=False).map(Const),
    )
    params = st.sampled_from(["k", "mu"]).map(Param)
    leaves = st.one_of(consts, coords, params)

    def extend(children):
        return st.one_of(
            st.builds(Neg, children),
            st.builds(Fun, st.sampled_from(list(expr.FUNCTIONS)), children),
            st.builds(Add, children, children),
            st.builds(Sub, children, children),
            st.builds(Mul, children, children),
            st.builds(Div, children, children),
            st.builds(Pow, children, children),
        )

    return st.recursive(leaves, extend, max_leaves=12)


@given(_expressions())
@settings(max_examples=300, deadline=None)
def test_print_parse_round_trip_random(tree):
    assert parse(print_expression(tree), 2, {"k", "mu"}) == tree


def test_eval_jet_quadratic():
    jet = eval_jet(parse("0.5*y1^2", 1), BundlePoint([1.0], [3.0]))
    assert jet.value == 4.5
    assert np.array_equal(jet.gradient, [0.0, 3.0])
    assert np.array_equal(jet.hessian, [[0.0, 0.0], [0.0, 1.0]])


def test_eval_jet_bilinear():
    jet = eval_jet(parse("x1*y1", 1), BundlePoint([2.0], [5.0]))
    assert jet.value == 10.0
    assert np.array_equal(jet.gradient, [5.0, 2.0])
    assert np.array_equal(jet.hessian, [[0.0, 1.0], [1.0, 0.0]])


def test_eval_jet_sin_at_origin():
    jet = eval_jet(parse("sin(x1)", 1), BundlePoint([0.0], [0.0]))
    assert jet.value == 0.0
    assert np.array_equal(jet.gradient, [1.0, 0.0])
    assert np.allclose(jet.hessian, 0.0)


def test_eval_jet_hessian_symmetric_exactly():
    e = parse("exp(x1*y1) + sin(x1)*cos(y1) / (2 + x1^2)", 1)
    jet = eval_jet(e, BundlePoint([0.3], [-0.7]))
    assert np.array_equal(jet.hessian, jet.hessian.T)


def test_eval_orders_agree():
    e = parse("exp(x1) * sin(y2) + k*x2^3", 2, {"k"})
    p = BundlePoint([0.4, -0.2], [1.0, 0.6])
    params = {"k": 2.5}
    jet = eval_jet(e, p, params)
    v, g = eval_value_grad(e, p, params)
    assert v == jet.value
    assert np.array_equal(g, jet.gradient)
    assert eval_value(e, p, params) == jet.value


def test_parameters_bind_at_evaluation():
    e = parse("k*x1", 1, {"k"})
    assert eval_value(e, BundlePoint([3.0], [0.0]), {"k": 2.0}) == 6.0
    with pytest.raises(expr.ExprError):
        eval_value(e, BundlePoint([3.0], [0.0]), {})


def test_sum_and_product_rules_by_construction():
    a = parse("sin(x1)", 1)
    b = parse("x1*y1^2", 1)
    p = BundlePoint([0.8], [1.3])
    ja, jb = eval_jet(a, p), eval_jet(b, p)
    jsum = eval_jet(Add(a, b), p)
    assert np.allclose(jsum.gradient, ja.gradient + jb.gradient, atol=1e-15)
    assert np.allclose(jsum.hessian, ja.hessian + jb.hessian, atol=1e-15)
    jprod = eval_jet(Mul(a, b), p)
    expected_grad = ja.value * jb.gradient + jb.value * ja.gradient
    cross = np.outer(ja.gradient, jb.gradient)
    expected_hess = (ja.value * jb.hessian + jb.value * ja.hessian
                     + cross + cross.T)
    assert np.allclose(jprod.gradient, expected_grad, atol=1e-14)
    assert np.allclose(jprod.hessian, expected_hess, atol=1e-14)


def test_integer_powers_allow_negative_base():
    p = BundlePoint([-2.0], [0.0])
    assert eval_value(parse("x1^3", 1), p) == -8.0
    jet = eval_jet(parse("x1^3", 1), p)
    assert jet.gradient[0] == 12.0
    assert jet.hessian[0, 0] == -12.0
    assert eval_value(parse("x1^-2", 1), p) == 0.25


def test_non_integer_power_requires_positive_base():
    p = BundlePoint([4.0], [0.0])
    assert eval_value(parse("x1^0.5", 1), p) == 2.0
    with pytest.raises(EvalDomainError):
        eval_value(parse("x1^0.5", 1), BundlePoint([-4.0], [0.0]))


@pytest.mark.parametrize("text,coords", [
    ("log(x1)", [-1.0, 0.0]),
    ("sqrt(x1)", [-1.0, 0.0]),
    ("1/x1", [0.0, 1.0]),
    ("x1^-1", [0.0, 1.0]),
])
def test_domain_errors_name_the_subexpression(text, coords):
    with pytest.raises(EvalDomainError) as err:
        eval_jet(parse(text, 1), BundlePoint([coords[0]], [coords[1]]))
    assert "x1" in str(err.value)


def test_domain_error_from_value_only_walk():
    with pytest.raises(EvalDomainError):
        eval_value(parse("log(x1 - 5)", 1), BundlePoint([1.0], [0.0]))


def test_free_coordinate_and_parameter_queries():
    e = parse("k*x1 + sin(y2) - mu", 2, {"k", "mu"})
    assert free_coordinates(e) == {("x", 1), ("y", 2)}
    assert free_parameters(e) == {"k", "mu"}


@given(st.floats(min_value=-3.0, max_value=3.0, allow_nan=False),
       st.floats(min_value=-3.0, max_value=3.0, allow_nan=False))
@settings(max_examples=80, deadline=None)
def test_jet_gradient_matches_fd_random_points(x, y):
    e = parse("sin(x1)*y1 + 0.25*x1^2*y1^2", 1)
    p = BundlePoint([x], [y])
    jet = eval_jet(e, p)
    h = 1e-6
    for k in range(2):
        fd = (eval_value(e, p.shifted(k, h)) - eval_value(e, p.shifted(k, -h))) / (2 * h)
        assert jet.gradient[k] == pytest.approx(fd, rel=1e-6, abs=1e-8)
