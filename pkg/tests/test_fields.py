import numpy as np
import pytest

from fpctrl.fields import Expression, ExpressionError, as_component_fields, evaluate_field


def test_parabola_matches_closed_form():
    f = Expression("x*(1-x)")
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(f(x1=x), x * (1 - x))


def test_aliases_and_constants():
    f = Expression("sin(pi*x) + cos(pi*y)")
    x = np.array([0.25, 0.5])
    y = np.array([0.0, 1.0])
    np.testing.assert_allclose(f(x1=x, x2=y), np.sin(np.pi * x) + np.cos(np.pi * y))
    assert f.variables == {"x1", "x2"}


def test_scalar_and_time_dependence():
    f = Expression("2*t - 1")
    assert f(t=0.75) == pytest.approx(0.5)


def test_division_and_unary_minus():
    f = Expression("-x/2 + 1/4")
    np.testing.assert_allclose(f(x1=np.array([1.0])), np.array([-0.25]))


@pytest.mark.parametrize("bad", [
    "x**2",            # power not in the grammar
    "foo(x)",          # unknown function
    "__import__('os')",
    "x; y",
    "lambda: 1",
    "q + 1",           # unknown name
    "sin(x, 2)",       # wrong arity
    "",
])
def test_rejected_expressions(bad):
    with pytest.raises(ExpressionError):
        Expression(bad)


def test_missing_coordinate_is_an_error():
    with pytest.raises(ExpressionError, match="needs coordinate"):
        Expression("x + t")(x1=np.zeros(3))


def test_evaluate_field_accepts_scalars_callables_expressions():
    pts = np.linspace(0, 1, 5).reshape(-1, 1)
    np.testing.assert_allclose(evaluate_field(0.7, pts), np.full(5, 0.7))
    np.testing.assert_allclose(evaluate_field("x", pts), pts[:, 0])
    np.testing.assert_allclose(evaluate_field(lambda x: 3 * x, pts), 3 * pts[:, 0])


def test_evaluate_field_2d_callable_gets_both_axes():
    pts = np.array([[0.1, 0.2], [0.3, 0.4]])
    np.testing.assert_allclose(evaluate_field(lambda x, y: x + 10 * y, pts), [2.1, 4.3])


def test_evaluate_field_rejects_nonfinite():
    with pytest.raises(ValueError, match="non-finite"):
        evaluate_field("1/x", np.zeros((1, 1)))


def test_component_normalization():
    fields = as_component_fields(["x", "y"], 2)
    assert len(fields) == 2 and all(isinstance(f, Expression) for f in fields)
    with pytest.raises(ValueError, match="2 components"):
        as_component_fields("x", 2)
    (single,) = as_component_fields(0.0, 1)
    assert single == 0.0
