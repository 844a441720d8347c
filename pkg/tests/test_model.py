import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resalloc import (
    CallableCost,
    InvalidInputError,
    QuadraticCost,
    ScalarInstance,
    SeparableCost,
    UnsupportedInstanceError,
    VectorInstance,
    best_response,
    best_response_vector,
    dual_value,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    primal_value,
    save_instance,
    validate,
)
from resalloc.model import JointCost, dumps_instance

from conftest import quad_instance, quadratic_instances


def grid_best_response(cost, p, hi, step):
    xs = np.arange(0.0, hi + step / 2, step)
    return xs[np.argmax(p * xs - cost.evaluate(xs))]


# --- best responses ----------------------------------------------------------


def test_quadratic_best_response_matches_grid_search():
    cost = QuadraticCost(100.0, 2.0)
    assert best_response(cost, 300.0) == 100.0
    assert grid_best_response(cost, 300.0, 200.0, 1e-3) == pytest.approx(100.0, abs=1e-3)


def test_price_below_marginal_cost_gives_zero():
    assert best_response(QuadraticCost(100.0, 2.0), 50.0) == 0.0
    assert best_response(QuadraticCost(0.0, 1.0), 0.0) == 0.0


@pytest.mark.parametrize("p", [math.nan, math.inf, -1.0])
def test_bad_price_rejected(p):
    with pytest.raises(InvalidInputError):
        best_response(QuadraticCost(1.0, 1.0), p)


@given(alpha=st.floats(0, 50), mu=st.floats(0.1, 10), p=st.floats(0, 100))
@settings(max_examples=200, deadline=None)
def test_best_response_is_first_order_optimal(alpha, mu, p):
    cost = QuadraticCost(alpha, mu)
    x = best_response(cost, p)
    assert x >= 0
    # p - f'(x) = 0 when x > 0, <= 0 at the boundary
    if x > 0:
        assert cost.derivative(x) == pytest.approx(p, rel=1e-12, abs=1e-9)
    else:
        assert p <= cost.derivative(0.0) + 1e-12


@given(alpha=st.floats(0, 20), mu=st.floats(0.5, 5), p=st.floats(0, 60))
@settings(max_examples=100, deadline=None)
def test_bisection_agrees_with_closed_form(alpha, mu, p):
    q = QuadraticCost(alpha, mu)
    generic = CallableCost(q.evaluate, q.derivative, mu)
    assert best_response(generic, p) == pytest.approx(best_response(q, p), abs=1e-9)


def test_bisection_on_non_quadratic_cost_matches_grid():
    # f(x) = x^2/2 + x^4/4, f'(x) = x + x^3
    cost = CallableCost(lambda x: x**2 / 2 + x**4 / 4, lambda x: x + x**3, 1.0, "quartic")
    x = best_response(cost, 10.0)
    assert x + x**3 == pytest.approx(10.0, rel=1e-10)
    assert grid_best_response(cost, 10.0, 4.0, 1e-4) == pytest.approx(x, abs=1e-4)


def test_separable_best_response():
    inst = VectorInstance.from_matrix([[QuadraticCost(0, 1), QuadraticCost(0, 1)]], [1.0, 1.0])
    assert np.array_equal(best_response_vector(inst, 0, [1.0, 2.0]), [1.0, 2.0])
    assert np.array_equal(best_response_vector(inst, 0, [0.0, 0.0]), [0.0, 0.0])


def test_single_product_reduces_to_scalar():
    cost = QuadraticCost(3.0, 2.0)
    inst = VectorInstance.from_matrix([[cost]], [1.0])
    assert best_response_vector(inst, 0, [7.0])[0] == best_response(cost, 7.0)


def test_best_response_vector_rejects_bad_prices():
    inst = VectorInstance.from_matrix([[QuadraticCost(0, 1), QuadraticCost(0, 1)]], [1.0, 1.0])
    with pytest.raises(InvalidInputError):
        best_response_vector(inst, 0, [1.0])
    with pytest.raises(InvalidInputError):
        best_response_vector(inst, 0, [1.0, -1.0])


def test_joint_cost_needs_oracle():
    joint = JointCost(lambda x: float(x @ x), 2.0)
    inst = VectorInstance((joint,), [1.0, 1.0])
    with pytest.raises(UnsupportedInstanceError):
        best_response_vector(inst, 0, [1.0, 1.0])
    with_oracle = JointCost(lambda x: float(x @ x), 2.0, oracle=lambda p: p / 2.0)
    inst = VectorInstance((with_oracle,), [1.0, 1.0])
    assert np.allclose(best_response_vector(inst, 0, [1.0, 3.0]), [0.5, 1.5])


# --- dual and primal values --------------------------------------------------


def test_dual_value_hand_examples():
    half = QuadraticCost(0.0, 1.0)
    assert dual_value(ScalarInstance([half], 1.0), [1.0]) == pytest.approx(-0.5)
    assert dual_value(ScalarInstance([half, half], 1.0), [1.0, 2.0]) == pytest.approx(1.5)


def test_dual_value_zero_prices():
    inst = quad_instance([1.0, 2.0, 0.0], 1.0, 5.0)
    assert dual_value(inst, np.zeros(3)) == 0.0


def test_dual_value_rejects_bad_prices():
    inst = quad_instance([1.0, 2.0], 1.0, 5.0)
    with pytest.raises(InvalidInputError):
        dual_value(inst, [1.0])
    with pytest.raises(InvalidInputError):
        dual_value(inst, [1.0, -2.0])
    with pytest.raises(InvalidInputError):
        dual_value(inst, [1.0, math.nan])


@given(inst=quadratic_instances(), data=st.data())
@settings(max_examples=100, deadline=None)
def test_weak_duality(inst, data):
    # phi(p) >= -f(x) for every feasible x
    p = np.array(data.draw(st.lists(st.floats(0, 50), min_size=inst.n, max_size=inst.n)))
    w = np.array(data.draw(st.lists(st.floats(0.01, 1), min_size=inst.n, max_size=inst.n)))
    x = inst.C * w / w.sum() * data.draw(st.floats(1.0, 2.0))
    assert dual_value(inst, p) >= -primal_value(inst, x) - 1e-7 * (1 + abs(primal_value(inst, x)))


@given(inst=quadratic_instances(), data=st.data())
@settings(max_examples=100, deadline=None)
def test_dual_value_is_convex(inst, data):
    draw = lambda: np.array(data.draw(st.lists(st.floats(0, 50), min_size=inst.n, max_size=inst.n)))
    p, q = draw(), draw()
    t = data.draw(st.floats(0, 1))
    mid = dual_value(inst, t * p + (1 - t) * q)
    assert mid <= t * dual_value(inst, p) + (1 - t) * dual_value(inst, q) + 1e-7 * (1 + abs(mid))


def test_primal_value_examples():
    half = QuadraticCost(0.0, 1.0)
    assert primal_value(ScalarInstance([half, half], 1.0), [1.0, 2.0]) == pytest.approx(2.5)
    assert primal_value(ScalarInstance([QuadraticCost(100, 2)], 1.0), [10.0]) == pytest.approx(1100.0)
    inst = quad_instance([1.0, 3.0], [1.0, 2.0], 1.0)
    assert primal_value(inst, [0.0, 0.0]) == 0.0


def test_primal_value_rejects_bad_volumes():
    inst = quad_instance([1.0, 3.0], 1.0, 1.0)
    with pytest.raises(InvalidInputError):
        primal_value(inst, [1.0])
    with pytest.raises(InvalidInputError):
        primal_value(inst, [1.0, -1.0])


# --- validation --------------------------------------------------------------


def test_validate_reports_problems():
    assert validate(quad_instance([1.0], 1.0, 1.0)) == []
    assert any("modulus must be positive" in s for s in validate(ScalarInstance([QuadraticCost(1, 0)], 1.0)))
    assert any("demand must be positive" in s for s in validate(ScalarInstance([QuadraticCost(1, 1)], -1.0)))
    assert any("linear coefficient" in s for s in validate(ScalarInstance([QuadraticCost(-1, 1)], 1.0)))


def test_validate_flags_weak_convexity():
    # f(x) = x^2/2 claimed with modulus 2
    weak = CallableCost(lambda x: 0.5 * x * x, lambda x: x, 2.0)
    assert any("grows slower" in s for s in validate(ScalarInstance([weak], 1.0)))


def test_validate_never_raises():
    broken = CallableCost(lambda x: 1 / 0, lambda x: 1 / 0, 1.0)
    report = validate(ScalarInstance([broken], 1.0))
    assert report and "evaluation failed" in report[0]


def test_validate_vector_instance():
    inst = VectorInstance.from_matrix([[QuadraticCost(0, 1), QuadraticCost(0, 0)]], [1.0, 0.0])
    report = validate(inst)
    assert any("product 1: modulus" in s for s in report)
    assert any("every product" in s for s in report)


# --- serialisation -----------------------------------------------------------


def test_scalar_round_trip(tmp_path):
    inst = quad_instance([100.5, 250.0], 2.0, 10.0, {"seed": 3})
    path = tmp_path / "i.json"
    save_instance(inst, path)
    again = load_instance(path)
    assert dumps_instance(again) == path.read_text()
    assert again.meta == {"seed": 3}
    assert again.costs == inst.costs


def test_vector_round_trip():
    inst = VectorInstance.from_matrix(
        [[QuadraticCost(1, 2), QuadraticCost(3, 4)], [QuadraticCost(5, 6), QuadraticCost(7, 8)],
         [QuadraticCost(0, 1), QuadraticCost(0, 1)]],
        [1.0, 2.0],
    )
    d = json.loads(json.dumps(instance_to_dict(inst)))
    again = instance_from_dict(d)
    assert again.n == 3 and again.m == 2
    assert [k.parts for k in again.costs] == [k.parts for k in inst.costs]
    assert np.array_equal(again.c, inst.c)


@pytest.mark.parametrize(
    "payload",
    [{"kind": "tensor"}, {"kind": "scalar", "C": 1.0}, {"kind": "scalar", "C": 1, "costs": [{"type": "cubic"}]},
     {"kind": "vector", "m": 2, "c": [1.0], "costs": []}],
)
def test_malformed_instances_rejected(payload):
    with pytest.raises(InvalidInputError):
        instance_from_dict(payload)


def test_non_quadratic_not_serialisable():
    inst = ScalarInstance([CallableCost(lambda x: x * x, lambda x: 2 * x, 2.0)], 1.0)
    with pytest.raises(UnsupportedInstanceError):
        instance_to_dict(inst)


def test_vector_views_match_products():
    costs = [[QuadraticCost(1, 2), QuadraticCost(3, 4)], [QuadraticCost(5, 6), QuadraticCost(7, 8)]]
    inst = VectorInstance.from_matrix(costs, [1.0, 2.0])
    P = np.array([[10.0, 20.0], [30.0, 40.0]])
    X = inst.responses_matrix(P)
    for j in range(2):
        assert np.allclose(X[j], inst.product(j).responses(P[j]))
    assert inst.total_cost_matrix(X) == pytest.approx(
        sum(inst.product(j).total_cost(X[j]) for j in range(2))
    )
    # generic path agrees with the cached quadratic arrays
    generic = VectorInstance(tuple(SeparableCost(tuple(r)) for r in costs) + (), [1.0, 2.0])
    object.__setattr__(generic, "_quad", None)
    assert np.allclose(generic.responses_matrix(P), X)
