import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resalloc import InvalidInputError, QuadraticCost, ScalarInstance, composite_step, vector_prox, water_fill
from resalloc.prox import purchase_shares


def prox_objective(p, p_tilde, gamma):
    return -gamma * np.min(p, axis=-1) + 0.5 * np.sum((p - p_tilde) ** 2, axis=-1)


def grid_minimiser(p_tilde, gamma, hi, step):
    axis = np.arange(0.0, hi + step / 2, step)
    pts = np.array(list(itertools.product(axis, repeat=len(p_tilde))))
    vals = prox_objective(pts, np.asarray(p_tilde), gamma)
    return pts[np.argmin(vals)], vals.min()


def test_single_breakpoint():
    res = water_fill([2.0], 1.0)
    assert res.p_center == 3.0 and np.array_equal(res.p_out, [3.0])


def test_two_producers_against_grid():
    res = water_fill([1.0, 3.0], 1.0)
    assert res.p_center == pytest.approx(2.0)
    assert np.allclose(res.p_out, [2.0, 3.0])
    best, _ = grid_minimiser([1.0, 3.0], 1.0, 4.0, 0.01)
    assert np.allclose(best, res.p_out, atol=0.01)


def test_zero_branch():
    res = water_fill([-5.0, -5.0], 4.0)
    assert res.branch == "center-zero"
    assert res.p_center == 0.0 and np.array_equal(res.p_out, [0.0, 0.0])


def test_branch_boundary_is_continuous():
    # sum of negative parts equals gamma exactly
    lo = water_fill([-1.0, -1.0, 3.0], 2.0 - 1e-12)
    hi = water_fill([-1.0, -1.0, 3.0], 2.0 + 1e-12)
    assert lo.branch == "center-zero" and hi.branch == "center-positive"
    assert np.allclose(lo.p_out, hi.p_out, atol=1e-11)


@pytest.mark.parametrize("gamma", [0.0, -1.0, np.inf, np.nan])
def test_bad_gamma(gamma):
    with pytest.raises(InvalidInputError):
        water_fill([1.0], gamma)


def test_bad_prices():
    with pytest.raises(InvalidInputError):
        water_fill([], 1.0)
    with pytest.raises(InvalidInputError):
        water_fill([1.0, np.nan], 1.0)


@given(
    p=st.lists(st.floats(-20, 20), min_size=1, max_size=12),
    gamma=st.floats(1e-3, 30),
)
@settings(max_examples=300, deadline=None)
def test_water_fill_optimality(p, gamma):
    p = np.array(p)
    res = water_fill(p, gamma)
    out = res.p_out
    assert np.all(out >= 0)
    assert np.allclose(out, np.maximum(p, res.p_center))
    lam = purchase_shares(p, res, gamma)
    assert lam.sum() == pytest.approx(1.0, abs=1e-10)
    if res.branch == "center-positive":
        assert np.sum(np.maximum(res.p_center - p, 0)) == pytest.approx(gamma, rel=1e-10, abs=1e-10)
    else:
        assert np.sum(np.maximum(-p, 0)) >= gamma
    # no small perturbation improves the objective
    rng = np.random.default_rng(len(p))
    base = prox_objective(out, p, gamma)
    for _ in range(20):
        q = np.maximum(out + rng.normal(scale=1e-3, size=p.size), 0.0)
        assert prox_objective(q, p, gamma) >= base - 1e-9


@given(
    p=st.lists(st.floats(0, 20), min_size=1, max_size=8),
    gamma=st.floats(1e-3, 30),
    shift=st.floats(-5, 5),
)
@settings(max_examples=100, deadline=None)
def test_translation_equivariance_on_positive_branch(p, gamma, shift):
    p = np.array(p)
    a = water_fill(p, gamma)
    b = water_fill(p + shift, gamma)
    if a.branch == b.branch == "center-positive":
        assert b.p_center == pytest.approx(a.p_center + shift, abs=1e-9)


def test_composite_step_hand_example():
    inst = ScalarInstance([QuadraticCost(0.0, 1.0)], 1.0)
    p_out, lam = composite_step(inst, np.array([2.0]), np.array([1.0]), 1.0)
    assert np.allclose(p_out, [2.0]) and np.allclose(lam, [1.0])


def test_composite_step_with_zero_volumes_is_water_fill():
    inst = ScalarInstance([QuadraticCost(0.0, 1.0)] * 3, 2.0)
    p = np.array([1.0, 0.5, 4.0])
    p_out, lam = composite_step(inst, p, np.zeros(3), 0.5)
    assert np.allclose(p_out, water_fill(p, 1.0).p_out)
    assert lam.sum() == pytest.approx(1.0)


def test_composite_step_fixed_point_at_optimum():
    inst = ScalarInstance([QuadraticCost(a, 2.0) for a in (1.0, 2.0, 5.0)], 3.0)
    # clearing price: producer 3 stays idle, (p - 1)/2 + (p - 2)/2 = 3
    p_star = np.full(3, 4.5)
    x = inst.responses(p_star)
    assert x.sum() == pytest.approx(3.0)
    p_out, _ = composite_step(inst, p_star, x, 1.0 / inst.L)
    assert np.allclose(p_out, p_star, atol=1e-12)


def test_composite_step_rejects_bad_input():
    inst = ScalarInstance([QuadraticCost(0.0, 1.0)] * 2, 1.0)
    with pytest.raises(InvalidInputError):
        composite_step(inst, np.array([1.0]), np.array([1.0, 1.0]), 1.0)
    with pytest.raises(InvalidInputError):
        composite_step(inst, np.array([-1.0, 1.0]), np.zeros(2), 1.0)
    with pytest.raises(InvalidInputError):
        composite_step(inst, np.ones(2), np.zeros(2), 0.0)


def test_vector_prox_rows():
    out = vector_prox([[1.0, 3.0], [-5.0, -5.0]], [1.0, 4.0])
    assert np.allclose(out, [[2.0, 3.0], [0.0, 0.0]])
    same = vector_prox([[1.0, 3.0], [1.0, 3.0]], [1.0, 1.0])
    assert np.array_equal(same[0], same[1])
    assert np.array_equal(vector_prox([[0.5, 2.0]], [1.5])[0], water_fill([0.5, 2.0], 1.5).p_out)
    with pytest.raises(InvalidInputError):
        vector_prox([[1.0, 2.0]], [1.0, 2.0])
