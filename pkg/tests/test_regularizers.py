import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import l1p_objective, prox_l1p_oracle
from tcurband.regularizers import (
    div,
    g3dtv,
    grad,
    grad_stack,
    l1p_threshold,
    prox_l1,
    prox_l1p,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
small_vectors = arrays(np.float64, st.integers(1, 6), elements=finite)
thresholds = st.floats(0, 5, allow_nan=False)


def test_grad_examples(rng):
    assert not grad(np.full((3, 4, 2), 7.0), 2).any()
    tube = np.array([1.0, 2.0, 4.0]).reshape(3, 1, 1)
    assert np.array_equal(grad(tube, 1).ravel(), [1, 2, -3])
    x = rng.standard_normal((3, 4, 5))
    for axis in (1, 2, 3):
        assert np.allclose(grad(x + 2.5, axis), grad(x, axis))


def test_grad_bad_axis():
    with pytest.raises(ValueError):
        grad(np.zeros((2, 2, 2)), 0)
    with pytest.raises(ValueError):
        div(np.zeros((2, 2, 2)), 4)


def test_div_examples():
    y = np.array([1.0, 0.0, 0.0]).reshape(3, 1, 1)
    assert np.array_equal(div(y, 1).ravel(), [-1, 1, 0])
    assert not div(grad(np.ones((2, 3, 4)), 3), 3).any()


@pytest.mark.parametrize("axis", [1, 2, 3])
def test_adjoint_identity(rng, axis):
    for _ in range(20):
        x = rng.standard_normal((5, 4, 6))
        y = rng.standard_normal((5, 4, 6))
        lhs = np.vdot(grad(x, axis), y)
        rhs = np.vdot(x, div(y, axis))
        assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(x) * np.linalg.norm(y)


def test_grad_components_telescope(rng):
    x = rng.standard_normal((4, 5, 6))
    for axis, g in enumerate(grad_stack(x)):
        assert np.allclose(g.sum(axis=axis), 0.0)


def test_g3dtv_examples(rng):
    assert g3dtv(np.full((3, 3, 3), 2.0)) == 0
    x = rng.standard_normal((3, 4, 5))
    aniso = sum(np.abs(grad(x, i)).sum() for i in (1, 2, 3))
    assert g3dtv(x, p=1) == pytest.approx(aniso)
    x = np.array([0.0, 1.0]).reshape(1, 1, 2)
    assert g3dtv(x, p=2) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        g3dtv(x, p=0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 2, 4), elements=finite), st.sampled_from([1, 2, 3, 4]))
def test_g3dtv_nonnegative_and_zero_iff_constant(x, p):
    val = g3dtv(x, p)
    assert val >= 0
    constant = np.ptp(x) == 0
    assert (val == 0) == constant


def test_prox_l1_examples():
    assert prox_l1(np.array(2.5), 1.0) == pytest.approx(1.5)
    assert prox_l1(np.array(-2.5), 1.0) == pytest.approx(-1.5)
    assert not prox_l1(np.array([0.3, -1.0, 1.0]), 1.0).any()
    z = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(prox_l1(z, 0.0), z)
    with pytest.raises(ValueError):
        prox_l1(z, -1.0)


def test_prox_l1p_examples(rng):
    z = rng.standard_normal((3, 4, 2))
    assert np.array_equal(prox_l1p(z, 0.7, p=1), prox_l1(z, 0.7))
    assert np.allclose(prox_l1p(np.array([3.0, 1.0]), 0.5, p=2), [1.5, 0.0])
    for p in (1, 2, 3, 4):
        assert not prox_l1p(np.zeros(4), 2.0, p).any()
    with pytest.raises(ValueError):
        prox_l1p(z, 1.0, p=5)
    with pytest.raises(ValueError):
        prox_l1p(z, -1.0, p=2)


def test_prox_l1p_worked_example_threshold():
    # s = 3 - s on the active set {1}; theta = 2 * 0.5 * s
    assert l1p_threshold(np.array([3.0, 1.0]), 0.5, 2) == pytest.approx(1.5)


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_prox_l1p_matches_oracle(rng, p):
    for _ in range(25):
        z = rng.standard_normal(rng.integers(1, 5)) * rng.choice([0.1, 1.0, 5.0])
        t = 10 ** rng.uniform(-3, 1)
        x = prox_l1p(z, t, p)
        x_ref = prox_l1p_oracle(z, t, p)
        assert np.max(np.abs(x - x_ref)) <= 1e-5
        assert l1p_objective(x, z, t, p) <= l1p_objective(x_ref, z, t, p) + 1e-8


@settings(max_examples=100, deadline=None)
@given(small_vectors, thresholds, st.sampled_from([1, 2, 3, 4]))
def test_prox_l1p_is_a_shrinkage(z, t, p):
    x = prox_l1p(z, t, p)
    assert np.abs(x).sum() <= np.abs(z).sum() + 1e-12
    support = x != 0
    assert np.all(np.sign(x[support]) == np.sign(z[support]))
    assert np.all(np.abs(x) <= np.abs(z) + 1e-12)


@settings(max_examples=50, deadline=None)
@given(small_vectors, st.sampled_from([1, 2, 3, 4]))
def test_prox_l1p_monotone_in_t(z, p):
    norms = [np.abs(prox_l1p(z, t, p)).sum() for t in np.geomspace(1e-4, 10, 15)]
    assert np.all(np.diff(norms) <= 1e-10)


@settings(max_examples=100, deadline=None)
@given(small_vectors, thresholds, st.sampled_from([2, 3, 4]))
def test_prox_l1p_optimality_condition(z, t, p):
    # x = soft(z, theta) with theta = t p ||x||_1^(p-1)
    x = prox_l1p(z, t, p)
    theta = t * p * np.abs(x).sum() ** (p - 1)
    assert np.allclose(x, prox_l1(z, theta), atol=1e-9 * (1 + np.abs(z).max()))
