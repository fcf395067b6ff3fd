import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aoptglm.design import ApproximateDesign, h_value, point_weights
from aoptglm.errors import DegenerateError, DomainError, InfeasibleError, RankError, SingularError, WeightError
from aoptglm.glm import GlmModel, Interaction, Intercept, Linear, Power, PredictorBasis, logistic, main_effects, normal
from aoptglm.liftone import (LiftOneCoefficients, certify, classify, liftone_coefficients, liftone_optimize,
                             maximize_hi, saturated_aopt, saturated_weights)

from oracles import fisher, h_direct, hi_grid, logistic_weights, projected_gradient, simplex_search
from problems import PAID_MODEL, PAID_POINTS, PAID_WEIGHTS, PCB_MODEL, PCB_POINTS, PCB_WEIGHTS, factorial


def coeffs(a, b, A, B):
    return LiftOneCoefficients(a=a, b=b, a_j=np.array([A, 0.0]), b_j=np.array([B, 0.0]), i=0, w_i=0.0, p=2)


# ---------------------------------------------------------------------------
# one-dimensional maximiser
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("a,b,A,B,x,h", [
    (2, 2, 4, 4, 0.0, 0.5),
    (4, 1, 2, 2, 1 / 3, 2 / 3),
    (5, 1, 2, 1, math.sqrt(1.5) - 1, (math.sqrt(8) - math.sqrt(3)) ** 2),
    (1, 0, 3, 0, 0.0, 1 / 3),
])
def test_maximize_hi_examples(a, b, A, B, x, h):
    xs, hs = maximize_hi(coeffs(a, b, A, B))
    assert xs == pytest.approx(x, abs=1e-12)
    assert hs == pytest.approx(h, rel=1e-12)


@pytest.mark.parametrize("a,b,A,B", [(4, 1, 2, 2), (5, 1, 2, 1)])
def test_maximize_hi_against_grid(a, b, A, B):
    xs, hs = maximize_hi(coeffs(a, b, A, B))
    xg, hg = hi_grid(a, b, A, B)
    assert abs(xs - xg) <= 2e-6
    assert hs >= hg - 1e-12


def test_case_numbers():
    assert classify(coeffs(5, 1, 2, 1))[0] == 1
    assert classify(coeffs(4, 1, 2, 2))[0] == 2
    assert classify(coeffs(1, 0, 3, 0))[0] == 3
    assert classify(coeffs(2, 2, 4, 4))[0] == 4


def test_degenerate_direction():
    with pytest.raises(DegenerateError):
        maximize_hi(coeffs(0, 0, 0, 0))


def _random_design(r, m, p):
    X = r.normal(size=(m, p))
    v = r.uniform(0.05, 1.0, m)
    w = r.dirichlet(np.ones(m))
    return X, v, w


def _as_model(X, v):
    """Linear model with q(x) = x and nu = 1, rows scaled by sqrt(v)."""
    p = X.shape[1]
    model = GlmModel(normal(1.0), "identity", np.zeros(p), PredictorBasis(tuple(Linear(k) for k in range(p))))
    return model, X * np.sqrt(v)[:, None]


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 5), st.integers(0, 4))
def test_maximize_hi_matches_grid_on_real_designs(seed, p, extra):
    r = np.random.default_rng(seed)
    X, v, w = _random_design(r, p + extra + 1, p)
    model, P = _as_model(X, v)
    i = int(r.integers(P.shape[0]))
    if r.random() < 0.3:
        w[i] = 0.0
        w /= w.sum()
    c = liftone_coefficients(model, ApproximateDesign(P, w), i)
    xs, hs = maximize_hi(c)
    _, hg = hi_grid(c.a, c.b, c.A, c.B, n=200_001)
    assert hs >= hg * (1 - 1e-9)
    # returned value equals h of the lifted design
    lifted = w * (1 - xs) / (1 - w[i])
    lifted[i] = xs
    assert hs == pytest.approx(h_direct(X, v, lifted), rel=1e-8)


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

def test_coefficients_two_by_two():
    # F(x) = diag(x, 1 - x): f = x(1 - x), deleting column 0 leaves 1 - x, deleting column 1 leaves x
    model, P = _as_model(np.eye(2), np.ones(2))
    c = liftone_coefficients(model, ApproximateDesign(P, [0.5, 0.5]), 0)
    assert (c.a, c.b) == pytest.approx((1.0, 0.0), abs=1e-14)
    assert c.a_j == pytest.approx([0.0, 1.0], abs=1e-14)
    assert c.b_j == pytest.approx([1.0, 0.0], abs=1e-14)
    assert maximize_hi(c) == pytest.approx((0.5, 0.25))


def test_zero_weight_b_equals_f():
    r = np.random.default_rng(3)
    X, v, w = _random_design(r, 6, 3)
    w[2] = 0.0
    w /= w.sum()
    model, P = _as_model(X, v)
    c = liftone_coefficients(model, ApproximateDesign(P, w), 2)
    assert c.b == pytest.approx(np.linalg.det(fisher(X, v, w)), rel=1e-12)


def test_reconstruction_on_random_designs():
    r = np.random.default_rng(11)
    for _ in range(100):
        p = int(r.integers(2, 6))
        X, v, w = _random_design(r, p + int(r.integers(1, 5)), p)
        model, P = _as_model(X, v)
        i = int(r.integers(len(w)))
        c = liftone_coefficients(model, ApproximateDesign(P, w), i)
        assert c.f_i(w[i]) == pytest.approx(np.linalg.det(fisher(X, v, w)), rel=1e-8)
        assert c.h_i(w[i]) == pytest.approx(h_direct(X, v, w), rel=1e-8)
        assert c.a + c.b > 0
        for x in r.uniform(0, 0.99, 3):
            lifted = w * (1 - x) / (1 - w[i])
            lifted[i] = x
            assert c.f_i(x) == pytest.approx(np.linalg.det(fisher(X, v, lifted)), rel=1e-7)


def test_coefficient_errors():
    model, P = _as_model(np.eye(2), np.ones(2))
    with pytest.raises(WeightError):
        liftone_coefficients(model, ApproximateDesign(P, [1.0, 0.0]), 0)
    with pytest.raises(SingularError):
        liftone_coefficients(model, ApproximateDesign(P, [0.0, 1.0]), 0)


# ---------------------------------------------------------------------------
# saturated designs
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("k", [2, 3, 4])
def test_saturated_factorial_linear_is_uniform(k):
    terms = [Intercept()] + [Interaction(s) if len(s) > 1 else Linear(s[0])
                             for r in range(1, k + 1) for s in itertools.combinations(range(k), r)]
    model = GlmModel(normal(1.0), "identity", np.zeros(2**k), PredictorBasis(tuple(terms)))
    d = saturated_aopt(model, factorial(k))
    assert np.allclose(d.weights, 2.0**-k, atol=1e-12)


def test_saturated_factorial_glm_zero_effects_uniform():
    terms = [Intercept(), Linear(0), Linear(1), Interaction((0, 1))]
    model = logistic([0.7, 0, 0, 0], PredictorBasis(tuple(terms)))
    assert np.allclose(saturated_aopt(model, factorial(2)).weights, 0.25, atol=1e-12)


def test_saturated_two_points_closed_form():
    r = np.random.default_rng(5)
    for _ in range(20):
        X, v = r.normal(size=(2, 2)), r.uniform(0.1, 2, 2)
        w = saturated_weights(X, v)
        ref = 1 / np.sqrt(v * (X[:, 0] ** 2 + X[:, 1] ** 2))
        assert np.allclose(w, ref / ref.sum(), rtol=1e-12)


def test_saturated_random_four_by_four_vs_projected_gradient():
    r = np.random.default_rng(6)
    X, v = r.normal(size=(4, 4)), r.uniform(0.1, 1.0, 4)
    w = saturated_weights(X, v)
    _, h_ref = projected_gradient(X, v)
    assert abs(h_direct(X, v, w) - h_ref) <= 1e-6 * h_ref
    assert h_direct(X, v, w) >= h_ref * (1 - 1e-12)


def test_saturated_errors():
    with pytest.raises(RankError):
        saturated_weights(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))
    with pytest.raises(DomainError):
        saturated_weights(np.eye(2), np.array([1.0, 0.0]))


# ---------------------------------------------------------------------------
# optimiser
# ---------------------------------------------------------------------------

def test_paid_research_weights():
    res = liftone_optimize(PAID_MODEL, PAID_POINTS)
    assert res.certified and res.method == "liftone"
    assert np.max(np.abs(res.design.weights - PAID_WEIGHTS)) <= 5e-4
    assert res.design.weights[4] == 0.0 and res.design.weights[5] == 0.0


def test_pcb_weights():
    res = liftone_optimize(PCB_MODEL, PCB_POINTS)
    assert res.certified
    assert np.max(np.abs(res.design.weights - PCB_WEIGHTS)) <= 1e-3


def test_paid_research_random_starts_agree():
    ref = liftone_optimize(PAID_MODEL, PAID_POINTS).h
    for s in range(5):
        res = liftone_optimize(PAID_MODEL, PAID_POINTS, init="random", seed=s)
        assert res.certified and res.h == pytest.approx(ref, rel=1e-9)


def test_m_equals_p_delegates_to_saturated():
    pts = np.array([[0.0], [5.0]])
    res = liftone_optimize(logistic([-2, 0.5], main_effects(1)), pts)
    assert res.method == "saturated"
    assert np.array_equal(res.design.weights, saturated_aopt(logistic([-2, 0.5], main_effects(1)), pts).weights)


def test_single_parameter_takes_argmax():
    model = logistic([0.3], PredictorBasis((Linear(0),)))
    pts = np.array([[0.5], [1.5], [3.0]])
    res = liftone_optimize(model, pts)
    X, v = point_weights(model, pts)
    assert res.method == "argmax" and res.design.weights[int(np.argmax(v * X[:, 0] ** 2))] == 1.0


def test_infeasible_inputs():
    with pytest.raises(InfeasibleError):
        liftone_optimize(PCB_MODEL, PCB_POINTS[:3])
    # collinear rows: no allocation is nonsingular
    model, _ = _as_model(np.eye(2), np.ones(2))
    with pytest.raises(InfeasibleError):
        liftone_optimize(model, [[1.0, 2.0], [2.0, 4.0], [-3.0, -6.0]])


def test_monotone_ascent_and_simplex_closure():
    r = np.random.default_rng(12)
    for run in range(100):
        k = int(r.integers(2, 4))
        beta = r.uniform(-3, 3, k + 1)
        res = liftone_optimize(logistic(beta, main_effects(k)), factorial(k), seed=run)
        hs = np.array(res.h_trace)
        assert np.all(np.diff(hs) >= -1e-12 * hs[:-1])
        assert abs(res.design.weights.sum() - 1) <= 1e-12
        assert res.certified


def test_certificate_soundness():
    r = np.random.default_rng(13)
    for run in range(30):
        beta = r.uniform(-3, 3, 4)
        res = liftone_optimize(logistic(beta, main_effects(3)), factorial(3), seed=run)
        X = np.column_stack([np.ones(8), factorial(3)])
        v = logistic_weights(X, beta)
        w = res.design.weights
        h = h_direct(X, v, w)
        ok, best = certify(X, v, w)
        assert res.certified and ok
        assert np.all(best <= h * (1 + 1e-8))


def test_oracle_agreement_small_instances():
    r = np.random.default_rng(14)
    for run in range(20):
        p = int(r.integers(2, 4))
        m = int(r.integers(p + 1, 7))
        X, v = r.normal(size=(m, p)), r.uniform(0.1, 1.0, m)
        model, P = _as_model(X, v)
        res = liftone_optimize(model, P, seed=run)
        _, h_ref = simplex_search(X, v, coarse=0.1 if m > 5 else 0.05)
        assert abs(res.h - h_ref) <= 1e-5 * h_ref
        # the sweep may stop once the certificate holds at its 1e-8 slack
        assert res.h >= h_ref * (1 - 1e-7)


def test_midpoint_of_optima_is_optimal():
    # x = 1 and x = -1 give the same row (1, x^2), so the optimal split between them is free
    model = GlmModel(normal(1.0), "identity", [0, 0], PredictorBasis((Intercept(), Power(0, 2.0))))
    pts = np.array([[-1.0], [0.0], [1.0]])
    sols = [liftone_optimize(model, pts, init="random", seed=s) for s in range(6)]
    a = sols[0]
    b = max(sols, key=lambda s: abs(s.design.weights[0] - a.design.weights[0]))
    assert abs(a.design.weights[0] - b.design.weights[0]) > 1e-3
    assert a.h == pytest.approx(b.h, rel=1e-9)
    X, v = point_weights(model, pts)
    mid = 0.5 * (a.design.weights + b.design.weights)
    assert certify(X, v, mid)[0]
    assert h_direct(X, v, mid) == pytest.approx(a.h, rel=1e-9)
