import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aoptglm.design import ApproximateDesign, decompose, point_weights
from aoptglm.errors import InfeasibleError
from aoptglm.glm import logistic, main_effects
from aoptglm.liftone import liftone_optimize
from aoptglm.rounding import round_allocation

from oracles import efficient_rounding, h_direct
from problems import PAID_COUNTS, PAID_MODEL, PAID_POINTS, PAID_WEIGHTS, PCB_COUNTS, PCB_MODEL, PCB_POINTS, PCB_WEIGHTS

LINE = logistic([-2.0, 0.5], main_effects(1))


def test_paid_research_reference_weights():
    exact = round_allocation(PAID_MODEL, ApproximateDesign(PAID_POINTS, PAID_WEIGHTS / PAID_WEIGHTS.sum()), 200)
    assert exact.counts.tolist() == PAID_COUNTS


def test_paid_research_computed_weights():
    w = liftone_optimize(PAID_MODEL, PAID_POINTS).design
    assert round_allocation(PAID_MODEL, w, 200).counts.tolist() == PAID_COUNTS


def test_pcb():
    w = liftone_optimize(PCB_MODEL, PCB_POINTS).design
    assert round_allocation(PCB_MODEL, w, 2880).counts.tolist() == PCB_COUNTS
    d = ApproximateDesign.normalized(PCB_POINTS, PCB_WEIGHTS)
    assert round_allocation(PCB_MODEL, d, 2880).counts.tolist() == PCB_COUNTS


def test_agrees_with_efficient_rounding_on_worked_examples():
    for model, pts, w, n in [(PAID_MODEL, PAID_POINTS, PAID_WEIGHTS, 200), (PCB_MODEL, PCB_POINTS, PCB_WEIGHTS, 2880)]:
        d = ApproximateDesign.normalized(pts, w)
        assert round_allocation(model, d, n).counts.tolist() == efficient_rounding(d.weights, n).tolist()


def test_even_split_needs_no_leftovers():
    d = ApproximateDesign([[0.0], [5.0]], [0.5, 0.5])
    exact, trace = round_allocation(LINE, d, 4, return_trace=True)
    assert exact.counts.tolist() == [2, 2] and trace == []


def test_singular_floors_without_leftovers():
    with pytest.raises(InfeasibleError):
        round_allocation(LINE, ApproximateDesign([[0.0], [5.0]], [1.0, 0.0]), 7)


def test_invalid_n():
    d = ApproximateDesign([[0.0], [5.0]], [0.5, 0.5])
    for n in (0, -3, 2.5):
        with pytest.raises(ValueError):
            round_allocation(LINE, d, n)


def test_float_products_floor_correctly():
    # 0.29 * 100 is 28.999999999999996 in binary floating point
    d = ApproximateDesign([[0.0], [5.0], [9.0]], [0.29, 0.57, 0.14])
    assert round_allocation(LINE, d, 100).counts.tolist() == [29, 57, 14]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(3, 400))
def test_conservation_floors_and_greedy_choice(seed, n):
    r = np.random.default_rng(seed)
    m = int(r.integers(3, 7))
    w = r.dirichlet(np.ones(m))
    w[r.random(m) < 0.3] = 0.0
    if np.count_nonzero(w) < 2:
        w[:2] = [0.5, 0.5]
    d = ApproximateDesign.normalized(np.linspace(0, 10, m)[:, None], w)
    try:
        exact, trace = round_allocation(LINE, d, n, return_trace=True)
    except InfeasibleError:
        floors = np.floor(n * d.weights + 1e-9 * n)
        assert floors.sum() == n and np.count_nonzero(floors) < 2
        return
    c = exact.counts
    assert c.sum() == n
    assert np.all(c >= np.floor(n * d.weights + 1e-9 * n * (d.weights > 0)))
    assert np.all(c[d.weights == 0] == 0)
    X, v = point_weights(LINE, d.points)
    counts = np.floor(n * d.weights + 1e-9 * n * (d.weights > 0))
    for step in trace:
        elig = np.flatnonzero(d.weights > 0)
        # gains recomputed independently, without the (n - k + 1) normalisation
        raw = np.array([h_direct(X, v, counts + np.eye(m)[i]) for i in elig])
        g = step.gains[elig]
        assert step.chosen == elig[np.flatnonzero(g >= g.max() * (1 - 1e-12))[0]]
        assert raw[list(elig).index(step.chosen)] >= raw.max() * (1 - 1e-9)
        counts[step.chosen] += 1


def test_symmetric_ties_go_to_smallest_index():
    d = liftone_optimize(PAID_MODEL, PAID_POINTS).design
    _, trace = round_allocation(PAID_MODEL, d, 200, return_trace=True)
    # points 1, 2, 3 are interchangeable, so each step is a tie won by the first open index
    assert [s.chosen for s in trace] == [1, 2, 3]
    g = trace[0].gains[1:4]
    assert np.ptp(g) <= 1e-12 * g.max()


def test_normalisation_does_not_change_choice():
    d = liftone_optimize(PAID_MODEL, PAID_POINTS).design
    exact, trace = round_allocation(PAID_MODEL, d, 200, return_trace=True)
    X, v = point_weights(PAID_MODEL, d.points)
    counts = np.floor(200 * d.weights + 1e-9 * 200 * (d.weights > 0))
    for step in trace:
        elig = np.flatnonzero(d.weights > 0)
        raw = np.array([decompose(X, (counts + np.eye(6)[i]) * v).h for i in elig])
        assert elig[np.flatnonzero(raw >= raw.max() * (1 - 1e-12))[0]] == step.chosen
        counts[step.chosen] += 1
