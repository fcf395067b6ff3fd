"""Greedy rounding of an approximate allocation to an exact one.

Start from the floors n_i = floor(n w_i) and hand out the k leftover units one
at a time, each to the support point whose extra unit gives the largest
A-criterion.  Points with zero weight never receive a unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import ApproximateDesign, ExactDesign, decompose, point_weights
from .errors import InfeasibleError
from .glm import GlmModel

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class RoundingStep:
    remaining: int
    gains: np.ndarray  # d_i for every eligible index, nan elsewhere
    chosen: int


def round_allocation(model: GlmModel, design: ApproximateDesign, n: int, return_trace: bool = False):
    """Exact allocation of ``n`` units over ``design.points``.

    Ties between equal gains go to the smallest index.  With
    ``return_trace=True`` the per-unit gains are returned alongside.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    w = np.asarray(design.weights, dtype=float)
    # the nudge keeps 0.29 * 100 = 28.999999999999996 from flooring to 28
    counts = np.floor(n * w + 1e-9 * n * (w > 0)).astype(int)
    k = n - int(counts.sum())
    if k < 0:
        raise ValueError("weights sum above one")
    eligible = np.flatnonzero(w > 0)
    X, v = point_weights(model, design.points)

    if k == 0 and decompose(X, counts * v).singular:
        raise InfeasibleError("floor allocation is singular and no units are left to repair it")

    trace = []
    while k > 0:
        total = n - k + 1
        gains = np.full(w.size, np.nan)
        for i in eligible:
            trial = counts.astype(float)
            trial[i] += 1.0
            gains[i] = decompose(X, trial / total * v).h
        g = gains[eligible]
        # gains equal up to round-off count as ties; the first index wins
        best = int(eligible[np.flatnonzero(g >= g.max() * (1.0 - TIE_RTOL))[0]])
        trace.append(RoundingStep(k, gains, best))
        counts[best] += 1
        k -= 1

    exact = ExactDesign(design.points, counts)
    return (exact, trace) if return_trace else exact
