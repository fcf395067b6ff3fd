"""A-optimal allocations on a fixed, finite set of design points.

Along a lift-one direction (move weight w_i to x, rescale the rest by
(1-x)/(1-w_i)) the determinant and its principal minors are low-order
polynomials in x,

    f_i(x)      = a x (1-x)^(p-1) + b (1-x)^p
    f_i^(-j)(x) = a_j x (1-x)^(p-2) + b_j (1-x)^(p-1)

so h_i(x) = f_i / sum_j f_i^(-j) is a ratio of a quadratic and a linear
function of x and can be maximised in closed form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .design import ApproximateDesign, decompose, minor_dets, point_weights, psd_det
from .errors import DegenerateError, DomainError, InfeasibleError, NonConvergence, RankError, SingularError, WeightError
from .glm import GlmModel

log = logging.getLogger(__name__)

CASE_RTOL = 1e-10
CERT_RTOL = 1e-8
PRUNE_TOL = 1e-12
# early exit also needs the sensitivity gap: h is flat to second order, so a
# 1e-8 slack in h_i alone still lets phi exceed tr(F^-1) by about 1e-4
GAP_RTOL = 5e-5
DEFAULT_SEED = 20240601
# below this weight the a/b extraction evaluates f at x=1/2 instead of
# dividing by w_i (same polynomial, no cancellation)
_SMALL_WEIGHT = 1e-6


@dataclass(frozen=True)
class LiftOneCoefficients:
    a: float
    b: float
    a_j: np.ndarray
    b_j: np.ndarray
    i: int
    w_i: float
    p: int

    @property
    def A(self) -> float:
        return float(np.sum(self.a_j))

    @property
    def B(self) -> float:
        return float(np.sum(self.b_j))

    def f_i(self, x):
        p = self.p
        return self.a * x * (1 - x) ** (p - 1) + self.b * (1 - x) ** p

    def h_i(self, x):
        """(b-a)x^2 + (a-2b)x + b over (A-B)x + B."""
        x = np.asarray(x, dtype=float)
        a, b, A, B = self.a, self.b, self.A, self.B
        num = (b - a) * x**2 + (a - 2 * b) * x + b
        den = (A - B) * x + B
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        return out if out.ndim else float(out)


@dataclass
class LiftOneResult:
    design: ApproximateDesign
    iterations: int
    certified: bool
    h: float
    method: str = "liftone"
    seed: int | None = None
    h_trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Saturated designs (m = p)
# ---------------------------------------------------------------------------

def saturated_weights(X: np.ndarray, v: np.ndarray) -> np.ndarray:
    """w_i proportional to sqrt(c_i / nu_i), c = diag((X X^T)^{-1})."""
    X = np.asarray(X, dtype=float)
    m, p = X.shape
    if m != p:
        raise ValueError(f"saturated solution needs m == p, got m={m}, p={p}")
    if np.linalg.matrix_rank(X) < p:
        raise RankError("model matrix of the saturated design is singular")
    if np.any(v <= 0):
        raise DomainError("saturated solution requires nu_i > 0 at every point")
    Xinv = np.linalg.inv(X)
    c = np.sum(Xinv**2, axis=0)  # diag(X^{-T} X^{-1})
    r = np.sqrt(c / v)
    return r / r.sum()


def saturated_aopt(model: GlmModel, points) -> ApproximateDesign:
    X, v = point_weights(model, points)
    return ApproximateDesign(np.asarray(points, dtype=float).reshape(X.shape[0], -1), saturated_weights(X, v))


# ---------------------------------------------------------------------------
# Coefficients and the one-dimensional maximiser
# ---------------------------------------------------------------------------

def _clamp(v, scale):
    tol = max(1e-14, 1e-9 * scale)
    v = np.asarray(v, dtype=float)
    if np.any(v < -tol):
        raise FloatingPointError(f"lift-one coefficient {v.min():.3e} is negative beyond round-off (scale {scale:.3e})")
    return np.maximum(v, 0.0)


def _lifted(F, G, w_i, x):
    return (1.0 - x) / (1.0 - w_i) * (F - w_i * G) + x * G


def _coefficients(F, G, w_i, i, f_w=None, minors_w=None) -> LiftOneCoefficients:
    """Coefficients for direction i given F(w) and G = nu_i q_i q_i^T."""
    p = F.shape[0]
    if w_i >= 1.0:
        raise WeightError(f"cannot lift coordinate {i}: w_i = {w_i} >= 1")
    if w_i < 0.0:
        raise WeightError(f"negative weight {w_i} at coordinate {i}")
    if f_w is None:
        f_w = psd_det(F)
    if minors_w is None:
        minors_w = minor_dets(F)
    if f_w <= 0.0:
        raise SingularError("lift-one coefficients need f(w) > 0")
    if w_i == 0.0:
        b, b_j = f_w, minors_w.copy()
        F_half = _lifted(F, G, w_i, 0.5)
        a = psd_det(F_half) * 2.0**p - b
        a_j = minor_dets(F_half) * 2.0 ** (p - 1) - b_j
    elif w_i < _SMALL_WEIGHT:
        F0 = _lifted(F, G, w_i, 0.0)
        F_half = _lifted(F, G, w_i, 0.5)
        b, b_j = psd_det(F0), minor_dets(F0)
        a = psd_det(F_half) * 2.0**p - b
        a_j = minor_dets(F_half) * 2.0 ** (p - 1) - b_j
    else:
        F0 = _lifted(F, G, w_i, 0.0)
        b, b_j = psd_det(F0), minor_dets(F0)
        a = (f_w - b * (1 - w_i) ** p) / (w_i * (1 - w_i) ** (p - 1))
        a_j = (minors_w - b_j * (1 - w_i) ** (p - 1)) / (w_i * (1 - w_i) ** (p - 2))
    scale_f = max(f_w, b)
    scale_m = max(float(np.max(minors_w)), float(np.max(b_j)))
    return LiftOneCoefficients(
        a=float(_clamp(a, scale_f)), b=float(_clamp(b, scale_f)),
        a_j=_clamp(a_j, scale_m), b_j=_clamp(b_j, scale_m), i=int(i), w_i=float(w_i), p=p,
    )


def liftone_coefficients(model: GlmModel, design: ApproximateDesign, i: int) -> LiftOneCoefficients:
    """a, b, a_j, b_j for lifting coordinate i (0-based) of ``design``."""
    X, v = point_weights(model, design.points)
    w = design.weights
    F = decompose(X, w * v).fisher
    G = v[i] * np.outer(X[i], X[i])
    return _coefficients(F, G, float(w[i]), i)


def _gt(u, v, scale):
    return u > v + CASE_RTOL * scale


def _eq(u, v, scale):
    return abs(u - v) <= CASE_RTOL * scale


def classify(c: LiftOneCoefficients) -> tuple[int, float]:
    """Return (case number 1-4, x*) following the four-case rule."""
    a, b, A, B = c.a, c.b, c.A, c.B
    if A + B <= 0.0:
        raise DegenerateError(f"direction {c.i} carries no information (A = B = 0)")
    # h_i is invariant (up to a constant factor) under scaling (a, b) and
    # (A, B) separately, so compare on the unit scale
    s_ab = a + b
    if s_ab <= 0.0:
        return 4, 0.0
    a, b = a / s_ab, b / s_ab
    A, B = A / (A + B), B / (A + B)
    one = 1.0
    A_eq_B = _eq(A, B, one)
    if (not A_eq_B and _gt(A, 0, one) and _gt(B, 0, one) and _gt(a, b, one)
            and _gt(a * B, b * A, one) and _gt((a - b) * B, b * A, one)):
        t = np.sqrt(A * (a * B - b * A) / (a - b))
        # (t - B)/(A - B) rewritten without the A - B cancellation
        x = (a * B - b * (A + B)) / ((a - b) * (t + B))
        return 1, float(x)
    if A_eq_B and _gt(a, 2 * b, one):
        return 2, float((a - 2 * b) / (2 * a - 2 * b))
    if not A_eq_B and _eq(B, 0, one) and _eq(b, 0, one):
        return 3, 0.0
    return 4, 0.0


def maximize_hi(c: LiftOneCoefficients) -> tuple[float, float]:
    """Maximiser x* in [0, 1] of h_i and the maximum value."""
    case, x = classify(c)
    if case == 3:
        log.debug("direction %d is boundary-degenerate (b = B = 0); using limit a/A", c.i)
        return 0.0, c.a / c.A
    if case == 4:
        if c.B <= 0.0:
            raise DegenerateError(f"direction {c.i}: B = 0 with b > 0 contradicts f(w) > 0")
        return 0.0, c.b / c.B
    return x, c.h_i(x)


# ---------------------------------------------------------------------------
# Optimiser
# ---------------------------------------------------------------------------

def _initial_weights(init, m, rng):
    if isinstance(init, str):
        key = init.lower().replace("_", "")
        if key == "uniform":
            return np.full(m, 1.0 / m)
        if key in ("random", "randomexponential", "exponential"):
            u = rng.exponential(1.0, size=m)
            return u / u.sum()
        raise ValueError(f"unknown init {init!r}")
    w = np.asarray(init, dtype=float).ravel()
    if w.size != m or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("explicit initial weights must be m nonnegative numbers")
    return w / w.sum()


def _h_from(F):
    lam = np.linalg.eigvalsh(F)
    if lam[0] <= 1e-12 * max(1.0, lam[-1]):
        return 0.0
    return 1.0 / float(np.sum(1.0 / lam))


def certify(X, v, w, rtol: float = CERT_RTOL) -> tuple[bool, np.ndarray]:
    """Check that every w_i maximises its h_i; returns (ok, best h_i per i)."""
    F = (X.T * (w * v)) @ X
    h = _h_from(F)
    f_w, minors_w = psd_det(F), minor_dets(F)
    best = np.empty(len(w))
    for i in range(len(w)):
        G = v[i] * np.outer(X[i], X[i])
        best[i] = maximize_hi(_coefficients(F, G, w[i], i, f_w, minors_w))[1]
    return bool(np.all(best <= h * (1 + rtol))), best


def _sensitivity_gap(X, v, F) -> float:
    """max_i nu_i q_i^T F^-2 q_i / tr(F^-1) - 1 over the candidate points."""
    try:
        Finv = np.linalg.inv(F)
    except np.linalg.LinAlgError:
        return np.inf
    phi = v * np.einsum("ij,jk,ik->i", X, Finv @ Finv, X)
    return float(np.max(phi) / np.trace(Finv) - 1.0)


def _optimize_weights(X, v, w, epsilon, rng, max_sweeps):
    m, p = X.shape
    F = (X.T * (w * v)) @ X
    h = _h_from(F)
    trace = [h]
    for sweep in range(1, max_sweeps + 1):
        h_start = h
        for i in rng.permutation(m):
            G = v[i] * np.outer(X[i], X[i])
            c = _coefficients(F, G, w[i], i)
            x, h_star = maximize_hi(c)
            if x >= 1.0 - 1e-12 or h_star <= h:
                continue
            w_new = w * ((1.0 - x) / (1.0 - w[i]))
            w_new[i] = x
            w_new /= w_new.sum()
            F_new = (X.T * (w_new * v)) @ X
            h_new = _h_from(F_new)
            if h_new >= h:
                w, F, h = w_new, F_new, h_new
                trace.append(h)
        gain = h - h_start
        if gain <= epsilon * h_start:
            return w, sweep, trace
        # slow ridges: stop as soon as no single direction can improve h
        if gain <= CERT_RTOL * h_start and _sensitivity_gap(X, v, F) <= GAP_RTOL and certify(X, v, w)[0]:
            return w, sweep, trace
    raise NonConvergence(f"lift-one did not converge in {max_sweeps} sweeps")


def liftone_optimize(model: GlmModel, points, init="uniform", epsilon: float = 1e-10,
                     seed: int | None = None, max_sweeps: int = 10_000) -> LiftOneResult:
    """A-optimal weights on ``points`` by randomised lift-one coordinate ascent.

    ``init`` is ``"uniform"``, ``"random"`` (normalised iid Exp(1) draws) or an
    explicit weight vector.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    X, v = point_weights(model, P)
    m, p = X.shape
    seed = DEFAULT_SEED if seed is None else int(seed)
    rng = np.random.default_rng(seed)

    if m == 1:
        return LiftOneResult(ApproximateDesign(P, [1.0]), 0, True, _h_from(v[0] * np.outer(X[0], X[0])), "trivial", seed)
    if p == 1:
        k = int(np.argmax(v * X[:, 0] ** 2))
        w = np.zeros(m)
        w[k] = 1.0
        return LiftOneResult(ApproximateDesign(P, w), 0, True, float(v[k] * X[k, 0] ** 2), "argmax", seed)
    if m < p:
        raise InfeasibleError(f"{m} points cannot support {p} parameters")
    if m == p:
        w = saturated_weights(X, v)
        h = _h_from((X.T * (w * v)) @ X)
        return LiftOneResult(ApproximateDesign(P, w), 0, True, h, "saturated", seed)

    w0 = _initial_weights(init, m, rng)
    if psd_det((X.T * (w0 * v)) @ X) <= 0.0 or _h_from((X.T * (w0 * v)) @ X) <= 0.0:
        raise InfeasibleError("initial allocation has a singular information matrix; no allocation can be nonsingular")
    w, sweeps, trace = _optimize_weights(X, v, w0, epsilon, rng, max_sweeps)
    w = np.where(w < PRUNE_TOL, 0.0, w)
    w /= w.sum()
    ok, _ = certify(X, v, w)
    return LiftOneResult(ApproximateDesign(P, w), sweeps, ok, _h_from((X.T * (w * v)) @ X), "liftone", seed, trace)
