"""A-optimal designs on box x finite-grid design spaces.

The outer loop alternates merging nearby support points, lift-one weight
optimisation, deletion of zero-weight points and a search for the point that
maximises the sensitivity function

    phi(x, xi) = nu(beta^T q(x)) q(x)^T F(xi)^{-2} q(x).

A design is A-optimal exactly when max_x phi(x, xi) <= tr(F(xi)^{-1}), so the
loop stops with a certificate as soon as the search cannot beat that bound.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .design import ApproximateDesign, DesignSpace, InfoDecomposition, decompose, fisher_info, point_weights
from .errors import DomainError, InfeasibleError, NonConvergence, SingularError
from .glm import GlmModel, nu, nu_prime
from .liftone import _coefficients, classify, liftone_optimize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForlionConfig:
    delta: float = 0.1
    epsilon: float = 1e-6
    multistart: int = 5
    inner_tol: float = 1e-8
    max_outer: int = 500
    seed: int | None = None
    stop_rtol: float = 1e-6
    grid_points: int = 4096
    workers: int = 1
    max_init_attempts: int = 1000
    polish: bool = True

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.multistart < 1 or self.max_outer < 1:
            raise ValueError("multistart and max_outer must be positive integers")


@dataclass(frozen=True)
class StepCoefficients:
    a_t: float
    b_t: float
    A_t: float
    B_t: float
    alpha: float


@dataclass
class ForlionResult:
    design: ApproximateDesign
    trace: list
    certified: bool
    iterations: int
    phi_max: float
    trace_inverse: float
    rank_guard_fired: bool = False
    notes: list = field(default_factory=list)

    @property
    def h(self) -> float:
        return 1.0 / self.trace_inverse


# ---------------------------------------------------------------------------
# Sensitivity function
# ---------------------------------------------------------------------------

class Sensitivity:
    """phi(., xi) and its gradient for one fixed design."""

    def __init__(self, model: GlmModel, design: ApproximateDesign, info: InfoDecomposition | None = None):
        info = fisher_info(model, design) if info is None else info
        if info.singular:
            raise SingularError("sensitivity function needs a nonsingular design")
        self.model = model
        self.info = info
        # A = F^{-2} = O diag(lam^-2) O^T; keep the half factor Lambda^{-1} O^T
        self._half = (info.eigenvectors / info.eigenvalues).T
        self.A = info.inverse_power(2)
        self.trace_inverse = info.trace_inverse

    def __call__(self, points) -> np.ndarray:
        P = np.atleast_2d(np.asarray(points, dtype=float))
        Q = self.model.predictor.evaluate(P)
        quad = np.sum((Q @ self._half.T) ** 2, axis=1)
        return np.atleast_1d(nu(self.model, Q @ self.model.beta)) * quad

    def gradient(self, points, coords) -> np.ndarray:
        """d phi / d x_c for c in ``coords``; shape (m, len(coords))."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        Q = self.model.predictor.evaluate(P)
        J = self.model.predictor.jacobian(P, coords)  # (m, p, s)
        eta = Q @ self.model.beta
        AQ = Q @ self.A
        quad = np.sum(AQ * Q, axis=1)
        dq_beta = np.einsum("mps,p->ms", J, self.model.beta)
        dq_AQ = np.einsum("mps,mp->ms", J, AQ)
        v = np.atleast_1d(nu(self.model, eta))
        dv = np.atleast_1d(nu_prime(self.model, eta))
        return (dv * quad)[:, None] * dq_beta + 2.0 * v[:, None] * dq_AQ


def sensitivity(model: GlmModel, design: ApproximateDesign, x) -> float:
    """phi(x, design) for a single point."""
    return float(Sensitivity(model, design)(np.atleast_2d(x))[0])


def sensitivity_gradient(model: GlmModel, design: ApproximateDesign, x, coords=None) -> np.ndarray:
    """Gradient of phi with respect to the continuous coordinates of x.

    ``coords`` defaults to ``design.space.continuous_idx`` when a space is
    attached, otherwise to every coordinate.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if coords is None:
        coords = design.space.continuous_idx if design.space is not None else range(x.shape[1])
    return Sensitivity(model, design).gradient(x, list(coords))[0]


# ---------------------------------------------------------------------------
# New point search
# ---------------------------------------------------------------------------

def _grid_axis_count(s: int, budget: int) -> int:
    return max(3, int(np.floor(budget ** (1.0 / s))))


def _search_combo(sens: Sensitivity, space: DesignSpace, xd, starts_extra, config, rng):
    """Best (phi, x) over the continuous box for one discrete combination."""
    B = space.bounds
    s = space.s
    coords = list(space.continuous_idx)
    tr = sens.trace_inverse

    def safe_phi(xc):
        try:
            return sens(space.assemble(xc, xd))
        except DomainError:
            return np.full(np.atleast_2d(xc).shape[0], -np.inf)

    n_axis = _grid_axis_count(s, config.grid_points)
    axes = [np.linspace(lo, hi, n_axis) for lo, hi in B]
    grid = np.array(list(itertools.product(*axes)))
    gvals = safe_phi(grid)
    order = np.argsort(-gvals, kind="stable")
    starts = [grid[k] for k in order[: config.multistart]]
    starts += list(rng.uniform(B[:, 0], B[:, 1], size=(config.multistart, s)))
    starts += list(starts_extra)

    best_val, best_x = float(gvals[order[0]]), grid[order[0]]

    def obj(xc):
        x = space.assemble(xc, xd)
        try:
            val = sens(x)[0]
            g = sens.gradient(x, coords)[0]
        except DomainError:
            return np.inf, np.zeros(s)
        return -val / tr, -g / tr

    for x0 in starts:
        res = minimize(obj, np.clip(x0, B[:, 0], B[:, 1]), jac=True, method="L-BFGS-B",
                       bounds=B, options={"gtol": config.inner_tol, "ftol": 1e-15, "maxiter": 500})
        xc = np.clip(res.x, B[:, 0], B[:, 1])
        val = float(safe_phi(xc)[0])
        if val > best_val or (val == best_val and tuple(xc) < tuple(best_x)):
            best_val, best_x = val, xc
    return best_val, space.assemble(best_x, xd)[0]


def new_point_search(model: GlmModel, design: ApproximateDesign, space: DesignSpace,
                     config: ForlionConfig | None = None, rng=None) -> tuple[np.ndarray, float]:
    """Maximise phi(., design) over the design space; returns (x*, phi(x*))."""
    config = ForlionConfig() if config is None else config
    if space.s == 0:
        raise ValueError("all factors are discrete; use liftone_optimize on the candidate set")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    sens = Sensitivity(model, design)
    combos = space.discrete_combos()
    if len(combos) > 10_000:
        warnings.warn(f"exhaustive search over {len(combos)} discrete combinations", RuntimeWarning)
    cidx = list(space.continuous_idx)
    didx = list(space.discrete_idx)
    seeds = rng.integers(0, 2**63 - 1, size=len(combos))

    def task(k):
        xd = combos[k]
        own = [x[cidx] for x in design.points if np.array_equal(x[didx], xd)]
        return _search_combo(sens, space, xd, own, config, np.random.default_rng(seeds[k]))

    if config.workers > 1 and len(combos) > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            results = list(pool.map(task, range(len(combos))))
    else:
        results = [task(k) for k in range(len(combos))]
    # deterministic reduction: max phi, ties by lexicographic x
    best = max(results, key=lambda r: (r[0], tuple(-np.asarray(r[1]))))
    return best[1], float(best[0])


# ---------------------------------------------------------------------------
# Step size, merging and the outer loop
# ---------------------------------------------------------------------------

def alpha_step(model: GlmModel, design: ApproximateDesign, x_star) -> StepCoefficients:
    """Best weight alpha for adding x_star as (1-alpha) xi + alpha delta_{x*}."""
    info = fisher_info(model, design)
    if info.singular:
        raise SingularError("alpha step needs a nonsingular current design")
    X, v = point_weights(model, np.atleast_2d(np.asarray(x_star, dtype=float)))
    G = v[0] * np.outer(X[0], X[0])
    c = _coefficients(info.fisher, G, 0.0, design.m)
    case, x = classify(c)
    alpha = x if case in (1, 2) else 0.0
    return StepCoefficients(c.a, c.b, c.A, c.B, float(alpha))


def _is_singular(model, points, weights) -> bool:
    try:
        return fisher_info(model, ApproximateDesign.normalized(points, weights)).singular
    except (DomainError, ValueError):
        return True


def merge_points(design: ApproximateDesign, delta: float, model: GlmModel | None = None) -> ApproximateDesign:
    """Merge the closest pair closer than ``delta`` until none is left.

    Pairs are merged into their weighted centroid.  With ``model`` given,
    merging stops before it would make the information matrix singular.
    Points with different discrete coordinates are never merged.
    """
    merged, _ = _merge(design, delta, model)
    return merged


def _merge(design, delta, model):
    P = design.points.copy()
    w = design.weights.copy()
    space = design.space
    didx = list(space.discrete_idx) if space is not None else []
    guard = False
    while len(w) > 1:
        D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
        if didx:
            same = np.all(P[:, None, didx] == P[None, :, didx], axis=2)
            D = np.where(same, D, np.inf)
        np.fill_diagonal(D, np.inf)
        i, j = np.unravel_index(np.argmin(D), D.shape)
        if not D[i, j] < delta:
            break
        wi, wj = w[i], w[j]
        tot = wi + wj
        x_new = (wi * P[i] + wj * P[j]) / tot if tot > 0 else 0.5 * (P[i] + P[j])
        keep = [k for k in range(len(w)) if k not in (i, j)]
        P2 = np.vstack([P[keep], x_new])
        w2 = np.append(w[keep], tot)
        if model is not None and _is_singular(model, P2, w2 if w2.sum() > 0 else np.ones_like(w2)):
            guard = True
            break
        P, w = P2, w2
    out = ApproximateDesign(P, w / w.sum(), None)
    out.space = space
    return out, guard


def _add_point(design: ApproximateDesign, x_star, alpha: float) -> ApproximateDesign:
    P = design.points
    w = design.weights * (1.0 - alpha)
    hit = np.flatnonzero(np.all(P == x_star, axis=1))
    if hit.size:
        w = w.copy()
        w[hit[0]] += alpha
        out = ApproximateDesign.normalized(P, w)
    else:
        out = ApproximateDesign.normalized(np.vstack([P, x_star]), np.append(w, alpha))
    out.space = design.space
    return out


def _combine_duplicates(points, weights):
    uniq, inv = np.unique(points, axis=0, return_inverse=True)
    if uniq.shape[0] == points.shape[0]:
        return points, weights
    return uniq, np.bincount(inv.ravel(), weights=weights)


def polish_support(model: GlmModel, design: ApproximateDesign, space: DesignSpace,
                   inner_tol: float = 1e-8) -> ApproximateDesign:
    """Move support points within the box to lower tr(F^{-1}), weights fixed.

    The derivative of tr(F^{-1}) with respect to the continuous coordinates of
    x_i is -w_i * grad phi(x_i), so the sensitivity gradient does the work.
    The result is only returned when it improves on the input.
    """
    cidx = list(space.continuous_idx)
    P0 = np.array(design.points)
    w = design.weights
    B = np.tile(space.bounds, (design.m, 1))
    tr0 = fisher_info(model, design).trace_inverse

    def unpack(z):
        P = P0.copy()
        P[:, cidx] = z.reshape(design.m, -1)
        return P

    def obj(z):
        P = unpack(z)
        try:
            X, v = point_weights(model, P)
            info = decompose(X, w * v)
            if info.singular:
                return np.inf, np.zeros_like(z)
            sens = Sensitivity(model, None, info)
            g = -(w[:, None] * sens.gradient(P, cidx))
        except DomainError:
            return np.inf, np.zeros_like(z)
        return info.trace_inverse / tr0, g.ravel() / tr0

    z0 = P0[:, cidx].ravel()
    res = minimize(obj, z0, jac=True, method="L-BFGS-B", bounds=B,
                   options={"gtol": inner_tol, "ftol": 1e-15, "maxiter": 200})
    z = np.clip(res.x, B[:, 0], B[:, 1])
    val = obj(z)[0]
    if not val < 1.0:
        return design
    P, wn = _combine_duplicates(unpack(z), np.array(w))
    return _with_space(ApproximateDesign.normalized(P, wn), space)


def _in_domain(model, x) -> bool:
    try:
        point_weights(model, np.atleast_2d(x))
        return True
    except DomainError:
        return False


def initial_design(model: GlmModel, space: DesignSpace, config: ForlionConfig, rng) -> ApproximateDesign:
    """Corner points (at most 64) with uniform weights, else random construction."""
    C = space.corners()
    if len(C) > 64:
        C = C[np.sort(rng.choice(len(C), 64, replace=False))]
    pts = []
    for x in C:
        if _in_domain(model, x) and all(np.linalg.norm(x - y) >= config.delta for y in pts):
            pts.append(x)
    if len(pts) >= 1 and not _is_singular(model, np.array(pts), np.ones(len(pts))):
        return _with_space(ApproximateDesign.normalized(np.array(pts), np.ones(len(pts))), space)

    # random construction: keep adding points at least delta apart until F is nonsingular
    B = space.bounds
    combos = space.discrete_combos()
    pts = []
    for _ in range(config.max_init_attempts):
        xc = np.where(rng.random(space.s) < 0.5, B[:, 0], B[:, 1]) if rng.random() < 0.5 \
            else rng.uniform(B[:, 0], B[:, 1])
        x = space.assemble(xc, combos[rng.integers(len(combos))])[0]
        if not _in_domain(model, x) or any(np.linalg.norm(x - y) < config.delta for y in pts):
            continue
        pts.append(x)
        if len(pts) >= model.p and not _is_singular(model, np.array(pts), np.ones(len(pts))):
            return _with_space(ApproximateDesign.normalized(np.array(pts), np.ones(len(pts))), space)
    raise InfeasibleError(f"no nonsingular initial design found in {config.max_init_attempts} attempts")


def _with_space(design, space):
    design.space = space
    return design


def forlion_optimize(model: GlmModel, space: DesignSpace, config: ForlionConfig | None = None,
                     init: ApproximateDesign | None = None) -> ForlionResult:
    """Find an A-optimal design on ``space``; see the module docstring."""
    config = ForlionConfig() if config is None else config
    if space.s < 1:
        raise ValueError("forlion_optimize needs at least one continuous factor; use liftone_optimize")
    rng = np.random.default_rng(config.seed)
    xi = initial_design(model, space, config, rng) if init is None else _with_space(init, space)
    trace = []
    guard_any = False
    notes = []
    bound = model.p * (model.p + 1) // 2

    for t in range(config.max_outer):
        xi, guard = _merge(xi, config.delta, model)
        guard_any |= guard
        h_merged = fisher_info(model, xi).h
        lo = liftone_optimize(model, xi.points, init=xi.weights, epsilon=config.epsilon,
                              seed=int(rng.integers(2**31)))
        xi = _with_space(lo.design.support(), space)
        h_lift = fisher_info(model, xi).h
        if config.polish:
            xi = polish_support(model, xi, space, config.inner_tol)
        info = fisher_info(model, xi)
        x_star, phi_star = new_point_search(model, xi, space, config, rng)
        tr = info.trace_inverse
        row = {"iter": t, "h": info.h, "h_merged": h_merged, "h_liftone": h_lift, "m_t": xi.m, "phi_star": phi_star,
               "trace_inverse": tr, "alpha_t": 0.0, "h_after": info.h, "rank_guard": guard}
        trace.append(row)
        if phi_star <= tr * (1.0 + config.stop_rtol):
            if xi.m > bound:
                warnings.warn(f"design has {xi.m} support points, above p(p+1)/2 = {bound}", RuntimeWarning)
            return ForlionResult(xi, trace, True, t + 1, phi_star, tr, guard_any, notes)
        step = alpha_step(model, xi, x_star)
        row["alpha_t"] = step.alpha
        if step.alpha <= 0.0:
            notes.append(f"iteration {t}: phi* exceeds tr(F^-1) by {phi_star / tr - 1:.3e} but no ascent step exists")
            return ForlionResult(xi, trace, False, t + 1, phi_star, tr, guard_any, notes)
        xi = _add_point(xi, x_star, step.alpha)
        row["h_after"] = fisher_info(model, xi).h
    raise NonConvergence(f"ForLion did not certify a design within {config.max_outer} outer iterations")


def equivalence_check(model: GlmModel, design: ApproximateDesign, space: DesignSpace | None = None,
                      candidates=None, grid: int = 21, polish: bool = True, rtol: float = 1e-4) -> dict:
    """Check max phi <= tr(F^{-1}) independently of how the design was found.

    With ``space`` the check scans a ``grid``-per-axis lattice for every
    discrete combination and, when ``polish`` is set, refines the five best
    lattice points by bounded quasi-Newton ascent.  With ``candidates`` it
    evaluates phi on the finite set, which is an exact check there.
    """
    sens = Sensitivity(model, design)
    tr = sens.trace_inverse
    if candidates is not None:
        P = np.atleast_2d(np.asarray(candidates, dtype=float))
        vals = sens(P)
        k = int(np.argmax(vals))
        best, x_best = float(vals[k]), P[k]
    else:
        if space is None:
            raise ValueError("need either a design space or a candidate set")
        best, x_best = -np.inf, None
        coords = list(space.continuous_idx)
        B = space.bounds
        axes = [np.linspace(lo, hi, grid) for lo, hi in B]
        lattice = np.array(list(itertools.product(*axes))) if space.s else np.zeros((1, 0))
        for xd in space.discrete_combos():
            P = space.assemble(lattice, xd)
            try:
                vals = sens(P)
            except DomainError:
                vals = np.array([_safe_phi(sens, x) for x in P])
            order = np.argsort(-vals, kind="stable")
            if vals[order[0]] > best:
                best, x_best = float(vals[order[0]]), P[order[0]]
            if not (polish and space.s):
                continue
            for k in order[:5]:
                def obj(xc):
                    x = space.assemble(xc, xd)
                    try:
                        return -sens(x)[0] / tr, -sens.gradient(x, coords)[0] / tr
                    except DomainError:
                        return np.inf, np.zeros(space.s)
                res = minimize(obj, P[k, coords], jac=True, method="L-BFGS-B", bounds=B)
                x = space.assemble(np.clip(res.x, B[:, 0], B[:, 1]), xd)[0]
                val = _safe_phi(sens, x)
                if val > best:
                    best, x_best = val, x
    slack = best / tr - 1.0
    return {"max_phi": best, "trace_inverse": tr, "slack": slack, "x_max": np.asarray(x_best),
            "ok": bool(slack <= rtol)}


def _safe_phi(sens, x) -> float:
    try:
        return float(sens(np.atleast_2d(x))[0])
    except DomainError:
        return -np.inf
