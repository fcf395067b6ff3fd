"""Design containers, model matrices and the A-/D-objectives.

``f(w) = |X^T W X|`` is the D-criterion, ``f_{-j}(w)`` the determinant with
column j of X removed, and ``h(w) = 1 / tr((X^T W X)^{-1})`` (0 when the
information is singular) is the A-criterion being maximised throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .glm import GlmModel, nu

SINGULAR_RTOL = 1e-12


# ---------------------------------------------------------------------------
# Design space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Continuous:
    lower: float
    upper: float

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("continuous factor needs finite bounds")
        if not self.lower < self.upper:
            raise ValueError(f"continuous factor needs lower < upper, got [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class Discrete:
    levels: tuple

    def __post_init__(self):
        levels = tuple(sorted(set(float(v) for v in self.levels)))
        if not levels:
            raise ValueError("discrete factor needs at least one level")
        object.__setattr__(self, "levels", levels)


class DesignSpace:
    """Box of continuous factors times a finite set of discrete combinations.

    Factors keep the order given by the caller; ``continuous_idx`` and
    ``discrete_idx`` record where each kind sits, and ``order`` is the
    permutation that would move the continuous factors to the front.
    """

    def __init__(self, factors: Sequence, discrete_grid=None):
        self.factors = tuple(factors)
        if not self.factors:
            raise ValueError("design space needs at least one factor")
        for f in self.factors:
            if not isinstance(f, (Continuous, Discrete)):
                raise TypeError(f"factor must be Continuous or Discrete, got {f!r}")
        self.continuous_idx = tuple(j for j, f in enumerate(self.factors) if isinstance(f, Continuous))
        self.discrete_idx = tuple(j for j, f in enumerate(self.factors) if isinstance(f, Discrete))
        self.order = self.continuous_idx + self.discrete_idx
        if discrete_grid is None:
            self.discrete_grid = None
        else:
            grid = np.atleast_2d(np.asarray(discrete_grid, dtype=float))
            if grid.shape[1] != len(self.discrete_idx):
                raise ValueError("discrete_grid rows must have one entry per discrete factor")
            for col, j in enumerate(self.discrete_idx):
                if not np.all(np.isin(grid[:, col], self.factors[j].levels)):
                    raise ValueError(f"discrete_grid uses a level not declared for factor {j}")
            self.discrete_grid = grid

    @property
    def d(self) -> int:
        return len(self.factors)

    @property
    def s(self) -> int:
        return len(self.continuous_idx)

    @property
    def bounds(self) -> np.ndarray:
        return np.array([[self.factors[j].lower, self.factors[j].upper] for j in self.continuous_idx]).reshape(-1, 2)

    def discrete_combos(self) -> np.ndarray:
        """Rows of allowed discrete-coordinate combinations (one empty row if none)."""
        if self.discrete_grid is not None:
            return self.discrete_grid
        if not self.discrete_idx:
            return np.zeros((1, 0))
        levels = [self.factors[j].levels for j in self.discrete_idx]
        return np.array(list(itertools.product(*levels)), dtype=float)

    def assemble(self, xc, xd) -> np.ndarray:
        """Build full points from continuous part(s) ``xc`` and discrete part ``xd``."""
        xc = np.atleast_2d(np.asarray(xc, dtype=float))
        out = np.empty((xc.shape[0], self.d))
        out[:, list(self.continuous_idx)] = xc
        out[:, list(self.discrete_idx)] = np.asarray(xd, dtype=float)
        return out

    def corners(self) -> np.ndarray:
        """All 2^s box corners crossed with every discrete combination."""
        B = self.bounds
        cc = np.array(list(itertools.product(*B)), dtype=float) if self.s else np.zeros((1, 0))
        return np.vstack([self.assemble(cc, xd) for xd in self.discrete_combos()])

    def contains(self, x, atol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        for j, f in enumerate(self.factors):
            if isinstance(f, Continuous):
                if x[j] < f.lower - atol or x[j] > f.upper + atol:
                    return False
        if self.discrete_idx:
            xd = x[list(self.discrete_idx)]
            if not np.any(np.all(self.discrete_combos() == xd, axis=1)):
                return False
        return True

    def __repr__(self):
        return f"DesignSpace({self.factors!r}, discrete_grid={self.discrete_grid!r})"


# ---------------------------------------------------------------------------
# Designs
# ---------------------------------------------------------------------------

def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


class ApproximateDesign:
    """Support points with probability weights."""

    def __init__(self, points, weights, space: DesignSpace | None = None):
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P.reshape(-1, 1)
        w = np.asarray(weights, dtype=float).ravel()
        if P.shape[0] < 1 or P.shape[0] != w.size:
            raise ValueError(f"{P.shape[0]} points but {w.size} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        if len({tuple(r) for r in P}) != P.shape[0]:
            raise ValueError("design contains duplicate points")
        if space is not None:
            for x in P:
                if not space.contains(x):
                    raise ValueError(f"point {x} lies outside the design space")
        self.points = _frozen(P)
        self.weights = _frozen(w)
        self.space = space

    @classmethod
    def normalized(cls, points, weights, space=None) -> "ApproximateDesign":
        w = np.asarray(weights, dtype=float)
        return cls(points, w / w.sum(), space)

    @property
    def m(self) -> int:
        return self.weights.size

    def support(self, tol: float = 0.0) -> "ApproximateDesign":
        """Drop points whose weight is <= tol and renormalise."""
        keep = self.weights > tol
        return ApproximateDesign.normalized(self.points[keep], self.weights[keep], self.space)

    def __repr__(self):
        rows = ", ".join(f"({np.array2string(x, precision=4)}, {w:.4f})" for x, w in zip(self.points, self.weights))
        return f"ApproximateDesign[{rows}]"


class ExactDesign:
    """Support points with integer replicate counts."""

    def __init__(self, points, counts):
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P.reshape(-1, 1)
        c = np.asarray(counts)
        if not np.all(c == np.round(c)) or np.any(c < 0):
            raise ValueError("counts must be nonnegative integers")
        c = c.astype(int).ravel()
        if c.size != P.shape[0]:
            raise ValueError(f"{P.shape[0]} points but {c.size} counts")
        self.points = _frozen(P)
        self.counts = _frozen(c, dtype=int)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def to_approximate(self) -> ApproximateDesign:
        return ApproximateDesign.normalized(self.points, self.counts)

    def __repr__(self):
        return f"ExactDesign(counts={self.counts.tolist()}, n={self.n})"


# ---------------------------------------------------------------------------
# Information matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InfoDecomposition:
    model_matrix: np.ndarray
    weight_diagonal: np.ndarray
    fisher: np.ndarray
    det_f: float
    minors: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    trace_inverse: float

    @property
    def singular(self) -> bool:
        return self.det_f == 0.0

    @property
    def h(self) -> float:
        return 0.0 if self.singular else 1.0 / self.trace_inverse

    @property
    def determinant_ratio(self) -> float:
        """f / sum_j f_{-j}: an independent route to h."""
        if self.singular:
            return 0.0
        return self.det_f / float(np.sum(self.minors))

    def inverse_power(self, k: int) -> np.ndarray:
        """F^{-k} through the eigen decomposition."""
        O, lam = self.eigenvectors, self.eigenvalues
        return (O * lam**-k) @ O.T


def psd_det(M: np.ndarray) -> float:
    """Determinant of a symmetric PSD matrix (Cholesky, LU fallback), clamped at 0."""
    if M.shape[0] == 0:
        return 1.0
    try:
        L = np.linalg.cholesky(M)
        return float(np.prod(np.diagonal(L)) ** 2)
    except np.linalg.LinAlgError:
        return max(float(np.linalg.det(M)), 0.0)


@lru_cache(maxsize=None)
def _minor_index(p: int):
    keep = np.array([[k for k in range(p) if k != j] for j in range(p)], dtype=int)
    return keep[:, :, None], keep[:, None, :]


def minor_dets(F: np.ndarray) -> np.ndarray:
    """Determinants of F with row/column j deleted, for every j."""
    p = F.shape[0]
    if p == 1:
        return np.ones(1)
    rows, cols = _minor_index(p)
    sub = F[rows, cols]
    try:
        L = np.linalg.cholesky(sub)
        return np.prod(np.diagonal(L, axis1=1, axis2=2), axis=1) ** 2
    except np.linalg.LinAlgError:
        return np.maximum(np.linalg.det(sub), 0.0)


def decompose(X: np.ndarray, wnu: np.ndarray) -> InfoDecomposition:
    """Assemble F = X^T diag(wnu) X and everything derived from it.

    ``wnu`` holds w_i * nu_i; weights need not sum to one (the objectives are
    homogeneous in them).
    """
    X = np.asarray(X, dtype=float)
    wnu = np.asarray(wnu, dtype=float)
    F = (X.T * wnu) @ X
    F = 0.5 * (F + F.T)
    lam, O = np.linalg.eigh(F)
    lam_max = float(lam[-1])
    singular = float(lam[0]) <= SINGULAR_RTOL * max(1.0, lam_max)
    det_f = 0.0 if singular else float(np.prod(lam))
    tr_inv = np.inf if singular else float(np.sum(1.0 / lam))
    return InfoDecomposition(X, wnu, F, det_f, minor_dets(F), lam, O, tr_inv)


def build_model_matrix(model: GlmModel, points) -> np.ndarray:
    """m x p matrix whose i-th row is q(x_i)^T."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    return model.predictor.evaluate(P)


def point_weights(model: GlmModel, points) -> tuple[np.ndarray, np.ndarray]:
    """Model matrix and the nu_i at each point."""
    X = build_model_matrix(model, points)
    return X, np.atleast_1d(nu(model, X @ model.beta))


def info_from_weights(model: GlmModel, points, weights) -> InfoDecomposition:
    """Same as :func:`fisher_info` but for raw (possibly unnormalised) weights."""
    X, v = point_weights(model, points)
    return decompose(X, np.asarray(weights, dtype=float) * v)


def fisher_info(model: GlmModel, design: ApproximateDesign) -> InfoDecomposition:
    return info_from_weights(model, design.points, design.weights)


def h_value(model: GlmModel, design: ApproximateDesign) -> float:
    """A-criterion 1/tr(F^{-1}); 0 for a singular design."""
    return fisher_info(model, design).h


def f_value(model: GlmModel, design: ApproximateDesign) -> float:
    """D-criterion |F|."""
    return fisher_info(model, design).det_f


def f_minor(model: GlmModel, design: ApproximateDesign, j: int) -> float:
    """|X_{-j}^T W X_{-j}| with column j (0-based) of the model matrix removed."""
    if not 0 <= j < model.p:
        raise IndexError(f"j must be in [0, {model.p}), got {j}")
    return float(fisher_info(model, design).minors[j])
