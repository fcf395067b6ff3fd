"""GLM families, links and the information weight nu(eta).

The design algorithms only ever see a model through two scalars per design
point: the GLM weight ``nu(eta) = [(g^-1)'(eta)]^2 / Var(Y)`` and its
derivative.  Everything else (likelihoods, deviance) lives elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, log_ndtr, ndtr

from .errors import DomainError, MissingHook, NonDifferentiableError

FAMILIES = ("bernoulli", "binomial", "poisson", "gamma", "inverse_gaussian", "normal", "custom")
LINKS = ("logit", "probit", "cloglog", "log", "identity", "inverse", "inverse_squared", "custom")

_BINARY = ("bernoulli", "binomial")
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Family:
    """Response distribution.

    ``param`` is the family constant: number of trials (binomial), shape k
    (gamma), lambda (inverse Gaussian) or sigma^2 (normal).  It is ignored
    for the other families.
    """

    name: str
    param: float = 1.0

    def __post_init__(self):
        if self.name not in FAMILIES:
            raise ValueError(f"unknown family {self.name!r}")
        if not (np.isfinite(self.param) and self.param > 0):
            raise ValueError(f"family constant must be positive, got {self.param}")
        if self.name == "binomial" and float(self.param) != int(self.param):
            raise ValueError("binomial n_trials must be an integer")

    def variance(self, mu):
        """Var(Y) as a function of the mean (per trial for binomial)."""
        n = self.name
        if n in _BINARY:
            return mu * (1.0 - mu)
        if n == "poisson":
            return mu
        if n == "gamma":
            return mu**2 / self.param
        if n == "inverse_gaussian":
            return mu**3 / self.param
        if n == "normal":
            return np.full_like(mu, self.param)
        raise MissingHook("custom family has no variance function")

    def variance_prime(self, mu):
        n = self.name
        if n in _BINARY:
            return 1.0 - 2.0 * mu
        if n == "poisson":
            return np.ones_like(mu)
        if n == "gamma":
            return 2.0 * mu / self.param
        if n == "inverse_gaussian":
            return 3.0 * mu**2 / self.param
        if n == "normal":
            return np.zeros_like(mu)
        raise MissingHook("custom family has no variance function")

    def mean_ok(self, mu):
        if self.name in _BINARY:
            return (mu > 0.0) & (mu < 1.0)
        if self.name in ("poisson", "gamma", "inverse_gaussian"):
            return mu > 0.0
        return np.isfinite(mu)

    @property
    def scale(self) -> float:
        # information multiplier: n_trials for binomial, 1 otherwise
        return float(self.param) if self.name == "binomial" else 1.0


def bernoulli() -> Family:
    return Family("bernoulli")


def binomial(n_trials: int) -> Family:
    return Family("binomial", float(n_trials))


def poisson() -> Family:
    return Family("poisson")


def gamma(shape: float = 1.0) -> Family:
    return Family("gamma", float(shape))


def inverse_gaussian(lam: float = 1.0) -> Family:
    return Family("inverse_gaussian", float(lam))


def normal(sigma2: float = 1.0) -> Family:
    return Family("normal", float(sigma2))


# ---------------------------------------------------------------------------
# Links: mean function and its first two derivatives
# ---------------------------------------------------------------------------

def _link_derivs(link: str, eta):
    """Return (mu, dmu/deta, d2mu/deta2) for the inverse link."""
    if link == "identity":
        return eta, np.ones_like(eta), np.zeros_like(eta)
    if link == "log":
        e = np.exp(eta)
        return e, e, e
    if link == "inverse":
        return 1.0 / eta, -1.0 / eta**2, 2.0 / eta**3
    if link == "inverse_squared":
        r = eta ** -0.5
        return r, -0.5 * r / eta, 0.75 * r / eta**2
    if link == "logit":
        mu = expit(eta)
        d1 = mu * (1.0 - mu)
        return mu, d1, d1 * (1.0 - 2.0 * mu)
    if link == "probit":
        phi = np.exp(-0.5 * eta**2 - _LOG_SQRT_2PI)
        return ndtr(eta), phi, -eta * phi
    if link == "cloglog":
        u = np.exp(eta)
        d1 = u * np.exp(-u)
        return -np.expm1(-u), d1, d1 * (1.0 - u)
    raise MissingHook("custom link has no inverse function")


def _link_domain_ok(link: str, eta):
    if link == "inverse":
        return eta != 0.0
    if link == "inverse_squared":
        return eta > 0.0
    return np.isfinite(eta)


# Stable closed forms for binary responses.  Each returns (nu, dnu/deta) per trial.

def _nu_logit(eta):
    mu = expit(eta)
    nu = mu * expit(-eta)
    return nu, -nu * np.tanh(0.5 * eta)


def _nu_probit(eta):
    log_phi = -0.5 * eta**2 - _LOG_SQRT_2PI
    lo, hi = log_ndtr(eta), log_ndtr(-eta)
    nu = np.exp(2.0 * log_phi - lo - hi)
    dlog = -2.0 * eta - np.exp(log_phi - lo) + np.exp(log_phi - hi)
    return nu, nu * dlog


def _nu_cloglog(eta):
    u = np.exp(eta)
    small = u < 1e-8
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        log_em1 = np.where(u > 30.0, u + np.log1p(-np.exp(-u)), np.log(np.expm1(u)))
        nu = np.where(small, u * (1.0 - 0.5 * u), np.exp(2.0 * eta - log_em1))
        ratio = np.where(small, 1.0 + 0.5 * u, u / -np.expm1(-u))
    return nu, nu * (2.0 - ratio)


_BINARY_FORMS = {"logit": _nu_logit, "probit": _nu_probit, "cloglog": _nu_cloglog}


# ---------------------------------------------------------------------------
# Predictor basis
# ---------------------------------------------------------------------------

class Term:
    """One basis function q_k(x).  Factor indices are 0-based."""

    factors: tuple = ()
    smooth = True

    def value(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, X: np.ndarray) -> np.ndarray:
        """Return the (m, d) array of partial derivatives."""
        raise NotImplementedError


@dataclass(frozen=True)
class Intercept(Term):
    def value(self, X):
        return np.ones(X.shape[0])

    def grad(self, X):
        return np.zeros_like(X, dtype=float)


@dataclass(frozen=True)
class Linear(Term):
    factor: int

    @property
    def factors(self):
        return (self.factor,)

    def value(self, X):
        return X[:, self.factor].astype(float)

    def grad(self, X):
        G = np.zeros_like(X, dtype=float)
        G[:, self.factor] = 1.0
        return G


@dataclass(frozen=True)
class Power(Term):
    factor: int
    exponent: float

    @property
    def factors(self):
        return (self.factor,)

    def value(self, X):
        return X[:, self.factor].astype(float) ** self.exponent

    def grad(self, X):
        G = np.zeros_like(X, dtype=float)
        e = self.exponent
        G[:, self.factor] = 0.0 if e == 0 else e * X[:, self.factor].astype(float) ** (e - 1)
        return G


@dataclass(frozen=True)
class Interaction(Term):
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(int(j) for j in self.factors))

    def value(self, X):
        return np.prod(X[:, list(self.factors)].astype(float), axis=1)

    def grad(self, X):
        G = np.zeros_like(X, dtype=float)
        cols = X[:, list(self.factors)].astype(float)
        for k, j in enumerate(self.factors):
            G[:, j] += np.prod(np.delete(cols, k, axis=1), axis=1)
        return G


@dataclass(frozen=True)
class Indicator(Term):
    factor: int
    level: float
    smooth = False

    @property
    def factors(self):
        return (self.factor,)

    def value(self, X):
        return (X[:, self.factor] == self.level).astype(float)

    def grad(self, X):
        # locally constant; only legal on discrete factors (checked by callers)
        return np.zeros_like(X, dtype=float)


@dataclass(frozen=True)
class CustomTerm(Term):
    """User-supplied basis function.

    ``fn`` maps an (m, d) array to m values; ``grad_fn`` (optional) maps it
    to an (m, d) array of partials.  Without ``grad_fn`` the term cannot be
    used where a gradient is needed.
    """

    fn: Callable
    grad_fn: Callable | None = None
    name: str = "custom"

    @property
    def smooth(self):
        return self.grad_fn is not None

    def value(self, X):
        return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0])

    def grad(self, X):
        if self.grad_fn is None:
            raise NonDifferentiableError(f"basis term {self.name!r} has no gradient")
        return np.asarray(self.grad_fn(X), dtype=float).reshape(X.shape)


@dataclass(frozen=True)
class PredictorBasis:
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("predictor basis needs at least one term")

    @property
    def p(self) -> int:
        return len(self.terms)

    def max_factor(self) -> int:
        idx = [j for t in self.terms for j in t.factors]
        return max(idx) if idx else -1

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.max_factor() >= X.shape[1]:
            raise ValueError(f"basis references factor {self.max_factor()} but points have {X.shape[1]} coordinates")
        return np.column_stack([t.value(X) for t in self.terms])

    def jacobian(self, X, coords: Sequence[int]) -> np.ndarray:
        """(m, p, len(coords)) array of dq_k/dx_c for the requested coordinates."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        coords = list(coords)
        out = np.empty((X.shape[0], self.p, len(coords)))
        for k, t in enumerate(self.terms):
            if not t.smooth and set(t.factors) & set(coords):
                raise NonDifferentiableError(f"term {t!r} is not differentiable in coordinates {coords}")
            out[:, k, :] = t.grad(X)[:, coords]
        return out


def main_effects(d: int) -> PredictorBasis:
    """Intercept plus one linear term per factor."""
    return PredictorBasis((Intercept(),) + tuple(Linear(j) for j in range(d)))


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GlmModel:
    family: Family
    link: str
    beta: np.ndarray
    predictor: PredictorBasis
    nu_hook: Callable | None = field(default=None, compare=False)
    nu_prime_hook: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}")
        beta = np.asarray(self.beta, dtype=float).ravel()
        if beta.size < 1 or beta.size != self.predictor.p:
            raise ValueError(f"beta has {beta.size} entries but predictor has {self.predictor.p} terms")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        if self.is_custom and self.nu_hook is None:
            raise MissingHook("custom family or link requires nu_hook")

    @property
    def p(self) -> int:
        return self.beta.size

    @property
    def is_custom(self) -> bool:
        return self.family.name == "custom" or self.link == "custom"

    def with_beta(self, beta) -> "GlmModel":
        return GlmModel(self.family, self.link, beta, self.predictor, self.nu_hook, self.nu_prime_hook)


def logistic(beta, predictor: PredictorBasis) -> GlmModel:
    return GlmModel(bernoulli(), "logit", beta, predictor)


def _check_domain(model: GlmModel, eta):
    if model.is_custom:
        return
    fam, link = model.family, model.link
    if fam.name in _BINARY and link in _BINARY_FORMS:
        bad = ~np.isfinite(eta)
    else:
        ok = _link_domain_ok(link, eta)
        with np.errstate(all="ignore"):
            mu = _link_derivs(link, np.where(ok, eta, 1.0))[0]
        bad = ~(ok & fam.mean_ok(mu))
    if np.any(bad):
        first = np.asarray(eta)[bad].ravel()[0]
        raise DomainError(f"eta={first!r} outside the domain of {fam.name}/{link}")


def _nu_both(model: GlmModel, eta, need_prime: bool):
    eta = np.asarray(eta, dtype=float)
    _check_domain(model, eta)
    if model.is_custom:
        nu = np.asarray(model.nu_hook(eta), dtype=float)
        if not need_prime:
            return nu, None
        if model.nu_prime_hook is None:
            raise MissingHook("custom family or link requires nu_prime_hook for derivatives")
        return nu, np.asarray(model.nu_prime_hook(eta), dtype=float)
    fam, link = model.family, model.link
    if fam.name in _BINARY and link in _BINARY_FORMS:
        nu, dnu = _BINARY_FORMS[link](eta)
    else:
        mu, d1, d2 = _link_derivs(link, eta)
        V = fam.variance(mu)
        nu = d1**2 / V
        dnu = 2.0 * d1 * d2 / V - d1**3 * fam.variance_prime(mu) / V**2 if need_prime else None
    s = fam.scale
    return nu * s, (dnu * s if dnu is not None else None)


def nu(model: GlmModel, eta):
    """GLM information weight; vectorised over ``eta``."""
    out = _nu_both(model, eta, False)[0]
    return out if np.ndim(out) else float(out)


def nu_prime(model: GlmModel, eta):
    """Derivative of :func:`nu` with respect to eta."""
    out = _nu_both(model, eta, True)[1]
    return out if np.ndim(out) else float(out)


def linear_predictor(model: GlmModel, x):
    """beta^T q(x) for one point (returns float) or a stack of points."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    eta = model.predictor.evaluate(np.atleast_2d(x)) @ model.beta
    return float(eta[0]) if single else eta
