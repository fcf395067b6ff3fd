"""Design comparison and stratified-sampling studies.

A study draws a finite population of responses from a GLM, samples it with a
number of allocation rules, refits the model by maximum likelihood on each
sample and scores the fit by coefficient RMSE and by cross-entropy on the
units that were not sampled.
"""

from __future__ import annotations

import csv
import io
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit, ndtri

from .design import ApproximateDesign, ExactDesign, h_value
from .errors import AllocationError, DomainError, NonConvergence, RankError, SeparationError, SingularError
from .glm import Family, GlmModel, PredictorBasis, _link_derivs, _link_domain_ok

CE_CLAMP = 1e-12
SEPARATION_NORM = 1e3


def relative_efficiency(model: GlmModel, design_a: ApproximateDesign, design_b: ApproximateDesign) -> float:
    """h(design_a) / h(design_b)."""
    hb = h_value(model, design_b)
    if hb == 0.0:
        raise SingularError("reference design has a singular information matrix")
    return h_value(model, design_a) / hb


# ---------------------------------------------------------------------------
# Maximum likelihood by iteratively reweighted least squares
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    iterations: int
    score_norm: float


def _link(link: str, mu):
    if link == "identity":
        return mu
    if link == "log":
        return np.log(mu)
    if link == "inverse":
        return 1.0 / mu
    if link == "inverse_squared":
        return mu**-2.0
    if link == "logit":
        return logit(mu)
    if link == "probit":
        return ndtri(mu)
    if link == "cloglog":
        return np.log(-np.log1p(-mu))
    raise ValueError(f"glm_fit does not support link {link!r}")


def _start_mean(family: Family, y):
    if family.name in ("bernoulli", "binomial"):
        return (y + 0.5) / 2.0
    if family.name == "poisson":
        return y + 0.1
    if family.name in ("gamma", "inverse_gaussian") and np.any(y <= 0):
        raise DomainError(f"{family.name} responses must be positive")
    return y.astype(float)


def _score(X, y, prior, family, link, eta):
    mu, d1, _ = _link_derivs(link, eta)
    V = family.variance(mu)
    return X.T @ (prior * (y - mu) * d1 / V), mu, d1, V


def glm_fit(family: Family, link: str, points, y, predictor: PredictorBasis, prior_weights=None,
            tol: float = 1e-8, max_iter: int = 100) -> FitResult:
    """Maximum-likelihood beta by Fisher scoring.

    Converges when ||score|| <= tol * (1 + ||score at the start||).  For
    binomial data ``y`` holds proportions and ``prior_weights`` the trials.
    Separated binary data raise SeparationError once ||beta|| exceeds 1e3
    or the fitted probabilities round to exactly 0 or 1.
    """
    X = predictor.evaluate(np.atleast_2d(np.asarray(points, dtype=float)))
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0 or y.size != X.shape[0]:
        raise ValueError("need one response per point and at least one point")
    prior = np.ones_like(y) if prior_weights is None else np.asarray(prior_weights, dtype=float)
    p = X.shape[1]
    if np.linalg.matrix_rank(X) < p:
        raise RankError(f"model matrix of the sample has rank {np.linalg.matrix_rank(X)} < {p}")

    eta = _link(link, _start_mean(family, y))
    beta = np.linalg.lstsq(X, eta, rcond=None)[0]
    eta = X @ beta
    U, mu, d1, V = _score(X, y, prior, family, link, eta)
    scale = 1.0 + np.linalg.norm(U)
    for it in range(1, max_iter + 1):
        W = prior * d1**2 / V
        z = eta + (y - mu) / d1
        sw = np.sqrt(W)
        step = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)[0] - beta
        t = 1.0
        while True:
            cand = beta + t * step
            eta_c = X @ cand
            with np.errstate(all="ignore"):
                link_ok = bool(np.all(_link_domain_ok(link, eta_c)))
                ok = link_ok and np.all(family.mean_ok(_link_derivs(link, eta_c)[0]))
            if ok or t < 1e-10:
                break
            t *= 0.5
        if not ok:
            if link_ok and family.name in ("bernoulli", "binomial"):
                # fitted probabilities hit 0 or 1 in floating point
                raise SeparationError("fitted probabilities reached 0 or 1; the data look separated")
            raise NonConvergence("IRLS step left the model domain")
        beta, eta = cand, eta_c
        if np.linalg.norm(beta) > SEPARATION_NORM:
            raise SeparationError(f"||beta|| exceeded {SEPARATION_NORM:g}; the data look separated")
        U, mu, d1, V = _score(X, y, prior, family, link, eta)
        if np.linalg.norm(U) <= tol * scale:
            return FitResult(beta, it, float(np.linalg.norm(U)))
    raise NonConvergence(f"IRLS did not converge in {max_iter} iterations")


# ---------------------------------------------------------------------------
# Populations and samplers
# ---------------------------------------------------------------------------

@dataclass
class Population:
    points: np.ndarray          # one row per stratum
    sizes: np.ndarray           # N_i
    responses: list             # array of N_i responses per stratum

    @property
    def N(self) -> int:
        return int(self.sizes.sum())

    @classmethod
    def generate(cls, model: GlmModel, points, sizes, rng) -> "Population":
        P = np.atleast_2d(np.asarray(points, dtype=float))
        sizes = np.asarray(sizes, dtype=int)
        if np.any(sizes < 0):
            raise ValueError("stratum sizes must be nonnegative")
        mu = _link_derivs(model.link, model.predictor.evaluate(P) @ model.beta)[0]
        fam = model.family
        out = []
        for m, N in zip(mu, sizes):
            if fam.name == "bernoulli":
                out.append((rng.random(N) < m).astype(float))
            elif fam.name == "binomial":
                out.append(rng.binomial(int(fam.param), m, N) / fam.param)
            elif fam.name == "poisson":
                out.append(rng.poisson(m, N).astype(float))
            elif fam.name == "normal":
                out.append(rng.normal(m, np.sqrt(fam.param), N))
            elif fam.name == "gamma":
                out.append(rng.gamma(fam.param, m / fam.param, N))
            elif fam.name == "inverse_gaussian":
                out.append(rng.wald(m, fam.param, N))
            else:
                raise ValueError(f"cannot simulate family {fam.name!r}")
        return cls(P, sizes, out)


@dataclass
class Sample:
    indices: list               # selected unit indices per stratum

    @property
    def n(self) -> int:
        return int(sum(len(ix) for ix in self.indices))


def stratified_sample(population: Population, allocation, rng) -> Sample:
    """Simple random sample without replacement of n_i units in stratum i."""
    counts = allocation.counts if isinstance(allocation, ExactDesign) else np.asarray(allocation, dtype=int)
    if counts.size != population.sizes.size:
        raise AllocationError(f"{counts.size} counts for {population.sizes.size} strata")
    over = np.flatnonzero(counts > population.sizes)
    if over.size:
        i = over[0]
        raise AllocationError(f"stratum {i}: n_i = {counts[i]} exceeds N_i = {population.sizes[i]}")
    rng = np.random.default_rng(rng)
    return Sample([np.sort(rng.choice(N, n, replace=False)) for N, n in zip(population.sizes, counts)])


def srswor(population: Population, n: int, rng) -> Sample:
    """Simple random sample without replacement from the whole population."""
    if n > population.N:
        raise AllocationError(f"n = {n} exceeds N = {population.N}")
    rng = np.random.default_rng(rng)
    pick = np.sort(rng.choice(population.N, n, replace=False))
    edges = np.concatenate([[0], np.cumsum(population.sizes)])
    return Sample([pick[(pick >= lo) & (pick < hi)] - lo for lo, hi in zip(edges[:-1], edges[1:])])


def sample_data(population: Population, sample: Sample) -> tuple[np.ndarray, np.ndarray]:
    """Stack the sampled (x, y) pairs."""
    pts = [np.repeat(population.points[i:i + 1], len(ix), axis=0) for i, ix in enumerate(sample.indices)]
    ys = [population.responses[i][ix] for i, ix in enumerate(sample.indices)]
    return np.vstack(pts), np.concatenate(ys)


def holdout_counts(population: Population, sample: Sample) -> tuple[np.ndarray, np.ndarray]:
    """Per-stratum numbers of ones and zeros among the units not sampled."""
    ones, zeros = [], []
    for y, ix in zip(population.responses, sample.indices):
        rest = np.delete(y, ix)
        ones.append(int(np.sum(rest == 1)))
        zeros.append(int(np.sum(rest == 0)))
    return np.array(ones), np.array(zeros)


def rmse(beta_hat, beta_true, index_set) -> float:
    idx = list(index_set)
    if not idx:
        raise ValueError("index set must be nonempty")
    d = np.asarray(beta_hat, dtype=float)[idx] - np.asarray(beta_true, dtype=float)[idx]
    return float(np.sqrt(np.mean(d**2)))


def cross_entropy(p_hat, ones, zeros) -> float:
    """Average negative log-likelihood of holdout binary outcomes.

    ``p_hat[i]`` is the fitted P(Y = 1) in stratum i, clamped to
    [1e-12, 1 - 1e-12]; ``ones`` and ``zeros`` count holdout outcomes.
    """
    p = np.clip(np.asarray(p_hat, dtype=float), CE_CLAMP, 1.0 - CE_CLAMP)
    ones = np.asarray(ones, dtype=float)
    zeros = np.asarray(zeros, dtype=float)
    total = ones.sum() + zeros.sum()
    if total == 0:
        return float("nan")
    return float(-(ones @ np.log(p) + zeros @ np.log1p(-p)) / total)


# ---------------------------------------------------------------------------
# Sampler study
# ---------------------------------------------------------------------------

FIELDS = ("replication", "sampler", "rmse_b0", "rmse_rest", "ce", "status")


def simulate_study(model: GlmModel, points, sizes, n: int, samplers: dict, reps: int = 100,
                   seed: int = 0) -> list[dict]:
    """Replicate the population/sample/refit cycle ``reps`` times.

    ``samplers`` maps a name to per-stratum counts, to ``"srswor"`` or to
    ``"full"`` (fit on the whole population; no holdout, so ce is nan).
    Replication r draws the population from a generator seeded by (seed, r)
    and each sample from one seeded by (seed, r, crc32(name)), so results do
    not depend on the order in which samplers are listed.
    Failed fits are kept as rows with a status and nan metrics.
    """
    rows = []
    names = list(samplers)
    binary = model.family.name == "bernoulli"
    rest = list(range(1, model.p))
    for r in range(reps):
        pop = Population.generate(model, points, sizes, np.random.default_rng([seed, r]))
        for name in names:
            rule = samplers[name]
            rng = np.random.default_rng([seed, r, zlib.crc32(name.encode())])
            if isinstance(rule, str) and rule == "full":
                sample = Sample([np.arange(N) for N in pop.sizes])
            elif isinstance(rule, str) and rule == "srswor":
                sample = srswor(pop, n, rng)
            else:
                sample = stratified_sample(pop, rule, rng)
            X, y = sample_data(pop, sample)
            row = {"replication": r, "sampler": name, "rmse_b0": np.nan, "rmse_rest": np.nan,
                   "ce": np.nan, "status": "ok"}
            try:
                fit = glm_fit(model.family, model.link, X, y, model.predictor)
            except SeparationError:
                row["status"] = "separated"
            except RankError:
                row["status"] = "rank_deficient"
            except NonConvergence:
                row["status"] = "nonconvergence"
            else:
                row["rmse_b0"] = rmse(fit.beta, model.beta, [0])
                row["rmse_rest"] = rmse(fit.beta, model.beta, rest) if rest else np.nan
                if binary:
                    eta = model.predictor.evaluate(pop.points) @ fit.beta
                    row["ce"] = cross_entropy(expit(eta), *holdout_counts(pop, sample))
            rows.append(row)
    return rows


def summarize(rows: list[dict]) -> dict:
    """Mean and sd of each metric per sampler over successful fits."""
    out = {}
    for name in dict.fromkeys(r["sampler"] for r in rows):
        mine = [r for r in rows if r["sampler"] == name]
        ok = [r for r in mine if r["status"] == "ok"]
        s = {"n_ok": len(ok), "n_failed": len(mine) - len(ok)}
        for key in ("rmse_b0", "rmse_rest", "ce"):
            v = np.array([r[key] for r in ok], dtype=float)
            s[key + "_mean"] = float(np.mean(v)) if v.size else np.nan
            s[key + "_sd"] = float(np.std(v, ddof=1)) if v.size > 1 else np.nan
        out[name] = s
    return out


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(r[k])) if k in ("rmse_b0", "rmse_rest", "ce") else r[k]) for k in FIELDS})
    return buf.getvalue()
