"""Worked example problems shared by the test modules."""

import itertools

import numpy as np

from aoptglm.design import ApproximateDesign, Continuous, DesignSpace
from aoptglm.glm import GlmModel, Indicator, Intercept, Linear, PredictorBasis, gamma, logistic, main_effects

# volunteer study: binary pay level (factor 0) by three-level age group (factor 1)
PAID_POINTS = np.array([[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [1, 2]], dtype=float)
PAID_MODEL = logistic([0, 3, 3, 3], PredictorBasis((Intercept(), Linear(0), Indicator(1, 1), Indicator(1, 2))))
PAID_WEIGHTS = np.array([0.2208, 0.2597, 0.2597, 0.2597, 0.0, 0.0])
PAID_COUNTS = [44, 52, 52, 52, 0, 0]
PAID_SIZES = [500, 400, 100, 2000, 1500, 500]

# circuit-board experiment: two-level factor and linear/quadratic contrasts of a three-level factor
PCB_POINTS = np.array([[1, 1, 1], [1, 0, -2], [1, -1, 1], [-1, 1, 1], [-1, 0, -2], [-1, -1, 1]], dtype=float)
PCB_MODEL = logistic([-2.5, 0.15, 0.70, 0.10], main_effects(3))
PCB_WEIGHTS = np.array([0.1458, 0.1407, 0.2261, 0.1510, 0.1385, 0.1980])
PCB_COUNTS = [420, 405, 651, 435, 399, 570]

# one-factor logistic with intercept -2 and slope 0.5
LOGIT1 = logistic([-2.0, 0.5], main_effects(1))
LOGIT1_OPT = ApproximateDesign([[0.2579], [7.7421]], [0.8832, 0.1168])


def logit1_space(upper=10.0):
    return DesignSpace([Continuous(0.0, upper)])


def gamma_model(g):
    return GlmModel(gamma(1.0), "inverse", [1.0, g, g], main_effects(2))


UNIT_SQUARE = DesignSpace([Continuous(0.0, 1.0), Continuous(0.0, 1.0)])

# reference vertex weights in order (0,0), (1,0), (0,1), (1,1)
GAMMA_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
GAMMA_TABLE = {
    -0.45: (0.1136, 0.3984, 0.3983, 0.0897),
    0.0: (0.3560, 0.2257, 0.2250, 0.1933),
    1.0: (0.2690, 0.3003, 0.3001, 0.1307),
    2.0: (0.2208, 0.3805, 0.3806, 0.0182),
}

THREE_FACTOR = logistic([1.0, -0.5, 0.5, 1.0], main_effects(3))
THREE_FACTOR_SPACE = DesignSpace([Continuous(-2, 2), Continuous(-1, 1), Continuous(-3, 3)])


def factorial(k):
    return np.array(list(itertools.product([-1.0, 1.0], repeat=k)))


def _positive_cases():
    from aoptglm.glm import binomial, bernoulli, inverse_gaussian, normal, poisson
    # (family, link, beta range, box); boxes keep eta inside the link domain
    return [
        (bernoulli(), "logit", (-2, 2), (-2, 2)),
        (bernoulli(), "probit", (-1, 1), (-2, 2)),
        (bernoulli(), "cloglog", (-1, 0.5), (-1, 1)),
        (binomial(10), "logit", (-2, 2), (-2, 2)),
        (poisson(), "log", (-1, 1), (-1, 1)),
        (poisson(), "identity", (0.5, 2), (0.1, 2)),
        (gamma(2.0), "inverse", (0.5, 2), (0.1, 2)),
        (gamma(1.0), "log", (-1, 1), (-1, 1)),
        (inverse_gaussian(3.0), "inverse_squared", (0.5, 2), (0.1, 2)),
        (normal(1.0), "identity", (-2, 2), (-2, 2)),
        (normal(2.0), "log", (-1, 1), (-1, 1)),
    ]


GRADIENT_CASES = _positive_cases()


def random_gradient_case(family, link, beta_range, box, rng):
    """Random two-factor model with a quadratic term, a random 6-point design and a query point."""
    from aoptglm.glm import Interaction, Power
    basis = PredictorBasis((Intercept(), Linear(0), Linear(1), Power(0, 2.0), Interaction((0, 1))))
    beta = rng.uniform(*beta_range, size=5)
    if beta_range[0] > 0:
        # positive-domain links: keep every coefficient positive so eta > 0 on the box
        beta = np.abs(beta)
    model = GlmModel(family, link, beta, basis)
    pts = rng.uniform(*box, size=(6, 2))
    design = ApproximateDesign(pts, rng.dirichlet(np.ones(6)))
    return model, design, rng.uniform(*box, size=2)
