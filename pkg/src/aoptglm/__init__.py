"""A-optimal experimental designs under generalized linear models."""

__version__ = "0.1.0"

from .design import (ApproximateDesign, Continuous, DesignSpace, Discrete, ExactDesign, f_minor, f_value,
                     fisher_info, h_value)
from .errors import (AllocationError, AOptError, DegenerateError, DomainError, InfeasibleError, MissingHook,
                     NonConvergence, NonDifferentiableError, RankError, SeparationError, SingularError,
                     WeightError)
from .evaluation import cross_entropy, glm_fit, relative_efficiency, rmse, simulate_study, stratified_sample
from .forlion import (ForlionConfig, alpha_step, equivalence_check, forlion_optimize, merge_points,
                      new_point_search, sensitivity, sensitivity_gradient)
from .glm import (CustomTerm, Family, GlmModel, Indicator, Interaction, Intercept, Linear, Power, PredictorBasis,
                  bernoulli, binomial, gamma, inverse_gaussian, logistic, main_effects, normal, nu, nu_prime,
                  poisson)
from .liftone import (certify, classify, liftone_coefficients, liftone_optimize, maximize_hi, saturated_aopt,
                      saturated_weights)
from .rounding import round_allocation
