"""Library walkthrough: weights on a finite set, rounding, a continuous space, and a sampling study.

Run with ``python3 demos/walkthrough.py``; takes a few seconds.
"""

import numpy as np

from aoptglm.design import Continuous, DesignSpace
from aoptglm.evaluation import simulate_study, summarize
from aoptglm.forlion import ForlionConfig, equivalence_check, forlion_optimize
from aoptglm.glm import Indicator, Intercept, Linear, PredictorBasis, logistic, main_effects
from aoptglm.liftone import liftone_optimize
from aoptglm.rounding import round_allocation

np.set_printoptions(precision=4, suppress=True)

# pay level (0/1) by age group (0/1/2), logistic response
points = np.array([[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [1, 2]], dtype=float)
basis = PredictorBasis((Intercept(), Linear(0), Indicator(1, 1), Indicator(1, 2)))
model = logistic([0, 3, 3, 3], basis)

res = liftone_optimize(model, points)
print("finite set: weights", res.design.weights, "certified", res.certified)
exact = round_allocation(model, res.design, 200)
print("           n=200 allocation", exact.counts.tolist())

# one continuous factor on [0, 10]
line = logistic([-2.0, 0.5], main_effects(1))
space = DesignSpace([Continuous(0.0, 10.0)])
fit = forlion_optimize(line, space, ForlionConfig(delta=0.3, seed=0))
order = np.argsort(fit.design.points[:, 0])
print("interval:   points", fit.design.points[order, 0], "weights", fit.design.weights[order])
rep = equivalence_check(line, fit.design, space=space, grid=201)
print("            max phi / tr(F^-1) - 1 =", f"{rep['slack']:.2e}")

# does the optimal allocation help when sampling from a finite population?
sizes = [500, 400, 100, 2000, 1500, 500]
samplers = {"a_optimal": exact.counts.tolist(), "proportional": [20, 16, 4, 80, 60, 20], "srswor": "srswor"}
summary = summarize(simulate_study(model, points, sizes, 200, samplers, reps=50, seed=1))
for name, s in summary.items():
    print(f"study:      {name:<12} rmse(slopes) {s['rmse_rest_mean']:.3f}  holdout CE {s['ce_mean']:.4f}"
          f"  failed fits {s['n_failed']}")
