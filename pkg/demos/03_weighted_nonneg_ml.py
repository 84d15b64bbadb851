"""Alternative estimators: settings-weighted projection, the nonnegative
projection and the maximum-likelihood no-signalling estimate."""
import numpy as np

from nsbell import (
    BehaviorVector,
    Scenario,
    SettingsWeights,
    estimate_ml,
    project_l2,
    project_nonneg,
    project_weighted,
)
from nsbell.data import frequencies, generate_drift_counts
from nsbell.projection import ml_objective
from nsbell.scenario import random_local_behavior

s = Scenario(2, 2)
rng = np.random.default_rng(0)
base = BehaviorVector(s, 0.6 * random_local_behavior(s, rng).entries + 0.1, "probability")

# one setting pair is sampled far more often than the others
trials = {(0, 0): 1_000_000, (0, 1): 1_000, (1, 0): 1_000, (1, 1): 1_000}
f, pi = frequencies(generate_drift_counts(base, trials, 0.0, 1, seed=1))
plain, weighted = project_l2(f), project_weighted(f, pi)
print("error in the heavily sampled block: plain "
      f"{np.abs(plain.blocks[0] - base.blocks[0]).max():.2e}, weighted {np.abs(weighted.blocks[0] - base.blocks[0]).max():.2e}")

# a strongly signalling input whose plain projection is not a valid behaviour
raw = np.array([0.82, 0.04, 0.06, 0.08, 0.88, 0.02, 0.06, 0.04,
                0.85, 0.05, 0.04, 0.06, 0.06, 0.82, 0.04, 0.08])
g = BehaviorVector(s, raw, "frequency")
print(f"\nplain projection minimum {project_l2(g).entries.min():.4f}")
q = project_nonneg(g)
print(f"nonnegative projection minimum {q.entries.min():.4f}, zeros at {np.flatnonzero(q.entries == 0)}")

uniform = SettingsWeights.uniform(s)
ml = estimate_ml(g, uniform, return_result=True)
print(f"log-likelihood: nonneg L2 {ml_objective(q.entries, raw, uniform):.6f}, ML {ml.objective:.6f} "
      f"({ml.iterations} iterations)")
