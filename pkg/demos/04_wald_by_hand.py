"""The proportionality Wald test on small hand-made inputs."""

import numpy as np

from incomepool import proportional_wald

alpha = np.array([0.2, 0.5, 0.3])
sigma = 0.01 * np.eye(6)

print("beta = 2 alpha:", proportional_wald(2 * alpha, alpha, sigma))

# A two-coefficient case that can be checked with pencil and paper:
# r = 1, gradient (-1, 0, 0, -1), variance 0.02, so the statistic is 1 / 0.02.
print("hand fixture:  ", proportional_wald([1.0, 0.0], [0.0, 1.0], 0.01 * np.eye(4)))

# Rescaling alpha (and its covariance block) changes chi but not the verdict.
beta = np.array([0.25, 0.9, 0.5])
for c in (1.0, 10.0, 0.1):
    S = np.diag([1, 1, 1, c, c, c])
    res = proportional_wald(beta, c * alpha, S @ sigma @ S)
    print(f"c = {c:5.1f}: statistic {res.statistic:.6f}, chi_hat {res.chi_hat:.4f}")
