"""Solve the matrix Riccati equation and read off the trading gains.

For one asset with every parameter equal to one the gains are known in
closed form: Qh = 1 and Qd = sqrt(6) - 2. For two uncorrelated assets the
problem splits into two scalar problems.
"""

import math

import numpy as np

from transient_impact import certify, problem_from_parameters, solve, solve_1d_closed_form

sol = solve(1.0, 1.0, 1.0, 1.0, 1.0)
print("scalar instance")
print("  A  =", np.round(sol.A, 6).tolist())
print(f"  Qd = {sol.Qd[0, 0]:.6f} (closed form {math.sqrt(6) - 2:.6f})")
print(f"  Qh = {sol.Qh[0, 0]:.6f}")
print(f"  closed-form solver agrees: {np.allclose(sol.A, solve_1d_closed_form(1, 1, 1, 1, 1).A)}")

Sigma = np.diag([1.0, 2.0])
problem = problem_from_parameters(1.0, Sigma, Sigma / 2, 2 * Sigma, 0.5)
two = solve(1.0, Sigma, Sigma / 2, 2 * Sigma, 0.5)
lam_inv = np.linalg.inv(Sigma / 2)
print("two uncorrelated assets")
print("  Lambda^-1 Qd =", np.round(lam_inv @ two.Qd, 5).tolist())
print("  Lambda^-1 Qh =", np.round(lam_inv @ two.Qh, 5).tolist())
cert = certify(two, problem)
print(f"  residual {two.residual_norm:.1e}, contractivity min eig {cert.contractivity_min_eig:.3f}")
