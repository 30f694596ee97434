"""First-order value approximation for the linear OU benchmark.

The frictionless value is 1/3, the corrector u = (sqrt(6) - 1) / 2, and the
approximate value at the Merton position with no distortion is
V0 - eps u.
"""

import numpy as np

from transient_impact import FrictionSpec, OUModel, assemble_vhat, corrector_u, solve_maximal
from transient_impact.riccati import build_problem

model = OUModel(lam=1.0, eta=1.0, sigma=1.0, gamma=1.0, rho=1.0)
y = np.array([0.0, 1.0])
base = FrictionSpec(1.0, 1.0, 1.0)
sol = solve_maximal(build_problem(model, base, y))
u = corrector_u(model, base, y)
print(f"corrector u = {u.value:.6f}")
for eps in (0.5, 0.1, 0.01):
    fr = base.with_eps(eps)
    terms = assemble_vhat(model, fr, sol, u.value, [0.0], model.merton(y), y, v0=1 / 3)
    print(f"eps = {eps:<5} vhat = {terms.vhat:.6f}")
