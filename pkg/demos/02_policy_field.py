"""Trading-rate field of the asymptotic policy for two assets.

With no distortion the rate for each asset pulls the position toward the
Merton portfolio. A positive distortion on asset one slows its purchases
and leaves asset two alone when the assets are uncorrelated.
"""

import numpy as np

from transient_impact import ConstantModel, FrictionSpec, Grid, asymptotic, policy_vector_field
from transient_impact.harness import figure_checks

Sigma = np.diag([1.0, 2.0])
model = ConstantModel([0.0, 0.0], Sigma, 1.0, 1.0)
fr = FrictionSpec(Sigma / 2, 2 * Sigma, 0.5, 1.0)
pol = asymptotic(model, fr)
grid = Grid.linspace((-1, 1), (-1, 1), 3, 3)
y = np.zeros(2)
for dist in ([0.0, 0.0], [0.5, 0.0]):
    table = policy_vector_field(pol, model, fr, grid, y, dist)
    print(f"distortion {dist}")
    for row in table.data:
        print("  h = ({:+.1f}, {:+.1f})  rate = ({:+.4f}, {:+.4f})".format(*row))

checks = figure_checks()
print("sign checks:", checks.to_dict())
