"""A reduced version of the headline sweep.

The scaled value loss (V0 - J) / eps approaches the corrector u as eps
shrinks. The full run is ``til sweep --plan configs/headline.toml``.
"""

from transient_impact import FrictionSpec, OUModel
from transient_impact.harness import SweepPlan, run_expansion_sweep

plan = SweepPlan(eps_grid=(0.5, 0.25, 0.125), y0=(0.0, 1.0), paths=4000, seed=0)
report = run_expansion_sweep(plan, OUModel(1.0, 1.0, 1.0, 1.0, 1.0), FrictionSpec(1.0, 1.0, 1.0))
print(f"u = {report.u:.5f}")
for row in report.rows:
    print(f"eps = {row.eps:<6} (V0 - J)/eps = {row.gap:.4f} +- {row.gap_se:.4f}   "
          f"deviation {row.deviation:.4f}")
print("deviation decreasing:", report.deviation_decreasing)
