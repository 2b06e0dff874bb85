"""
Recursions with a simulated network
===================================

The oracle stands in for training: its errors shrink in proportion to how
much the previous pseudo-targets beat the first predictions.
"""

from pphull.simkit import SimulationConfig, simulate

cfg = SimulationConfig(n_samples=40, n_recursions=4)
report = simulate(cfg)
print("recursion  2D err   MPJPE   mIOU   uncertain")
for row in report.rows():
    print("{recursion:9d}  {mean_2d_err:.4f}  {mpjpe:.4f}  {miou:.3f}  {uncertain_frac:.3f}"
          .format(**row))
