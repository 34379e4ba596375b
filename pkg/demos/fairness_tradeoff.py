"""Trade accuracy for fairness by raising the penalty weight.

Fits exact depth-1 trees along a lambda grid until the impact index of the
predictions is (nearly) zero, then prints each step of the trade-off.
"""

from fairtree.data import normalize
from fairtree.fairness import DIDI
from fairtree.milp import BuildConfig
from fairtree.solver import SolverOptions
from fairtree.training import lambda_sweep
from fairtree.tree import TreeShape

from _data import describe, hiring

ds, _ = normalize(hiring(n=16, seed=1))
sweep = lambda_sweep(ds, None, TreeShape(1), BuildConfig(index=DIDI),
                     SolverOptions(time_limit=30), step=0.25, lam_max=5.0)

print(f"{'lambda':>7} {'error':>7} {'didi':>7} {'level':>7}  tree")
for lam, rep in sweep.points:
    t = rep.tree
    rule = t.branches[0]
    print(f"{lam:7.2f} {rep.train.loss:7.3f} {rep.train.index:7.3f} {rep.train.level:7.3f}  "
          f"{describe(rule)} -> {', '.join(describe(leaf) for leaf in t.leaves)}")
print(f"selected lambda {sweep.selected_lambda} ({sweep.reason})")
