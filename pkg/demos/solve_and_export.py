"""Look inside one solve: model size, bound trace, and the MPS export.

Builds the depth-2 model with a fairness penalty, runs branch-and-bound from
the greedy warm start and writes the model for an external solver.
"""

import sys
import tempfile
from pathlib import Path

from fairtree.data import normalize
from fairtree.milp import BuildConfig, build, extract_tree
from fairtree.solver import SolverOptions, branch_and_bound, export_mps
from fairtree.training import greedy_warmstart
from fairtree.tree import TreeShape

from _data import describe, hiring

ds, _ = normalize(hiring(n=10, seed=2))
shape, cfg = TreeShape(2), BuildConfig(lam=0.5)
tm = build(ds, shape, cfg)
print("model:", {k: tm.report[k] for k in ("variables", "binary", "rows", "nonzeros")})

greedy, x0 = greedy_warmstart(ds, shape, cfg, tm)
res = branch_and_bound(tm.model, SolverOptions(time_limit=60), x0)
print(f"status {res.status}, objective {res.objective:.4f}, nodes {res.nodes}")
print("bound trace (lower, upper):")
for t, lo, up in res.trace[:: max(1, len(res.trace) // 8)]:
    print(f"  {lo:8.4f} {up:8.4f}")

tree = extract_tree(tm, res.x)
for v, rule in zip(shape.nodes, tree.branches):
    print(f"  node {v}: {describe(rule)}")
print("  leaves:", ", ".join(describe(leaf) for leaf in tree.leaves))

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
path = out / "hiring_depth2.mps"
export_mps(tm.model, path)
print(f"wrote {path} ({path.stat().st_size} bytes)")
