"""Audit historical decisions before any model is trained.

Prints the impact and treatment indices of the recorded offers, how each
group contributes, and where the per-record treatment gaps fall.
"""

from fairtree.data import normalize
from fairtree.fairness import audit, knn_weights

from _data import hiring

raw = hiring(n=40, seed=3)
ds, _ = normalize(raw)
w = knn_weights(ds, 5)
report = audit(ds, weights=w, on_zero="unit")

print("indices of the recorded offers")
for name, v in report["indices"].items():
    print(f"  {name:7s} raw={v['raw']:.4f} normalized={v['normalized']:.4f}")

print("treatment index by group")
for g, v in report["indices"]["dtdi_c"]["groups"].items():
    print(f"  {g}: {v:.4f}")

hist = report["gamma"]
print("per-record treatment gap (own group minus neighbourhood), positive label")
edges = hist["edges"]
for lo, hi, count in zip(edges, edges[1:], hist["counts"]):
    if count:
        print(f"  [{lo:+.2f}, {hi:+.2f}) {'#' * count}")
