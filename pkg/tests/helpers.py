"""Small dataset builders shared by the tests."""

from __future__ import annotations

import numpy as np

from fairtree.data import (CATEGORICAL, CLASSIFICATION, PROTECTED, QUANTITATIVE, REGRESSION,
                           Dataset, Feature, FeatureSchema, LabelSpec, normalize)
from fairtree.milp import MilpModel


def make_dataset(quant=None, cat=None, prot=None, y=None, task=CLASSIFICATION,
                 labels=("0", "1"), cat_levels=("a", "b", "c"), prot_levels=("f", "m"),
                 norm=True) -> Dataset:
    """Dataset from arrays: ``quant`` (n, dq), ``cat`` (n, dc) codes, ``prot`` codes, ``y``."""
    y = np.asarray(y)
    n = len(y)
    quant = np.zeros((n, 0)) if quant is None else np.asarray(quant, dtype=float).reshape(n, -1)
    cat = np.zeros((n, 0), dtype=int) if cat is None else np.asarray(cat, dtype=int).reshape(n, -1)
    prot = np.zeros(n, dtype=int) if prot is None else np.asarray(prot, dtype=int)
    feats, cols = [], {}
    for j in range(quant.shape[1]):
        feats.append(Feature(f"x{j}", QUANTITATIVE))
        cols[f"x{j}"] = quant[:, j]
    for j in range(cat.shape[1]):
        feats.append(Feature(f"c{j}", CATEGORICAL, levels=tuple(cat_levels)))
        cols[f"c{j}"] = cat[:, j]
    feats.append(Feature("g", CATEGORICAL, PROTECTED, tuple(prot_levels)))
    cols["g"] = prot
    if task == CLASSIFICATION:
        label = LabelSpec("y", task, tuple(labels))
        y = y.astype(int)
    else:
        label = LabelSpec("y", REGRESSION)
        y = y.astype(float)
    ds = Dataset(FeatureSchema(tuple(feats), label), cols, y)
    return normalize(ds)[0] if norm else ds


def random_instance(rng, n, d, task=CLASSIFICATION, n_labels=2, grid=5):
    """Mixed-kind random instance with both protected groups present."""
    n_cat = int(rng.integers(0, 2)) if d > 1 else 0
    n_q = d - n_cat
    quant = rng.integers(0, grid, size=(n, n_q)).astype(float)
    cat = rng.integers(0, 3, size=(n, n_cat))
    prot = np.r_[[0, 1], rng.integers(0, 2, n - 2)]
    if task == CLASSIFICATION:
        y = rng.integers(0, n_labels, n)
        labels = tuple(str(k) for k in range(n_labels))
    else:
        y = np.round(rng.normal(size=n), 3)
        labels = None
    return make_dataset(quant, cat, prot, y, task=task, labels=labels or ("0", "1"))


def biased_fixture() -> Dataset:
    """Eight records whose labels track the protected group.

    Depth-1 trees trade misclassification against disparate impact along
    (0, 1.5), (1/8, 1), (1/4, 0.5), (3/8, 0), and no 0.1-grid lambda ties.
    """
    x = [[0.0], [1.0], [2.0], [3.0], [4.0], [5.0], [6.0], [7.0]]
    g = [0, 0, 0, 1, 1, 0, 1, 1]
    y = [0, 0, 0, 1, 1, 1, 1, 1]
    return make_dataset(x, None, g, y)


def separable_fixture() -> Dataset:
    x = [[0.0, 3.0], [1.0, 1.0], [2.0, 0.0], [3.0, 2.0],
         [4.0, 1.0], [5.0, 3.0], [6.0, 2.0], [7.0, 0.0]]
    g = [0, 1, 0, 1, 0, 1, 0, 1]
    y = [0, 0, 0, 0, 1, 1, 1, 1]
    return make_dataset(x, None, g, y)


def random_milp(rng, n_bin, n_cont, n_rows):
    """Bounded random model; may be infeasible."""
    m = MilpModel("rand")
    for j in range(n_bin):
        m.add_var(f"b{j}", binary=True)
    for j in range(n_cont):
        m.add_var(f"c{j}", float(rng.integers(-3, 1)), float(rng.integers(1, 4)))
    nv = n_bin + n_cont
    for r in range(n_rows):
        support = rng.choice(nv, size=min(nv, int(rng.integers(2, 5))), replace=False)
        coef = {int(j): float(rng.integers(-5, 6)) for j in support}
        sense = str(rng.choice(["L", "G", "E"], p=[0.6, 0.3, 0.1]))
        m.add_row(f"r{r}", coef, sense, float(rng.integers(-4, 8)))
    m.add_objective({j: float(rng.integers(-6, 7)) for j in range(nv)}, float(rng.integers(-2, 3)))
    return m.freeze()
