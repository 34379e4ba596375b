"""Mixed-integer formulation of fair decision-tree learning.

Variable families (names are ``family[index,...]``):

====== ============================================================
p      feature weight at a branching node (binary for single-feature
       trees, continuous for linear branching)
q      cut-off value of a node
gp/gm  positive / negative part of ``q - sum_j p_j x_ij``
wq     1 iff record i goes left at a node on a quantitative test
s      1 iff level k of categorical feature j goes left at a node
wc     1 iff record i goes left at a node on a categorical test
b      nonzero-weight indicator (linear branching with limits only)
z      1 iff record i is assigned to leaf l
u      leaf parameters (one-hot class, constant value or linear coefs)
yhat   prediction indicators a[i,y] (classification) or values (regression)
r, v   products z*u used to linearize the predictions
e      absolute error per record (regression)
t      absolute value of each discrimination statistic
====== ============================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from ..data import CATEGORICAL, CLASSIFICATION, REGRESSION, Dataset
from ..fairness import DIDI, DTDI, IndexTerms, WeightMatrix, index_terms
from ..tree import (CategoricalSplit, ConstantLabel, ConstantValue,
                    DecisionTree, LinearScore, LinearSplit, QuantitativeSplit,
                    TreeShape, linear_score)
from .model import MilpModel

CLASSICAL = "classical"
LINEAR_BRANCHING = "linbranch"
LINEAR_LEAFING = "linleaf"
TREE_CLASSES = (CLASSICAL, LINEAR_BRANCHING, LINEAR_LEAFING)


class BuildError(ValueError):
    pass


class ExtractionError(RuntimeError):
    pass


class NotRepresentable(ValueError):
    """A tree cannot be written as a feasible point of the model."""


@dataclass(frozen=True)
class BuildConfig:
    tree_class: str = CLASSICAL
    index: str | None = DIDI
    lam: float = 0.0
    big_m: float | None = None
    epsilon: float | None = None
    leaf_box: float = 10.0
    leaf_intercept: bool = True
    max_feature_uses: int | Mapping[str, int] | None = None
    max_rule_features: int | None = None
    nonnegative_weights: bool = False
    weights: WeightMatrix | None = field(default=None, compare=False)
    on_zero: str = "error"

    def __post_init__(self):
        if self.tree_class not in TREE_CLASSES:
            raise BuildError(f"unknown tree class {self.tree_class!r}")
        if self.index not in (None, DIDI, DTDI):
            raise BuildError(f"unknown fairness index {self.index!r}")
        if not self.lam >= 0:
            raise BuildError("lambda must be nonnegative")
        if self.epsilon is not None and not self.epsilon > 0:
            raise BuildError("epsilon must be positive")
        if not (self.leaf_box > 0 and math.isfinite(self.leaf_box)):
            raise BuildError("linear leaf coefficients need a finite positive box")

    def with_lambda(self, lam: float) -> "BuildConfig":
        return replace(self, lam=lam)

    @property
    def fairness_active(self) -> bool:
        return self.index is not None and self.lam > 0


@dataclass
class TreeMilp:
    """A built model together with what is needed to read trees back out."""

    model: MilpModel
    ds: Dataset
    shape: TreeShape
    cfg: BuildConfig
    big_m: float
    epsilon: float
    quant: tuple[str, ...]
    cat: tuple[str, ...]
    terms: IndexTerms | None
    report: dict

    @property
    def task(self) -> str:
        return self.ds.task

    def v(self, name: str) -> int:
        return self.model.var(name)


def _min_gap(ds: Dataset, names) -> float | None:
    gaps = []
    for name in names:
        vals = np.unique(ds.columns[name])
        if len(vals) > 1:
            gaps.append(np.diff(vals).min())
    return float(min(gaps)) if gaps else None


def default_epsilon(ds: Dataset, names) -> float:
    """Half the smallest gap between distinct values of any branched feature, floored at 1e-6."""
    gap = _min_gap(ds, names)
    if gap is None:
        return 0.5
    return max(gap / 2.0, 1e-6)


def build(ds: Dataset, shape: TreeShape, cfg: BuildConfig) -> TreeMilp:
    """Assemble the tree-learning MILP for ``ds``."""
    schema = ds.schema
    quant = tuple(f.name for f in schema.quantitative)
    cat = tuple(f.name for f in schema.categorical)
    task = ds.task
    if cfg.tree_class == LINEAR_BRANCHING:
        if cat:
            raise BuildError("linear branching treats every feature as quantitative; "
                             f"drop or encode categorical features {list(cat)}")
        if not quant:
            raise BuildError("linear branching needs at least one quantitative feature")
    if cfg.tree_class == LINEAR_LEAFING and task != REGRESSION:
        raise BuildError("linear leafing applies to regression only")
    if not quant and not cat:
        raise BuildError("no unprotected features to branch on")
    if quant:
        xq = ds.quantitative_matrix()
        if xq.min() < 0.0 or xq.max() > 1.0:
            raise BuildError("quantitative features must be normalized to [0, 1]")
    if task == REGRESSION and (ds.y.min() < -1.0 or ds.y.max() > 1.0):
        raise BuildError("regression labels must be normalized to [-1, 1]")

    d_q = len(quant)
    linear = cfg.tree_class == LINEAR_BRANCHING
    # |q - p.x| <= 1 for single-feature tests on [0, 1] data; the spread of
    # p.x with p in [-1, 1]^d and sum p = 1 is at most d for linear tests.
    needed_m = (1.0 + d_q) if linear else 2.0
    big_m = needed_m if cfg.big_m is None else float(cfg.big_m)
    if big_m < needed_m:
        raise BuildError(f"big-M {big_m} too small; need at least {needed_m}")
    eps = default_epsilon(ds, quant) if cfg.epsilon is None else float(cfg.epsilon)

    m = MilpModel("fairtree")
    n = ds.n
    nodes = list(shape.nodes)
    leaves = list(shape.leaves)
    xq = ds.quantitative_matrix()
    xc = ds.categorical_matrix()
    levels = {f.name: f.levels for f in schema.categorical}

    # structure: p, q, gp/gm, wq, s, wc, b
    p_lo = 0.0 if (not linear or cfg.nonnegative_weights) else -1.0
    for v in nodes:
        for j in quant + cat:
            m.add_var(f"p[{v},{j}]", p_lo, 1.0, binary=not linear)
    if quant:
        q_lo, q_hi = (-float(d_q), float(d_q)) if linear else (0.0, 1.0)
        for v in nodes:
            m.add_var(f"q[{v}]", q_lo, q_hi)
        for i in range(n):
            for v in nodes:
                m.add_var(f"gp[{i},{v}]", 0.0, big_m)
                m.add_var(f"gm[{i},{v}]", 0.0, big_m)
        for i in range(n):
            for v in nodes:
                m.add_var(f"wq[{i},{v}]", binary=True)
    if cat:
        for v in nodes:
            for j in cat:
                for k in levels[j]:
                    m.add_var(f"s[{v},{j},{k}]", binary=True)
        for i in range(n):
            for v in nodes:
                m.add_var(f"wc[{i},{v}]", binary=True)
    limited = linear and (cfg.max_feature_uses is not None or cfg.max_rule_features is not None)
    if limited:
        for v in nodes:
            for j in quant:
                m.add_var(f"b[{v},{j}]", binary=True)
    for i in range(n):
        for l in leaves:
            m.add_var(f"z[{i},{l}]", binary=True)

    # leaf parameters and predictions
    labels = range(len(ds.label_levels))
    box = float(cfg.leaf_box)
    if task == CLASSIFICATION:
        for l in leaves:
            for y in labels:
                m.add_var(f"u[{l},{y}]", binary=True)
        for i in range(n):
            for y in labels:
                m.add_var(f"yhat[{i},{y}]", 0.0, 1.0)
    elif cfg.tree_class == LINEAR_LEAFING:
        for l in leaves:
            for j in quant:
                m.add_var(f"u[{l},{j}]", -box, box)
            if cfg.leaf_intercept:
                m.add_var(f"u[{l},_intercept]", -box, box)
        for i in range(n):
            m.add_var(f"yhat[{i}]", -1.0, 1.0)
    else:
        for l in leaves:
            m.add_var(f"u[{l}]", -1.0, 1.0)
        for i in range(n):
            m.add_var(f"yhat[{i}]", -1.0, 1.0)

    V = m.var

    # tree structure: one feature (or unit weight sum) per node
    for v in nodes:
        m.add_row(f"branch_one[{v}]", {V(f"p[{v},{j}]"): 1.0 for j in quant + cat}, "E", 1.0)
    if limited:
        for v in nodes:
            for j in quant:
                pj, bj = V(f"p[{v},{j}]"), V(f"b[{v},{j}]")
                m.add_row(f"weight_on_hi[{v},{j}]", {pj: 1.0, bj: -1.0}, "L", 0.0)
                if not cfg.nonnegative_weights:
                    m.add_row(f"weight_on_lo[{v},{j}]", {pj: -1.0, bj: -1.0}, "L", 0.0)
    if cfg.max_feature_uses is not None:
        fam = "b" if linear else "p"
        for j in quant + cat:
            lim = cfg.max_feature_uses
            lim = lim.get(j) if isinstance(lim, Mapping) else lim
            if lim is None:
                continue
            m.add_row(f"feature_uses[{j}]", {V(f"{fam}[{v},{j}]"): 1.0 for v in nodes}, "L",
                      float(lim))
    if linear and cfg.max_rule_features is not None:
        for v in nodes:
            m.add_row(f"rule_features[{v}]", {V(f"b[{v},{j}]"): 1.0 for j in quant}, "L",
                      float(cfg.max_rule_features))

    # quantitative tests
    if quant:
        for i in range(n):
            for v in nodes:
                row = {V(f"q[{v}]"): 1.0, V(f"gp[{i},{v}]"): -1.0, V(f"gm[{i},{v}]"): 1.0}
                for jj, j in enumerate(quant):
                    if xq[i, jj] != 0.0:
                        row[V(f"p[{v},{j}]")] = -xq[i, jj]
                m.add_row(f"cut_split[{i},{v}]", row, "E", 0.0)
        for i in range(n):
            for v in nodes:
                gp, gm, w = V(f"gp[{i},{v}]"), V(f"gm[{i},{v}]"), V(f"wq[{i},{v}]")
                m.add_row(f"left_pos[{i},{v}]", {gp: 1.0, w: -big_m}, "L", 0.0)
                m.add_row(f"left_neg[{i},{v}]", {gm: 1.0, w: big_m}, "L", big_m)
                m.add_row(f"right_gap[{i},{v}]", {gp: 1.0, gm: 1.0, w: eps}, "G", eps)
        for i in range(n):
            for v in nodes:
                w = V(f"wq[{i},{v}]")
                psum = {V(f"p[{v},{j}]"): 1.0 for j in quant}
                for l in shape.right_leaves(v):
                    m.add_row(f"qleft_excl[{i},{v},{l}]",
                              {V(f"z[{i},{l}]"): 1.0, w: 1.0, **psum}, "L", 2.0)
                for l in shape.left_leaves(v):
                    m.add_row(f"qright_excl[{i},{v},{l}]",
                              {V(f"z[{i},{l}]"): 1.0, w: -1.0, **psum}, "L", 1.0)

    # categorical tests
    if cat:
        for v in nodes:
            for j in cat:
                for k in levels[j]:
                    m.add_row(f"cat_link[{v},{j},{k}]",
                              {V(f"s[{v},{j},{k}]"): 1.0, V(f"p[{v},{j}]"): -1.0}, "L", 0.0)
        for i in range(n):
            for v in nodes:
                row = {V(f"wc[{i},{v}]"): 1.0}
                for jj, j in enumerate(cat):
                    row[V(f"s[{v},{j},{levels[j][xc[i, jj]]}]")] = -1.0
                m.add_row(f"cat_left[{i},{v}]", row, "E", 0.0)
        for i in range(n):
            for v in nodes:
                w = V(f"wc[{i},{v}]")
                psum = {V(f"p[{v},{j}]"): 1.0 for j in cat}
                for l in shape.left_leaves(v):
                    m.add_row(f"cright_excl[{i},{v},{l}]",
                              {V(f"z[{i},{l}]"): 1.0, w: -1.0, **psum}, "L", 1.0)
                for l in shape.right_leaves(v):
                    m.add_row(f"cleft_excl[{i},{v},{l}]",
                              {V(f"z[{i},{l}]"): 1.0, w: 1.0, **psum}, "L", 2.0)

    # every record reaches exactly one leaf
    for i in range(n):
        m.add_row(f"assign[{i}]", {V(f"z[{i},{l}]"): 1.0 for l in leaves}, "E", 1.0)

    tm = TreeMilp(m, ds, shape, cfg, big_m, eps, quant, cat, None, {})
    decomposition = linearize_objective(tm)
    m.freeze()
    tm.report = {
        "tree_class": cfg.tree_class,
        "task": task,
        "depth": shape.depth,
        "n": n,
        "lambda": cfg.lam,
        "index": cfg.index,
        "big_m": big_m,
        "epsilon": eps,
        "objective": decomposition,
        **m.summary(),
    }
    return tm


def linearize_objective(tm: TreeMilp) -> dict:
    """Add prediction, loss and discrimination rows; returns the objective decomposition."""
    m, ds, shape, cfg = tm.model, tm.ds, tm.shape, tm.cfg
    V = m.var
    n = ds.n
    leaves = list(shape.leaves)
    out: dict = {}

    if ds.task == CLASSIFICATION:
        labels = range(len(ds.label_levels))
        for l in leaves:
            m.add_row(f"leaf_onehot[{l}]", {V(f"u[{l},{y}]"): 1.0 for y in labels}, "E", 1.0)
        # r = z * u; integral whenever z and u are
        for i in range(n):
            for l in leaves:
                for y in labels:
                    m.add_var(f"r[{i},{l},{y}]", 0.0, 1.0)
        for i in range(n):
            for l in leaves:
                z = V(f"z[{i},{l}]")
                for y in labels:
                    r, u = V(f"r[{i},{l},{y}]"), V(f"u[{l},{y}]")
                    m.add_row(f"prod_z[{i},{l},{y}]", {r: 1.0, z: -1.0}, "L", 0.0)
                    m.add_row(f"prod_u[{i},{l},{y}]", {r: 1.0, u: -1.0}, "L", 0.0)
                    m.add_row(f"prod_lo[{i},{l},{y}]", {r: 1.0, z: -1.0, u: -1.0}, "G", -1.0)
        for i in range(n):
            for y in labels:
                row = {V(f"yhat[{i},{y}]"): 1.0}
                for l in leaves:
                    row[V(f"r[{i},{l},{y}]")] = -1.0
                m.add_row(f"yhat_def[{i},{y}]", row, "E", 0.0)
        # misclassification rate = 1 - (1/n) sum_i yhat[i, y_i]
        m.add_objective({V(f"yhat[{i},{int(ds.y[i])}]"): -1.0 / n for i in range(n)}, 1.0)
        out["loss"] = "misclassification_rate"
    else:
        xq = ds.quantitative_matrix()
        lin = cfg.tree_class == LINEAR_LEAFING
        box = float(cfg.leaf_box)
        for i in range(n):
            if lin:
                bound = box * (np.abs(xq[i]).sum() + (1.0 if cfg.leaf_intercept else 0.0))
            else:
                bound = 1.0
            for l in leaves:
                m.add_var(f"v[{i},{l}]", -bound, bound)
        for i in range(n):
            if lin:
                bound = box * (np.abs(xq[i]).sum() + (1.0 if cfg.leaf_intercept else 0.0))
            else:
                bound = 1.0
            for l in leaves:
                vv, z = V(f"v[{i},{l}]"), V(f"z[{i},{l}]")
                score = _leaf_score(tm, i, l, xq)
                # v = z * score, score bounded by +-bound
                m.add_row(f"prod_hi[{i},{l}]", {vv: 1.0, z: -bound}, "L", 0.0)
                m.add_row(f"prod_lo[{i},{l}]", {vv: 1.0, z: bound}, "G", 0.0)
                row = {vv: 1.0, z: bound}
                for k, a in score.items():
                    row[k] = row.get(k, 0.0) - a
                m.add_row(f"prod_s_hi[{i},{l}]", row, "L", bound)
                row = {vv: 1.0, z: -bound}
                for k, a in score.items():
                    row[k] = row.get(k, 0.0) - a
                m.add_row(f"prod_s_lo[{i},{l}]", row, "G", -bound)
        for i in range(n):
            row = {V(f"yhat[{i}]"): 1.0}
            for l in leaves:
                row[V(f"v[{i},{l}]")] = -1.0
            m.add_row(f"yhat_def[{i}]", row, "E", 0.0)
        for i in range(n):
            m.add_var(f"e[{i}]", 0.0, 2.0)
        for i in range(n):
            yh, e = V(f"yhat[{i}]"), V(f"e[{i}]")
            m.add_row(f"abs_err_hi[{i}]", {yh: 1.0, e: -1.0}, "L", float(ds.y[i]))
            m.add_row(f"abs_err_lo[{i}]", {yh: -1.0, e: -1.0}, "L", -float(ds.y[i]))
        m.add_objective({V(f"e[{i}]"): 1.0 / n for i in range(n)})
        out["loss"] = "mean_absolute_error"

    if cfg.fairness_active:
        terms = index_terms(ds, cfg.index, cfg.weights if cfg.index == DTDI else None, cfg.on_zero)
        tm.terms = terms
        coef = terms.coef.tocsr()
        if ds.task == CLASSIFICATION:
            labels = range(len(ds.label_levels))
            for r in range(coef.shape[0]):
                lo, hi = coef.indptr[r], coef.indptr[r + 1]
                idx, val = coef.indices[lo:hi], coef.data[lo:hi]
                cap = float(np.abs(val).sum())
                for y in labels:
                    t = m.add_var(f"t[{r},{y}]", 0.0, cap)
                    stat = {V(f"yhat[{i},{y}]"): a for i, a in zip(idx, val)}
                    m.add_row(f"abs_pos[{r},{y}]", {t: 1.0, **{k: -a for k, a in stat.items()}},
                              "G", 0.0)
                    m.add_row(f"abs_neg[{r},{y}]", {t: 1.0, **stat}, "G", 0.0)
                    m.add_objective({t: cfg.lam * terms.mult[r]})
        else:
            for r in range(coef.shape[0]):
                lo, hi = coef.indptr[r], coef.indptr[r + 1]
                idx, val = coef.indices[lo:hi], coef.data[lo:hi]
                cap = float(np.abs(val).sum())
                t = m.add_var(f"t[{r}]", 0.0, cap)
                stat = {V(f"yhat[{i}]"): a for i, a in zip(idx, val)}
                m.add_row(f"abs_pos[{r}]", {t: 1.0, **{k: -a for k, a in stat.items()}}, "G", 0.0)
                m.add_row(f"abs_neg[{r}]", {t: 1.0, **stat}, "G", 0.0)
                m.add_objective({t: cfg.lam * terms.mult[r]})
        out["fairness"] = {"index": cfg.index, "lambda": cfg.lam, "terms": int(coef.shape[0]),
                           "skipped": len(terms.skipped)}
    return out


def _leaf_score(tm: TreeMilp, i: int, l: int, xq: np.ndarray) -> dict[int, float]:
    """Linear expression (var -> coef) of leaf l's raw prediction for record i."""
    V = tm.model.var
    if tm.cfg.tree_class != LINEAR_LEAFING:
        return {V(f"u[{l}]"): 1.0}
    out = {}
    for jj, j in enumerate(tm.quant):
        if xq[i, jj] != 0.0:
            out[V(f"u[{l},{j}]")] = float(xq[i, jj])
    if tm.cfg.leaf_intercept:
        out[V(f"u[{l},_intercept]")] = 1.0
    return out


# ---------------------------------------------------------------------------
# reading solutions


def _rounded_binaries(tm: TreeMilp, x: np.ndarray, tol: float) -> np.ndarray:
    x = np.asarray(x, dtype=float).copy()
    b = tm.model.binary_indices()
    frac = np.abs(x[b] - np.round(x[b]))
    if len(b) and frac.max() > tol:
        worst = b[int(np.argmax(frac))]
        raise ExtractionError(
            f"binary {tm.model.var_names[worst]} = {x[worst]:.9g} is fractional")
    x[b] = np.round(x[b])
    return x


def solution_leaves(tm: TreeMilp, x: np.ndarray) -> np.ndarray:
    """Leaf of each record according to the z variables."""
    V = tm.model.var
    z = np.array([[x[V(f"z[{i},{l}]")] for l in tm.shape.leaves] for i in range(tm.ds.n)])
    return np.argmax(z, axis=1)


def solution_predictions(tm: TreeMilp, x: np.ndarray) -> np.ndarray:
    """The model's predictions: label codes or regression values."""
    V = tm.model.var
    n = tm.ds.n
    if tm.task == CLASSIFICATION:
        a = np.array([[x[V(f"yhat[{i},{y}]")] for y in range(len(tm.ds.label_levels))]
                      for i in range(n)])
        return np.argmax(a, axis=1)
    return np.array([x[V(f"yhat[{i}]")] for i in range(n)])


def extract_tree(tm: TreeMilp, x: np.ndarray, int_tol: float = 1e-6) -> DecisionTree:
    """Read the tree encoded by a solution and check it routes like the solution."""
    x = _rounded_binaries(tm, x, int_tol)
    ds, shape, cfg = tm.ds, tm.shape, tm.cfg
    V = tm.model.var
    xq = ds.quantitative_matrix()
    branches = []
    for v in shape.nodes:
        if cfg.tree_class == LINEAR_BRANCHING:
            weights = []
            for j in tm.quant:
                p = x[V(f"p[{v},{j}]")]
                weights.append((j, 0.0 if abs(p) < 1e-9 else float(p)))
            cutoff = _cutoff(tm, x, v, linear_score(ds, weights))
            branches.append(LinearSplit(tuple(weights), cutoff))
            continue
        chosen = [j for j in tm.quant + tm.cat if x[V(f"p[{v},{j}]")] > 0.5]
        if len(chosen) != 1:
            raise ExtractionError(f"node {v}: expected one branching feature, got {chosen}")
        j = chosen[0]
        if j in tm.quant:
            col = xq[:, tm.quant.index(j)]
            branches.append(QuantitativeSplit(j, _cutoff(tm, x, v, col)))
        else:
            levels = ds.schema.feature(j).levels
            left = frozenset(k for k in levels if x[V(f"s[{v},{j},{k}]")] > 0.5)
            branches.append(CategoricalSplit(j, left))
    leaves = []
    for l in shape.leaves:
        if tm.task == CLASSIFICATION:
            u = [x[V(f"u[{l},{y}]")] for y in range(len(ds.label_levels))]
            leaves.append(ConstantLabel(ds.label_levels[int(np.argmax(u))]))
        elif cfg.tree_class == LINEAR_LEAFING:
            coef = tuple((j, float(x[V(f"u[{l},{j}]")])) for j in tm.quant)
            icpt = float(x[V(f"u[{l},_intercept]")]) if cfg.leaf_intercept else 0.0
            leaves.append(LinearScore(coef, icpt))
        else:
            leaves.append(ConstantValue(float(np.clip(x[V(f"u[{l}]")], -1.0, 1.0))))
    tree = DecisionTree(shape, tuple(branches), tuple(leaves), ds.schema,
                        meta={"source": "milp"})
    routed = tree.route_many(ds)
    expected = solution_leaves(tm, x)
    bad = np.flatnonzero(routed != expected)
    if len(bad):
        i = int(bad[0])
        raise ExtractionError(
            f"routing mismatch for record {i}: tree leaf {routed[i]}, solution leaf {expected[i]}")
    return tree


def _cutoff(tm: TreeMilp, x: np.ndarray, v: int, score: np.ndarray) -> float:
    """Solver cut-off, nudged so that every record the solution sends left goes left."""
    V = tm.model.var
    q = float(x[V(f"q[{v}]")])
    left = np.array([x[V(f"wq[{i},{v}]")] > 0.5 for i in range(tm.ds.n)])
    if left.any():
        q = max(q, float(score[left].max()))
    return q


# ---------------------------------------------------------------------------
# writing trees as model points


def _mirror(branches: list, leaves: list, shape: TreeShape, node: int) -> None:
    """Swap the left and right subtrees below ``node`` in place."""
    def swap(a: int, b: int):
        # a, b are heap ids at equal depth
        if a < shape.n_leaves:
            branches[a - 1], branches[b - 1] = branches[b - 1], branches[a - 1]
            swap(2 * a, 2 * b)
            swap(2 * a + 1, 2 * b + 1)
        else:
            la, lb = a - shape.n_leaves, b - shape.n_leaves
            leaves[la], leaves[lb] = leaves[lb], leaves[la]
    swap(2 * node, 2 * node + 1)


def canonical_tree(tm: TreeMilp, tree: DecisionTree) -> DecisionTree:
    """Equivalent tree whose single-feature tests are representable in the model.

    A threshold that sends every training record right cannot be encoded when
    the feature attains 0 (cut-offs live in [0, 1]); such a node is replaced
    by its mirror image with an all-left cut-off. Predictions are unchanged.
    """
    branches, leaves = list(tree.branches), list(tree.leaves)
    ds = tm.ds
    for v in tm.shape.nodes:
        rule = branches[v - 1]
        if isinstance(rule, QuantitativeSplit):
            col = ds.columns[rule.feature]
            if not (rule.cutoff >= col).any() and col.min() < tm.epsilon:
                branches[v - 1] = QuantitativeSplit(rule.feature, 1.0)
                _mirror(branches, leaves, tm.shape, v)
    return DecisionTree(tm.shape, tuple(branches), tuple(leaves), tree.schema,
                        tree.normalization, tree.schema_fingerprint, tree.meta)


def assignment_from_tree(tm: TreeMilp, tree: DecisionTree) -> np.ndarray:
    """A feasible model point that encodes ``tree``.

    Raises NotRepresentable when the tree's tests cannot be separated with the
    model's epsilon, or its leaf outputs leave the admissible range.
    """
    tree = canonical_tree(tm, tree)
    ds, shape, cfg, m = tm.ds, tm.shape, tm.cfg, tm.model
    if tree.schema_fingerprint != ds.schema.fingerprint():
        raise NotRepresentable("tree schema differs from the model's dataset")
    V = m.var
    x = np.zeros(m.n_vars)
    n = ds.n
    xq = ds.quantitative_matrix()
    linear = cfg.tree_class == LINEAR_BRANCHING

    for v in shape.nodes:
        rule = tree.branches[v - 1]
        if linear:
            if not isinstance(rule, LinearSplit):
                rule = _as_linear(rule, tm.quant)
            wmap = dict(rule.weights)
            pvec = np.array([wmap.get(j, 0.0) for j in tm.quant])
            if abs(pvec.sum() - 1.0) > 1e-9:
                raise NotRepresentable(f"node {v}: linear weights must sum to 1")
            lo = 0.0 if cfg.nonnegative_weights else -1.0
            if pvec.min() < lo - 1e-12 or pvec.max() > 1.0 + 1e-12:
                raise NotRepresentable(f"node {v}: weights outside [{lo}, 1]")
            for jj, j in enumerate(tm.quant):
                x[V(f"p[{v},{j}]")] = pvec[jj]
                if m.has_var(f"b[{v},{j}]"):
                    x[V(f"b[{v},{j}]")] = float(pvec[jj] != 0.0)
            _set_cut(tm, x, v, linear_score(ds, rule.weights), rule.cutoff)
            continue
        if isinstance(rule, LinearSplit):
            raise NotRepresentable(f"node {v}: linear test in a single-feature tree")
        x[V(f"p[{v},{rule.feature}]")] = 1.0
        if isinstance(rule, QuantitativeSplit):
            col = xq[:, tm.quant.index(rule.feature)]
            _set_cut(tm, x, v, col, rule.cutoff)
            if tm.cat:
                for i in range(n):
                    x[V(f"wc[{i},{v}]")] = 0.0
        else:
            feat = ds.schema.feature(rule.feature)
            for k in feat.levels:
                x[V(f"s[{v},{rule.feature},{k}]")] = float(k in rule.left)
            codes = ds.columns[rule.feature]
            for i in range(n):
                x[V(f"wc[{i},{v}]")] = float(feat.levels[codes[i]] in rule.left)
            if tm.quant:
                # no quantitative test here: q = 0 forces wq = 1 and leaves the
                # exclusion rows slack
                x[V(f"q[{v}]")] = 0.0
                for i in range(n):
                    x[V(f"wq[{i},{v}]")] = 1.0

    leaf_of = tree.route_many(ds)
    for i in range(n):
        x[V(f"z[{i},{int(leaf_of[i])}]")] = 1.0

    preds = np.zeros(n)
    if tm.task == CLASSIFICATION:
        codes = {lv: k for k, lv in enumerate(ds.label_levels)}
        for l in shape.leaves:
            x[V(f"u[{l},{codes[tree.leaves[l].label]}]")] = 1.0
        for i in range(n):
            l = int(leaf_of[i])
            y = codes[tree.leaves[l].label]
            x[V(f"r[{i},{l},{y}]")] = 1.0
            x[V(f"yhat[{i},{y}]")] = 1.0
            preds[i] = y
    else:
        for l in shape.leaves:
            rule = tree.leaves[l]
            if cfg.tree_class == LINEAR_LEAFING:
                if isinstance(rule, ConstantValue):
                    rule = LinearScore(tuple((j, 0.0) for j in tm.quant), rule.value)
                cmap = dict(rule.coef)
                for j in tm.quant:
                    x[V(f"u[{l},{j}]")] = cmap.get(j, 0.0)
                if cfg.leaf_intercept:
                    x[V(f"u[{l},_intercept]")] = rule.intercept
                elif rule.intercept != 0.0:
                    raise NotRepresentable("leaf intercepts are disabled in this model")
            else:
                if not isinstance(rule, ConstantValue):
                    raise NotRepresentable("linear leaf in a constant-leaf model")
                x[V(f"u[{l}]")] = rule.value
        for i in range(n):
            l = int(leaf_of[i])
            score = sum(x[k] * a for k, a in _leaf_score(tm, i, l, xq).items())
            if abs(score) > 1.0 + 1e-9:
                raise NotRepresentable(f"record {i}: leaf output {score} outside [-1, 1]")
            x[V(f"v[{i},{l}]")] = score
            x[V(f"yhat[{i}]")] = score
            x[V(f"e[{i}]")] = abs(score - ds.y[i])
            preds[i] = score

    if tm.terms is not None:
        coef = tm.terms.coef
        if tm.task == CLASSIFICATION:
            onehot = np.zeros((n, len(ds.label_levels)))
            onehot[np.arange(n), preds.astype(int)] = 1.0
            stats = coef @ onehot
            for r in range(coef.shape[0]):
                for y in range(onehot.shape[1]):
                    x[V(f"t[{r},{y}]")] = abs(stats[r, y])
        else:
            stats = coef @ preds
            for r in range(coef.shape[0]):
                x[V(f"t[{r}]")] = abs(stats[r])

    bad = m.first_violation(x, tol=1e-7)
    if bad is not None:
        raise NotRepresentable(f"tree violates {bad}")
    return x


def _as_linear(rule, quant: tuple[str, ...]) -> LinearSplit:
    if isinstance(rule, QuantitativeSplit):
        return LinearSplit(tuple((j, 1.0 if j == rule.feature else 0.0) for j in quant),
                           rule.cutoff)
    raise NotRepresentable("categorical test in a linear-branching model")


def _set_cut(tm: TreeMilp, x: np.ndarray, v: int, score: np.ndarray, cutoff: float) -> None:
    """Choose q and the gp/gm/wq values for a test ``cutoff >= score``."""
    V = tm.model.var
    lb, ub = tm.model.lb[V(f"q[{v}]")], tm.model.ub[V(f"q[{v}]")]
    left = cutoff >= score
    eps = tm.epsilon
    hi_left = score[left].max() if left.any() else None
    lo_right = score[~left].min() if (~left).any() else None
    if lo_right is None:
        q = max(hi_left, lb) if hi_left is not None else lb
    elif hi_left is None:
        q = lo_right - eps
    else:
        if lo_right - hi_left < eps - 1e-12:
            raise NotRepresentable(
                f"node {v}: records on both sides closer than epsilon={eps:g}")
        q = hi_left
    if q < lb - 1e-12 or q > ub + 1e-12:
        raise NotRepresentable(f"node {v}: cut-off {q:g} outside [{lb:g}, {ub:g}]")
    q = float(min(max(q, lb), ub))
    x[V(f"q[{v}]")] = q
    for i in range(tm.ds.n):
        diff = q - score[i]
        x[V(f"gp[{i},{v}]")] = max(diff, 0.0)
        x[V(f"gm[{i},{v}]")] = max(-diff, 0.0)
        x[V(f"wq[{i},{v}]")] = 1.0 if left[i] else 0.0
