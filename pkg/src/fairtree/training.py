"""Fitting, the lambda sweep, cross-validation, and two reference procedures.

The exhaustive search in :func:`brute_force_optimum` is the optimality
oracle for small instances; :func:`greedy_warmstart` builds a CART-style
tree whose model point seeds branch-and-bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

from .data import CATEGORICAL, CLASSIFICATION, Dataset, FoldPlan, normalize
from .fairness import DTDI, WeightMatrix, discrimination, index_terms, knn_weights
from .milp.build import (CLASSICAL, LINEAR_BRANCHING, LINEAR_LEAFING, BuildConfig,
                         ExtractionError, NotRepresentable, TreeMilp, assignment_from_tree,
                         build, extract_tree, solution_predictions)
from .solver.bnb import (STATUS_INFEASIBLE, STATUS_OPTIMAL, STATUS_UNBOUNDED, SolveResult,
                         SolverOptions, branch_and_bound, install_incumbent)
from .tree import (CategoricalSplit, ConstantLabel, ConstantValue, DecisionTree,
                   QuantitativeSplit, TreeShape)

THRESHOLD_MET = "threshold met"
THRESHOLD_UNMET = "threshold unmet"

ORACLE_MAX_DEPTH = 2
ORACLE_MAX_N = 30
ORACLE_MAX_FEATURES = 4
ORACLE_MAX_LABELS = 3


class FitError(RuntimeError):
    pass


class OracleLimitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# metrics


def loss(ds: Dataset, predictions) -> float:
    """Misclassification rate (classification) or mean absolute error (regression)."""
    predictions = np.asarray(predictions)
    if ds.task == CLASSIFICATION:
        return float(np.mean(predictions.astype(int) != ds.y))
    return float(np.mean(np.abs(predictions.astype(float) - ds.y)))


def weights_for(ds: Dataset, template: WeightMatrix | None) -> WeightMatrix | None:
    """Kernel weights for ``ds`` built the same way as ``template``.

    Unit weights (``None``) stay unit; kNN weights are recomputed with the
    same neighbour count.
    """
    if template is None or template.unit:
        return None
    if template.n == ds.n and template.k is None:
        return template
    if template.k is None:
        raise ValueError("custom weight matrix does not match the dataset")
    return knn_weights(ds, template.k)


def discrimination_level(raw: float, reference: float) -> float:
    """Index of the predictions relative to the index of the true labels."""
    if reference > 0:
        return raw / reference
    return 0.0 if raw <= 1e-12 else math.inf


@dataclass
class Metrics:
    loss: float
    index: float | None
    level: float | None

    def to_dict(self) -> dict:
        return {"loss": self.loss, "index": self.index, "level": self.level}


def evaluate(tree: DecisionTree, ds: Dataset, index: str | None,
             weights: WeightMatrix | None = None, on_zero: str = "error") -> Metrics:
    """Loss and discrimination of ``tree`` on ``ds``, computed from its predictions."""
    pred = tree.predict_many(ds)
    if index is None:
        return Metrics(loss(ds, pred), None, None)
    raw = discrimination(ds, pred, index, weights, on_zero)
    ref = discrimination(ds, ds.y, index, weights, on_zero)
    return Metrics(loss(ds, pred), raw, discrimination_level(raw, ref))


# ---------------------------------------------------------------------------
# fit


@dataclass
class FitReport:
    """Outcome of one fit. Metrics are recomputed from ``tree``."""

    tree: DecisionTree
    lam: float
    index: str | None
    train: Metrics
    test: Metrics | None
    objective: float
    solver_objective: float | None
    status: str
    gap: float
    seconds: float
    nodes: int
    trace: list = field(default_factory=list, repr=False)
    build_report: dict = field(default_factory=dict, repr=False)

    @property
    def exact(self) -> bool:
        return self.status == STATUS_OPTIMAL

    def row(self, fold: int | None = None) -> dict:
        """One trade-off record (fold, lambda, losses, indices, solver info)."""
        return {
            "fold": fold,
            "lambda": self.lam,
            "train_loss": self.train.loss,
            "test_loss": self.test.loss if self.test else None,
            "train_index": self.train.index,
            "test_index": self.test.index if self.test else None,
            "status": self.status,
            "gap": self.gap,
            "seconds": self.seconds,
        }


def _objective(cfg: BuildConfig, m: Metrics) -> float:
    if cfg.fairness_active:
        return m.loss + cfg.lam * m.index
    return m.loss


def fit(ds: Dataset, shape: TreeShape, cfg: BuildConfig, opts: SolverOptions | None = None,
        test: Dataset | None = None, warm_start: bool = True) -> FitReport:
    """Learn a tree by solving the mixed-integer model.

    Parameters
    ----------
    ds : Dataset
        Normalized training data.
    shape : TreeShape
    cfg : BuildConfig
        Tree class, index, lambda and kernel weights (``cfg.weights``).
    opts : SolverOptions, optional
    test : Dataset, optional
        Normalized held-out data for reporting.
    warm_start : bool
        Seed the solver with the greedy tree.

    Returns
    -------
    FitReport

    Raises
    ------
    FitError
        If the model is infeasible or unbounded (a formulation bug), or no
        solution was found within the limits.
    """
    opts = opts or SolverOptions()
    if ds.task == CLASSIFICATION and not cfg.fairness_active and opts.objective_step is None:
        # the misclassification rate is a multiple of 1/n
        opts = replace(opts, objective_step=1.0 / ds.n)
    tm = build(ds, shape, cfg)
    incumbent = None
    if warm_start:
        try:
            _, incumbent = greedy_warmstart(ds, shape, cfg, tm)
        except NotRepresentable:
            # only when usage limits leave too few features for the nodes
            incumbent = None
    res = branch_and_bound(tm.model, opts, incumbent)
    if res.status in (STATUS_INFEASIBLE, STATUS_UNBOUNDED):
        raise FitError(f"solver reported {res.status}; the model should always be feasible")
    if res.x is None:
        raise FitError(f"no feasible tree found ({res.status})")
    return _report(tm, res, test, opts)


def _report(tm: TreeMilp, res: SolveResult, test: Dataset | None,
            opts: SolverOptions) -> FitReport:
    ds, cfg = tm.ds, tm.cfg
    tree = extract_tree(tm, res.x, opts.int_tol)
    _check_predictions(tm, tree, res.x)
    train = evaluate(tree, ds, cfg.index, cfg.weights, cfg.on_zero)
    obj = _objective(cfg, train)
    if abs(obj - res.objective) > 1e-5 * max(1.0, abs(obj)):
        raise ExtractionError(
            f"recomputed objective {obj:.9g} differs from the solver's {res.objective:.9g}")
    test_m = None
    if test is not None:
        test_m = evaluate(tree, test, cfg.index, weights_for(test, cfg.weights), cfg.on_zero)
    return FitReport(tree, cfg.lam, cfg.index, train, test_m, obj, res.objective, res.status,
                     res.gap, res.seconds, res.nodes, res.trace, tm.report)


def _check_predictions(tm: TreeMilp, tree: DecisionTree, x) -> None:
    ours = tree.predict_many(tm.ds)
    theirs = solution_predictions(tm, x)
    if tm.task == CLASSIFICATION:
        bad = np.flatnonzero(ours != theirs)
    else:
        bad = np.flatnonzero(np.abs(ours - theirs) > 1e-6)
    if len(bad):
        i = int(bad[0])
        raise ExtractionError(f"record {i}: tree predicts {ours[i]}, model has {theirs[i]}")


# ---------------------------------------------------------------------------
# lambda sweep and cross-validation


@dataclass
class SweepResult:
    points: list[tuple[float, FitReport]]
    selected_lambda: float
    reason: str

    @property
    def selected(self) -> FitReport:
        for lam, rep in self.points:
            if lam == self.selected_lambda:
                return rep
        raise KeyError(self.selected_lambda)


def lambda_grid(step: float, lam_max: float) -> list[float]:
    if not step > 0:
        raise ValueError("sweep step must be positive")
    count = int(math.floor(lam_max / step + 1e-9))
    return [round(k * step, 12) for k in range(count + 1)]


def lambda_sweep(ds_train: Dataset, ds_eval: Dataset | None, shape: TreeShape,
                 cfg: BuildConfig, opts: SolverOptions | None = None, step: float = 0.1,
                 threshold: float = 1e-4, lam_max: float = 10.0, fitter=None) -> SweepResult:
    """Increase lambda along a grid until the training discrimination level drops below ``threshold``.

    ``threshold`` is a fraction (1e-4 means 0.01%) of the index of the true
    training labels. ``fitter(ds, shape, cfg, test)`` defaults to :func:`fit`;
    the brute-force oracle can be plugged in for small instances.
    """
    if cfg.index is None:
        raise ValueError("a lambda sweep needs a fairness index")
    fitter = fitter or (lambda d, s, c, t: fit(d, s, c, opts, test=t))
    points = []
    for lam in lambda_grid(step, lam_max):
        rep = fitter(ds_train, shape, cfg.with_lambda(lam), ds_eval)
        points.append((lam, rep))
        if rep.train.level < threshold:
            return SweepResult(points, lam, THRESHOLD_MET)
    best = min(points, key=lambda p: (p[1].train.level, p[0]))
    return SweepResult(points, best[0], THRESHOLD_UNMET)


@dataclass
class CrossValidation:
    folds: list[SweepResult]

    @property
    def points(self) -> list[tuple[float, float]]:
        """(test accuracy or MAE, test discrimination) of each fold's selected model."""
        out = []
        for s in self.folds:
            rep = s.selected
            out.append((rep.test.loss, rep.test.index))
        return out

    def rows(self) -> list[dict]:
        """Every (fold, lambda) fit, ordered by fold then lambda."""
        out = []
        for f, s in enumerate(self.folds):
            for lam, rep in s.points:
                out.append(rep.row(f))
        return out


def cross_validate(ds: Dataset, plan: FoldPlan, shape: TreeShape, cfg: BuildConfig,
                   opts: SolverOptions | None = None, step: float = 0.1,
                   threshold: float = 1e-4, lam_max: float = 10.0, knn: int | None = None,
                   fixed_lambda: float | None = None, fitter=None) -> CrossValidation:
    """Run the sweep on every fold of ``plan``.

    ``ds`` is raw; each training fold is normalized on its own and the same
    maps are applied to its test fold. With ``knn`` set, DTDI kernel weights
    are rebuilt per fold. ``fixed_lambda`` skips the sweep and fits once.
    """
    folds = []
    for train_idx, test_idx in plan:
        train, report = normalize(ds.subset(train_idx))
        test = report.apply(ds.subset(test_idx))
        c = cfg
        if cfg.index == DTDI and knn is not None:
            c = BuildConfig(**{**cfg.__dict__, "weights": knn_weights(train, knn)})
        if fixed_lambda is not None:
            f = fitter or (lambda d, s, cc, t: fit(d, s, cc, opts, test=t))
            rep = f(train, shape, c.with_lambda(fixed_lambda), test)
            folds.append(SweepResult([(fixed_lambda, rep)], fixed_lambda, "fixed"))
        else:
            folds.append(lambda_sweep(train, test, shape, c, opts, step, threshold, lam_max,
                                      fitter))
    return CrossValidation(folds)


# ---------------------------------------------------------------------------
# candidate splits (shared by the oracle and the greedy tree)


def candidate_splits(ds: Dataset, allowed=None) -> list[tuple[object, np.ndarray]]:
    """All distinct single-feature tests with their left masks.

    Thresholds are the midpoints between consecutive distinct values plus
    one below the minimum; categorical tests range over every level subset.
    """
    out = []
    for f in ds.schema.unprotected:
        if allowed is not None and f.name not in allowed:
            continue
        col = ds.columns[f.name]
        if f.kind == CATEGORICAL:
            k = len(f.levels)
            for bits in range(2 ** k):
                left = frozenset(f.levels[j] for j in range(k) if bits >> j & 1)
                codes = [j for j in range(k) if bits >> j & 1]
                out.append((CategoricalSplit(f.name, left), np.isin(col, codes)))
        else:
            vals = np.unique(col)
            cuts = [float(vals[0]) - 1.0] + [float(a + b) / 2 for a, b in zip(vals, vals[1:])]
            for c in cuts:
                out.append((QuantitativeSplit(f.name, c), c >= col))
    return out


def _distinct(splits, restrict: np.ndarray | None = None):
    seen = {}
    for rule, mask in splits:
        key = (mask if restrict is None else mask[restrict]).tobytes()
        if key not in seen:
            seen[key] = (rule, mask)
    return list(seen.values())


# ---------------------------------------------------------------------------
# brute-force oracle


@dataclass
class OracleResult:
    objective: float
    tree: DecisionTree
    loss: float
    index: float | None


def _oracle_checks(ds: Dataset, shape: TreeShape, cfg: BuildConfig):
    if cfg.tree_class != CLASSICAL:
        raise OracleLimitError("the oracle enumerates classical trees only")
    if shape.depth > ORACLE_MAX_DEPTH:
        raise OracleLimitError(f"depth {shape.depth} > {ORACLE_MAX_DEPTH}")
    if ds.n > ORACLE_MAX_N:
        raise OracleLimitError(f"{ds.n} records > {ORACLE_MAX_N}")
    if len(ds.schema.unprotected) > ORACLE_MAX_FEATURES:
        raise OracleLimitError(f"more than {ORACLE_MAX_FEATURES} features")
    if ds.task == CLASSIFICATION and len(ds.label_levels) > ORACLE_MAX_LABELS:
        raise OracleLimitError(f"more than {ORACLE_MAX_LABELS} labels")


def _tree_partitions(ds: Dataset, shape: TreeShape):
    """Yield (rules, Z) batches: Z has shape (B, n, L) of leaf memberships."""
    splits = _distinct(candidate_splits(ds))
    if shape.depth == 1:
        Z = np.stack([np.stack([m, ~m], axis=1) for _, m in splits]).astype(float)
        yield [(r,) for r, _ in splits], Z
        return
    for root, m in splits:
        lefts = _distinct(splits, m)
        rights = _distinct(splits, ~m)
        rules, Z = [], []
        for (ra, a), (rb, b) in itertools.product(lefts, rights):
            rules.append((root, ra, rb))
            Z.append(np.stack([m & a, m & ~a, ~m & b, ~m & ~b], axis=1))
        yield rules, np.stack(Z).astype(float)


def brute_force_optimum(ds: Dataset, shape: TreeShape, cfg: BuildConfig) -> OracleResult:
    """Exact minimum of loss + lambda * index over all classical trees of ``shape``.

    Raises
    ------
    OracleLimitError
        If the instance is beyond the enumeration limits.
    """
    _oracle_checks(ds, shape, cfg)
    terms = None
    if cfg.fairness_active:
        terms = index_terms(ds, cfg.index, cfg.weights if cfg.index == DTDI else None,
                            cfg.on_zero)
    if ds.task == CLASSIFICATION:
        best = _oracle_classification(ds, shape, cfg, terms)
    else:
        best = _oracle_regression(ds, shape, cfg, terms)
    obj, rules, leaves = best
    tree = DecisionTree(shape, tuple(rules), tuple(leaves), ds.schema,
                        meta={"source": "oracle"})
    m = evaluate(tree, ds, cfg.index, cfg.weights, cfg.on_zero)
    return OracleResult(obj, tree, m.loss, m.index)


def _oracle_classification(ds, shape, cfg, terms):
    n = ds.n
    Y = len(ds.label_levels)
    L = shape.n_leaves
    truth = np.zeros((n, Y))
    truth[np.arange(n), ds.y] = 1.0
    labs = np.array(list(itertools.product(range(Y), repeat=L)))  # (P, L)
    OH = np.zeros((len(labs), L, Y))
    for l in range(L):
        OH[np.arange(len(labs)), l, labs[:, l]] = 1.0
    if terms is not None:
        C = terms.coef.toarray()
        mult = terms.mult
    best = (math.inf, None, None)
    for rules, Z in _tree_partitions(ds, shape):
        B = len(Z)
        chunk = max(1, int(2e6 // (len(labs) * Y * (C.shape[0] if terms is not None else 1))))
        for s in range(0, B, chunk):
            Zc = Z[s:s + chunk]
            cnt = np.einsum("bnl,ny->bly", Zc, truth)
            correct = np.einsum("bly,ply->bp", cnt, OH)
            obj = 1.0 - correct / n
            if terms is not None:
                A = np.einsum("rn,bnl->brl", C, Zc)
                S = np.einsum("brl,ply->bpry", A, OH)
                obj = obj + cfg.lam * (np.abs(S).sum(axis=3) @ mult)
            k = int(np.argmin(obj))
            b, p = divmod(k, obj.shape[1])
            if obj[b, p] < best[0] - 1e-12:
                leaves = [ConstantLabel(ds.label_levels[y]) for y in labs[p]]
                best = (float(obj[b, p]), rules[s + b], leaves)
    return best


def _leaf_values_lp(ds, Z, cfg, terms):
    """Optimal constant leaf values for one partition, by linear programming."""
    n, L = Z.shape
    if terms is None:
        vals = np.zeros(L)
        for l in range(L):
            mem = Z[:, l] > 0
            if mem.any():
                vals[l] = float(np.median(ds.y[mem]))
        pred = Z @ vals
        return float(np.mean(np.abs(pred - ds.y))), vals
    A = terms.coef.toarray() @ Z  # (R, L)
    R = A.shape[0]
    # variables: u (L), e (n), t (R)
    c = np.concatenate([np.zeros(L), np.full(n, 1.0 / n), cfg.lam * terms.mult])
    rows, rhs = [], []
    for i in range(n):
        l = int(np.argmax(Z[i]))
        r = np.zeros(L + n + R)
        r[l], r[L + i] = 1.0, -1.0
        rows.append(r), rhs.append(ds.y[i])
        r = np.zeros(L + n + R)
        r[l], r[L + i] = -1.0, -1.0
        rows.append(r), rhs.append(-ds.y[i])
    for k in range(R):
        r = np.zeros(L + n + R)
        r[:L], r[L + n + k] = A[k], -1.0
        rows.append(r), rhs.append(0.0)
        r = np.zeros(L + n + R)
        r[:L], r[L + n + k] = -A[k], -1.0
        rows.append(r), rhs.append(0.0)
    bounds = [(-1.0, 1.0)] * L + [(0, None)] * (n + R)
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"oracle leaf LP failed: {res.message}")
    return float(res.fun), res.x[:L]


def _oracle_regression(ds, shape, cfg, terms):
    best = (math.inf, None, None)
    seen = set()
    for rules, Z in _tree_partitions(ds, shape):
        for b in range(len(Z)):
            key = Z[b].tobytes()
            if key in seen:
                continue
            seen.add(key)
            obj, vals = _leaf_values_lp(ds, Z[b], cfg, terms)
            if obj < best[0] - 1e-12:
                best = (obj, rules[b], [ConstantValue(float(np.clip(v, -1, 1))) for v in vals])
    return best


def oracle_fit(ds: Dataset, shape: TreeShape, cfg: BuildConfig,
               test: Dataset | None = None) -> FitReport:
    """A FitReport from :func:`brute_force_optimum` (for oracle sweeps)."""
    res = brute_force_optimum(ds, shape, cfg)
    train = evaluate(res.tree, ds, cfg.index, cfg.weights, cfg.on_zero)
    test_m = None
    if test is not None:
        test_m = evaluate(res.tree, test, cfg.index, weights_for(test, cfg.weights), cfg.on_zero)
    return FitReport(res.tree, cfg.lam, cfg.index, train, test_m, _objective(cfg, train),
                     res.objective, STATUS_OPTIMAL, 0.0, 0.0, 0, [])


# ---------------------------------------------------------------------------
# greedy warm start


def _impurity(ds: Dataset, mask: np.ndarray) -> float:
    if not mask.any():
        return 0.0
    y = ds.y[mask]
    if ds.task == CLASSIFICATION:
        return float(len(y) - np.bincount(y).max())
    return float(np.abs(y - np.median(y)).sum())


def _leaf_rule(ds: Dataset, mask: np.ndarray, fallback):
    if not mask.any():
        return fallback
    y = ds.y[mask]
    if ds.task == CLASSIFICATION:
        return ConstantLabel(ds.label_levels[int(np.argmax(np.bincount(y)))])
    return ConstantValue(float(np.clip(np.median(y), -1.0, 1.0)))


def _uses_left(cfg: BuildConfig, used: dict, name: str) -> bool:
    lim = cfg.max_feature_uses
    if lim is None:
        return True
    lim = lim.get(name) if isinstance(lim, dict) else lim
    return lim is None or used.get(name, 0) < lim


def greedy_tree(ds: Dataset, shape: TreeShape, cfg: BuildConfig) -> DecisionTree:
    """Top-down impurity splitting (misclassifications or absolute deviations)."""
    splits = candidate_splits(ds)
    if cfg.tree_class == LINEAR_BRANCHING:
        splits = [s for s in splits if isinstance(s[0], QuantitativeSplit)]
    root_rule = _leaf_rule(ds, np.ones(ds.n, dtype=bool), None)
    branches: list = [None] * shape.n_nodes
    leaves: list = [None] * shape.n_leaves
    used: dict[str, int] = {}
    masks = {1: np.ones(ds.n, dtype=bool)}
    fallback = {1: root_rule}
    for v in shape.nodes:
        mask = masks[v]
        best = None
        if mask.any():
            for rule, left in splits:
                if not _uses_left(cfg, used, rule.feature):
                    continue
                score = _impurity(ds, mask & left) + _impurity(ds, mask & ~left)
                if best is None or score < best[0] - 1e-12:
                    best = (score, rule, left)
        if best is None:
            rule, left = _degenerate_split(ds, splits, cfg, used)
        else:
            _, rule, left = best
        used[rule.feature] = used.get(rule.feature, 0) + 1
        branches[v - 1] = rule
        here = _leaf_rule(ds, mask, fallback[v])
        for child, cm in ((2 * v, mask & left), (2 * v + 1, mask & ~left)):
            masks[child] = cm
            fallback[child] = here
    for l in shape.leaves:
        heap = l + shape.n_leaves
        leaves[l] = _leaf_rule(ds, masks[heap], fallback[heap])
    tree = DecisionTree(shape, tuple(branches), tuple(leaves), ds.schema,
                        meta={"source": "greedy"})
    return tree


def _degenerate_split(ds, splits, cfg, used):
    """A test that sends every record left, preferring features with uses to spare."""
    for f in ds.schema.unprotected:
        if cfg.tree_class == LINEAR_BRANCHING and f.kind == CATEGORICAL:
            continue
        if _uses_left(cfg, used, f.name):
            break
    else:
        f = next(f for f in ds.schema.unprotected
                 if cfg.tree_class != LINEAR_BRANCHING or f.kind != CATEGORICAL)
    if f.kind == CATEGORICAL:
        return CategoricalSplit(f.name, frozenset(f.levels)), np.ones(ds.n, dtype=bool)
    return QuantitativeSplit(f.name, 1.0), np.ones(ds.n, dtype=bool)


def greedy_warmstart(ds: Dataset, shape: TreeShape, cfg: BuildConfig,
                     tm: TreeMilp | None = None) -> tuple[DecisionTree, np.ndarray]:
    """Greedy tree and a feasible model point encoding it.

    Falls back to a single effective leaf (all tests send everything left)
    when the greedy tree cannot be encoded, e.g. under feature-use limits.
    """
    tm = tm or build(ds, shape, cfg)
    tree = greedy_tree(ds, shape, cfg)
    try:
        x = assignment_from_tree(tm, tree)
    except NotRepresentable:
        tree = _single_leaf_tree(ds, shape, cfg)
        x = assignment_from_tree(tm, tree)
    return tree, install_incumbent(tm.model, x, tol=1e-6)


def _single_leaf_tree(ds, shape, cfg) -> DecisionTree:
    used: dict[str, int] = {}
    rules = []
    for _ in shape.nodes:
        rule, _ = _degenerate_split(ds, [], cfg, used)
        used[rule.feature] = used.get(rule.feature, 0) + 1
        rules.append(rule)
    leaf = _leaf_rule(ds, np.ones(ds.n, dtype=bool), None)
    if cfg.tree_class == LINEAR_LEAFING:
        leaf = ConstantValue(leaf.value)
    return DecisionTree(shape, tuple(rules), (leaf,) * shape.n_leaves, ds.schema,
                        meta={"source": "greedy"})
