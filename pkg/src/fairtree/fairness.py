"""Disparate impact / disparate treatment discrimination indices.

Every index is a sum of absolute values of linear statistics of the label
(or prediction) vector. :func:`index_terms` returns those statistics as a
sparse coefficient matrix ``C`` with a multiplicity per row, so that

    classification:  index = sum_r mult_r * sum_y |C_r . onehot_y(labels)|
    regression:      index = sum_r mult_r * |C_r . values|

The MILP builder reuses the same terms to write the regularizer linearly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .data import CLASSIFICATION, Dataset

DIDI = "didi"
DTDI = "dtdi"

ON_ZERO = ("error", "unit", "skip")


class FairnessError(ValueError):
    pass


# ---------------------------------------------------------------------------
# kernel weights


@dataclass(frozen=True)
class WeightMatrix:
    """Kernel weights ``w[i, j]`` of record i relative to reference record j.

    ``matrix is None`` means unit weights (every pair weighs 1), which is
    kept implicit so that large audits do not materialize an n x n array.
    """

    n: int
    matrix: sparse.csc_matrix | None = None
    k: int | None = None

    @property
    def unit(self) -> bool:
        return self.matrix is None

    def dense(self) -> np.ndarray:
        if self.unit:
            return np.ones((self.n, self.n))
        return self.matrix.toarray()

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(record indices, weights) of the nonzero entries for reference j."""
        if self.unit:
            return np.arange(self.n), np.ones(self.n)
        m = self.matrix
        sl = slice(m.indptr[j], m.indptr[j + 1])
        return m.indices[sl], m.data[sl]

    def neighbors(self, j: int) -> list[int]:
        return sorted(int(i) for i in self.column(j)[0])


def unit_weights(n: int) -> WeightMatrix:
    return WeightMatrix(n)


def mixed_distances(ds: Dataset, rows: np.ndarray | None = None) -> np.ndarray:
    """Distances between records on the unprotected features.

    Euclidean distance over (normalized) quantitative features plus one unit
    per mismatching categorical feature. Returns shape (len(rows), n).
    """
    rows = np.arange(ds.n) if rows is None else np.asarray(rows)
    xq = ds.quantitative_matrix()
    xc = ds.categorical_matrix()
    diff = xq[rows, None, :] - xq[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    if xc.shape[1]:
        dist = dist + (xc[rows, None, :] != xc[None, :, :]).sum(axis=2)
    return dist


def knn_weights(ds: Dataset, k: int, chunk: int = 512) -> WeightMatrix:
    """Unit weight for the k nearest neighbours of each reference record.

    The reference itself is excluded; ties at the k-th distance go to the
    smaller record index.
    """
    n = ds.n
    if k < 1 or k >= n:
        raise FairnessError(f"kNN requires 1 <= k < n (got k={k}, n={n})")
    if not ds.schema.unprotected:
        raise FairnessError("kNN kernel needs at least one unprotected feature")
    rows_out, cols_out = [], []
    for start in range(0, n, chunk):
        ref = np.arange(start, min(n, start + chunk))
        d = mixed_distances(ds, ref)
        d[np.arange(len(ref)), ref] = np.inf
        kth = np.partition(d, k - 1, axis=1)[:, k - 1]
        for r, j in enumerate(ref):
            less = np.flatnonzero(d[r] < kth[r])
            ties = np.flatnonzero(d[r] == kth[r])[: k - len(less)]
            nb = np.concatenate([less, ties])
            rows_out.append(nb)
            cols_out.append(np.full(len(nb), j))
    rows_idx = np.concatenate(rows_out)
    cols_idx = np.concatenate(cols_out)
    m = sparse.csc_matrix((np.ones(len(rows_idx)), (rows_idx, cols_idx)), shape=(n, n))
    m.sort_indices()
    return WeightMatrix(n, m, k)


# ---------------------------------------------------------------------------
# term structure


def _group_indicator(ds: Dataset) -> tuple[np.ndarray, list[tuple[str, ...]], np.ndarray]:
    gid, glabels = ds.groups()
    counts = np.bincount(gid, minlength=len(glabels))
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        raise FairnessError(f"empty protected group {_group_name(glabels[empty[0]])}")
    return gid, glabels, counts


def _group_name(label: tuple[str, ...]) -> str:
    return "/".join(label)


@dataclass(frozen=True)
class IndexTerms:
    """Rows of linear statistics whose absolute values sum to an index.

    ``group[r]`` is the protected group of row r and ``ref[r]`` its reference
    record (-1 for disparate impact rows, which have no reference point).
    ``skipped`` lists (reference, group) pairs dropped for a zero denominator.
    """

    coef: sparse.csr_matrix
    mult: np.ndarray
    group: np.ndarray
    ref: np.ndarray
    group_labels: list[tuple[str, ...]]
    skipped: tuple[tuple[int, int], ...] = ()

    def statistics(self, values: np.ndarray) -> np.ndarray:
        return self.coef @ values


def index_terms(ds: Dataset, index: str, weights: WeightMatrix | None = None,
                on_zero: str = "error", dedupe: bool = True) -> IndexTerms:
    """Coefficient rows for the disparate impact (``didi``) or treatment (``dtdi``) index."""
    if on_zero not in ON_ZERO:
        raise ValueError(f"on_zero must be one of {ON_ZERO}")
    gid, glabels, counts = _group_indicator(ds)
    n, G = ds.n, len(glabels)
    if index == DIDI:
        rows = []
        for g in range(G):
            c = np.full(n, 1.0 / n)
            c[gid == g] -= 1.0 / counts[g]
            rows.append(c)
        coef = sparse.csr_matrix(np.vstack(rows))
        return IndexTerms(coef, np.ones(G), np.arange(G), np.full(G, -1), glabels)
    if index != DTDI:
        raise ValueError(f"unknown index {index!r}")
    weights = weights if weights is not None else unit_weights(n)
    if weights.n != n:
        raise FairnessError(f"weight matrix is for {weights.n} records, dataset has {n}")
    if weights.unit:
        base = index_terms(ds, DIDI)
        return IndexTerms(base.coef, np.full(G, float(n)), base.group,
                          np.full(G, -1), glabels)

    data, indices, indptr = [], [], [0]
    mult, grp, ref, skipped = [], [], [], []
    seen: dict[tuple, int] = {}
    for j in range(n):
        idx, w = weights.column(j)
        wsum = w.sum()
        gw = [w[gid[idx] == g].sum() for g in range(G)]
        if wsum <= 0 or min(gw) <= 0:
            bad_g = next((g for g in range(G) if gw[g] <= 0), 0)
            if on_zero == "error":
                raise FairnessError(
                    f"zero kernel denominator at reference record {j}, "
                    f"group {_group_name(glabels[bad_g])}")
            if on_zero == "unit":
                idx, w = np.arange(n), np.ones(n)
                wsum = float(n)
                gw = [float(c) for c in counts]
        for g in range(G):
            if gw[g] <= 0 or wsum <= 0:
                skipped.append((j, g))
                continue
            vals = w / wsum - np.where(gid[idx] == g, w / gw[g], 0.0)
            keep = vals != 0
            ii, vv = idx[keep], vals[keep]
            order = np.argsort(ii, kind="stable")
            ii, vv = ii[order], vv[order]
            if dedupe:
                key = (g, ii.tobytes(), vv.tobytes())
                r = seen.get(key)
                if r is not None:
                    mult[r] += 1.0
                    continue
                seen[key] = len(mult)
            data.append(vv)
            indices.append(ii)
            indptr.append(indptr[-1] + len(ii))
            mult.append(1.0)
            grp.append(g)
            ref.append(j)
    nrows = len(mult)
    coef = sparse.csr_matrix(
        (np.concatenate(data) if data else np.zeros(0),
         np.concatenate(indices) if indices else np.zeros(0, dtype=int),
         np.asarray(indptr)),
        shape=(nrows, n))
    return IndexTerms(coef, np.asarray(mult), np.asarray(grp, dtype=int),
                      np.asarray(ref, dtype=int), glabels, tuple(skipped))


def _onehot(labels: np.ndarray, n_levels: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((len(labels), n_levels))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _check_labels(ds: Dataset, labels) -> np.ndarray:
    if ds.task != CLASSIFICATION:
        raise FairnessError("classification index requested on a regression dataset")
    labels = np.asarray(labels)
    if labels.shape != (ds.n,):
        raise FairnessError(f"expected {ds.n} labels, got shape {labels.shape}")
    return labels.astype(int)


def _check_values(ds: Dataset, values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (ds.n,):
        raise FairnessError(f"expected {ds.n} values, got shape {values.shape}")
    return values


def _evaluate_c(terms: IndexTerms, labels: np.ndarray, n_levels: int) -> np.ndarray:
    """Per-row contributions sum_y |C_r . onehot_y|, weighted by multiplicity."""
    stats = terms.coef @ _onehot(labels, n_levels)
    return terms.mult * np.abs(stats).sum(axis=1)


def _evaluate_r(terms: IndexTerms, values: np.ndarray) -> np.ndarray:
    return terms.mult * np.abs(terms.coef @ values)


def didi_c(ds: Dataset, labels=None) -> float:
    """Disparate impact index for class labels (``ds.y`` when ``labels`` is None)."""
    labels = _check_labels(ds, ds.y if labels is None else labels)
    return float(_evaluate_c(index_terms(ds, DIDI), labels, len(ds.label_levels)).sum())


def didi_r(ds: Dataset, values=None) -> float:
    """Sum over protected groups of |group mean - overall mean|."""
    values = _check_values(ds, ds.y if values is None else values)
    return float(_evaluate_r(index_terms(ds, DIDI), values).sum())


def dtdi_c(ds: Dataset, labels=None, weights: WeightMatrix | None = None,
           on_zero: str = "error") -> float:
    """Disparate treatment index for class labels under kernel ``weights``."""
    labels = _check_labels(ds, ds.y if labels is None else labels)
    terms = index_terms(ds, DTDI, weights, on_zero)
    return float(_evaluate_c(terms, labels, len(ds.label_levels)).sum())


def dtdi_r(ds: Dataset, values=None, weights: WeightMatrix | None = None,
           on_zero: str = "error") -> float:
    values = _check_values(ds, ds.y if values is None else values)
    terms = index_terms(ds, DTDI, weights, on_zero)
    return float(_evaluate_r(terms, values).sum())


def discrimination(ds: Dataset, values, index: str, weights: WeightMatrix | None = None,
                   on_zero: str = "error") -> float:
    """Dispatch on task and index name."""
    if ds.task == CLASSIFICATION:
        if index == DIDI:
            return didi_c(ds, values)
        return dtdi_c(ds, values, weights, on_zero)
    if index == DIDI:
        return didi_r(ds, values)
    return dtdi_r(ds, values, weights, on_zero)


def group_breakdown(ds: Dataset, values, index: str, weights: WeightMatrix | None = None,
                    on_zero: str = "error") -> dict[str, float]:
    """Index contribution of each protected group."""
    terms = index_terms(ds, index, weights, on_zero)
    if ds.task == CLASSIFICATION:
        contrib = _evaluate_c(terms, _check_labels(ds, values), len(ds.label_levels))
    else:
        contrib = _evaluate_r(terms, _check_values(ds, values))
    out = {}
    for g, label in enumerate(terms.group_labels):
        out[_group_name(label)] = float(contrib[terms.group == g].sum())
    return out


# ---------------------------------------------------------------------------
# disparate mistreatment and gamma audit


@dataclass(frozen=True)
class MistreatmentTable:
    """Empirical P(predicted | true, group); NaN rows mark absent (true, group) cells."""

    groups: list[tuple[str, ...]]
    labels: tuple[str, ...]
    prob: np.ndarray     # (groups, true label, predicted label)
    counts: np.ndarray   # (groups, true label)

    def max_group_gap(self) -> float:
        """Largest difference between groups of any P(pred | true) entry."""
        gaps = np.nanmax(self.prob, axis=0) - np.nanmin(self.prob, axis=0)
        return float(np.nanmax(gaps)) if np.any(np.isfinite(gaps)) else 0.0

    def to_dict(self) -> dict:
        rows = []
        for g, gl in enumerate(self.groups):
            for t, tl in enumerate(self.labels):
                rows.append({
                    "group": _group_name(gl), "true": tl, "count": int(self.counts[g, t]),
                    "p_pred": None if self.counts[g, t] == 0 else
                    {pl: float(self.prob[g, t, p]) for p, pl in enumerate(self.labels)},
                })
        return {"labels": list(self.labels), "cells": rows}


def mistreatment_table(ds: Dataset, predictions, truth=None) -> MistreatmentTable:
    pred = _check_labels(ds, predictions)
    true = _check_labels(ds, ds.y if truth is None else truth)
    gid, glabels = ds.groups()
    Y = len(ds.label_levels)
    counts = np.zeros((len(glabels), Y))
    joint = np.zeros((len(glabels), Y, Y))
    np.add.at(joint, (gid, true, pred), 1.0)
    counts = joint.sum(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        prob = joint / counts[:, :, None]
    prob[counts == 0] = np.nan
    return MistreatmentTable(glabels, ds.label_levels, prob, counts)


@dataclass(frozen=True)
class GammaResult:
    values: np.ndarray   # gamma per record, NaN where excluded
    excluded: int
    positive: str

    @property
    def valid(self) -> np.ndarray:
        return self.values[np.isfinite(self.values)]


def gamma_distribution(ds: Dataset, predictions, weights: WeightMatrix | None = None,
                       positive: str | None = None) -> GammaResult:
    """Kernel estimate of P(pos | x_unprot, x_prot) - P(pos | x_unprot) at each record.

    The group-conditional estimate uses each record's own protected group.
    Records with a zero kernel denominator are excluded and counted.
    """
    pred = _check_labels(ds, predictions)
    levels = ds.label_levels
    positive = levels[-1] if positive is None else positive
    pos_code = levels.index(positive)
    weights = weights if weights is not None else unit_weights(ds.n)
    gid, _ = ds.groups()
    is_pos = (pred == pos_code).astype(float)
    out = np.full(ds.n, np.nan)
    excluded = 0
    for j in range(ds.n):
        idx, w = weights.column(j)
        same = gid[idx] == gid[j]
        wsum, gsum = w.sum(), w[same].sum()
        if wsum <= 0 or gsum <= 0:
            excluded += 1
            continue
        out[j] = (w[same] * is_pos[idx][same]).sum() / gsum - (w * is_pos[idx]).sum() / wsum
    return GammaResult(out, excluded, positive)


def gamma_histogram(gammas: np.ndarray, n_bins: int = 21) -> dict:
    """Histogram over [-1, 1]; with an odd bin count the middle bin is centred on zero."""
    gammas = np.asarray(gammas, dtype=float)
    gammas = gammas[np.isfinite(gammas)]
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    counts, _ = np.histogram(np.clip(gammas, -1.0, 1.0), bins=edges)
    zero_bin = int(np.searchsorted(edges, 0.0, side="right") - 1)
    return {"edges": edges.tolist(), "counts": counts.tolist(), "zero_bin": zero_bin}


def audit(ds: Dataset, values=None, weights: WeightMatrix | None = None,
          on_zero: str = "error", n_bins: int = 21) -> dict:
    """All applicable indices of ``values`` (default: the dataset's labels).

    Returns a JSON-ready dict. ``normalized`` divides the raw index by n.
    """
    values = ds.y if values is None else np.asarray(values)
    report: dict = {"n": ds.n, "task": ds.task, "indices": {}}
    suffix = "c" if ds.task == CLASSIFICATION else "r"
    for index in (DIDI, DTDI):
        w = weights if index == DTDI else None
        raw = discrimination(ds, values, index, w, on_zero)
        report["indices"][f"{index}_{suffix}"] = {
            "raw": raw,
            "normalized": raw / ds.n,
            "groups": group_breakdown(ds, values, index, w, on_zero),
        }
    report["kernel"] = "unit" if weights is None or weights.unit else f"knn:{weights.k}"
    if ds.task == CLASSIFICATION:
        report["mistreatment"] = mistreatment_table(ds, values).to_dict()
        gam = gamma_distribution(ds, values, weights)
        report["gamma"] = {"positive": gam.positive, "excluded": gam.excluded,
                           **gamma_histogram(gam.values, n_bins)}
    return report

