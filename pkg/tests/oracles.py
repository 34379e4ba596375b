"""Reference implementations written directly from the index formulas.

Nothing here imports the package's fairness or solver internals; these are
plain loops over records, groups and binary assignments.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog


def _groups(prot):
    return sorted(set(prot))


def didi_c(prot, labels, alphabet):
    n = len(labels)
    total = 0.0
    for y in alphabet:
        overall = sum(1 for v in labels if v == y) / n
        for g in _groups(prot):
            members = [i for i in range(n) if prot[i] == g]
            within = sum(1 for i in members if labels[i] == y) / len(members)
            total += abs(overall - within)
    return total


def didi_r(prot, values):
    n = len(values)
    overall = sum(values) / n
    total = 0.0
    for g in _groups(prot):
        members = [values[i] for i in range(n) if prot[i] == g]
        total += abs(overall - sum(members) / len(members))
    return total


def dtdi_c(prot, labels, alphabet, w):
    """``w[i][j]`` is the kernel weight of record i for reference record j."""
    n = len(labels)
    total = 0.0
    for y in alphabet:
        for g in _groups(prot):
            for j in range(n):
                num = sum(w[i][j] * (labels[i] == y) for i in range(n))
                den = sum(w[i][j] for i in range(n))
                gnum = sum(w[i][j] * (labels[i] == y) * (prot[i] == g) for i in range(n))
                gden = sum(w[i][j] * (prot[i] == g) for i in range(n))
                total += abs(num / den - gnum / gden)
    return total


def dtdi_r(prot, values, w):
    n = len(values)
    total = 0.0
    for g in _groups(prot):
        for j in range(n):
            num = sum(w[i][j] * values[i] for i in range(n))
            den = sum(w[i][j] for i in range(n))
            gnum = sum(w[i][j] * values[i] * (prot[i] == g) for i in range(n))
            gden = sum(w[i][j] * (prot[i] == g) for i in range(n))
            total += abs(num / den - gnum / gden)
    return total


def knn(points, cats, k):
    """Neighbour lists by sorting (distance, index) pairs, self excluded."""
    n = len(points)
    out = []
    for j in range(n):
        cand = []
        for i in range(n):
            if i == j:
                continue
            d = math.sqrt(sum((a - b) ** 2 for a, b in zip(points[i], points[j])))
            d += sum(1 for a, b in zip(cats[i], cats[j]) if a != b)
            cand.append((d, i))
        cand.sort()
        out.append(sorted(i for _, i in cand[:k]))
    return out


def knn_matrix(points, cats, k):
    n = len(points)
    w = [[0.0] * n for _ in range(n)]
    for j, nbrs in enumerate(knn(points, cats, k)):
        for i in nbrs:
            w[i][j] = 1.0
    return w


def enumerate_milp(c, A, sense, b, lb, ub, binary, const=0.0):
    """Minimum over every binary assignment of the LP in the remaining variables.

    Returns (objective, x) or (inf, None) when infeasible.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    bins = [j for j, f in enumerate(binary) if f]
    best, best_x = math.inf, None
    for bits in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo = np.array(lb, dtype=float)
        hi = np.array(ub, dtype=float)
        lo[bins] = bits
        hi[bins] = bits
        A_ub, b_ub, A_eq, b_eq = [], [], [], []
        for row, s, r in zip(A, sense, b):
            if s == "L":
                A_ub.append(row), b_ub.append(r)
            elif s == "G":
                A_ub.append(-row), b_ub.append(-r)
            else:
                A_eq.append(row), b_eq.append(r)
        res = linprog(c, A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                      A_eq=np.array(A_eq) if A_eq else None, b_eq=b_eq or None,
                      bounds=list(zip(lo, [None if not np.isfinite(h) else h for h in hi])),
                      method="highs")
        if res.status == 0 and res.fun + const < best - 1e-12:
            best, best_x = res.fun + const, res.x
    return best, best_x


def polygon_vertices(A, b):
    """Vertices of {x in R^2 : A x <= b} by intersecting every pair of edges."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    verts = []
    for i, j in itertools.combinations(range(len(A)), 2):
        M = A[[i, j]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[[i, j]])
        if np.all(A @ x <= b + 1e-9):
            verts.append(x)
    return verts


def stump_optimum(quant, cats, n_levels, prot, labels, alphabet, lam):
    """Best depth-1 classification tree under loss + lam * didi_c, by listing every left set.

    ``quant`` is a list of columns of reals, ``cats`` a list of columns of
    level codes with ``n_levels`` levels each.
    """
    n = len(labels)
    masks = set()
    for col in quant:
        for c in [min(col) - 1.0] + sorted(set(col)):
            masks.add(tuple(v <= c for v in col))
    for col, k in zip(cats, n_levels):
        for subset in itertools.product((False, True), repeat=k):
            masks.add(tuple(subset[v] for v in col))
    best = math.inf
    for mask in masks:
        for a in alphabet:
            for b in alphabet:
                pred = [a if mask[i] else b for i in range(n)]
                wrong = sum(p != y for p, y in zip(pred, labels)) / n
                obj = wrong + (lam * didi_c(prot, pred, alphabet) if lam else 0.0)
                best = min(best, obj)
    return best


def enumerate_binary(c, A, sense, b, const=0.0, chunk=1 << 16):
    """Exhaustive minimum of a pure-binary model, evaluating points in blocks."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    sense = np.asarray(sense)
    n = len(c)
    best, best_x = math.inf, None
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, min(1 << n, start + chunk))
        X = ((codes[:, None] >> np.arange(n)) & 1).astype(float)
        lhs = X @ A.T
        ok = np.ones(len(codes), dtype=bool)
        ok &= np.all((lhs <= b + 1e-9) | (sense != "L"), axis=1)
        ok &= np.all((lhs >= b - 1e-9) | (sense != "G"), axis=1)
        ok &= np.all((np.abs(lhs - b) <= 1e-9) | (sense != "E"), axis=1)
        if not ok.any():
            continue
        vals = X[ok] @ c + const
        k = int(np.argmin(vals))
        if vals[k] < best:
            best, best_x = float(vals[k]), X[ok][k]
    return best, best_x


def stump_outcomes(col, prot, labels, alphabet):
    """(misclassification, didi_c) of every depth-1 tree on one quantitative column."""
    n = len(labels)
    out = set()
    for cut in [min(col) - 1.0] + sorted(set(col)):
        mask = [v <= cut for v in col]
        for a in alphabet:
            for b in alphabet:
                pred = [a if mask[i] else b for i in range(n)]
                wrong = sum(p != y for p, y in zip(pred, labels)) / n
                out.add((round(wrong, 12), round(didi_c(prot, pred, alphabet), 12)))
    return out
