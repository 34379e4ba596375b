"""Bounded-variable revised simplex (dense, two phase).

Solves ``min c.x  s.t.  A x (<=,=,>=) b,  lb <= x <= ub``. Meant for small
models and for cross-checking the HiGHS relaxations; it keeps an explicit
basis inverse, updated by eta pivots and refactored periodically.
Dantzig pricing is used until a run of degenerate pivots, after which
Bland's rule takes over until progress resumes.
"""

from __future__ import annotations

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50
DEGENERATE_RUN = 30


class SimplexError(RuntimeError):
    pass


def _initial_values(lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    x = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
    return x.astype(float)


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                 basis: list[int], x: np.ndarray):
        self.A, self.b, self.lb, self.ub = A, b, lb, ub
        self.m, self.ncol = A.shape
        self.basis = list(basis)
        self.x = x
        self.is_basic = np.zeros(self.ncol, dtype=bool)
        self.is_basic[self.basis] = True
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise SimplexError(f"singular basis (cond={np.linalg.cond(B):.3g})") from None
        nb = ~self.is_basic
        rhs = self.b - self.A[:, nb] @ self.x[nb]
        self.x[self.basis] = self.Binv @ rhs
        self.since_refactor = 0

    def run(self, c: np.ndarray, max_iter: int) -> str:
        degenerate = 0
        for _ in range(max_iter):
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            d[self.is_basic] = 0.0
            at_lb = self.x <= self.lb + FEAS_TOL
            at_ub = self.x >= self.ub - FEAS_TOL
            free = ~at_lb & ~at_ub
            can_up = ~self.is_basic & ~at_ub & ((d < -OPT_TOL) & (at_lb | free))
            can_dn = ~self.is_basic & ~at_lb & ((d > OPT_TOL) & (at_ub | free))
            eligible = np.flatnonzero(can_up | can_dn)
            if not len(eligible):
                return "optimal"
            if degenerate >= DEGENERATE_RUN:
                q = int(eligible[0])
            else:
                q = int(eligible[np.argmax(np.abs(d[eligible]))])
            direction = 1.0 if can_up[q] else -1.0
            alpha = self.Binv @ self.A[:, q]
            delta = direction * alpha
            xb = self.x[self.basis]
            lbb, ubb = self.lb[self.basis], self.ub[self.basis]
            theta = np.inf
            leave = -1
            flip = self.ub[q] - self.lb[q]
            for i in range(self.m):
                if delta[i] > PIVOT_TOL and np.isfinite(lbb[i]):
                    t = max((xb[i] - lbb[i]) / delta[i], 0.0)
                elif delta[i] < -PIVOT_TOL and np.isfinite(ubb[i]):
                    t = max((ubb[i] - xb[i]) / -delta[i], 0.0)
                else:
                    continue
                if t < theta - 1e-12 or (abs(t - theta) <= 1e-12 and leave >= 0 and (
                        self.basis[i] < self.basis[leave] if degenerate >= DEGENERATE_RUN
                        else abs(delta[i]) > abs(delta[leave]))):
                    theta, leave = t, i
            if flip <= theta:
                if not np.isfinite(flip):
                    return "unbounded"
                self.x[q] = self.ub[q] if direction > 0 else self.lb[q]
                self.x[self.basis] = xb - flip * delta
                degenerate = 0
                continue
            if leave < 0:
                return "unbounded"
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            self.x[q] += direction * theta
            self.x[self.basis] = xb - theta * delta
            out = self.basis[leave]
            self.x[out] = self.lb[out] if delta[leave] > 0 else self.ub[out]
            # eta update of the basis inverse
            piv = alpha[leave]
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[leave] = row
            self.basis[leave] = q
            self.is_basic[q] = True
            self.is_basic[out] = False
            self.since_refactor += 1
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()
        raise SimplexError("iteration limit reached")


def bounded_simplex(c, A, sense, b, lb, ub, max_iter: int | None = None):
    """Return (status, x, objective) with status in optimal / infeasible / unbounded."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, len(c))
    b = np.asarray(b, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    m, n = A.shape
    if np.any(lb > ub + FEAS_TOL):
        return "infeasible", None, None
    sense = list(sense)
    # slack per row: A x + s = b
    s_lb = np.array([0.0 if s == "L" else (-np.inf if s == "G" else 0.0) for s in sense])
    s_ub = np.array([np.inf if s == "L" else 0.0 for s in sense])
    x0 = _initial_values(lb, ub)
    resid = b - A @ x0
    s0 = np.clip(resid, s_lb, s_ub)
    art_sign = np.sign(resid - s0)
    need = np.flatnonzero(np.abs(resid - s0) > FEAS_TOL)
    n_art = len(need)
    art_cols = np.zeros((m, n_art))
    for k, r in enumerate(need):
        art_cols[r, k] = art_sign[r]
    full = np.hstack([A, np.eye(m), art_cols])
    lo = np.concatenate([lb, s_lb, np.zeros(n_art)])
    hi = np.concatenate([ub, s_ub, np.full(n_art, np.inf)])
    x = np.concatenate([x0, s0, np.abs(resid - s0)[need]])
    basis = [n + r for r in range(m)]
    for k, r in enumerate(need):
        basis[r] = n + m + k
    max_iter = max_iter or 50 * (m + n + 10)
    tab = _Tableau(full, b, lo, hi, basis, x)
    if n_art:
        c1 = np.concatenate([np.zeros(n + m), np.ones(n_art)])
        status = tab.run(c1, max_iter)
        if status != "optimal":
            raise SimplexError(f"phase one ended with status {status}")
        if tab.x[n + m:].sum() > 1e-7:
            return "infeasible", None, None
        tab.ub[n + m:] = 0.0
        tab.x[n + m:] = np.clip(tab.x[n + m:], 0.0, 0.0)
        tab.refactor()
    c2 = np.concatenate([c, np.zeros(m + n_art)])
    status = tab.run(c2, max_iter)
    if status == "unbounded":
        return "unbounded", None, None
    xs = tab.x[:n].copy()
    return "optimal", xs, float(c @ xs)
