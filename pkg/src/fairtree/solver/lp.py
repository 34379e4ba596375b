"""Linear relaxations of a MilpModel."""

from __future__ import annotations

from dataclasses import dataclass

import highspy
import numpy as np

from ..milp.model import MilpModel
from .simplex import SimplexError, bounded_simplex

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ERROR = "error"


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    message: str = ""


class HighsRelaxation:
    """The LP relaxation of a model held in one HiGHS instance.

    Re-solving after bound changes warm-starts from the previous basis.
    """

    def __init__(self, model: MilpModel):
        self.model = model
        self.n = model.n_vars
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("primal_feasibility_tolerance", 1e-9)
        h.setOptionValue("dual_feasibility_tolerance", 1e-9)
        lp = highspy.HighsLp()
        lp.num_col_ = model.n_vars
        lp.num_row_ = model.n_rows
        lb, ub = model.bounds()
        inf = highspy.kHighsInf
        lp.col_cost_ = model.objective_vector()
        lp.col_lower_ = np.where(np.isfinite(lb), lb, -inf)
        lp.col_upper_ = np.where(np.isfinite(ub), ub, inf)
        lo, hi = model.row_bounds()
        lp.row_lower_ = np.where(np.isfinite(lo), lo, -inf)
        lp.row_upper_ = np.where(np.isfinite(hi), hi, inf)
        lp.offset_ = model.obj_constant
        csc = model.matrix().tocsc()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = csc.indptr.astype(np.int32)
        lp.a_matrix_.index_ = csc.indices.astype(np.int32)
        lp.a_matrix_.value_ = csc.data.astype(float)
        h.passModel(lp)
        self.h = h
        self.lb, self.ub = lb, ub

    def solve(self, lb: np.ndarray | None = None, ub: np.ndarray | None = None,
              cols: np.ndarray | None = None) -> LPResult:
        """Solve with new bounds on ``cols`` (all columns when None)."""
        if lb is not None:
            idx = np.arange(self.n) if cols is None else np.asarray(cols)
            inf = highspy.kHighsInf
            lo = np.where(np.isfinite(lb), lb, -inf)
            hi = np.where(np.isfinite(ub), ub, inf)
            self.h.changeColsBounds(len(idx), idx.astype(np.int32), lo.astype(float),
                                    hi.astype(float))
        self.h.run()
        st = self.h.getModelStatus()
        if st == highspy.HighsModelStatus.kOptimal:
            x = np.array(self.h.getSolution().col_value)
            return LPResult(OPTIMAL, x, float(self.h.getInfo().objective_function_value))
        if st == highspy.HighsModelStatus.kInfeasible:
            return LPResult(INFEASIBLE)
        if st in (highspy.HighsModelStatus.kUnbounded,
                  highspy.HighsModelStatus.kUnboundedOrInfeasible):
            return self._resolve_ambiguous(st)
        return LPResult(ERROR, message=self.h.modelStatusToString(st))

    def _resolve_ambiguous(self, st) -> LPResult:
        if st == highspy.HighsModelStatus.kUnbounded:
            return LPResult(UNBOUNDED)
        # settle unbounded-or-infeasible with a zero objective feasibility check
        probe = highspy.Highs()
        probe.setOptionValue("output_flag", False)
        lp = self.h.getLp()
        lp.col_cost_ = np.zeros(self.n)
        probe.passModel(lp)
        probe.run()
        if probe.getModelStatus() == highspy.HighsModelStatus.kInfeasible:
            return LPResult(INFEASIBLE)
        return LPResult(UNBOUNDED)


def solve_lp(model: MilpModel, lb: np.ndarray | None = None, ub: np.ndarray | None = None,
             engine: str = "highs") -> LPResult:
    """Solve the linear relaxation of ``model`` (integrality dropped).

    ``engine`` is ``"highs"`` (dual simplex via HiGHS) or ``"simplex"`` (the
    bundled dense bounded simplex).
    """
    mlb, mub = model.bounds()
    lb = mlb if lb is None else np.asarray(lb, dtype=float)
    ub = mub if ub is None else np.asarray(ub, dtype=float)
    if engine == "highs":
        return HighsRelaxation(model).solve(lb, ub)
    if engine != "simplex":
        raise ValueError(f"unknown LP engine {engine!r}")
    A = model.matrix().toarray()
    try:
        status, x, obj = bounded_simplex(model.objective_vector(), A, model.sense,
                                         np.array(model.rhs), lb, ub)
    except SimplexError as exc:
        return LPResult(ERROR, message=str(exc))
    if status != OPTIMAL:
        return LPResult(status)
    return LPResult(OPTIMAL, x, obj + model.obj_constant)


class SimplexRelaxation:
    """Same interface as HighsRelaxation, backed by the bundled simplex."""

    def __init__(self, model: MilpModel):
        self.model = model
        self.lb, self.ub = model.bounds()

    def solve(self, lb=None, ub=None, cols=None) -> LPResult:
        if lb is not None:
            if cols is None:
                self.lb, self.ub = np.asarray(lb, float).copy(), np.asarray(ub, float).copy()
            else:
                self.lb[cols], self.ub[cols] = lb, ub
        return solve_lp(self.model, self.lb, self.ub, engine="simplex")


def relaxation(model: MilpModel, engine: str = "highs"):
    if engine == "highs":
        return HighsRelaxation(model)
    if engine == "simplex":
        return SimplexRelaxation(model)
    raise ValueError(f"unknown LP engine {engine!r}")
