"""LP-based branch-and-bound for models whose integer variables are binary."""

from __future__ import annotations

import heapq
import io
import math
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..milp.model import MilpModel
from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, relaxation

STATUS_OPTIMAL = "optimal"
STATUS_TIME_LIMIT = "feasible-time-limit"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
# limit reached before any feasible point was seen
STATUS_NO_INCUMBENT = "time-limit-no-incumbent"

MOST_FRACTIONAL = "most-fractional"
PSEUDO_COST = "pseudo-cost"
BEST_BOUND = "best-bound"
DEPTH_FIRST = "depth-first"


class SolverError(RuntimeError):
    pass


class IncumbentError(ValueError):
    """Raised when a proposed incumbent violates the model."""

    def __init__(self, row: str):
        super().__init__(f"incumbent violates {row}")
        self.row = row


@dataclass
class SolverOptions:
    """Settings for :func:`branch_and_bound`.

    ``seed`` is recorded for reproducibility; the search itself makes no
    random choices, so identical inputs always give identical trees.
    """

    time_limit: float = 60.0
    abs_tol: float = 1e-7
    rel_tol: float = 1e-9
    int_tol: float = 1e-6
    branching: str = MOST_FRACTIONAL
    node_order: str = BEST_BOUND
    seed: int = 0
    lp_engine: str = "highs"
    node_limit: int | None = None
    # when every feasible objective value is a multiple of this step, node
    # bounds are rounded up to the next multiple before pruning
    objective_step: float | None = None
    cancel: threading.Event | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        for name in ("abs_tol", "rel_tol", "int_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.objective_step is not None and not self.objective_step > 0:
            raise ValueError("objective_step must be positive")
        if self.branching not in (MOST_FRACTIONAL, PSEUDO_COST):
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if self.node_order not in (BEST_BOUND, DEPTH_FIRST):
            raise ValueError(f"unknown node order {self.node_order!r}")


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None
    objective: float | None
    lower_bound: float
    gap: float
    nodes: int
    seconds: float
    trace: list[tuple[float, float, float]]

    @property
    def has_solution(self) -> bool:
        return self.x is not None

    def trace_csv(self) -> str:
        """Bound trace as CSV text with columns time_s, lower, upper."""
        buf = io.StringIO()
        buf.write("time_s,lower,upper\n")
        for t, lo, up in self.trace:
            buf.write(f"{t:.6f},{lo!r},{up!r}\n")
        return buf.getvalue()

    def same_search(self, other: "SolveResult") -> bool:
        """Equality ignoring wall-clock fields."""
        return (self.status == other.status and self.nodes == other.nodes
                and self.objective == other.objective and self.lower_bound == other.lower_bound
                and ((self.x is None and other.x is None)
                     or (self.x is not None and other.x is not None
                         and np.array_equal(self.x, other.x)))
                and [t[1:] for t in self.trace] == [t[1:] for t in other.trace])


def gap_of(upper: float, lower: float) -> float:
    if not math.isfinite(upper):
        return math.inf
    return max(0.0, (upper - lower) / max(1.0, abs(upper)))


def install_incumbent(model: MilpModel, x, tol: float = 1e-6) -> np.ndarray:
    """Validate a proposed starting solution.

    Parameters
    ----------
    model : MilpModel
    x : array_like
        Full assignment, one value per registered variable.
    tol : float
        Feasibility and integrality tolerance.

    Returns
    -------
    numpy.ndarray
        Copy of ``x`` with binaries rounded exactly.

    Raises
    ------
    IncumbentError
        Naming the first violated bound or row.
    """
    x = np.asarray(x, dtype=float).copy()
    bad = model.first_violation(x, tol=tol, int_tol=tol)
    if bad is not None:
        raise IncumbentError(bad)
    b = model.binary_indices()
    x[b] = np.round(x[b])
    return x


@dataclass(order=True)
class _Node:
    key: tuple
    bound: float = field(compare=False)
    lb: np.ndarray = field(compare=False, repr=False)
    ub: np.ndarray = field(compare=False, repr=False)
    depth: int = field(compare=False, default=0)
    parent_branch: tuple | None = field(compare=False, default=None)


class _PseudoCosts:
    def __init__(self, n: int):
        self.sum = np.zeros((2, n))
        self.cnt = np.zeros((2, n))

    def update(self, j: int, up: bool, gain: float, dist: float):
        if dist > 1e-9 and math.isfinite(gain):
            self.sum[int(up), j] += max(gain, 0.0) / dist
            self.cnt[int(up), j] += 1

    def estimate(self, up: int) -> np.ndarray:
        seen = self.cnt[up] > 0
        mean = self.sum[up][seen].sum() / self.cnt[up][seen].sum() if seen.any() else 1.0
        est = np.where(seen, self.sum[up] / np.maximum(self.cnt[up], 1), mean)
        return est


def branch_and_bound(model: MilpModel, opts: SolverOptions | None = None,
                     incumbent=None) -> SolveResult:
    """Minimize ``model`` exactly (within tolerances) or until a limit.

    Parameters
    ----------
    model : MilpModel
        Integer variables must be binary.
    opts : SolverOptions, optional
    incumbent : array_like, optional
        Starting solution; validated with :func:`install_incumbent`.

    Returns
    -------
    SolveResult
        ``status`` is ``optimal`` when the search finished, ``feasible-time-limit``
        when stopped by the time or node limit or a cancel signal with an
        incumbent in hand, ``infeasible`` or ``unbounded`` otherwise.
    """
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    deadline = t0 + opts.time_limit
    bins = model.binary_indices()
    nb = len(bins)
    lp = relaxation(model, opts.lp_engine)
    lb0, ub0 = model.bounds()

    upper = math.inf
    best_x = None
    if incumbent is not None:
        best_x = install_incumbent(model, incumbent, opts.int_tol)
        upper = model.evaluate(best_x)
    trace: list[tuple[float, float, float]] = []

    def now():
        return time.perf_counter() - t0

    def record(lower):
        lower = min(lower, upper)
        if not trace or trace[-1][1:] != (lower, upper):
            trace.append((now(), lower, upper))

    def lift(bound):
        step = opts.objective_step
        if step is None or not math.isfinite(bound):
            return bound
        return math.ceil(bound / step - 1e-6) * step

    def prune_tol():
        return max(opts.abs_tol, opts.rel_tol * abs(upper)) if math.isfinite(upper) else 0.0

    def solve_node(blo, bhi):
        if nb:
            return lp.solve(blo, bhi, cols=bins)
        return lp.solve()

    def try_incumbent(x) -> bool:
        nonlocal upper, best_x
        xb = np.round(x[bins])
        if nb:
            res = lp.solve(xb, xb, cols=bins)
        else:
            res = lp.solve()
        if res.status != OPTIMAL:
            return False
        cand = res.x.copy()
        cand[bins] = xb
        if model.first_violation(cand, tol=1e-6, int_tol=opts.int_tol) is not None:
            return False
        val = model.evaluate(cand)
        if val < upper - 1e-9:
            upper, best_x = val, cand
            return True
        return False

    def finish(status, lower, nodes):
        if best_x is not None and status in (STATUS_OPTIMAL,):
            lower = min(lower, upper)
        record(lower)
        obj = upper if best_x is not None else None
        return SolveResult(status, best_x, obj, lower,
                           gap_of(upper, lower) if best_x is not None else math.inf,
                           nodes, now(), trace)

    root_lo, root_hi = lb0[bins].copy(), ub0[bins].copy()
    res = solve_node(root_lo, root_hi)
    nodes = 1
    if res.status == INFEASIBLE:
        return finish(STATUS_INFEASIBLE, math.inf, nodes)
    if res.status == UNBOUNDED:
        return finish(STATUS_UNBOUNDED, -math.inf, nodes)
    if res.status != OPTIMAL:
        raise SolverError(f"root relaxation failed: {res.message}")
    lower = lift(res.objective)
    record(lower)

    pc = _PseudoCosts(nb)
    seq = 0
    heap: list[_Node] = []
    stack: list[_Node] = []

    def push(node_lo, node_hi, bound, depth, branch):
        nonlocal seq
        seq += 1
        if opts.node_order == BEST_BOUND:
            node = _Node((bound, seq), bound, node_lo, node_hi, depth, branch)
            heapq.heappush(heap, node)
        else:
            stack.append(_Node((seq,), bound, node_lo, node_hi, depth, branch))

    def open_lower():
        pool = heap if opts.node_order == BEST_BOUND else stack
        if not pool:
            return upper
        if opts.node_order == BEST_BOUND:
            return heap[0].bound
        return min(n.bound for n in stack)

    def process(node_lo, node_hi, sol, depth):
        """Handle a solved node: prune, accept, or branch."""
        if lift(sol.objective) >= upper - prune_tol():
            return
        x = sol.x
        frac = x[bins] - np.floor(x[bins])
        dist = np.minimum(frac, 1.0 - frac)
        open_ = dist > opts.int_tol
        if not open_.any():
            if try_incumbent(x):
                record(open_lower_with(sol.objective))
            return
        k = _choose(dist, frac, open_, pc, opts.branching)
        j_down_lo, j_down_hi = node_lo.copy(), node_hi.copy()
        j_down_hi[k] = 0.0
        j_up_lo, j_up_hi = node_lo.copy(), node_hi.copy()
        j_up_lo[k] = 1.0
        bound = lift(sol.objective)
        down = (j_down_lo, j_down_hi, bound, depth + 1, (k, False, frac[k], sol.objective))
        up = (j_up_lo, j_up_hi, bound, depth + 1, (k, True, 1 - frac[k], sol.objective))
        # depth-first explores the rounding direction first (pushed last)
        order = (down, up) if frac[k] >= 0.5 else (up, down)
        for child in order:
            push(*child)

    def open_lower_with(extra):
        return min(open_lower(), extra) if math.isfinite(extra) else open_lower()

    process(root_lo, root_hi, res, 0)
    status = STATUS_OPTIMAL
    global_lower = lower
    while heap or stack:
        if time.perf_counter() > deadline or (opts.cancel is not None and opts.cancel.is_set()) \
                or (opts.node_limit is not None and nodes >= opts.node_limit):
            status = STATUS_TIME_LIMIT if best_x is not None else STATUS_NO_INCUMBENT
            break
        node = heapq.heappop(heap) if opts.node_order == BEST_BOUND else stack.pop()
        if node.bound >= upper - prune_tol():
            continue
        sol = solve_node(node.lb, node.ub)
        nodes += 1
        if node.parent_branch is not None and opts.branching == PSEUDO_COST:
            k, is_up, d, parent_obj = node.parent_branch
            gain = (sol.objective - parent_obj) if sol.status == OPTIMAL else math.inf
            pc.update(k, is_up, gain, d)
        if sol.status == INFEASIBLE:
            pass
        elif sol.status == OPTIMAL:
            process(node.lb, node.ub, sol, node.depth)
        elif sol.status == UNBOUNDED:
            # bounded binaries with an unbounded continuous ray: the MILP is unbounded
            # as soon as any integer point is feasible; report it directly
            return finish(STATUS_UNBOUNDED, -math.inf, nodes)
        else:
            raise SolverError(f"node relaxation failed: {sol.message}")
        cur = open_lower()
        if opts.node_order == BEST_BOUND and cur > global_lower:
            global_lower = min(cur, upper)
            record(global_lower)
    else:
        global_lower = upper if best_x is not None else math.inf

    if status == STATUS_OPTIMAL:
        if best_x is None:
            return finish(STATUS_INFEASIBLE, math.inf, nodes)
        return finish(STATUS_OPTIMAL, upper, nodes)
    return finish(status, min(open_lower(), upper), nodes)


def _choose(dist, frac, open_, pc: _PseudoCosts, rule: str) -> int:
    if rule == MOST_FRACTIONAL:
        score = np.where(open_, dist, -1.0)
        return int(np.argmax(score))
    down = pc.estimate(0) * frac
    up = pc.estimate(1) * (1.0 - frac)
    score = np.maximum(down, 1e-6) * np.maximum(up, 1e-6)
    score = np.where(open_, score, -1.0)
    return int(np.argmax(score))
