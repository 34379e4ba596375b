"""A small mixed-integer linear model container.

Variables are registered in order and addressed by integer index; rows are
sparse. The model is minimized. Binary variables always carry bounds [0, 1].
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

SENSES = ("L", "E", "G")  # <=, =, >=


class ModelError(ValueError):
    pass


class MilpModel:
    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.var_family: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.binary: list[bool] = []
        self.row_names: list[str] = []
        self.row_family: list[str] = []
        self.row_idx: list[np.ndarray] = []
        self.row_coef: list[np.ndarray] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self.obj: dict[int, float] = {}
        self.obj_constant = 0.0
        self._index: dict[str, int] = {}
        self._row_index: dict[str, int] = {}
        self._frozen = False
        self._cache: dict = {}

    # -- construction -------------------------------------------------------

    def _check_mutable(self):
        if self._frozen:
            raise ModelError("model is frozen")

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                binary: bool = False, family: str | None = None) -> int:
        self._check_mutable()
        if name in self._index:
            raise ModelError(f"duplicate variable {name!r}")
        if binary:
            lb, ub = 0.0, 1.0
        if lb > ub:
            raise ModelError(f"variable {name!r}: lb {lb} > ub {ub}")
        k = len(self.var_names)
        self._index[name] = k
        self.var_names.append(name)
        self.var_family.append(family or name.split("[", 1)[0])
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        return k

    def add_row(self, name: str, coeffs: Mapping[int, float] | Iterable[tuple[int, float]],
                sense: str, rhs: float, family: str | None = None) -> int:
        self._check_mutable()
        if sense not in SENSES:
            raise ModelError(f"row {name!r}: unknown sense {sense!r}")
        if name in self._row_index:
            raise ModelError(f"duplicate row {name!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[int, float] = {}
        for j, a in items:
            if not 0 <= j < len(self.var_names):
                raise ModelError(f"row {name!r} references unregistered variable {j}")
            merged[j] = merged.get(j, 0.0) + float(a)
        idx = np.array(sorted(k for k, v in merged.items() if v != 0.0), dtype=int)
        coef = np.array([merged[k] for k in idx], dtype=float)
        r = len(self.row_names)
        self._row_index[name] = r
        self.row_names.append(name)
        self.row_family.append(family or name.split("[", 1)[0])
        self.row_idx.append(idx)
        self.row_coef.append(coef)
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        return r

    def add_objective(self, coeffs: Mapping[int, float] | Iterable[tuple[int, float]],
                      constant: float = 0.0) -> None:
        self._check_mutable()
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        for j, a in items:
            self.obj[j] = self.obj.get(j, 0.0) + float(a)
        self.obj_constant += float(constant)

    def freeze(self) -> "MilpModel":
        self._frozen = True
        return self

    # -- lookup -------------------------------------------------------------

    def var(self, name: str) -> int:
        return self._index[name]

    def has_var(self, name: str) -> bool:
        return name in self._index

    def row(self, name: str) -> int:
        return self._row_index[name]

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    @property
    def n_binary(self) -> int:
        return sum(self.binary)

    def family_indices(self, family: str) -> list[int]:
        return [k for k, f in enumerate(self.var_family) if f == family]

    def var_counts(self) -> dict[str, int]:
        return dict(Counter(self.var_family))

    def row_counts(self) -> dict[str, int]:
        return dict(Counter(self.row_family))

    # -- array views --------------------------------------------------------

    def _cached(self, key, fn):
        if not self._frozen:
            return fn()
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def matrix(self) -> sparse.csr_matrix:
        def build():
            indptr = np.cumsum([0] + [len(i) for i in self.row_idx])
            idx = np.concatenate(self.row_idx) if self.row_idx else np.zeros(0, dtype=int)
            val = np.concatenate(self.row_coef) if self.row_coef else np.zeros(0)
            return sparse.csr_matrix((val, idx, indptr), shape=(self.n_rows, self.n_vars))
        return self._cached("A", build)

    def objective_vector(self) -> np.ndarray:
        def build():
            c = np.zeros(self.n_vars)
            for j, a in self.obj.items():
                c[j] = a
            return c
        return self._cached("c", build)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.lb, dtype=float), np.array(self.ub, dtype=float)

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.array(self.rhs, dtype=float)
        sense = np.array(self.sense)
        lo = np.where(sense == "L", -np.inf, rhs)
        hi = np.where(sense == "G", np.inf, rhs)
        return lo, hi

    def binary_indices(self) -> np.ndarray:
        return np.flatnonzero(np.array(self.binary, dtype=bool))

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, x: np.ndarray) -> float:
        return float(self.objective_vector() @ np.asarray(x, dtype=float) + self.obj_constant)

    def first_violation(self, x: np.ndarray, tol: float = 1e-6,
                        int_tol: float = 1e-6) -> str | None:
        """Name of the first violated bound, integrality mark or row; None if feasible."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_vars,):
            return f"assignment has shape {x.shape}, expected ({self.n_vars},)"
        lb, ub = self.bounds()
        for j in range(self.n_vars):
            if x[j] < lb[j] - tol or x[j] > ub[j] + tol or not math.isfinite(x[j]):
                return f"bound of {self.var_names[j]}"
            if self.binary[j] and abs(x[j] - round(x[j])) > int_tol:
                return f"integrality of {self.var_names[j]}"
        act = self.matrix() @ x
        lo, hi = self.row_bounds()
        bad = np.flatnonzero((act < lo - tol) | (act > hi + tol))
        if len(bad):
            return self.row_names[bad[0]]
        return None

    # -- comparison ---------------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, MilpModel):
            return NotImplemented
        if (self.var_names != other.var_names or self.row_names != other.row_names
                or self.binary != other.binary or self.sense != other.sense):
            return False
        if not (np.array_equal(self.lb, other.lb) and np.array_equal(self.ub, other.ub)
                and np.array_equal(self.rhs, other.rhs)):
            return False
        if self.obj_constant != other.obj_constant:
            return False
        if {k: v for k, v in self.obj.items() if v != 0} != \
                {k: v for k, v in other.obj.items() if v != 0}:
            return False
        for a, b, c, d in zip(self.row_idx, other.row_idx, self.row_coef, other.row_coef):
            if not (np.array_equal(a, b) and np.array_equal(c, d)):
                return False
        return True

    __hash__ = None

    def summary(self) -> dict:
        return {
            "name": self.name,
            "variables": self.n_vars,
            "binary": self.n_binary,
            "rows": self.n_rows,
            "nonzeros": int(sum(len(i) for i in self.row_idx)),
            "variables_by_family": self.var_counts(),
            "rows_by_family": self.row_counts(),
        }
