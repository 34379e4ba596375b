"""Fixed-format MPS export and import.

Names longer than eight characters are replaced by short deterministic
aliases (``C0000012`` for columns, ``R0000003`` for rows); the alias map is
written as comment lines so the reader restores the original names.
Numbers are written with ``repr`` so a round trip is exact; very long
numbers may therefore spill past the nominal 12-character field.
"""

from __future__ import annotations

import math
from pathlib import Path

from ..milp.model import MilpModel

NAME_WIDTH = 8
OBJ_ROW = "OBJ"
MAP_TAG = "* NAME-MAP"


class MpsError(ValueError):
    pass


def _fits(name: str) -> bool:
    return len(name) <= NAME_WIDTH and " " not in name and name != OBJ_ROW


def _aliases(names: list[str], prefix: str) -> list[str]:
    out = []
    for k, n in enumerate(names):
        out.append(n if _fits(n) else f"{prefix}{k:0{NAME_WIDTH - 1}d}")
    taken = {}
    for k, a in enumerate(out):
        if a in taken:
            # a short original name collides with an alias; alias it too
            out[k] = f"{prefix}{k:0{NAME_WIDTH - 1}d}"
        taken[out[k]] = k
    if len(set(out)) != len(out):
        raise MpsError("could not build unique short names")
    return out


def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _field(code: str, a: str, b: str = "", c: str = "") -> str:
    # columns 2-3 code, 5-12 name, 15-22 name, 25-36 value
    line = f" {code:<2} {a:<8}  {b:<8}  {c}" if b or c else f" {code:<2} {a}"
    return line.rstrip()


def mps_text(model: MilpModel) -> str:
    """Render ``model`` as fixed-format MPS text."""
    cols = _aliases(model.var_names, "C")
    rows = _aliases(model.row_names, "R")
    name = model.name if _fits(model.name) else model.name[:NAME_WIDTH].replace(" ", "_")
    out = [f"{'NAME':<14}{name}"]
    for alias, orig in zip(cols, model.var_names):
        if alias != orig:
            out.append(f"{MAP_TAG} C {alias} {orig}")
    for alias, orig in zip(rows, model.row_names):
        if alias != orig:
            out.append(f"{MAP_TAG} R {alias} {orig}")
    if model.name != name:
        out.append(f"{MAP_TAG} M {name} {model.name}")
    out.append("ROWS")
    out.append(_field("N", OBJ_ROW))
    for r, s in zip(rows, model.sense):
        out.append(_field(s, r))
    # column-wise entries
    per_col: list[list[tuple[str, float]]] = [[] for _ in range(model.n_vars)]
    c = model.objective_vector()
    for j in range(model.n_vars):
        if c[j] != 0.0:
            per_col[j].append((OBJ_ROW, c[j]))
    for r, (idx, coef) in enumerate(zip(model.row_idx, model.row_coef)):
        for j, a in zip(idx, coef):
            per_col[j].append((rows[r], a))
    out.append("COLUMNS")
    in_int = False
    marker = 0
    for j in range(model.n_vars):
        if model.binary[j] != in_int:
            tag = "'INTORG'" if model.binary[j] else "'INTEND'"
            out.append(_field("", f"M{marker:07d}", "'MARKER'", tag))
            marker += 1
            in_int = model.binary[j]
        entries = per_col[j]
        if not entries:
            # keep empty columns visible so the reader registers them
            entries = [(OBJ_ROW, 0.0)]
        for r, a in entries:
            out.append(_field("", cols[j], r, _num(a)))
    if in_int:
        out.append(_field("", f"M{marker:07d}", "'MARKER'", "'INTEND'"))
    out.append("RHS")
    if model.obj_constant != 0.0:
        out.append(_field("", "RHS", OBJ_ROW, _num(-model.obj_constant)))
    for r, v in zip(rows, model.rhs):
        if v != 0.0:
            out.append(_field("", "RHS", r, _num(v)))
    out.append("BOUNDS")
    for j in range(model.n_vars):
        lo, hi = model.lb[j], model.ub[j]
        if model.binary[j]:
            out.append(_field("LO", "BND", cols[j], "0"))
            out.append(_field("UP", "BND", cols[j], "1"))
            continue
        if lo == -math.inf and hi == math.inf:
            out.append(_field("FR", "BND", cols[j]))
            continue
        if lo == hi:
            out.append(_field("FX", "BND", cols[j], _num(lo)))
            continue
        if lo == -math.inf:
            out.append(_field("MI", "BND", cols[j]))
        elif lo != 0.0:
            out.append(_field("LO", "BND", cols[j], _num(lo)))
        if hi != math.inf:
            out.append(_field("UP", "BND", cols[j], _num(hi)))
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def export_mps(model: MilpModel, path) -> Path:
    """Write ``model`` to ``path`` in fixed-format MPS.

    Raises
    ------
    OSError
        If the path cannot be written.
    """
    path = Path(path)
    path.write_text(mps_text(model), encoding="ascii")
    return path


write_mps = export_mps


def parse_mps(text: str) -> MilpModel:
    """Parse MPS text produced by :func:`mps_text` (or compatible files)."""
    names = {"C": {}, "R": {}, "M": {}}
    section = None
    model_name = "model"
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    obj_row = None
    col_order: list[str] = []
    col_int: dict[str, bool] = {}
    entries: dict[str, list[tuple[str, float]]] = {}
    rhs: dict[str, float] = {}
    bounds: dict[str, list] = {}
    in_int = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        if raw.startswith(MAP_TAG):
            _, _, kind, alias, orig = raw.split(" ", 4)
            names[kind][alias] = orig
            continue
        if not raw.strip() or raw.startswith("*"):
            continue
        tok = raw.split()
        if not raw[0].isspace():
            section = tok[0]
            if section == "NAME" and len(tok) > 1:
                model_name = tok[1]
            if section == "ENDATA":
                break
            continue
        try:
            if section == "ROWS":
                s, r = tok
                if s == "N":
                    if obj_row is None:
                        obj_row = r
                    continue
                row_sense[r] = s
                row_order.append(r)
            elif section == "COLUMNS":
                if len(tok) >= 3 and tok[1] == "'MARKER'":
                    in_int = tok[2] == "'INTORG'"
                    continue
                c = tok[0]
                if c not in entries:
                    col_order.append(c)
                    entries[c] = []
                    col_int[c] = in_int
                for k in range(1, len(tok), 2):
                    entries[c].append((tok[k], float(tok[k + 1])))
            elif section == "RHS":
                for k in range(1, len(tok), 2):
                    rhs[tok[k]] = float(tok[k + 1])
            elif section == "BOUNDS":
                bounds.setdefault(tok[2], []).append((tok[0], float(tok[3]) if len(tok) > 3 else None))
            else:
                raise MpsError(f"unsupported section {section!r}")
        except (ValueError, IndexError) as exc:
            raise MpsError(f"line {lineno}: cannot parse {raw!r}") from exc
    m = MilpModel(names["M"].get(model_name, model_name))
    index = {}
    for c in col_order:
        lo, hi = 0.0, math.inf
        is_bin = col_int[c]
        if is_bin:
            hi = 1.0
        for kind, v in bounds.get(c, []):
            if kind == "LO":
                lo = v
            elif kind == "UP":
                hi = v
            elif kind == "FX":
                lo = hi = v
            elif kind == "FR":
                lo, hi = -math.inf, math.inf
            elif kind == "MI":
                lo = -math.inf
            elif kind == "PL":
                hi = math.inf
            elif kind == "BV":
                lo, hi, is_bin = 0.0, 1.0, True
            else:
                raise MpsError(f"unsupported bound type {kind!r}")
        if is_bin and (lo, hi) != (0.0, 1.0):
            raise MpsError(f"integer column {c} is not binary")
        index[c] = m.add_var(names["C"].get(c, c), lo, hi, binary=is_bin)
    per_row: dict[str, list[tuple[int, float]]] = {r: [] for r in row_order}
    obj = []
    for c in col_order:
        for r, a in entries[c]:
            if r == obj_row:
                obj.append((index[c], a))
            elif r in per_row:
                per_row[r].append((index[c], a))
            else:
                raise MpsError(f"column {c} references unknown row {r}")
    for r in row_order:
        m.add_row(names["R"].get(r, r), per_row[r], row_sense[r], rhs.get(r, 0.0))
    m.add_objective([(j, a) for j, a in obj if a != 0.0], -rhs.get(obj_row, 0.0))
    return m


def read_mps(path) -> MilpModel:
    return parse_mps(Path(path).read_text(encoding="ascii"))
