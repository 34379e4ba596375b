"""Dataset ingestion, feature schema, normalization and fold plans."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

QUANTITATIVE = "quantitative"
CATEGORICAL = "categorical"
PROTECTED = "protected"
UNPROTECTED = "unprotected"
CLASSIFICATION = "classification"
REGRESSION = "regression"


class DataError(ValueError):
    """Raised when input data or a schema is invalid."""


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    role: str = UNPROTECTED
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in (QUANTITATIVE, CATEGORICAL):
            raise DataError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in (PROTECTED, UNPROTECTED):
            raise DataError(f"feature {self.name!r}: unknown role {self.role!r}")
        if self.kind == CATEGORICAL:
            if not self.levels:
                raise DataError(f"feature {self.name!r}: categorical feature needs levels")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"feature {self.name!r}: duplicate levels")
        elif self.levels is not None:
            raise DataError(f"feature {self.name!r}: quantitative feature cannot have levels")
        if self.role == PROTECTED and self.kind != CATEGORICAL:
            raise DataError(
                f"feature {self.name!r}: protected features must be categorical (bin them first)"
            )

    @property
    def protected(self) -> bool:
        return self.role == PROTECTED


@dataclass(frozen=True)
class LabelSpec:
    name: str
    task: str
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise DataError(f"label {self.name!r}: unknown task {self.task!r}")
        if self.task == CLASSIFICATION:
            if not self.levels or len(self.levels) < 1:
                raise DataError(f"label {self.name!r}: classification needs a label alphabet")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"label {self.name!r}: duplicate label levels")


@dataclass(frozen=True)
class FeatureSchema:
    """Feature kinds and roles, plus the label specification.

    Protected features never enter the branching inputs; they only define
    the groups over which discrimination is measured.
    """

    features: tuple[Feature, ...]
    label: LabelSpec

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DataError("duplicate feature names in schema")
        if self.label.name in names:
            raise DataError(f"label {self.label.name!r} also declared as a feature")
        if not any(f.protected for f in self.features):
            raise DataError("schema needs at least one protected feature")

    @property
    def task(self) -> str:
        return self.label.task

    @property
    def protected(self) -> tuple[Feature, ...]:
        return tuple(f for f in self.features if f.protected)

    @property
    def unprotected(self) -> tuple[Feature, ...]:
        return tuple(f for f in self.features if not f.protected)

    @property
    def quantitative(self) -> tuple[Feature, ...]:
        """Unprotected quantitative features (branching inputs)."""
        return tuple(f for f in self.unprotected if f.kind == QUANTITATIVE)

    @property
    def categorical(self) -> tuple[Feature, ...]:
        """Unprotected categorical features (branching inputs)."""
        return tuple(f for f in self.unprotected if f.kind == CATEGORICAL)

    def feature(self, name: str) -> Feature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "features": [
                {"name": f.name, "kind": f.kind, "role": f.role,
                 "levels": list(f.levels) if f.levels is not None else None}
                for f in self.features
            ],
            "label": {"name": self.label.name, "task": self.label.task,
                      "levels": list(self.label.levels) if self.label.levels else None},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        feats = tuple(
            Feature(f["name"], f["kind"], f["role"],
                    tuple(f["levels"]) if f.get("levels") is not None else None)
            for f in d["features"]
        )
        lab = d["label"]
        return cls(feats, LabelSpec(lab["name"], lab["task"],
                                    tuple(lab["levels"]) if lab.get("levels") else None))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_KIND_ALIASES = {"quantitative": QUANTITATIVE, "quant": QUANTITATIVE, "q": QUANTITATIVE,
                 "categorical": CATEGORICAL, "cat": CATEGORICAL, "c": CATEGORICAL}
_TASK_ALIASES = {"classification": CLASSIFICATION, "clf": CLASSIFICATION,
                 "regression": REGRESSION, "reg": REGRESSION}


def parse_schema(text: str) -> FeatureSchema:
    """Parse the plain-text schema format.

    One entry per line, whitespace separated, ``#`` starts a comment::

        age      quantitative  unprotected
        color    categorical   unprotected  red,green,blue
        race     categorical   protected    a,b
        y        label         classification  -1,1

    A regression label omits the level list.
    """
    features: list[Feature] = []
    label = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise DataError(f"schema line {lineno}: expected 'name kind role [levels]'")
        name, kind = parts[0], parts[1].lower()
        if kind == "label":
            task = _TASK_ALIASES.get(parts[2].lower())
            if task is None:
                raise DataError(f"schema line {lineno}: unknown task {parts[2]!r}")
            levels = tuple(parts[3].split(",")) if len(parts) > 3 else None
            if label is not None:
                raise DataError(f"schema line {lineno}: second label declaration")
            label = LabelSpec(name, task, levels)
            continue
        if kind not in _KIND_ALIASES:
            raise DataError(f"schema line {lineno}: unknown kind {parts[1]!r}")
        role = parts[2].lower()
        levels = tuple(parts[3].split(",")) if len(parts) > 3 else None
        try:
            features.append(Feature(name, _KIND_ALIASES[kind], role, levels))
        except DataError as exc:
            raise DataError(f"schema line {lineno}: {exc}") from None
    if label is None:
        raise DataError("schema has no label declaration")
    return FeatureSchema(tuple(features), label)


def load_schema(path: str | Path) -> FeatureSchema:
    return parse_schema(Path(path).read_text())


@dataclass(frozen=True)
class Dataset:
    """Validated tabular data.

    ``columns`` maps each feature name to a float array (quantitative) or an
    int array of level codes (categorical). ``y`` holds label codes for
    classification and floats for regression.
    """

    schema: FeatureSchema
    columns: Mapping[str, np.ndarray]
    y: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        n = len(self.y)
        if n < 1:
            raise DataError("empty dataset")
        for f in self.schema.features:
            if f.name not in self.columns:
                raise DataError(f"missing column {f.name!r}")
            col = self.columns[f.name]
            if len(col) != n:
                raise DataError(f"column {f.name!r} has {len(col)} rows, expected {n}")
            if f.kind == CATEGORICAL and (col.min() < 0 or col.max() >= len(f.levels)):
                raise DataError(f"column {f.name!r}: level code out of range")
            if f.kind == QUANTITATIVE and not np.all(np.isfinite(col)):
                raise DataError(f"column {f.name!r}: non-finite value")
        if self.task == CLASSIFICATION:
            if self.y.min() < 0 or self.y.max() >= len(self.schema.label.levels):
                raise DataError("label code out of range")
        elif not np.all(np.isfinite(self.y)):
            raise DataError("non-finite regression label")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def task(self) -> str:
        return self.schema.task

    @property
    def label_levels(self) -> tuple[str, ...]:
        return self.schema.label.levels or ()

    def quantitative_matrix(self) -> np.ndarray:
        """(n, |F_q|) matrix of unprotected quantitative features."""
        feats = self.schema.quantitative
        if not feats:
            return np.zeros((self.n, 0))
        return np.column_stack([self.columns[f.name] for f in feats]).astype(float)

    def categorical_matrix(self) -> np.ndarray:
        feats = self.schema.categorical
        if not feats:
            return np.zeros((self.n, 0), dtype=int)
        return np.column_stack([self.columns[f.name] for f in feats]).astype(int)

    def groups(self) -> tuple[np.ndarray, list[tuple[str, ...]]]:
        """Protected group id per record, and the group labels.

        Groups are the cross product of the protected features' declared
        levels, so a level with no records yields an empty group.
        """
        prot = self.schema.protected
        sizes = [len(f.levels) for f in prot]
        gid = np.zeros(self.n, dtype=int)
        for f, size in zip(prot, sizes):
            gid = gid * size + self.columns[f.name]
        labels = [tuple(combo) for combo in _product([f.levels for f in prot])]
        return gid, labels

    def subset(self, idx: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        cols = {k: v[idx] for k, v in self.columns.items()}
        return replace(self, columns=cols, y=self.y[idx])

    def record(self, i: int) -> dict:
        """Record ``i`` as a name -> value mapping (categorical values as level strings)."""
        out = {}
        for f in self.schema.features:
            v = self.columns[f.name][i]
            out[f.name] = f.levels[int(v)] if f.kind == CATEGORICAL else float(v)
        return out

    def labels_as_strings(self, codes: np.ndarray | None = None) -> list[str]:
        codes = self.y if codes is None else codes
        return [self.label_levels[int(c)] for c in codes]


def _product(level_lists):
    if not level_lists:
        yield ()
        return
    head, *rest = level_lists
    for a in head:
        for tail in _product(rest):
            yield (a, *tail)


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"unparseable value {text!r}, row {row}, column {col!r}") from None
    if not math.isfinite(v):
        raise DataError(f"non-finite value {text!r}, row {row}, column {col!r}")
    return v


def dataset_from_rows(schema: FeatureSchema, header: Sequence[str],
                      rows: Iterable[Sequence[str]], *, require_label: bool = True) -> Dataset:
    """Build a Dataset from string rows. Row numbers in errors are 1-based data rows."""
    header = [h.strip() for h in header]
    pos = {h: k for k, h in enumerate(header)}
    needed = [f.name for f in schema.features]
    if require_label:
        needed.append(schema.label.name)
    for name in needed:
        if name not in pos:
            raise DataError(f"missing column {name!r}")
    level_index = {f.name: {lv: k for k, lv in enumerate(f.levels)}
                   for f in schema.features if f.kind == CATEGORICAL}
    label_index = ({lv: k for k, lv in enumerate(schema.label.levels)}
                   if schema.task == CLASSIFICATION else None)
    cols: dict[str, list] = {f.name: [] for f in schema.features}
    ys: list = []
    n = 0
    for r, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"row {r}: expected {len(header)} fields, got {len(row)}")
        for f in schema.features:
            text = row[pos[f.name]].strip()
            if text == "":
                raise DataError(f"missing value, row {r}, column {f.name!r}")
            if f.kind == CATEGORICAL:
                code = level_index[f.name].get(text)
                if code is None:
                    raise DataError(f"unknown level {text!r}, row {r}, column {f.name!r}")
                cols[f.name].append(code)
            else:
                cols[f.name].append(_parse_float(text, r, f.name))
        if require_label:
            text = row[pos[schema.label.name]].strip()
            if text == "":
                raise DataError(f"missing value, row {r}, column {schema.label.name!r}")
            if label_index is not None:
                code = label_index.get(text)
                if code is None:
                    # tolerate numeric spellings such as "1.0" for level "1"
                    code = _numeric_level(text, label_index)
                if code is None:
                    raise DataError(f"unknown level {text!r}, row {r}, column {schema.label.name!r}")
                ys.append(code)
            else:
                ys.append(_parse_float(text, r, schema.label.name))
        n += 1
    if n == 0:
        raise DataError("empty dataset")
    columns = {}
    for f in schema.features:
        dtype = int if f.kind == CATEGORICAL else float
        columns[f.name] = np.asarray(cols[f.name], dtype=dtype)
    if require_label:
        y = np.asarray(ys, dtype=int if label_index is not None else float)
    else:
        y = np.zeros(n, dtype=int if label_index is not None else float)
    return Dataset(schema, columns, y)


def _numeric_level(text: str, index: Mapping[str, int]) -> int | None:
    try:
        v = float(text)
    except ValueError:
        return None
    for lv, k in index.items():
        try:
            if float(lv) == v:
                return k
        except ValueError:
            continue
    return None


def read_csv_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file") from None
        return header, list(reader)


def load_csv(path: str | Path, schema: FeatureSchema, label_column: str | None = None) -> Dataset:
    """Read a CSV file with a header row into a validated Dataset."""
    if label_column is not None and label_column != schema.label.name:
        schema = replace(schema, label=replace(schema.label, name=label_column))
    header, rows = read_csv_rows(path)
    return dataset_from_rows(schema, header, rows)


# ---------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class AffineMap:
    """x -> (x - lo) / (hi - lo) * scale + offset; constant inputs map to ``offset``."""

    lo: float
    hi: float
    scale: float = 1.0
    offset: float = 0.0

    @property
    def constant(self) -> bool:
        return not self.hi > self.lo

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if self.constant:
            return np.full_like(x, self.offset)
        return (x - self.lo) / (self.hi - self.lo) * self.scale + self.offset

    def invert(self, v):
        v = np.asarray(v, dtype=float)
        if self.constant:
            return np.full_like(v, self.lo)
        return (v - self.offset) / self.scale * (self.hi - self.lo) + self.lo

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "scale": self.scale, "offset": self.offset}

    @classmethod
    def from_dict(cls, d: Mapping) -> "AffineMap":
        return cls(float(d["lo"]), float(d["hi"]), float(d["scale"]), float(d["offset"]))


@dataclass(frozen=True)
class NormalizationReport:
    features: Mapping[str, AffineMap] = field(default_factory=dict)
    label: AffineMap | None = None

    @property
    def constant_features(self) -> list[str]:
        return [k for k, m in self.features.items() if m.constant]

    def apply(self, ds: Dataset) -> Dataset:
        """Map a raw dataset with the stored affine maps (no refitting)."""
        cols = dict(ds.columns)
        for name, m in self.features.items():
            cols[name] = m.apply(cols[name])
        y = ds.y
        if self.label is not None and ds.task == REGRESSION:
            y = self.label.apply(y)
        return replace(ds, columns=cols, y=y, normalized=True)

    def denormalize_labels(self, v):
        if self.label is None:
            return np.asarray(v, dtype=float)
        return self.label.invert(v)

    def to_dict(self) -> dict:
        return {"features": {k: m.to_dict() for k, m in self.features.items()},
                "label": self.label.to_dict() if self.label is not None else None}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NormalizationReport":
        feats = {k: AffineMap.from_dict(v) for k, v in d.get("features", {}).items()}
        lab = d.get("label")
        return cls(feats, AffineMap.from_dict(lab) if lab is not None else None)


def normalize(ds: Dataset) -> tuple[Dataset, NormalizationReport]:
    """Min-max scale quantitative features to [0, 1] and regression labels to [-1, 1].

    Constant columns map to 0 and are listed in ``report.constant_features``.
    Protected features are categorical, so they are never rescaled.
    """
    maps = {}
    for f in ds.schema.features:
        if f.kind != QUANTITATIVE:
            continue
        col = ds.columns[f.name]
        maps[f.name] = AffineMap(float(col.min()), float(col.max()))
    label = None
    if ds.task == REGRESSION:
        label = AffineMap(float(ds.y.min()), float(ds.y.max()), 2.0, -1.0)
    report = NormalizationReport(maps, label)
    return report.apply(ds), report


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    test_folds: tuple[np.ndarray, ...]
    n: int

    def train_indices(self, fold: int) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.test_folds[fold]] = False
        return np.flatnonzero(mask)

    def test_indices(self, fold: int) -> np.ndarray:
        return self.test_folds[fold]

    def __iter__(self):
        for f in range(self.k):
            yield self.train_indices(f), self.test_indices(f)


def make_folds(ds: Dataset | int, k: int, seed: int = 0) -> FoldPlan:
    """Shuffle record indices with ``seed`` and cut them into ``k`` near-equal folds.

    The first ``n % k`` folds get one extra record.
    """
    n = ds if isinstance(ds, int) else len(ds)
    if not 2 <= k <= n:
        raise DataError(f"fold count k={k} out of range [2, {n}]")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [n // k + (1 if f < n % k else 0) for f in range(k)]
    bounds = np.cumsum([0] + sizes)
    folds = tuple(np.sort(perm[bounds[f]:bounds[f + 1]]) for f in range(k))
    return FoldPlan(k, seed, folds, n)
