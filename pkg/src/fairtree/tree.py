"""Decision trees of fixed depth: shapes, branching/leaf rules, routing, JSON."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Union

import numpy as np

from .data import (CATEGORICAL, CLASSIFICATION, Dataset, FeatureSchema,
                   NormalizationReport)

FORMAT_NAME = "fairtree-model"
FORMAT_VERSION = 1


class TreeError(ValueError):
    pass


class SchemaMismatch(TreeError):
    pass


@dataclass(frozen=True)
class TreeShape:
    """Complete binary tree of depth K.

    Branching nodes use heap numbering 1 .. 2^K - 1 (children of v are 2v and
    2v + 1); leaves are numbered 0 .. 2^K - 1 from left to right.
    """

    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise TreeError("tree depth must be at least 1")

    @property
    def n_nodes(self) -> int:
        return 2 ** self.depth - 1

    @property
    def n_leaves(self) -> int:
        return 2 ** self.depth

    @property
    def nodes(self) -> range:
        return range(1, 2 ** self.depth)

    @property
    def leaves(self) -> range:
        return range(2 ** self.depth)

    def leaves_under(self, node: int) -> range:
        """Leaves below heap id ``node`` (a leaf's own heap id is allowed)."""
        level = node.bit_length() - 1
        span = 2 ** (self.depth - level)
        first = node * span - 2 ** self.depth
        return range(first, first + span)

    def left_leaves(self, node: int) -> range:
        return self.leaves_under(2 * node)

    def right_leaves(self, node: int) -> range:
        return self.leaves_under(2 * node + 1)

    def path(self, leaf: int) -> list[tuple[int, bool]]:
        """(node, goes_left) pairs from the root to ``leaf``."""
        heap = leaf + 2 ** self.depth
        out = []
        while heap > 1:
            out.append((heap // 2, heap % 2 == 0))
            heap //= 2
        return out[::-1]


# ---------------------------------------------------------------------------
# rules


@dataclass(frozen=True)
class QuantitativeSplit:
    """Go left iff ``cutoff >= x[feature]``."""

    feature: str
    cutoff: float

    @property
    def features(self) -> tuple[str, ...]:
        return (self.feature,)


@dataclass(frozen=True)
class CategoricalSplit:
    """Go left iff ``x[feature]`` is one of ``left``."""

    feature: str
    left: frozenset

    def __post_init__(self):
        object.__setattr__(self, "left", frozenset(self.left))

    @property
    def features(self) -> tuple[str, ...]:
        return (self.feature,)


@dataclass(frozen=True)
class LinearSplit:
    """Go left iff ``cutoff >= sum_j weights[j] * x[j]``."""

    weights: tuple[tuple[str, float], ...]
    cutoff: float

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple((str(k), float(v)) for k, v in self.weights))

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(k for k, v in self.weights if v != 0.0)


@dataclass(frozen=True)
class ConstantLabel:
    label: str


@dataclass(frozen=True)
class ConstantValue:
    value: float


@dataclass(frozen=True)
class LinearScore:
    """Leaf prediction ``intercept + sum_j coef[j] * x[j]``, clamped to [-1, 1]."""

    coef: tuple[tuple[str, float], ...]
    intercept: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coef", tuple((str(k), float(v)) for k, v in self.coef))


BranchRule = Union[QuantitativeSplit, CategoricalSplit, LinearSplit]
LeafRule = Union[ConstantLabel, ConstantValue, LinearScore]


# ---------------------------------------------------------------------------
# tree


@dataclass(frozen=True)
class DecisionTree:
    shape: TreeShape
    branches: tuple[BranchRule, ...]
    leaves: tuple[LeafRule, ...]
    schema: FeatureSchema
    normalization: NormalizationReport | None = None
    schema_fingerprint: str = ""
    meta: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "leaves", tuple(self.leaves))
        if not self.schema_fingerprint:
            object.__setattr__(self, "schema_fingerprint", self.schema.fingerprint())
        if len(self.branches) != self.shape.n_nodes:
            raise TreeError(f"expected {self.shape.n_nodes} branch rules, got {len(self.branches)}")
        if len(self.leaves) != self.shape.n_leaves:
            raise TreeError(f"expected {self.shape.n_leaves} leaf rules, got {len(self.leaves)}")
        allowed = {f.name: f for f in self.schema.unprotected}
        for rule in self.branches:
            for name in _rule_features(rule):
                if name not in allowed:
                    raise TreeError(f"branch rule references {name!r}, not an unprotected feature")
            if isinstance(rule, CategoricalSplit):
                feat = allowed[rule.feature]
                if feat.kind != CATEGORICAL:
                    raise TreeError(f"categorical split on quantitative feature {rule.feature!r}")
                unknown = set(rule.left) - set(feat.levels)
                if unknown:
                    raise TreeError(f"categorical split uses unknown levels {sorted(unknown)}")
            elif isinstance(rule, QuantitativeSplit):
                if allowed[rule.feature].kind == CATEGORICAL:
                    raise TreeError(f"threshold split on categorical feature {rule.feature!r}")
            elif isinstance(rule, LinearSplit):
                for name, _ in rule.weights:
                    if allowed[name].kind == CATEGORICAL:
                        raise TreeError(f"linear split on categorical feature {name!r}")
        for rule in self.leaves:
            if isinstance(rule, ConstantLabel):
                if self.task != CLASSIFICATION:
                    raise TreeError("class-label leaf in a regression tree")
                if rule.label not in self.schema.label.levels:
                    raise TreeError(f"leaf label {rule.label!r} not in the label alphabet")
            elif self.task == CLASSIFICATION:
                raise TreeError("regression leaf in a classification tree")
            if isinstance(rule, LinearScore):
                for name, _ in rule.coef:
                    if name not in allowed or allowed[name].kind == CATEGORICAL:
                        raise TreeError(f"linear leaf references {name!r}")

    @property
    def task(self) -> str:
        return self.schema.task

    @cached_property
    def _label_index(self) -> dict[str, int]:
        return {lv: k for k, lv in enumerate(self.schema.label.levels or ())}

    # -- single records -----------------------------------------------------

    def _goes_left(self, rule: BranchRule, x: Mapping) -> bool:
        if isinstance(rule, QuantitativeSplit):
            return rule.cutoff >= float(x[rule.feature])
        if isinstance(rule, CategoricalSplit):
            value = x[rule.feature]
            if value not in self.schema.feature(rule.feature).levels:
                raise TreeError(f"unknown level {value!r} for feature {rule.feature!r}")
            return value in rule.left
        return rule.cutoff >= sum(w * float(x[k]) for k, w in rule.weights)

    def route(self, x: Mapping) -> int:
        """Leaf index reached by a normalized record (name -> value mapping)."""
        node = 1
        for _ in range(self.shape.depth):
            node = 2 * node + (0 if self._goes_left(self.branches[node - 1], x) else 1)
        return node - self.shape.n_leaves

    def _leaf_value(self, rule: LeafRule, x: Mapping):
        if isinstance(rule, ConstantLabel):
            return rule.label
        if isinstance(rule, ConstantValue):
            return float(rule.value)
        v = rule.intercept + sum(c * float(x[k]) for k, c in rule.coef)
        return float(min(1.0, max(-1.0, v)))

    def predict(self, x: Mapping):
        """Class label (string) or normalized regression value for one record."""
        return self._leaf_value(self.leaves[self.route(x)], x)

    # -- datasets -----------------------------------------------------------

    def check_schema(self, ds: Dataset) -> None:
        if ds.schema.fingerprint() != self.schema_fingerprint:
            raise SchemaMismatch("dataset schema does not match the model's schema fingerprint")

    def _goes_left_many(self, rule: BranchRule, ds: Dataset) -> np.ndarray:
        if isinstance(rule, QuantitativeSplit):
            return rule.cutoff >= ds.columns[rule.feature]
        if isinstance(rule, CategoricalSplit):
            feat = ds.schema.feature(rule.feature)
            codes = [k for k, lv in enumerate(feat.levels) if lv in rule.left]
            return np.isin(ds.columns[rule.feature], codes)
        return rule.cutoff >= linear_score(ds, rule.weights)

    def route_many(self, ds: Dataset) -> np.ndarray:
        """Leaf index per record of a normalized dataset."""
        self.check_schema(ds)
        left = np.vstack([self._goes_left_many(r, ds) for r in self.branches])
        node = np.ones(ds.n, dtype=int)
        rows = np.arange(ds.n)
        for _ in range(self.shape.depth):
            node = 2 * node + (~left[node - 1, rows]).astype(int)
        return node - self.shape.n_leaves

    def predict_many(self, ds: Dataset) -> np.ndarray:
        """Label codes (classification) or clamped normalized values (regression)."""
        leaf = self.route_many(ds)
        if self.task == CLASSIFICATION:
            codes = np.array([self._label_index[r.label] for r in self.leaves])
            return codes[leaf]
        out = np.zeros(ds.n)
        for l, rule in enumerate(self.leaves):
            mask = leaf == l
            if not mask.any():
                continue
            if isinstance(rule, ConstantValue):
                out[mask] = rule.value
            else:
                v = np.full(mask.sum(), rule.intercept)
                for k, c in rule.coef:
                    v = v + c * ds.columns[k][mask]
                out[mask] = v
        return np.clip(out, -1.0, 1.0)

    def feature_usage(self) -> Counter:
        """Number of branching nodes using each feature (nonzero weight)."""
        return Counter(name for rule in self.branches for name in rule.features)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "depth": self.shape.depth,
            "schema": self.schema.to_dict(),
            "schema_fingerprint": self.schema_fingerprint,
            "normalization": self.normalization.to_dict() if self.normalization else None,
            "branches": [_rule_to_dict(r) for r in self.branches],
            "leaves": [_leaf_to_dict(r) for r in self.leaves],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "DecisionTree":
        if d.get("format") != FORMAT_NAME:
            raise TreeError("not a fairtree model document")
        if d.get("version") != FORMAT_VERSION:
            raise TreeError(f"unsupported model version {d.get('version')!r}")
        schema = FeatureSchema.from_dict(d["schema"])
        if schema.fingerprint() != d.get("schema_fingerprint"):
            raise SchemaMismatch("schema fingerprint does not match the embedded schema")
        norm = d.get("normalization")
        return cls(
            TreeShape(int(d["depth"])),
            tuple(_rule_from_dict(r) for r in d["branches"]),
            tuple(_leaf_from_dict(r) for r in d["leaves"]),
            schema,
            NormalizationReport.from_dict(norm) if norm is not None else None,
            d["schema_fingerprint"],
        )

    @classmethod
    def from_json(cls, text: str) -> "DecisionTree":
        return cls.from_dict(json.loads(text))


def linear_score(ds: Dataset, weights) -> np.ndarray:
    """``sum_j w_j x_j`` per record, accumulated in weight order."""
    score = np.zeros(ds.n)
    for k, w in weights:
        score = score + w * ds.columns[k]
    return score


def _rule_features(rule: BranchRule) -> tuple[str, ...]:
    if isinstance(rule, LinearSplit):
        return tuple(k for k, _ in rule.weights)
    return (rule.feature,)


def _rule_to_dict(rule: BranchRule) -> dict:
    if isinstance(rule, QuantitativeSplit):
        return {"type": "quantitative", "feature": rule.feature, "cutoff": rule.cutoff}
    if isinstance(rule, CategoricalSplit):
        return {"type": "categorical", "feature": rule.feature, "left": sorted(rule.left)}
    return {"type": "linear", "weights": [[k, v] for k, v in rule.weights], "cutoff": rule.cutoff}


def _rule_from_dict(d: Mapping) -> BranchRule:
    kind = d["type"]
    if kind == "quantitative":
        return QuantitativeSplit(d["feature"], float(d["cutoff"]))
    if kind == "categorical":
        return CategoricalSplit(d["feature"], frozenset(d["left"]))
    if kind == "linear":
        return LinearSplit(tuple((k, float(v)) for k, v in d["weights"]), float(d["cutoff"]))
    raise TreeError(f"unknown branch rule type {kind!r}")


def _leaf_to_dict(rule: LeafRule) -> dict:
    if isinstance(rule, ConstantLabel):
        return {"type": "label", "label": rule.label}
    if isinstance(rule, ConstantValue):
        return {"type": "constant", "value": rule.value}
    return {"type": "linear", "coef": [[k, v] for k, v in rule.coef], "intercept": rule.intercept}


def _leaf_from_dict(d: Mapping) -> LeafRule:
    kind = d["type"]
    if kind == "label":
        return ConstantLabel(d["label"])
    if kind == "constant":
        return ConstantValue(float(d["value"]))
    if kind == "linear":
        return LinearScore(tuple((k, float(v)) for k, v in d["coef"]), float(d["intercept"]))
    raise TreeError(f"unknown leaf rule type {kind!r}")
