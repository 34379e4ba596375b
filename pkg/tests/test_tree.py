import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairtree.data import REGRESSION, normalize
from fairtree.tree import (CategoricalSplit, ConstantLabel, ConstantValue, DecisionTree,
                           LinearScore, LinearSplit, QuantitativeSplit, SchemaMismatch,
                           TreeError, TreeShape)

from helpers import make_dataset

DATA = Path(__file__).parent / "data"


def _schema(task="classification"):
    y = [0, 1, 0] if task == "classification" else [0.1, 0.2, 0.3]
    return make_dataset([[0.0, 0.0], [0.5, 1.0], [1.0, 0.5]], [[0], [1], [2]], [0, 1, 0], y,
                        task=task).schema


def stump(cutoff=0.5):
    return DecisionTree(TreeShape(1), (QuantitativeSplit("x0", cutoff),),
                        (ConstantLabel("0"), ConstantLabel("1")), _schema())


def test_shape_sets():
    s = TreeShape(2)
    assert (s.n_nodes, s.n_leaves) == (3, 4)
    assert list(s.left_leaves(1)) == [0, 1] and list(s.right_leaves(1)) == [2, 3]
    assert list(s.left_leaves(3)) == [2] and list(s.right_leaves(3)) == [3]
    for v in s.nodes:
        assert sorted([*s.left_leaves(v), *s.right_leaves(v)]) == list(s.leaves_under(v))
    with pytest.raises(TreeError):
        TreeShape(0)


def test_route_boundary_goes_left():
    t = stump()
    rec = {"x0": 0.3, "x1": 0.0, "c0": "a", "g": "f"}
    assert t.route(rec) == 0
    assert t.route({**rec, "x0": 0.5}) == 0
    assert t.route({**rec, "x0": 0.51}) == 1


def test_categorical_routing_and_unknown_level():
    t = DecisionTree(TreeShape(1), (CategoricalSplit("c0", {"a"}),),
                     (ConstantLabel("0"), ConstantLabel("1")), _schema())
    assert t.route({"c0": "b"}) == 1
    assert t.route({"c0": "a"}) == 0
    with pytest.raises(TreeError, match="unknown level"):
        t.route({"c0": "zz"})


def test_linear_leaf_and_clamp():
    schema = _schema(REGRESSION)
    t = DecisionTree(TreeShape(1), (QuantitativeSplit("x0", 1.0),),
                     (LinearScore((("x0", 1.0), ("x1", 0.0))), ConstantValue(1.0)), schema)
    assert t.predict({"x0": 0.4, "x1": 0.9}) == pytest.approx(0.4)
    t2 = DecisionTree(TreeShape(1), (QuantitativeSplit("x0", 1.0),),
                      (LinearScore((("x0", 2.0), ("x1", 1.0))), ConstantValue(1.0)), schema)
    assert t2.predict({"x0": 0.5, "x1": 0.7}) == 1.0


def test_constant_leaf_prediction():
    t = stump()
    assert t.predict({"x0": 0.9}) == "1"


def test_feature_usage():
    t = DecisionTree(TreeShape(2), (QuantitativeSplit("x0", 0.5),) * 3,
                     (ConstantLabel("0"),) * 4, _schema())
    assert t.feature_usage() == {"x0": 3}
    lin = DecisionTree(TreeShape(1), (LinearSplit((("x0", 0.5), ("x1", 0.5)), 0.2),),
                       (ConstantLabel("0"),) * 2, _schema())
    assert lin.feature_usage() == {"x0": 1, "x1": 1}


def test_rules_reject_protected_and_bad_leaves():
    with pytest.raises(TreeError):
        DecisionTree(TreeShape(1), (CategoricalSplit("g", {"f"}),),
                     (ConstantLabel("0"),) * 2, _schema())
    with pytest.raises(TreeError):
        DecisionTree(TreeShape(1), (QuantitativeSplit("x0", 0.5),),
                     (ConstantLabel("7"),) * 2, _schema())


def test_json_round_trip():
    ds = make_dataset([[0.0, 0.0], [0.5, 1.0], [1.0, 0.5]], [[0], [1], [2]], [0, 1, 0],
                      [3.0, -2.0, 7.0], task=REGRESSION, norm=False)
    nds, report = normalize(ds)
    t = DecisionTree(TreeShape(2),
                     (CategoricalSplit("c0", {"a", "c"}), QuantitativeSplit("x1", 0.25),
                      LinearSplit((("x0", 0.3), ("x1", 0.7)), 0.4)),
                     (ConstantValue(0.5), LinearScore((("x0", 1.0),), -0.2),
                      ConstantValue(-1.0), ConstantValue(0.0)),
                     nds.schema, report)
    back = DecisionTree.from_json(t.to_json())
    assert back == t
    assert back.to_json() == t.to_json()
    np.testing.assert_array_equal(back.predict_many(nds), t.predict_many(nds))


def test_tampered_fingerprint_rejected():
    doc = json.loads(stump().to_json())
    doc["schema_fingerprint"] = "0" * len(doc["schema_fingerprint"])
    with pytest.raises(SchemaMismatch):
        DecisionTree.from_json(json.dumps(doc))
    doc = json.loads(stump().to_json())
    doc["version"] = 99
    with pytest.raises(TreeError, match="version"):
        DecisionTree.from_json(json.dumps(doc))


def test_prediction_on_foreign_schema_rejected():
    other = make_dataset([[0.0], [1.0]], None, [0, 1], [0, 1])
    with pytest.raises(SchemaMismatch):
        stump().predict_many(other)


def test_depth_one_golden_json():
    assert stump().to_json() == (DATA / "stump_model.json").read_text()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_routing_total_and_ignores_unused_features(seed):
    rng = np.random.default_rng(seed)
    n = 15
    ds = make_dataset(rng.random((n, 2)), rng.integers(0, 3, (n, 1)), rng.integers(0, 2, n),
                      rng.integers(0, 2, n))
    rules = []
    for _ in range(3):
        if rng.random() < 0.5:
            rules.append(QuantitativeSplit("x0", float(rng.random())))
        else:
            rules.append(CategoricalSplit("c0", {lv for lv in "abc" if rng.random() < 0.5}))
    t = DecisionTree(TreeShape(2), tuple(rules), (ConstantLabel("0"), ConstantLabel("1")) * 2,
                     ds.schema)
    leaves = t.route_many(ds)
    assert np.all((leaves >= 0) & (leaves < 4))
    assert [t.route(ds.record(i)) for i in range(n)] == leaves.tolist()
    ds.columns["x1"][:] = rng.random(n)
    ds.columns["g"][:] = rng.integers(0, 2, n)
    np.testing.assert_array_equal(t.route_many(ds), leaves)
