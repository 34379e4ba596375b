"""Synthetic hiring data shared by the demos."""

import numpy as np

from fairtree.data import (CATEGORICAL, CLASSIFICATION, PROTECTED, QUANTITATIVE, Dataset,
                           Feature, FeatureSchema, LabelSpec)


def hiring(n=16, seed=0) -> Dataset:
    """Score and department per applicant; offers lean towards group 'b'."""
    rng = np.random.default_rng(seed)
    group = np.r_[np.zeros(n // 2, int), np.ones(n - n // 2, int)]
    score = np.round(rng.normal(50 + 10 * group, 12)).clip(0, 100)
    dept = rng.integers(0, 3, n)
    offer = (score + rng.normal(0, 6, n) > 55).astype(int)
    schema = FeatureSchema(
        (Feature("score", QUANTITATIVE),
         Feature("dept", CATEGORICAL, levels=("sales", "ops", "tech")),
         Feature("group", CATEGORICAL, PROTECTED, ("a", "b"))),
        LabelSpec("offer", CLASSIFICATION, ("no", "yes")))
    return Dataset(schema, {"score": score, "dept": dept, "group": group}, offer)


def describe(rule) -> str:
    """One-line text for a split or leaf rule."""
    if hasattr(rule, "cutoff"):
        return f"{rule.feature} <= {rule.cutoff:.3f}"
    if hasattr(rule, "left"):
        return f"{rule.feature} in {{{', '.join(sorted(rule.left))}}}"
    if hasattr(rule, "label"):
        return rule.label
    return repr(rule)
