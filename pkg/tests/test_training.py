import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairtree.data import REGRESSION, FoldPlan, make_folds, normalize
from fairtree.fairness import DIDI, DTDI, FairnessError, didi_c
from fairtree.milp import BuildConfig, build
from fairtree.solver import SolverOptions, install_incumbent
from fairtree.training import (THRESHOLD_MET, THRESHOLD_UNMET, OracleLimitError,
                               brute_force_optimum, cross_validate, discrimination_level,
                               evaluate, fit, greedy_tree, greedy_warmstart, lambda_grid,
                               lambda_sweep, oracle_fit)
from fairtree.tree import TreeShape

import oracles
from helpers import biased_fixture, make_dataset, random_instance, separable_fixture

OPTS = SolverOptions(time_limit=120)


def test_separable_fixture_zero_loss():
    ds = separable_fixture()
    rep = fit(ds, TreeShape(1), BuildConfig(lam=0.0), OPTS)
    assert rep.exact and rep.train.loss == 0.0
    assert brute_force_optimum(ds, TreeShape(1), BuildConfig(lam=0.0)).objective == 0.0


def test_biased_fixture_large_lambda_is_fair():
    ds = biased_fixture()
    plain = fit(ds, TreeShape(1), BuildConfig(lam=0.0), OPTS)
    fair = fit(ds, TreeShape(1), BuildConfig(lam=5.0), OPTS)
    assert fair.train.index == pytest.approx(0.0, abs=1e-12)
    assert fair.train.loss >= plain.train.loss
    assert plain.train.index > 0


def test_constant_labels():
    ds = make_dataset(np.arange(6.0)[:, None], None, [0, 1, 0, 1, 0, 1], [1] * 6)
    for lam in (0.0, 2.0):
        rep = fit(ds, TreeShape(2), BuildConfig(lam=lam), OPTS)
        assert rep.train.loss == 0.0 and rep.train.index == pytest.approx(0.0, abs=1e-12)


def test_report_objective_recomputed():
    rng = np.random.default_rng(1)
    for index in (DIDI, DTDI):
        ds = random_instance(rng, 10, 2)
        cfg = BuildConfig(lam=0.7, index=index)
        rep = fit(ds, TreeShape(1), cfg, OPTS)
        m = evaluate(rep.tree, ds, index)
        assert rep.objective == pytest.approx(m.loss + 0.7 * m.index, abs=1e-6)
        assert rep.solver_objective == pytest.approx(rep.objective, abs=1e-6)


def test_package_oracle_matches_independent_stump_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(12):
        ds = random_instance(rng, int(rng.integers(5, 12)), 2, n_labels=int(rng.integers(2, 4)))
        lam = float(rng.choice([0.0, 0.5, 1.0]))
        quant = [ds.columns[f.name].tolist() for f in ds.schema.quantitative]
        cats = [ds.columns[f.name].tolist() for f in ds.schema.categorical]
        nlev = [len(f.levels) for f in ds.schema.categorical]
        expected = oracles.stump_optimum(quant, cats, nlev, ds.columns["g"].tolist(),
                                         ds.y.tolist(), range(len(ds.label_levels)), lam)
        got = brute_force_optimum(ds, TreeShape(1), BuildConfig(lam=lam)).objective
        assert got == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("task", ["classification", REGRESSION])
def test_fit_matches_oracle_small(task):
    rng = np.random.default_rng(17)
    for lam in (0.0, 1.0):
        ds = random_instance(rng, 7, 2, task=task)
        for depth in (1, 2):
            cfg = BuildConfig(lam=lam)
            rep = fit(ds, TreeShape(depth), cfg, OPTS)
            assert rep.exact
            assert rep.objective == pytest.approx(
                brute_force_optimum(ds, TreeShape(depth), cfg).objective, abs=1e-6)


def test_oracle_limits():
    ds = random_instance(np.random.default_rng(0), 31, 2)
    with pytest.raises(OracleLimitError):
        brute_force_optimum(ds, TreeShape(1), BuildConfig())
    with pytest.raises(OracleLimitError):
        brute_force_optimum(random_instance(np.random.default_rng(0), 6, 2), TreeShape(3),
                            BuildConfig())


def test_constant_feature_degenerate_split():
    ds = make_dataset(np.zeros((5, 1)), None, [0, 1, 0, 1, 0], [0, 1, 1, 1, 0])
    res = brute_force_optimum(ds, TreeShape(1), BuildConfig(lam=0.0))
    assert res.objective == pytest.approx(2 / 5)
    rep = fit(ds, TreeShape(1), BuildConfig(lam=0.0), OPTS)
    assert rep.objective == pytest.approx(2 / 5)


def test_greedy_warm_start_on_separable_fixture_is_optimal():
    ds = separable_fixture()
    tree, x = greedy_warmstart(ds, TreeShape(1), BuildConfig())
    assert evaluate(tree, ds, None).loss == 0.0


def test_greedy_constant_labels_single_effective_leaf():
    ds = make_dataset(np.arange(5.0)[:, None], None, [0, 1, 0, 1, 0], [0] * 5)
    tree = greedy_tree(ds, TreeShape(2), BuildConfig())
    assert set(tree.predict_many(ds).tolist()) == {0}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["classification", REGRESSION]),
       st.integers(1, 2), st.sampled_from([DIDI, DTDI]))
def test_warm_start_always_feasible(seed, task, depth, index):
    rng = np.random.default_rng(seed)
    ds = random_instance(rng, int(rng.integers(4, 12)), int(rng.integers(1, 4)), task=task)
    cfg = BuildConfig(lam=0.5, index=index, on_zero="unit")
    tm = build(ds, TreeShape(depth), cfg)
    tree, x = greedy_warmstart(ds, TreeShape(depth), cfg, tm)
    install_incumbent(tm.model, x)
    m = evaluate(tree, ds, index, None, "unit")
    assert tm.model.evaluate(x) == pytest.approx(m.loss + 0.5 * m.index, abs=1e-6)


def test_optimum_dominates_greedy():
    rng = np.random.default_rng(3)
    for _ in range(4):
        ds = random_instance(rng, 8, 2)
        rep = fit(ds, TreeShape(2), BuildConfig(lam=0.0), OPTS)
        greedy = evaluate(greedy_tree(ds, TreeShape(2), BuildConfig()), ds, None)
        assert rep.objective <= greedy.loss + 1e-12


def test_lambda_grid():
    assert lambda_grid(0.1, 0.5) == [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
    with pytest.raises(ValueError):
        lambda_grid(0.0, 1.0)


def test_discrimination_level_convention():
    assert discrimination_level(0.5, 2.0) == 0.25
    assert discrimination_level(0.0, 0.0) == 0.0
    assert discrimination_level(0.1, 0.0) == float("inf")


def test_sweep_stops_immediately_on_fair_data():
    ds = make_dataset(np.arange(8.0)[:, None], None, [0, 1, 0, 1, 0, 1, 0, 1],
                      [0, 0, 0, 0, 1, 1, 1, 1])
    assert didi_c(ds) == 0.0
    res = lambda_sweep(ds, None, TreeShape(1), BuildConfig(), OPTS)
    assert res.selected_lambda == 0.0 and res.reason == THRESHOLD_MET
    assert len(res.points) == 1


def test_sweep_on_biased_fixture_matches_oracle_sweep():
    ds = biased_fixture()
    kw = dict(step=0.1, lam_max=2.0)
    milp = lambda_sweep(ds, None, TreeShape(1), BuildConfig(), OPTS, **kw)
    ref = lambda_sweep(ds, None, TreeShape(1), BuildConfig(), fitter=oracle_fit, **kw)
    assert milp.reason == ref.reason == THRESHOLD_MET
    assert milp.selected_lambda == ref.selected_lambda
    assert [lam for lam, _ in milp.points] == [lam for lam, _ in ref.points]
    assert milp.selected.train.loss == pytest.approx(ref.selected.train.loss)


def test_sweep_threshold_unmet():
    ds = biased_fixture()
    res = lambda_sweep(ds, None, TreeShape(1), BuildConfig(), OPTS, step=0.1, lam_max=0.2)
    assert res.reason == THRESHOLD_UNMET
    assert len(res.points) == 3
    best = min(rep.train.level for _, rep in res.points)
    assert res.selected.train.level == best


def _raw_fixture(n=12):
    # paired groups keep both groups in every fold for the seeds used below
    rng = np.random.default_rng(2)
    return make_dataset(rng.integers(0, 5, (n, 2)), None, np.arange(n) % 2,
                        rng.integers(0, 2, n), norm=False)


def test_fold_missing_a_group_is_reported():
    ds = make_dataset(np.arange(6.0)[:, None], None, [0, 0, 0, 0, 1, 1], [0, 1, 0, 1, 0, 1],
                      norm=False)
    plan = FoldPlan(2, 0, (np.arange(3), np.arange(3, 6)), 6)
    with pytest.raises(FairnessError, match="empty protected group"):
        cross_validate(ds, plan, TreeShape(1), BuildConfig(), OPTS, fixed_lambda=0.0)


def test_cross_validation_points_and_fixed_lambda():
    ds = _raw_fixture()
    plan = make_folds(ds, 3, seed=1)
    cv = cross_validate(ds, plan, TreeShape(1), BuildConfig(), OPTS, step=0.5, lam_max=1.0)
    assert len(cv.points) == 3
    assert [r["fold"] for r in cv.rows()] == sorted(r["fold"] for r in cv.rows())
    fixed = cross_validate(ds, plan, TreeShape(1), BuildConfig(), OPTS, fixed_lambda=0.0)
    for f, (train_idx, test_idx) in enumerate(plan):
        train, report = normalize(ds.subset(train_idx))
        test = report.apply(ds.subset(test_idx))
        rep = fit(train, TreeShape(1), BuildConfig(lam=0.0), OPTS, test=test)
        assert fixed.folds[f].selected.test.loss == pytest.approx(rep.test.loss)
        assert fixed.folds[f].selected.train.loss == pytest.approx(rep.train.loss)


def test_cross_validation_symmetric_folds():
    # two copies of the same four records; a fold plan that splits them evenly
    base_x = [[0.0], [1.0], [2.0], [3.0]]
    ds = make_dataset(base_x * 2, None, [0, 1, 0, 1] * 2, [0, 0, 1, 1] * 2, norm=False)
    plan = FoldPlan(2, 0, (np.arange(4), np.arange(4, 8)), 8)
    cv = cross_validate(ds, plan, TreeShape(1), BuildConfig(), OPTS, fixed_lambda=0.0)
    a, b = (s.selected for s in cv.folds)
    assert a.tree == b.tree
    assert a.row(0) | {"seconds": 0, "fold": 0} == b.row(1) | {"seconds": 0, "fold": 0}


def test_dtdi_cross_validation_rebuilds_kernel():
    ds = _raw_fixture(12)
    cv = cross_validate(ds, make_folds(ds, 2, 0), TreeShape(1), BuildConfig(index=DTDI, on_zero="unit"), OPTS,
                        fixed_lambda=0.5, knn=3)
    for s in cv.folds:
        assert s.selected.train.index is not None
