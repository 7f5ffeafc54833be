from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from jointfe.metafeat import N_META, NAMES, MetaFeatureError, compute_meta_features
from jointfe.tabular import CATEGORICAL, NUMERIC, REGRESSION, Column, DataTable

from conftest import make_classification, make_regression

IDX = {n: i for i, n in enumerate(NAMES)}


def test_length_and_finite(reg_table, clf_table):
    assert N_META == 18
    for t in (reg_table, clf_table):
        v = compute_meta_features(t)
        assert v.shape == (18,) and np.all(np.isfinite(v))


def test_constant_only_feature():
    t = DataTable.from_dict({"a": [3.0] * 5, "y": [1.0, 2, 3, 4, 5]}, {"a": NUMERIC, "y": NUMERIC}, "y", REGRESSION)
    v = compute_meta_features(t)
    assert v[IDX["zero_variance_fraction"]] == 1.0
    # skew, kurtosis and correlation are undefined on a constant column and imputed to 0
    assert v[IDX["abs_skew_max"]] == 0.0 and v[IDX["target_abs_corr_max"]] == 0.0


def test_no_categoricals():
    v = compute_meta_features(make_regression(with_cat=False))
    assert v[IDX["categorical_fraction"]] == 0.0 and v[IDX["categorical_cardinality_mean"]] == 0.0


def test_duplicate_table_bitwise(reg_table):
    copy = reg_table.with_columns([Column(c.name, c.kind, c.values.copy()) for c in reg_table.columns])
    assert compute_meta_features(reg_table).tobytes() == compute_meta_features(copy).tobytes()


def test_empty_table():
    t = DataTable.from_dict({"a": [], "y": []}, {"a": NUMERIC, "y": NUMERIC}, "y", REGRESSION)
    with pytest.raises(MetaFeatureError):
        compute_meta_features(t)


def test_against_independent_oracle():
    t = make_regression(n=50, seed=4)
    v = compute_meta_features(t)
    a, b = t.column("a").values, t.column("b").values
    y = t.target_column().values
    ok = ~np.isnan(a)
    assert v[IDX["log_n_rows"]] == pytest.approx(math.log(50))
    assert v[IDX["log_n_features"]] == pytest.approx(math.log(3))
    assert v[IDX["missing_ratio"]] == pytest.approx(np.isnan(a).sum() / 150)
    sk = [abs(stats.skew(a[ok])), abs(stats.skew(b))]
    ku = [stats.kurtosis(a[ok]), stats.kurtosis(b)]
    assert v[IDX["abs_skew_max"]] == pytest.approx(max(sk))
    assert v[IDX["abs_skew_mean"]] == pytest.approx(np.mean(sk))
    assert v[IDX["kurtosis_std"]] == pytest.approx(np.std(ku))
    r = [abs(stats.pearsonr(a[ok], y[ok])[0]), abs(stats.pearsonr(b, y)[0])]
    assert v[IDX["target_abs_corr_max"]] == pytest.approx(max(r))
    assert v[IDX["target_entropy_or_cv"]] == pytest.approx(np.std(y) / abs(np.mean(y)))
    assert v[IDX["pairwise_abs_corr_mean"]] == pytest.approx(abs(stats.pearsonr(a[ok], b[ok])[0]))
    assert v[IDX["categorical_cardinality_mean"]] == 3
    assert v[IDX["feature_row_ratio"]] == pytest.approx(3 / 50)


def test_classification_entropy():
    t = make_classification(n=40)
    v = compute_meta_features(t)
    assert v[IDX["target_entropy_or_cv"]] == pytest.approx(math.log(2))


def test_pairwise_cap_is_deterministic():
    rng = np.random.default_rng(0)
    cols = {f"f{i}": rng.normal(size=30) for i in range(30)}
    cols["y"] = rng.normal(size=30)
    t = DataTable.from_dict(cols, {k: NUMERIC for k in cols}, "y", REGRESSION)
    assert compute_meta_features(t).tobytes() == compute_meta_features(t).tobytes()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), perm_seed=st.integers(0, 10**6))
def test_column_order_invariance(seed, perm_seed):
    t = make_regression(n=30, seed=seed)
    order = np.random.default_rng(perm_seed).permutation(len(t.columns))
    shuffled = t.with_columns([t.columns[i] for i in order])
    assert np.array_equal(compute_meta_features(t), compute_meta_features(shuffled))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), which=st.sampled_from(["a", "b"]))
def test_duplicate_column_keeps_target_maxima(seed, which):
    t = make_regression(n=30, seed=seed)
    dup = t.with_columns(list(t.columns) + [t.column(which).renamed(which + "_copy")])
    v0, v1 = compute_meta_features(t), compute_meta_features(dup)
    for name in ("target_abs_corr_max", "abs_skew_max", "kurtosis_max", "log_n_rows", "target_entropy_or_cv"):
        assert v1[IDX[name]] == v0[IDX[name]], name
    assert v1[IDX["feature_row_ratio"]] > v0[IDX["feature_row_ratio"]]
