"""Fixed-length meta-feature vector characterizing a dataset state."""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from .feops import target_codes
from .tabular import CATEGORICAL, CLASSIFICATION, NUMERIC, DataTable

NAMES = (
    "log_n_rows",
    "log_n_features",
    "numeric_fraction",
    "categorical_fraction",
    "missing_ratio",
    "zero_variance_fraction",
    "abs_skew_mean",
    "abs_skew_std",
    "abs_skew_max",
    "kurtosis_mean",
    "kurtosis_std",
    "kurtosis_max",
    "categorical_cardinality_mean",
    "target_abs_corr_mean",
    "target_abs_corr_max",
    "target_entropy_or_cv",
    "pairwise_abs_corr_mean",
    "feature_row_ratio",
)
N_META = len(NAMES)
PAIRWISE_CAP = 20
PAIRWISE_SEED = 0


class MetaFeatureError(ValueError):
    pass


def _moments(x: np.ndarray) -> tuple[float, float]:
    """(skewness, excess kurtosis), NaN when undefined."""
    if x.size < 3:
        return math.nan, math.nan
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if not m2 > 1e-300:
        return math.nan, math.nan
    return float(np.mean(d ** 3)) / m2 ** 1.5, float(np.mean(d ** 4)) / m2 ** 2 - 3.0


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    ok = ~(np.isnan(x) | np.isnan(y))
    if ok.sum() < 2:
        return math.nan
    a, b = x[ok] - x[ok].mean(), y[ok] - y[ok].mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / den if den > 0 else math.nan


def _agg(values: list[float]) -> tuple[float, float, float]:
    # sorted so the float summation order does not depend on column order
    vals = np.sort(np.array([v for v in values if np.isfinite(v)]))
    if vals.size == 0:
        return 0.0, 0.0, 0.0
    return float(vals.mean()), float(vals.std()), float(vals.max())


def _pairwise_sample(names: list[str]) -> list[str]:
    ordered = sorted(names)
    if len(ordered) <= PAIRWISE_CAP:
        return ordered
    rng = np.random.default_rng(PAIRWISE_SEED)
    pick = rng.choice(len(ordered), size=PAIRWISE_CAP, replace=False)
    return [ordered[i] for i in sorted(pick)]


def compute_meta_features(table: DataTable) -> np.ndarray:
    """Return the 18-entry meta-feature vector (see ``NAMES``) for ``table``.

    All statistics are order-free aggregates over the feature columns; any
    undefined entry is reported as 0.
    """
    if table.n_rows == 0:
        raise MetaFeatureError("empty table")
    n = table.n_rows
    feats = [table.column(c) for c in table.feature_names]
    numeric = [c for c in feats if c.kind == NUMERIC]
    categorical = [c for c in feats if c.kind == CATEGORICAL]
    n_feat = len(feats)

    missing = sum(int(c.missing.sum()) for c in feats)
    zero_var = 0
    skews, kurts = [], []
    for c in numeric:
        x = c.values[~np.isnan(c.values)]
        if x.size == 0 or np.all(x == x[0]):
            zero_var += 1
        s, k = _moments(x)
        skews.append(abs(s))
        kurts.append(k)
    cards = []
    for c in categorical:
        card = len({v for v in c.values if v is not None})
        cards.append(card)
        if card <= 1:
            zero_var += 1

    y = target_codes(table)
    corrs = [abs(_pearson(c.values, y)) for c in numeric]
    corr_mean, _, corr_max = _agg(corrs)

    if table.task == CLASSIFICATION:
        counts = Counter(v for v in table.target_column().values if v is not None)
        total = sum(counts.values())
        target_stat = -sum((k / total) * math.log(k / total) for k in counts.values()) if total else 0.0
    else:
        yy = y[~np.isnan(y)]
        mu = float(yy.mean()) if yy.size else 0.0
        target_stat = float(yy.std()) / abs(mu) if yy.size and abs(mu) > 1e-12 else 0.0

    sample = _pairwise_sample([c.name for c in numeric])
    pair = []
    for i in range(len(sample)):
        xi = table.column(sample[i]).values
        for j in range(i + 1, len(sample)):
            pair.append(abs(_pearson(xi, table.column(sample[j]).values)))
    pair_mean = _agg(pair)[0]

    values = [
        math.log(n),
        math.log(n_feat) if n_feat else 0.0,
        len(numeric) / n_feat if n_feat else 0.0,
        len(categorical) / n_feat if n_feat else 0.0,
        missing / (n * n_feat) if n_feat else 0.0,
        zero_var / n_feat if n_feat else 0.0,
        *_agg(skews),
        *_agg(kurts),
        float(np.mean(cards)) if cards else 0.0,
        corr_mean,
        corr_max,
        target_stat,
        pair_mean,
        n_feat / n,
    ]
    out = np.array(values, dtype=float)
    out[~np.isfinite(out)] = 0.0
    return out
