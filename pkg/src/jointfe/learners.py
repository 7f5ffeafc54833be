"""Built-in downstream learners, their hyperparameter spaces and scoring.

Scores follow a maximization convention: ``-error_rate`` for classification,
``-MSE`` for regression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from scipy.optimize import minimize

from .tabular import CLASSIFICATION, NUMERIC, DataTable

LEARNER_SEED = 0
LEARNERS = ("ridge", "boosted_stumps")
_ALIASES = {"logistic": "ridge"}

Configuration = dict  # name -> value


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class Continuous:
    name: str
    lo: float
    hi: float
    log: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: lo must be < hi")
        if self.log and self.lo <= 0:
            raise ValueError(f"{self.name}: log-scale domain needs lo > 0")

    def sample(self, rng: np.random.Generator) -> float:
        if self.log:
            return float(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))
        return float(rng.uniform(self.lo, self.hi))

    def contains(self, v) -> bool:
        return isinstance(v, (int, float)) and not isinstance(v, bool) and self.lo <= v <= self.hi


@dataclass(frozen=True)
class Integer:
    name: str
    lo: int
    hi: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: lo must be < hi")

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.lo, self.hi + 1))

    def contains(self, v) -> bool:
        return isinstance(v, (int, np.integer)) and not isinstance(v, bool) and self.lo <= v <= self.hi


@dataclass(frozen=True)
class Categorical:
    name: str
    choices: tuple

    def __post_init__(self):
        if not self.choices:
            raise ValueError(f"{self.name}: empty choice list")

    def sample(self, rng: np.random.Generator):
        return self.choices[int(rng.integers(len(self.choices)))]

    def contains(self, v) -> bool:
        return any(v == c and type(v) is type(c) for c in self.choices)


Dimension = Continuous | Integer | Categorical


@dataclass(frozen=True)
class HyperparameterSpace:
    dims: tuple[Dimension, ...]

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def __getitem__(self, name: str) -> Dimension:
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(f"no dimension named {name!r}")

    def __len__(self) -> int:
        return len(self.dims)

    def sample(self, rng: np.random.Generator) -> Configuration:
        return {d.name: d.sample(rng) for d in self.dims}

    def validate(self, config: Mapping[str, Any]) -> None:
        missing = [d.name for d in self.dims if d.name not in config]
        extra = [k for k in config if k not in self.names]
        bad = [d.name for d in self.dims if d.name in config and not d.contains(config[d.name])]
        if missing or extra or bad:
            raise LearnerError(f"invalid configuration: missing={missing} unknown={extra} out_of_domain={bad}")


_SPACES = {
    "ridge": HyperparameterSpace((
        Continuous("reg_strength", 1e-6, 1e3, log=True),
        Integer("max_iters", 50, 2000),
        Categorical("fit_intercept", (True, False)),
    )),
    "boosted_stumps": HyperparameterSpace((
        Integer("n_rounds", 10, 500),
        Continuous("learning_rate", 1e-3, 1.0, log=True),
        Integer("max_depth", 1, 3),
        Continuous("subsample", 0.5, 1.0),
    )),
}

_DEFAULTS = {
    "ridge": {"reg_strength": 1.0, "max_iters": 500, "fit_intercept": True},
    "boosted_stumps": {"n_rounds": 100, "learning_rate": 0.1, "max_depth": 1, "subsample": 1.0},
}


def _canonical(learner: str) -> str:
    tag = _ALIASES.get(learner, learner)
    if tag not in _SPACES:
        raise LearnerError(f"unknown learner {learner!r}; known: {list(LEARNERS)}")
    return tag


def hyperparameter_space(learner: str) -> HyperparameterSpace:
    return _SPACES[_canonical(learner)]


def default_config(learner: str) -> Configuration:
    return dict(_DEFAULTS[_canonical(learner)])


# ---------------------------------------------------------------------------
# design matrices

def _design(table: DataTable, features: list[str]) -> np.ndarray:
    cols = []
    for name in features:
        col = table.column(name)
        if col.kind != NUMERIC:
            raise LearnerError(f"feature column {name!r} is not numeric; encode it first")
        cols.append(col.values)
    return np.column_stack(cols) if cols else np.zeros((table.n_rows, 0))


def _impute_stats(X: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        fill = np.nanmean(X, axis=0) if X.shape[0] else np.zeros(X.shape[1])
    return np.where(np.isfinite(fill), fill, 0.0)


def _fill(X: np.ndarray, fill: np.ndarray) -> np.ndarray:
    return np.where(np.isnan(X), fill, X)


# ---------------------------------------------------------------------------
# linear models

class RidgeRegressor:
    def __init__(self, reg_strength=1.0, fit_intercept=True, max_iters=500):
        self.reg_strength = float(reg_strength)
        self.fit_intercept = bool(fit_intercept)
        self.max_iters = int(max_iters)  # closed form; kept for a uniform config surface

    def fit(self, X, y):
        d = X.shape[1]
        if self.fit_intercept:
            self.x_mean_, self.y_mean_ = X.mean(axis=0), float(y.mean())
        else:
            self.x_mean_, self.y_mean_ = np.zeros(d), 0.0
        Xc, yc = X - self.x_mean_, y - self.y_mean_
        A = Xc.T @ Xc + self.reg_strength * np.eye(d)
        try:
            self.coef_ = np.linalg.solve(A, Xc.T @ yc)
        except np.linalg.LinAlgError:
            self.coef_ = np.linalg.lstsq(A, Xc.T @ yc, rcond=None)[0]
        return self

    def predict(self, X):
        return (X - self.x_mean_) @ self.coef_ + self.y_mean_


class LogisticClassifier:
    """Multinomial L2-regularized logistic regression fitted with L-BFGS.

    Features are standardized internally; the penalty applies to the
    standardized weights.
    """

    def __init__(self, reg_strength=1.0, fit_intercept=True, max_iters=500):
        self.reg_strength = float(reg_strength)
        self.fit_intercept = bool(fit_intercept)
        self.max_iters = int(max_iters)

    def fit(self, X, y_idx, n_classes):
        n, d = X.shape
        K = n_classes
        self.mu_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd_ = np.where(sd > 0, sd, 1.0)
        Z = (X - self.mu_) / self.sd_
        Y = np.zeros((n, K))
        Y[np.arange(n), y_idx] = 1.0
        alpha = self.reg_strength

        def unpack(theta):
            W = theta[:d * K].reshape(d, K)
            b = theta[d * K:] if self.fit_intercept else np.zeros(K)
            return W, b

        def loss(theta):
            W, b = unpack(theta)
            logits = Z @ W + b
            logits -= logits.max(axis=1, keepdims=True)
            lse = np.log(np.exp(logits).sum(axis=1))
            P = np.exp(logits - lse[:, None])
            f = float(-(Y * (logits - lse[:, None])).sum() + 0.5 * alpha * (W * W).sum())
            G = P - Y
            gW = Z.T @ G + alpha * W
            grad = [gW.ravel()]
            if self.fit_intercept:
                grad.append(G.sum(axis=0))
            return f, np.concatenate(grad)

        theta0 = np.zeros(d * K + (K if self.fit_intercept else 0))
        res = minimize(loss, theta0, jac=True, method="L-BFGS-B",
                       options={"maxiter": self.max_iters})
        self.W_, self.b_ = unpack(res.x)
        return self

    def predict(self, X):
        Z = (X - self.mu_) / self.sd_
        return np.argmax(Z @ self.W_ + self.b_, axis=1)


# ---------------------------------------------------------------------------
# boosted shallow trees

class _Tree:
    """Depth-limited regression tree with second-order (gradient/hessian) leaves."""

    def __init__(self, max_depth: int):
        self.max_depth = max_depth
        self.nodes: list[tuple] = []  # (feature, threshold, left, right) or (-1, value, -1, -1)

    def fit(self, X, g, h):
        self.nodes = []
        self._grow(X, g, h, np.arange(X.shape[0]), 0)
        return self

    def _leaf(self, g, h, idx):
        self.nodes.append((-1, float(g[idx].sum() / (h[idx].sum() + 1e-6)), -1, -1))
        return len(self.nodes) - 1

    def _grow(self, X, g, h, idx, depth):
        if depth >= self.max_depth or idx.size < 2 or X.shape[1] == 0:
            return self._leaf(g, h, idx)
        G, H = g[idx].sum(), h[idx].sum()
        parent = G * G / (H + 1e-6)
        best = (0.0, -1, 0.0)
        for j in range(X.shape[1]):
            x = X[idx, j]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            gl = np.cumsum(g[idx][order])[:-1]
            hl = np.cumsum(h[idx][order])[:-1]
            valid = xs[:-1] < xs[1:]
            if not valid.any():
                continue
            gain = gl * gl / (hl + 1e-6) + (G - gl) ** 2 / (H - hl + 1e-6) - parent
            gain = np.where(valid, gain, -np.inf)
            k = int(np.argmax(gain))
            if gain[k] > best[0] + 1e-12:
                best = (float(gain[k]), j, 0.5 * (xs[k] + xs[k + 1]))
        if best[1] < 0:
            return self._leaf(g, h, idx)
        _, j, thr = best
        pos = len(self.nodes)
        self.nodes.append(None)
        mask = X[idx, j] <= thr
        left = self._grow(X, g, h, idx[mask], depth + 1)
        right = self._grow(X, g, h, idx[~mask], depth + 1)
        self.nodes[pos] = (j, thr, left, right)
        return pos

    def predict(self, X):
        out = np.empty(X.shape[0])
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            j, thr, left, right = self.nodes[node]
            if j < 0:
                out[idx] = thr
                continue
            mask = X[idx, j] <= thr
            stack.append((left, idx[mask]))
            stack.append((right, idx[~mask]))
        return out


class BoostedTrees:
    """Additive ensemble of shallow trees (stumps at depth 1).

    Squared loss for regression, softmax/log loss for classification.
    ``n_rounds=0`` reduces to the base prediction (train mean or class prior).
    """

    def __init__(self, n_rounds=100, learning_rate=0.1, max_depth=1, subsample=1.0, seed=LEARNER_SEED):
        self.n_rounds = int(n_rounds)
        self.learning_rate = float(learning_rate)
        self.max_depth = int(max_depth)
        self.subsample = float(subsample)
        self.seed = seed

    def _rows(self, rng, n):
        if self.subsample >= 1.0:
            return np.arange(n)
        m = max(1, int(math.ceil(self.subsample * n)))
        return np.sort(rng.choice(n, size=m, replace=False))

    def fit_regression(self, X, y):
        rng = np.random.default_rng(self.seed)
        self.base_ = np.array([float(y.mean())])
        F = np.full(len(y), self.base_[0])
        self.trees_ = []
        for _ in range(self.n_rounds):
            rows = self._rows(rng, len(y))
            tree = _Tree(self.max_depth).fit(X[rows], (y - F)[rows], np.ones(rows.size))
            F += self.learning_rate * tree.predict(X)
            self.trees_.append([tree])
        return self

    def fit_classification(self, X, y_idx, n_classes):
        rng = np.random.default_rng(self.seed)
        n = len(y_idx)
        K = n_classes
        Y = np.zeros((n, K))
        Y[np.arange(n), y_idx] = 1.0
        prior = np.clip(Y.mean(axis=0), 1e-6, 1.0)
        self.base_ = np.log(prior)
        F = np.tile(self.base_, (n, 1))
        self.trees_ = []
        for _ in range(self.n_rounds):
            rows = self._rows(rng, n)
            P = _softmax(F)
            round_trees = []
            for k in range(K):
                g = (Y[:, k] - P[:, k])[rows]
                h = (P[:, k] * (1.0 - P[:, k]))[rows]
                tree = _Tree(self.max_depth).fit(X[rows], g, h)
                round_trees.append(tree)
            for k, tree in enumerate(round_trees):
                F[:, k] += self.learning_rate * tree.predict(X)
            self.trees_.append(round_trees)
        return self

    def decision(self, X):
        F = np.tile(self.base_, (X.shape[0], 1))
        for round_trees in self.trees_:
            for k, tree in enumerate(round_trees):
                F[:, k] += self.learning_rate * tree.predict(X)
        return F

    def predict_regression(self, X):
        return self.decision(X)[:, 0]

    def predict_classes(self, X):
        return np.argmax(self.decision(X), axis=1)


def _softmax(F):
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# public entry points

@dataclass
class FittedLearner:
    learner: str
    task: str
    features: list[str]
    fill: np.ndarray
    model: Any
    classes: list[str] | None = None

    def predict(self, table: DataTable) -> np.ndarray:
        X = _fill(_design(table, self.features), self.fill)
        if self.task == CLASSIFICATION:
            idx = (self.model.predict_classes(X) if isinstance(self.model, BoostedTrees)
                   else self.model.predict(X))
            return np.array([self.classes[i] for i in idx], dtype=object)
        if isinstance(self.model, BoostedTrees):
            return self.model.predict_regression(X)
        return self.model.predict(X)

    def score(self, table: DataTable) -> float:
        pred = self.predict(table)
        y = table.target_column().values
        if self.task == CLASSIFICATION:
            return -float(np.mean([p != t for p, t in zip(pred, y)]))
        ok = ~np.isnan(y)
        return -float(np.mean((pred[ok] - y[ok]) ** 2)) if ok.any() else 0.0


def fit_learner(learner: str, config: Mapping[str, Any], train: DataTable) -> FittedLearner:
    tag = _canonical(learner)
    hyperparameter_space(tag).validate(config)
    features = train.feature_names
    X = _design(train, features)
    y_col = train.target_column().values
    if train.task == CLASSIFICATION:
        keep = np.array([v is not None for v in y_col])
        classes = sorted({v for v in y_col if v is not None})
        if len(classes) < 2:
            raise LearnerError("classification training split has a single class")
        lookup = {c: i for i, c in enumerate(classes)}
        y_idx = np.array([lookup[v] for v in y_col[keep]])
        X = X[keep]
    else:
        keep = ~np.isnan(y_col)
        y = y_col[keep]
        X = X[keep]
        classes = None
        if y.size == 0:
            raise LearnerError("regression training split has no observed targets")
    fill = _impute_stats(X)
    X = _fill(X, fill)
    if tag == "ridge":
        kwargs = dict(reg_strength=config["reg_strength"], fit_intercept=config["fit_intercept"],
                      max_iters=config["max_iters"])
        if train.task == CLASSIFICATION:
            model = LogisticClassifier(**kwargs).fit(X, y_idx, len(classes))
        else:
            model = RidgeRegressor(**kwargs).fit(X, y)
    else:
        model = BoostedTrees(config["n_rounds"], config["learning_rate"], config["max_depth"], config["subsample"])
        if train.task == CLASSIFICATION:
            model.fit_classification(X, y_idx, len(classes))
        else:
            model.fit_regression(X, y)
    return FittedLearner(tag, train.task, features, fill, model, classes)


def train_and_score(learner: str, config: Mapping[str, Any], train: DataTable, eval: DataTable) -> float:
    """Fit ``learner`` with ``config`` on ``train`` and return its score on ``eval``."""
    if train.feature_names != eval.feature_names:
        raise LearnerError("train and eval tables have different feature columns")
    fitted = fit_learner(learner, config, train)
    value = fitted.score(eval)
    if not math.isfinite(value):
        raise LearnerError("non-finite score")
    return value
