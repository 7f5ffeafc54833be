"""Bayesian optimization over (dataset state, configuration) pairs.

Each observation is encoded as ``[meta-features of the state, encoded config]``
so one random-forest surrogate can rank configurations across every node of
the search tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm
from sklearn.ensemble import RandomForestRegressor

from .fetree import SearchTree
from .learners import Categorical, Continuous, HyperparameterSpace, Integer

N_TREES = 25
VARIANCE_FLOOR = 1e-8
N_NEIGHBORS = 4
N_RANDOM = 500
POOL_CAP = 20_000
COLD_START = 8
STEP_SCALE = 0.2


class SurrogateError(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    node_id: int
    x: np.ndarray
    v: float
    source: str = ""


def _encode_value(dim, value) -> float:
    if isinstance(dim, Continuous):
        return math.log(value) if dim.log else float(value)
    if isinstance(dim, Integer):
        return float(value)
    return float(next(i for i, c in enumerate(dim.choices) if c == value and type(c) is type(value)))


def encode_config(config: Mapping, space: HyperparameterSpace) -> np.ndarray:
    space.validate(config)
    return np.array([_encode_value(d, config[d.name]) for d in space.dims])


def encode(meta: np.ndarray, config: Mapping, space: HyperparameterSpace) -> np.ndarray:
    """Fixed-order vector: meta-features first, then one entry per space dimension."""
    return np.concatenate([np.asarray(meta, dtype=float), encode_config(config, space)])


class Surrogate:
    """Random-forest regressor reporting mean and across-tree variance."""

    def __init__(self, n_trees: int = N_TREES, seed: int = 0, bootstrap: bool = True):
        self.model = RandomForestRegressor(n_estimators=n_trees, max_features="sqrt", min_samples_leaf=1,
                                           bootstrap=bootstrap, random_state=seed)
        self.n_features = None
        self.target_range = None

    def fit(self, X: np.ndarray, y: np.ndarray) -> "Surrogate":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        if len(y) < 2:
            raise SurrogateError(f"need at least 2 observations, got {len(y)}")
        self.model.fit(X, y)
        self.n_features = X.shape[1]
        self.target_range = (float(y.min()), float(y.max()))
        return self

    def predict(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise SurrogateError(f"expected {self.n_features} features, got {X.shape[1]}")
        per_tree = np.stack([t.predict(X) for t in self.model.estimators_])
        return per_tree.mean(axis=0), np.maximum(per_tree.var(axis=0), VARIANCE_FLOOR)


def fit_surrogate(observations: Sequence[Observation], seed: int = 0, n_trees: int = N_TREES,
                  bootstrap: bool = True) -> Surrogate:
    if len(observations) < 2:
        raise SurrogateError(f"need at least 2 observations, got {len(observations)}")
    X = np.stack([o.x for o in observations])
    y = np.array([o.v for o in observations])
    return Surrogate(n_trees, seed, bootstrap).fit(X, y)


def predict(surrogate: Surrogate, x: np.ndarray) -> tuple[float, float]:
    mean, var = surrogate.predict(np.atleast_2d(x))
    return float(mean[0]), float(var[0])


def expected_improvement(mean, variance, incumbent: float):
    """EI for maximization; reduces to ``max(0, mean - incumbent)`` as sigma -> 0."""
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    gap = mean - incumbent
    tiny = sigma < 1e-9
    safe = np.where(tiny, 1.0, sigma)
    z = gap / safe
    ei = safe * (z * norm.cdf(z) + norm.pdf(z))
    out = np.where(tiny, np.maximum(gap, 0.0), np.maximum(ei, 0.0))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# candidate pool

def _neighbor(config: dict, space: HyperparameterSpace, rng: np.random.Generator) -> dict:
    dims = [d for d in space.dims if not (isinstance(d, Categorical) and len(d.choices) < 2)]
    if not dims:
        return dict(config)
    dim = dims[int(rng.integers(len(dims)))]
    out = dict(config)
    v = config[dim.name]
    if isinstance(dim, Continuous):
        if dim.log:
            lo, hi = math.log(dim.lo), math.log(dim.hi)
            step = rng.normal(0.0, STEP_SCALE * (hi - lo))
            out[dim.name] = float(min(max(math.exp(min(max(math.log(v) + step, lo), hi)), dim.lo), dim.hi))
        else:
            step = rng.normal(0.0, STEP_SCALE * (dim.hi - dim.lo))
            out[dim.name] = float(min(max(v + step, dim.lo), dim.hi))
    elif isinstance(dim, Integer):
        delta = int(rng.integers(1, 3)) * (1 if rng.random() < 0.5 else -1)
        moved = min(max(v + delta, dim.lo), dim.hi)
        if moved == v:
            moved = min(max(v - delta, dim.lo), dim.hi)
        out[dim.name] = int(moved)
    else:
        others = [c for c in dim.choices if not (c == v and type(c) is type(v))]
        out[dim.name] = others[int(rng.integers(len(others)))]
    return out


@dataclass
class CandidatePool:
    node_ids: np.ndarray
    configs: list[dict]
    X: np.ndarray

    def __len__(self) -> int:
        return len(self.configs)


def build_pool(tree: SearchTree, space: HyperparameterSpace, rng: np.random.Generator,
               n_neighbors: int = N_NEIGHBORS, n_random: int = N_RANDOM, cap: int = POOL_CAP) -> CandidatePool:
    """Local perturbations of every node's evaluated configs plus random configs
    paired with every node's meta-features; deduplicated, capped by subsampling."""
    if len(tree) == 0:
        raise ValueError("empty tree")
    nodes = [n for n in tree.nodes.values() if n.meta is not None]
    ids: list[int] = []
    configs: list[dict] = []
    blocks: list[np.ndarray] = []
    local_keys: dict[int, set] = {}
    for node in nodes:
        keys = local_keys.setdefault(node.id, set())
        for config, _ in node.evaluations:
            for _ in range(n_neighbors):
                cand = _neighbor(config, space, rng)
                enc = encode_config(cand, space)
                if enc.tobytes() in keys:
                    continue
                keys.add(enc.tobytes())
                ids.append(node.id)
                configs.append(cand)
                blocks.append(np.concatenate([node.meta, enc])[None, :])

    randoms, enc_rows, seen = [], [], set()
    for _ in range(n_random):
        cand = space.sample(rng)
        enc = encode_config(cand, space)
        if enc.tobytes() not in seen:
            seen.add(enc.tobytes())
            randoms.append(cand)
            enc_rows.append(enc)
    if randoms:
        R = np.stack(enc_rows)
        rkeys = [e.tobytes() for e in enc_rows]
        for node in nodes:
            mask = np.array([k not in local_keys.get(node.id, ()) for k in rkeys])
            m = int(mask.sum())
            ids.extend([node.id] * m)
            configs.extend(c for c, keep in zip(randoms, mask) if keep)
            blocks.append(np.hstack([np.tile(node.meta, (m, 1)), R[mask]]))

    node_ids = np.array(ids, dtype=int)
    X = np.vstack(blocks) if blocks else np.zeros((0, 0))
    if len(configs) > cap:
        keep = np.sort(rng.choice(len(configs), size=cap, replace=False))
        node_ids, X = node_ids[keep], X[keep]
        configs = [configs[i] for i in keep]
    return CandidatePool(node_ids, configs, X)


@dataclass
class HPOChoice:
    node_id: int
    config: dict
    ei: float | None
    pool_size: int
    cold_start: bool


def hpo_step(tree: SearchTree, observations: Sequence[Observation], space: HyperparameterSpace,
             incumbent: float, rng: np.random.Generator, n_trees: int = N_TREES) -> HPOChoice:
    """Pick the (node, configuration) pair with the highest expected improvement.

    With fewer than ``COLD_START`` observations a uniformly random node and
    configuration are returned instead.
    """
    if len(tree) == 0:
        raise ValueError("empty tree")
    if len(observations) < COLD_START:
        ids = sorted(tree.nodes)
        node_id = ids[int(rng.integers(len(ids)))]
        return HPOChoice(node_id, space.sample(rng), None, 0, True)
    seed = int(rng.integers(2**31 - 1))
    surrogate = fit_surrogate(observations, seed=seed, n_trees=n_trees)
    pool = build_pool(tree, space, rng)
    mean, var = surrogate.predict(pool.X)
    ei = expected_improvement(mean, var, incumbent)
    best = int(np.argmax(ei))
    return HPOChoice(int(pool.node_ids[best]), pool.configs[best], float(ei[best]), len(pool), False)


def out_of_fold_spearman(X: np.ndarray, y: np.ndarray, n_folds: int = 5, seed: int = 0,
                         n_trees: int = N_TREES) -> float:
    """Spearman correlation of k-fold out-of-fold surrogate predictions with ``y``."""
    from scipy.stats import spearmanr
    from sklearn.model_selection import KFold

    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    pred = np.empty_like(y)
    for train_idx, test_idx in KFold(n_folds, shuffle=True, random_state=seed).split(X):
        model = Surrogate(n_trees, seed).fit(X[train_idx], y[train_idx])
        pred[test_idx] = model.predict(X[test_idx])[0]
    return float(spearmanr(pred, y).statistic)
