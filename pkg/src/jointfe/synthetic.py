"""Synthetic tasks with known structure, used by the demos and the acceptance suite."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .condbo import encode, encode_config
from .feops import OperationSpec
from .learners import hyperparameter_space
from .metafeat import compute_meta_features
from .proposer import Proposal
from .tabular import CATEGORICAL, NUMERIC, REGRESSION, DataTable, Schema, save_schema, write_csv

PERIOD = 24


def make_cyclic_task(n: int = 240, seed: int = 0) -> tuple[DataTable, Schema]:
    """Regression target ``3 sin(2 pi hour / 24) + 0.5 load``, no noise.

    A linear model on raw ``hour`` cannot represent the periodic part, so only
    a pipeline that cyclic-encodes ``hour`` can drive the error to ~0.
    """
    rng = np.random.default_rng(seed)
    hour = rng.integers(0, PERIOD, size=n).astype(float)
    load = rng.normal(0.0, 1.0, size=n)
    noise = rng.exponential(2.0, size=n)
    site = rng.choice(["north", "south", "east"], size=n).astype(object)
    y = 3.0 * np.sin(2 * math.pi * hour / PERIOD) + 0.5 * load
    kinds = {"hour": NUMERIC, "load": NUMERIC, "noise": NUMERIC, "site": CATEGORICAL, "y": NUMERIC}
    schema = Schema(kinds, "y", REGRESSION, "hourly demand with a daily cycle",
                    {"hour": "hour of day, 0-23", "y": "demand"})
    table = DataTable.from_dict({"hour": hour, "load": load, "noise": noise, "site": site, "y": y}, kinds, "y",
                                REGRESSION)
    return table, schema


def _proposal(reason: str, *specs: OperationSpec) -> Proposal:
    inputs = tuple(dict.fromkeys(c for s in specs for c in s.inputs))
    return Proposal(reason, inputs, "; ".join(s.describe() for s in specs), tuple(specs))


def cyclic_script() -> list[Proposal]:
    """One cyclic_encode proposal among plausible decoys."""
    return [
        _proposal("hour is periodic; map it onto the unit circle",
                  OperationSpec("cyclic_encode", {"period": PERIOD}, ("hour",))),
        _proposal("rescale load", OperationSpec("standard_scale", {}, ("load",))),
        _proposal("tame the skewed noise column", OperationSpec("log1p", {}, ("noise",))),
        _proposal("square hour to capture curvature",
                  OperationSpec("unary", {"fn": "square"}, ("hour",), ("hour_sq",))),
        _proposal("coarse hour buckets", OperationSpec("bin", {"k": 4}, ("hour",), ("hour_bin",))),
        _proposal("site frequency", OperationSpec("frequency_encode", {}, ("site",))),
        _proposal("interaction of load and hour", OperationSpec("arithmetic", {"op": "mul"}, ("load", "hour"))),
    ]


def write_cyclic_project(directory: str | Path, n: int = 240, seed: int = 0, budget: int = 50,
                         learner: str = "ridge") -> Path:
    """Write data.csv, schema.json, script.json and config.json for the cyclic
    task into ``directory``; returns the config path (paths inside are relative)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    table, schema = make_cyclic_task(n, seed)
    write_csv(table, d / "data.csv")
    save_schema(schema, d / "schema.json")
    (d / "script.json").write_text(json.dumps([p.to_dict() for p in cyclic_script()], indent=2), encoding="utf-8")
    config = {"data": "data.csv", "schema": "schema.json", "learner": learner, "budget": budget, "seed": seed,
              "proposer": {"backend": "scripted", "script": "script.json"}}
    path = d / "config.json"
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return path


def _state_table(i: int, rng: np.random.Generator) -> DataTable:
    # states differ in shape and distribution so their meta-features differ
    n = 60 + 40 * i
    cols = {f"f{j}": rng.normal(0, 1 + i, size=n) ** (1 + i % 2) for j in range(2 + i)}
    cols["y"] = rng.normal(size=n)
    kinds = {c: NUMERIC for c in cols}
    return DataTable.from_dict(cols, kinds, "y", REGRESSION)


def multi_state_objective(n_states: int = 4, n_obs: int = 160, seed: int = 0, learner: str = "ridge",
                          noise: float = 0.1):
    """Noisy observations of ``v(s, lam) = g(s) + h(lam)`` over synthetic states.

    Returns ``(X_full, X_lambda, v)`` where ``X_full`` rows are
    ``[meta(s), enc(lam)]`` and ``X_lambda`` keeps only ``enc(lam)``.
    """
    rng = np.random.default_rng(seed)
    space = hyperparameter_space(learner)
    metas = [compute_meta_features(_state_table(i, rng)) for i in range(n_states)]
    offsets = np.linspace(0.0, 1.5, n_states)
    full, lam_only, v = [], [], []
    for _ in range(n_obs):
        s = int(rng.integers(n_states))
        config = space.sample(rng)
        enc = encode_config(config, space)
        # peak at reg_strength = 1e-1; scale so h spans about [-1, 0]
        h = -((enc[0] - math.log(0.1)) / (math.log(1e3) - math.log(1e-6))) ** 2 * 4
        full.append(encode(metas[s], config, space))
        lam_only.append(enc)
        v.append(offsets[s] + h + noise * rng.normal())
    return np.array(full), np.array(lam_only), np.array(v)
