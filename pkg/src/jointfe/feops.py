"""A closed feature-operation DSL with fit-on-train / apply semantics.

Every operation is described by an :class:`OperationSpec` (``kind``, ``params``,
``inputs``, ``outputs``).  Fitting learns all statistics from the training
split only; applying is a pure function of the fitted state and the table.

Column-wise kinds replace their inputs in place when ``outputs`` is empty and
append new columns when ``outputs`` names one column per input.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats

from .tabular import CATEGORICAL, CLASSIFICATION, NUMERIC, Column, DataTable

SAFE_DIV_EPS = 1e-12
POWER_GRID = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)

COLUMNWISE = ("impute", "standard_scale", "minmax_scale", "log1p", "signed_power",
              "clip_outliers", "frequency_encode", "target_encode", "unary", "bin")
WHOLE_TABLE = ("select_k_best", "drop_zero_variance")
KINDS = COLUMNWISE + ("one_hot", "arithmetic", "cyclic_encode", "drop_columns") + WHOLE_TABLE

NUMERIC_ONLY = {"standard_scale", "minmax_scale", "log1p", "signed_power", "clip_outliers",
                "arithmetic", "unary", "cyclic_encode", "bin", "select_k_best"}
CATEGORICAL_ONLY = {"one_hot", "frequency_encode", "target_encode"}

ARITH_ALIASES = {"+": "add", "-": "sub", "*": "mul", "/": "div", "x": "mul", "÷": "div"}
UNARY_FNS = ("sin", "cos", "sqrt", "square", "abs")


class OperationError(ValueError):
    """Raised when an operation cannot be fitted or applied."""


class PipelineError(OperationError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


# parameter schema: name -> (validator, default); default ``...`` means required
def _choice(*options):
    def check(v):
        return v in options, f"must be one of {list(options)}"
    return check


def _number(lo=-math.inf, hi=math.inf, lo_open=False, allow_inf=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return False, "must be a number"
        if math.isnan(v) or (math.isinf(v) and not allow_inf):
            return False, "must be finite"
        ok = (v > lo if lo_open else v >= lo) and v <= hi
        return ok, f"must lie in {'(' if lo_open else '['}{lo}, {hi}]"
    return check


def _integer(lo):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int):
            return False, "must be an integer"
        return v >= lo, f"must be >= {lo}"
    return check


def _scalar(v):
    return isinstance(v, (int, float, str)) and not isinstance(v, bool), "must be a number or string"


PARAMS: dict[str, dict[str, tuple[Any, Any]]] = {
    "impute": {"strategy": (_choice("mean", "median", "mode", "constant"), "mean"),
               "value": (_scalar, None)},
    "standard_scale": {},
    "minmax_scale": {},
    "log1p": {},
    "signed_power": {},
    "clip_outliers": {"lower": (_number(0.0, 1.0), 0.01), "upper": (_number(0.0, 1.0), 0.99)},
    "one_hot": {"max_card": (_integer(1), 16)},
    "frequency_encode": {},
    "target_encode": {"smoothing": (_number(0.0, allow_inf=True), 10.0)},
    "arithmetic": {"op": (_choice("add", "sub", "mul", "div"), ...)},
    "unary": {"fn": (_choice(*UNARY_FNS), ...)},
    "cyclic_encode": {"period": (_number(0.0, lo_open=True), ...)},
    "bin": {"strategy": (_choice("equal_width", "equal_frequency"), "equal_width"),
            "k": (_integer(2), 5)},
    "select_k_best": {"k": (_integer(1), ...)},
    "drop_columns": {},
    "drop_zero_variance": {},
}


@dataclass(frozen=True)
class OperationSpec:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()

    def __post_init__(self):
        params = dict(self.params)
        if self.kind == "arithmetic" and params.get("op") in ARITH_ALIASES:
            params["op"] = ARITH_ALIASES[params["op"]]
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))

    def param(self, name: str):
        if name in self.params:
            return self.params[name]
        default = PARAMS[self.kind][name][1]
        return None if default is ... else default

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params),
                "inputs": list(self.inputs), "outputs": list(self.outputs)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "OperationSpec":
        if not isinstance(d, Mapping) or "kind" not in d:
            raise OperationError(f"operation object must be a mapping with a 'kind': {d!r}")
        params = d.get("params") or {}
        inputs = d.get("inputs") or []
        outputs = d.get("outputs") or []
        if not isinstance(params, Mapping):
            raise OperationError("'params' must be an object")
        if isinstance(inputs, str) or isinstance(outputs, str):
            raise OperationError("'inputs' and 'outputs' must be lists of column names")
        return cls(str(d["kind"]), dict(params), tuple(map(str, inputs)), tuple(map(str, outputs)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OperationSpec":
        return cls.from_dict(json.loads(text))

    def describe(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        s = f"{self.kind}({', '.join(self.inputs)}{'; ' + args if args else ''})"
        return s + (f" -> {', '.join(self.outputs)}" if self.outputs else "")


# ---------------------------------------------------------------------------
# static validation

def _default_outputs(spec: OperationSpec) -> tuple[str, ...]:
    if spec.outputs:
        return spec.outputs
    if spec.kind == "arithmetic" and len(spec.inputs) == 2:
        return (f"{spec.inputs[0]}_{spec.param('op')}_{spec.inputs[1]}",)
    if spec.kind == "cyclic_encode":
        return tuple(n for c in spec.inputs for n in (f"{c}_sin", f"{c}_cos"))
    return ()


def validate_spec(spec: OperationSpec, schema: Mapping[str, str], target: str | None = None) -> list[str]:
    """Return a list of violations; an empty list means the spec is well formed."""
    if spec.kind not in PARAMS:
        return [f"unknown operation kind {spec.kind!r}"]
    out = []
    pschema = PARAMS[spec.kind]
    for name in spec.params:
        if name not in pschema:
            out.append(f"{spec.kind}: unknown parameter {name!r}")
    for name, (check, default) in pschema.items():
        if name not in spec.params:
            if default is ...:
                out.append(f"{spec.kind}: missing required parameter {name!r}")
            continue
        ok, why = check(spec.params[name])
        if not ok:
            out.append(f"{spec.kind}: parameter {name!r} {why}")
    if spec.kind == "clip_outliers" and not out and spec.param("lower") >= spec.param("upper"):
        out.append("clip_outliers: lower quantile must be below upper quantile")

    if not spec.inputs and spec.kind not in WHOLE_TABLE:
        out.append(f"{spec.kind}: inputs must be non-empty")
    if len(set(spec.inputs)) != len(spec.inputs):
        out.append(f"{spec.kind}: duplicate input columns")
    for col in spec.inputs:
        if col not in schema:
            out.append(f"missing column {col}")
            continue
        if target is not None and col == target:
            out.append(f"{spec.kind}: target column {col!r} cannot be an input")
            continue
        kind = schema[col]
        if spec.kind in NUMERIC_ONLY and kind != NUMERIC:
            out.append(f"type conflict: {spec.kind} requires numeric column, {col!r} is {kind}")
        if spec.kind in CATEGORICAL_ONLY and kind != CATEGORICAL:
            out.append(f"type conflict: {spec.kind} requires categorical column, {col!r} is {kind}")
        if (spec.kind == "impute" and kind == CATEGORICAL
                and spec.param("strategy") in ("mean", "median")):
            out.append(f"type conflict: impute({spec.param('strategy')}) on categorical column {col!r}")

    if spec.kind == "arithmetic" and len(spec.inputs) != 2:
        out.append("arithmetic: exactly two inputs required")
    n_out = len(spec.outputs)
    if spec.kind in COLUMNWISE and n_out not in (0, len(spec.inputs)):
        out.append(f"{spec.kind}: outputs must be empty or one per input")
    if spec.kind == "arithmetic" and n_out not in (0, 1):
        out.append("arithmetic: at most one output")
    if spec.kind == "cyclic_encode" and n_out not in (0, 2 * len(spec.inputs)):
        out.append("cyclic_encode: outputs must be empty or two per input (sin, cos)")
    if spec.kind in ("one_hot", "drop_columns") + WHOLE_TABLE and n_out:
        out.append(f"{spec.kind}: does not accept outputs")
    new = _default_outputs(spec)
    if len(set(new)) != len(new):
        out.append(f"{spec.kind}: duplicate output names")
    for name in new:
        if name in schema:
            out.append(f"{spec.kind}: output column {name!r} already exists")
    return out


def next_schema(spec: OperationSpec, schema: Mapping[str, str]) -> dict[str, str]:
    """Schema after applying ``spec``, as far as it is knowable without data.

    Data-dependent selections (select_k_best, drop_zero_variance) are assumed
    to keep every column; one_hot removes its inputs (indicator names depend
    on the categories present).
    """
    out = dict(schema)
    if spec.kind in COLUMNWISE:
        names = spec.outputs or spec.inputs
        for src, name in zip(spec.inputs, names):
            out[name] = schema[src] if spec.kind == "impute" else NUMERIC
    elif spec.kind in ("arithmetic", "cyclic_encode"):
        for name in _default_outputs(spec):
            out[name] = NUMERIC
    elif spec.kind in ("one_hot", "drop_columns"):
        for src in spec.inputs:
            out.pop(src, None)
    return out


def validate_specs(specs: Sequence[OperationSpec], schema: Mapping[str, str],
                   target: str | None = None) -> list[str]:
    """Validate a sequence of specs, threading the schema through each step."""
    current = dict(schema)
    out = []
    prefixes: list[str] = []
    for i, spec in enumerate(specs):
        # one_hot indicator names depend on the data; accept them provisionally
        for col in spec.inputs:
            if col not in current and any(col.startswith(p) for p in prefixes):
                current[col] = NUMERIC
        problems = validate_spec(spec, current, target)
        if problems:
            out.extend(f"op {i + 1}: {p}" for p in problems)
            return out
        current = next_schema(spec, current)
        if spec.kind == "one_hot":
            prefixes += [f"{c}_" for c in spec.inputs]
    return out


# ---------------------------------------------------------------------------
# fitted operations

@dataclass(frozen=True)
class FittedOperation:
    spec: OperationSpec
    state: Mapping[str, Any]

    @property
    def kind(self) -> str:
        return self.spec.kind


def _num(table: DataTable, name: str) -> np.ndarray:
    col = table.column(name)
    if col.kind != NUMERIC:
        raise OperationError(f"column {name!r} is {col.kind}, expected numeric")
    return col.values


def _cat(table: DataTable, name: str) -> np.ndarray:
    col = table.column(name)
    if col.kind != CATEGORICAL:
        raise OperationError(f"column {name!r} is {col.kind}, expected categorical")
    return col.values


def _observed(x: np.ndarray) -> np.ndarray:
    return x[~np.isnan(x)]


def _skewness(x: np.ndarray) -> float:
    x = _observed(x)
    if x.size < 3:
        return 0.0
    d = x - x.mean()
    m2 = np.mean(d * d)
    if not m2 > 0:
        return 0.0
    return float(np.mean(d ** 3) / m2 ** 1.5)


def yeo_johnson(x: np.ndarray, lam: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, np.nan)
    pos = x >= 0
    neg = x < 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if lam == 0.0:
            out[pos] = np.log1p(x[pos])
        else:
            out[pos] = (np.power(x[pos] + 1.0, lam) - 1.0) / lam
        if lam == 2.0:
            out[neg] = -np.log1p(-x[neg])
        else:
            out[neg] = -(np.power(1.0 - x[neg], 2.0 - lam) - 1.0) / (2.0 - lam)
    return out


def target_codes(table: DataTable) -> np.ndarray:
    """Numeric view of the target: class index (sorted labels) or the value itself."""
    y = table.target_column().values
    if table.task == CLASSIFICATION:
        labels = sorted({v for v in y if v is not None})
        lookup = {lab: float(i) for i, lab in enumerate(labels)}
        return np.array([lookup.get(v, np.nan) if v is not None else np.nan for v in y])
    return np.asarray(y, dtype=float)


def _abs_pearson(x: np.ndarray, y: np.ndarray) -> float:
    ok = ~(np.isnan(x) | np.isnan(y))
    if ok.sum() < 2:
        return 0.0
    a, b = x[ok] - x[ok].mean(), y[ok] - y[ok].mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    return abs(float(a @ b) / den) if den > 0 else 0.0


def _anova_f(x: np.ndarray, labels: np.ndarray) -> float:
    ok = ~np.isnan(x) & np.array([v is not None for v in labels])
    groups = {}
    for v, lab in zip(x[ok], labels[ok]):
        groups.setdefault(lab, []).append(v)
    arrays = [np.asarray(g) for _, g in sorted(groups.items())]
    if len(arrays) < 2 or sum(len(a) for a in arrays) <= len(arrays):
        return 0.0
    with np.errstate(all="ignore"):
        f = stats.f_oneway(*arrays).statistic
    return float(f) if np.isfinite(f) else 0.0


def _fit_column(kind: str, spec: OperationSpec, table: DataTable, name: str) -> dict:
    col = table.column(name)
    if kind == "impute":
        strategy = spec.param("strategy")
        if strategy == "constant":
            value = spec.param("value")
            if value is None:
                value = 0.0 if col.kind == NUMERIC else "missing"
            if col.kind == NUMERIC:
                try:
                    value = float(value)
                except (TypeError, ValueError):
                    raise OperationError(f"impute constant {value!r} is not numeric") from None
            else:
                value = str(value)
            return {"fill": value}
        if col.kind == CATEGORICAL:
            counts = Counter(v for v in col.values if v is not None)
            fill = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0] if counts else "missing"
            return {"fill": fill}
        x = _observed(col.values)
        if x.size == 0:
            return {"fill": 0.0}
        if strategy == "mean":
            return {"fill": float(x.mean())}
        if strategy == "median":
            return {"fill": float(np.median(x))}
        vals, counts = np.unique(x, return_counts=True)
        return {"fill": float(vals[np.argmax(counts)])}
    if kind == "standard_scale":
        x = _observed(_num(table, name))
        mean = float(x.mean()) if x.size else 0.0
        std = float(x.std()) if x.size else 0.0
        return {"mean": mean, "std": std}
    if kind == "minmax_scale":
        x = _observed(_num(table, name))
        return {"min": float(x.min()) if x.size else 0.0, "max": float(x.max()) if x.size else 0.0}
    if kind in ("log1p", "unary", "cyclic_encode"):
        _num(table, name)
        return {}
    if kind == "signed_power":
        x = _observed(_num(table, name))
        best, best_score = 1.0, -math.inf
        for lam in POWER_GRID:
            t = yeo_johnson(x, lam)
            if not np.all(np.isfinite(t)):
                continue
            score = -abs(_skewness(t))
            if score > best_score:
                best, best_score = lam, score
        return {"lambda": best}
    if kind == "clip_outliers":
        x = _observed(_num(table, name))
        if x.size == 0:
            return {"lo": -math.inf, "hi": math.inf}
        lo, hi = np.quantile(x, [spec.param("lower"), spec.param("upper")])
        return {"lo": float(lo), "hi": float(hi)}
    if kind == "frequency_encode":
        counts = Counter(v for v in _cat(table, name) if v is not None)
        return {"counts": dict(counts)}
    if kind == "target_encode":
        y = target_codes(table)
        x = _cat(table, name)
        ok = ~np.isnan(y)
        prior = float(y[ok].mean()) if ok.any() else 0.0
        alpha = float(spec.param("smoothing"))
        sums: dict[str, float] = {}
        counts: dict[str, int] = {}
        for v, t in zip(x[ok], y[ok]):
            if v is None:
                continue
            sums[v] = sums.get(v, 0.0) + float(t)
            counts[v] = counts.get(v, 0) + 1
        if math.isinf(alpha):
            mapping = {v: prior for v in counts}
        else:
            mapping = {v: (sums[v] + alpha * prior) / (counts[v] + alpha) if counts[v] + alpha > 0 else prior
                       for v in counts}
        return {"map": mapping, "prior": prior}
    if kind == "bin":
        x = _observed(_num(table, name))
        k = spec.param("k")
        if x.size == 0:
            return {"edges": []}
        if spec.param("strategy") == "equal_width":
            edges = np.linspace(x.min(), x.max(), k + 1)[1:-1]
        else:
            edges = np.quantile(x, np.linspace(0, 1, k + 1)[1:-1])
        return {"edges": sorted(set(float(e) for e in edges))}
    raise OperationError(f"unhandled kind {kind}")


def _apply_column(kind: str, spec: OperationSpec, state: Mapping, table: DataTable, name: str) -> Column:
    col = table.column(name)
    if kind == "impute":
        if col.kind == NUMERIC:
            fill = state["fill"]
            if isinstance(fill, str):
                raise OperationError(f"cannot fill numeric column {name!r} with {fill!r}")
            vals = np.where(np.isnan(col.values), fill, col.values)
            return Column(name, NUMERIC, vals)
        fill = str(state["fill"])
        return Column(name, CATEGORICAL, np.array([fill if v is None else v for v in col.values], dtype=object))
    if kind in CATEGORICAL_ONLY:
        x = _cat(table, name)
        if kind == "frequency_encode":
            counts = state["counts"]
            return Column(name, NUMERIC, np.array([np.nan if v is None else float(counts.get(v, 0)) for v in x]))
        mapping, prior = state["map"], state["prior"]
        return Column(name, NUMERIC, np.array([mapping.get(v, prior) if v is not None else prior for v in x]))
    x = _num(table, name)
    with np.errstate(all="ignore"):
        if kind == "standard_scale":
            std = state["std"] if state["std"] > 0 else 1.0
            out = (x - state["mean"]) / std
        elif kind == "minmax_scale":
            span = state["max"] - state["min"]
            out = (x - state["min"]) / span if span > 0 else np.where(np.isnan(x), np.nan, 0.0)
        elif kind == "log1p":
            out = np.where(x > -1.0, np.log1p(np.where(x > -1.0, x, 0.0)), np.nan)
        elif kind == "signed_power":
            out = yeo_johnson(x, state["lambda"])
        elif kind == "clip_outliers":
            out = np.clip(x, state["lo"], state["hi"])
        elif kind == "unary":
            fn = spec.param("fn")
            if fn == "sqrt":
                out = np.where(x >= 0, np.sqrt(np.abs(x)), np.nan)
            else:
                out = {"sin": np.sin, "cos": np.cos, "square": np.square, "abs": np.abs}[fn](x)
        elif kind == "bin":
            edges = np.asarray(state["edges"], dtype=float)
            out = np.searchsorted(edges, x, side="right").astype(float)
            out[np.isnan(x)] = np.nan
        else:
            raise OperationError(f"unhandled kind {kind}")
    return Column(name, NUMERIC, out)


def _feature_candidates(spec: OperationSpec, table: DataTable, numeric_only: bool) -> list[str]:
    names = list(spec.inputs) if spec.inputs else table.feature_names
    if numeric_only:
        names = [n for n in names if table.column(n).kind == NUMERIC]
    return names


def _check_inputs(spec: OperationSpec, table: DataTable) -> None:
    for name in spec.inputs:
        if name not in table:
            raise OperationError(f"missing column {name}")
        if name == table.target:
            raise OperationError(f"target column {name!r} cannot be an input")
        kind = table.column(name).kind
        if spec.kind in NUMERIC_ONLY and kind != NUMERIC:
            raise OperationError(f"{spec.kind} requires numeric column, {name!r} is {kind}")
        if spec.kind in CATEGORICAL_ONLY and kind != CATEGORICAL:
            raise OperationError(f"{spec.kind} requires categorical column, {name!r} is {kind}")


def fit_operation(spec: OperationSpec, train: DataTable) -> FittedOperation:
    """Learn the operation's state from the training split only."""
    problems = validate_spec(spec, train.schema, train.target)
    if problems:
        raise OperationError("; ".join(problems))
    kind = spec.kind
    if kind in COLUMNWISE:
        state = {"columns": {n: _fit_column(kind, spec, train, n) for n in spec.inputs}}
    elif kind == "one_hot":
        cap = spec.param("max_card")
        state = {"columns": {}}
        for n in spec.inputs:
            counts = Counter(v for v in _cat(train, n) if v is not None)
            ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
            keep = [v for v, _ in ranked[:cap]]
            state["columns"][n] = {"categories": keep, "other": len(ranked) > cap}
    elif kind in ("arithmetic", "cyclic_encode", "drop_columns"):
        _check_inputs(spec, train)
        state = {}
    elif kind == "select_k_best":
        cands = _feature_candidates(spec, train, numeric_only=True)
        k = spec.param("k")
        if k > len(cands):
            raise OperationError(f"select_k_best: k={k} exceeds {len(cands)} available numeric columns")
        if train.task == CLASSIFICATION:
            labels = train.target_column().values
            scores = [_anova_f(train.column(n).values, labels) for n in cands]
        else:
            y = target_codes(train)
            scores = [_abs_pearson(train.column(n).values, y) for n in cands]
        order = sorted(range(len(cands)), key=lambda i: (-scores[i], i))
        keep = sorted(order[:k])
        state = {"keep": [cands[i] for i in keep],
                 "drop": [cands[i] for i in range(len(cands)) if i not in set(keep)],
                 "scores": dict(zip(cands, map(float, scores)))}
    elif kind == "drop_zero_variance":
        drop = []
        for n in _feature_candidates(spec, train, numeric_only=False):
            col = train.column(n)
            if col.kind == NUMERIC:
                x = _observed(col.values)
                if x.size == 0 or np.all(x == x[0]):
                    drop.append(n)
            elif len({v for v in col.values if v is not None}) <= 1:
                drop.append(n)
        state = {"drop": drop}
    else:
        raise OperationError(f"unknown operation kind {kind!r}")
    return FittedOperation(spec, state)


def _indicator_name(col: str, value: str) -> str:
    return f"{col}_{value}"


def apply_operation(op: FittedOperation, table: DataTable) -> DataTable:
    """Return a new table with the fitted operation applied; ``table`` is untouched."""
    spec, state, kind = op.spec, op.state, op.spec.kind
    _check_inputs(spec, table)
    cols = list(table.columns)
    names = [c.name for c in cols]

    def add(new: list[Column]):
        for c in new:
            if c.name in names:
                raise OperationError(f"{kind}: output column {c.name!r} already exists")
            cols.append(c)
            names.append(c.name)

    if kind in COLUMNWISE:
        produced = [_apply_column(kind, spec, state["columns"][n], table, n) for n in spec.inputs]
        if spec.outputs:
            add([c.renamed(o) for c, o in zip(produced, spec.outputs)])
        else:
            for c in produced:
                cols[names.index(c.name)] = c
    elif kind == "arithmetic":
        a, b = (_num(table, n) for n in spec.inputs)
        op_name = spec.param("op")
        with np.errstate(all="ignore"):
            if op_name == "add":
                out = a + b
            elif op_name == "sub":
                out = a - b
            elif op_name == "mul":
                out = a * b
            else:
                safe = np.abs(b) >= SAFE_DIV_EPS
                out = np.where(safe, a / np.where(safe, b, 1.0), np.nan)
        add([Column(_default_outputs(spec)[0], NUMERIC, out)])
    elif kind == "cyclic_encode":
        period = float(spec.param("period"))
        out_names = _default_outputs(spec)
        new = []
        for i, n in enumerate(spec.inputs):
            angle = 2.0 * np.pi * _num(table, n) / period
            new += [Column(out_names[2 * i], NUMERIC, np.sin(angle)),
                    Column(out_names[2 * i + 1], NUMERIC, np.cos(angle))]
        add(new)
    elif kind == "one_hot":
        for n in spec.inputs:
            info = state["columns"][n]
            x = _cat(table, n)
            known = set(info["categories"])
            new = [Column(_indicator_name(n, v), NUMERIC, np.array([1.0 if c == v else 0.0 for c in x]))
                   for v in info["categories"]]
            if info["other"]:
                new.append(Column(_indicator_name(n, "other"), NUMERIC,
                                  np.array([1.0 if c is not None and c not in known else 0.0 for c in x])))
            pos = names.index(n)
            del cols[pos]
            del names[pos]
            add(new)
    elif kind in ("drop_columns", "select_k_best", "drop_zero_variance"):
        drop = list(spec.inputs) if kind == "drop_columns" else list(state["drop"])
        required = drop + list(state.get("keep", []))
        for n in required:
            if n not in table:
                raise OperationError(f"missing column {n}")
        if table.target in drop:
            raise OperationError("cannot drop the target column")
        dropset = set(drop)
        cols = [c for c in cols if c.name not in dropset]
    else:
        raise OperationError(f"unknown operation kind {kind!r}")
    return table.with_columns(cols)


# ---------------------------------------------------------------------------
# pipelines

@dataclass(frozen=True)
class Pipeline:
    steps: tuple[FittedOperation, ...] = ()

    @property
    def specs(self) -> list[OperationSpec]:
        return [s.spec for s in self.steps]

    def __len__(self) -> int:
        return len(self.steps)

    def __add__(self, other: "Pipeline") -> "Pipeline":
        return Pipeline(self.steps + other.steps)


def apply_pipeline(pipeline: Pipeline, table: DataTable) -> DataTable:
    for i, step in enumerate(pipeline.steps):
        try:
            table = apply_operation(step, table)
        except (OperationError, KeyError) as exc:
            raise PipelineError(i, str(exc)) from exc
    return table


def fit_pipeline(specs: Sequence[OperationSpec], train: DataTable) -> tuple[Pipeline, DataTable]:
    """Fit specs sequentially, each on the output of the previous ones.

    Returns the fitted pipeline and the transformed training table.
    """
    steps = []
    for i, spec in enumerate(specs):
        try:
            fitted = fit_operation(spec, train)
            train = apply_operation(fitted, train)
        except (OperationError, KeyError) as exc:
            raise PipelineError(i, str(exc)) from exc
        steps.append(fitted)
    return Pipeline(tuple(steps)), train
