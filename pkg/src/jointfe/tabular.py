"""Typed tabular data: columns, CSV ingestion with a schema sidecar, splits."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"
KINDS = (NUMERIC, CATEGORICAL)
CLASSIFICATION = "classification"
REGRESSION = "regression"
TASKS = (CLASSIFICATION, REGRESSION)

# Missing markers: NaN in numeric columns, None in categorical ones.
MISSING_CATEGORY = None


class TabularError(ValueError):
    pass


class SchemaError(TabularError):
    pass


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Column:
    name: str
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == NUMERIC:
            vals = np.array(self.values, dtype=float, copy=True)
            vals[~np.isfinite(vals)] = np.nan
        else:
            vals = np.empty(len(self.values), dtype=object)
            for i, v in enumerate(self.values):
                vals[i] = _as_category(v)
        object.__setattr__(self, "values", _freeze(vals))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def missing(self) -> np.ndarray:
        if self.kind == NUMERIC:
            return np.isnan(self.values)
        return np.array([v is None for v in self.values], dtype=bool)

    def take(self, rows: np.ndarray) -> "Column":
        return Column(self.name, self.kind, self.values[rows])

    def renamed(self, name: str) -> "Column":
        return Column(name, self.kind, self.values)

    def equals(self, other: "Column") -> bool:
        if self.name != other.name or self.kind != other.kind or len(self) != len(other):
            return False
        if self.kind == NUMERIC:
            return bool(np.array_equal(self.values, other.values, equal_nan=True))
        return list(self.values) == list(other.values)


def _as_category(v) -> str | None:
    if v is None:
        return None
    if isinstance(v, float) and math.isnan(v):
        return None
    return str(v)


@dataclass(frozen=True, eq=False)
class DataTable:
    """An immutable table of typed columns with a designated target."""

    columns: tuple[Column, ...]
    target: str
    task: str
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cols = tuple(self.columns)
        object.__setattr__(self, "columns", cols)
        if self.task not in TASKS:
            raise SchemaError(f"unknown task {self.task!r}")
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            dupes = sorted(n for n, k in Counter(names).items() if k > 1)
            raise SchemaError(f"duplicate column names: {dupes}")
        index = {c.name: c for c in cols}
        if self.target not in index:
            raise SchemaError(f"target {self.target!r} not among columns")
        lengths = {len(c) for c in cols}
        if len(lengths) > 1:
            raise SchemaError(f"columns have unequal lengths: {sorted(lengths)}")
        want = CATEGORICAL if self.task == CLASSIFICATION else NUMERIC
        if index[self.target].kind != want:
            raise SchemaError(f"{self.task} target must be {want}")
        object.__setattr__(self, "_index", index)

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns if c.name != self.target]

    @property
    def schema(self) -> dict[str, str]:
        return {c.name: c.kind for c in self.columns}

    @property
    def feature_schema(self) -> dict[str, str]:
        return {c.name: c.kind for c in self.columns if c.name != self.target}

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def column(self, name: str) -> Column:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown column {name!r}") from None

    def target_column(self) -> Column:
        return self._index[self.target]

    def take(self, rows: Sequence[int] | np.ndarray) -> "DataTable":
        rows = np.asarray(rows, dtype=int)
        return DataTable(tuple(c.take(rows) for c in self.columns), self.target, self.task)

    def with_columns(self, columns: Iterable[Column]) -> "DataTable":
        return DataTable(tuple(columns), self.target, self.task)

    def equals(self, other: "DataTable") -> bool:
        return (
            self.target == other.target
            and self.task == other.task
            and len(self.columns) == len(other.columns)
            and all(a.equals(b) for a, b in zip(self.columns, other.columns))
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Sequence], kinds: Mapping[str, str],
                  target: str, task: str) -> "DataTable":
        return cls(tuple(Column(n, kinds[n], np.asarray(v, dtype=object if kinds[n] == CATEGORICAL else float))
                         for n, v in data.items()), target, task)


def concat_rows(a: DataTable, b: DataTable) -> DataTable:
    if a.schema != b.schema or a.names != b.names:
        raise SchemaError("cannot concatenate tables with different schemas")
    cols = [Column(ca.name, ca.kind, np.concatenate([ca.values, cb.values]))
            for ca, cb in zip(a.columns, b.columns)]
    return a.with_columns(cols)


# ---------------------------------------------------------------------------
# CSV + schema sidecar

@dataclass(frozen=True)
class Schema:
    kinds: dict[str, str]
    target: str
    task: str
    description: str = ""
    notes: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"columns": dict(self.kinds), "target": self.target, "task": self.task}
        if self.description:
            out["description"] = self.description
        if self.notes:
            out["notes"] = dict(self.notes)
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "Schema":
        try:
            kinds = dict(d["columns"])
            target = d["target"]
            task = d["task"]
        except KeyError as exc:
            raise SchemaError(f"schema missing key {exc.args[0]!r}") from None
        bad = {k: v for k, v in kinds.items() if v not in KINDS}
        if bad:
            raise SchemaError(f"unknown column kinds: {bad}")
        if task not in TASKS:
            raise SchemaError(f"unknown task {task!r}")
        if target not in kinds:
            raise SchemaError(f"target {target!r} not declared in columns")
        return cls(kinds, target, task, d.get("description", ""), dict(d.get("notes", {})))


def load_schema(path: str | Path) -> Schema:
    with open(path, encoding="utf-8") as fh:
        return Schema.from_dict(json.load(fh))


def save_schema(schema: Schema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2), encoding="utf-8")


def _parse_numeric(cell: str) -> float:
    try:
        x = float(cell)
    except ValueError:
        return math.nan
    return x if math.isfinite(x) else math.nan


def load_csv(path: str | Path, schema: Schema) -> DataTable:
    """Read an RFC-4180 CSV into a DataTable using the declared column kinds.

    Unparseable numeric cells and empty cells become missing.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TabularError(f"{path}: empty file, no header row") from None
        rows = [r for r in reader if r]
    check_header(header, schema)
    if not rows:
        raise TabularError(f"{path}: table has no data rows")
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise TabularError(f"{path}: row {i + 2} has {len(r)} cells, expected {len(header)}")
    cols = []
    for j, name in enumerate(header):
        raw = [r[j] for r in rows]
        if schema.kinds[name] == NUMERIC:
            cols.append(Column(name, NUMERIC, np.array([_parse_numeric(c) for c in raw])))
        else:
            cols.append(Column(name, CATEGORICAL, np.array([c if c != "" else None for c in raw], dtype=object)))
    return DataTable(tuple(cols), schema.target, schema.task)


def check_header(header: Sequence[str], schema: Schema) -> None:
    missing = [n for n in header if n not in schema.kinds]
    extra = [n for n in schema.kinds if n not in header]
    problems = []
    if missing:
        problems.append(f"header columns not in schema: {missing}")
    if extra:
        problems.append(f"schema columns absent from header: {extra}")
    if len(set(header)) != len(header):
        problems.append("duplicate header names")
    if problems:
        raise SchemaError("; ".join(problems))


def write_csv(table: DataTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.names)
        for i in range(table.n_rows):
            row = []
            for c in table.columns:
                v = c.values[i]
                if c.kind == NUMERIC:
                    row.append("" if math.isnan(v) else format(v, ".15g"))
                else:
                    row.append("" if v is None else v)
            writer.writerow(row)


# ---------------------------------------------------------------------------
# splitting

@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if not all(0.0 < f < 1.0 for f in fracs):
            raise ValueError(f"split fractions must lie in (0, 1): {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1: {fracs}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _allocate(indices: np.ndarray, spec: SplitSpec, rng: np.random.Generator):
    perm = indices[rng.permutation(len(indices))]
    n_val = _round_half_up(len(perm) * spec.val_frac)
    n_test = _round_half_up(len(perm) * spec.test_frac)
    n_train = len(perm) - n_val - n_test
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def split_indices(table: DataTable, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = table.n_rows
    if n < 5:
        raise TabularError(f"need at least 5 rows to split, got {n}")
    rng = np.random.default_rng(spec.seed)
    groups = [np.arange(n)]
    if table.task == CLASSIFICATION:
        y = table.target_column().values
        labels = sorted({v for v in y if v is not None})
        by_class = [np.array([i for i in range(n) if y[i] == lab]) for lab in labels]
        # rows with a missing label are treated as their own stratum
        unlabeled = np.array([i for i in range(n) if y[i] is None], dtype=int)
        if unlabeled.size:
            by_class.append(unlabeled)
        if by_class and all(len(g) >= 3 for g in by_class):
            groups = by_class
    parts = ([], [], [])
    for g in groups:
        for acc, idx in zip(parts, _allocate(g, spec, rng)):
            acc.append(idx)
    train, val, test = (np.sort(np.concatenate(p)).astype(int) for p in parts)
    if len(val) == 0 or len(test) == 0:
        raise TabularError("split produced an empty validation or test partition")
    return train, val, test


def split(table: DataTable, spec: SplitSpec) -> tuple[DataTable, DataTable, DataTable]:
    """Deterministic train/val/test partition; stratified when every class has >= 3 rows."""
    train, val, test = split_indices(table, spec)
    return table.take(train), table.take(val), table.take(test)


# ---------------------------------------------------------------------------
# summaries

@dataclass(frozen=True)
class ColumnSummary:
    name: str
    kind: str
    missing_ratio: float
    mean: float | None = None
    std: float | None = None
    min: float | None = None
    max: float | None = None
    cardinality: int | None = None
    top: tuple[tuple[str, int], ...] = ()


def column_summary(table: DataTable, name: str) -> ColumnSummary:
    col = table.column(name)
    miss = col.missing
    ratio = float(miss.mean()) if len(col) else 1.0
    if col.kind == NUMERIC:
        vals = col.values[~miss]
        if vals.size == 0:
            return ColumnSummary(name, NUMERIC, ratio)
        return ColumnSummary(name, NUMERIC, ratio, float(vals.mean()), float(vals.std()),
                             float(vals.min()), float(vals.max()))
    counts = Counter(v for v in col.values if v is not None)
    top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:3]
    return ColumnSummary(name, CATEGORICAL, ratio, cardinality=len(counts), top=tuple(top))
