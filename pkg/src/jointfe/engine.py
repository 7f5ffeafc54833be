"""Top-level loop: the scheduler picks FE or HPO, the chosen optimizer runs one
evaluation, and the outcome is fed back as the scheduler's reward.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import threading
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import condbo, fetree, learners, scheduler
from .condbo import Observation, encode, hpo_step
from .feops import OperationError, OperationSpec, apply_pipeline, fit_pipeline
from .fetree import (FailureRecord, SearchTree, StateCache, backpropagate, choose_directive, expand_and_playout,
                     localized_vmax_update, retrieve_memory, uct_select)
from .learners import default_config, hyperparameter_space, train_and_score
from .metafeat import compute_meta_features
from .proposer import (AncestorStep, Directive, LLMBackend, ProposerContext, ProposerError, ScriptedBackend,
                       load_script, render_dataset_info)
from .scheduler import FE, HPO, SchedulerState, p1_in_range, pucb_select, record_outcome
from .tabular import CATEGORICAL, DataTable, Schema, SplitSpec, concat_rows, load_csv, load_schema, split

log = logging.getLogger(__name__)


class EngineError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration

@dataclass
class ProposerConfig:
    backend: str = "scripted"  # "scripted" or "llm"
    script: str | None = None
    base_url: str | None = None
    model: str | None = None
    timeout: float | None = None
    max_attempts: int | None = None


@dataclass
class RunConfig:
    data: str = ""
    schema: str = ""
    learner: str = "ridge"
    budget: int = 50
    seed: int = 0
    c1: float = math.sqrt(2)
    c2: float = math.sqrt(2)
    p1: float = 0.9
    p2: float | None = None
    proposer: ProposerConfig = field(default_factory=ProposerConfig)
    split: SplitSpec | None = None
    cache_budget: int = 64
    output_dir: str | None = None

    def __post_init__(self):
        if isinstance(self.proposer, Mapping):
            self.proposer = ProposerConfig(**self.proposer)
        if isinstance(self.split, Mapping):
            self.split = SplitSpec(**{"seed": self.seed, **self.split})
        if self.split is None:
            self.split = SplitSpec(seed=self.seed)
        if self.p2 is None:
            self.p2 = 1.0 - self.p1
        if self.budget < 2:
            raise ValueError("budget must be at least 2")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be positive")
        if abs(self.p1 + self.p2 - 1) > 1e-12:
            raise ValueError("p1 + p2 must equal 1")
        if self.proposer.backend not in ("scripted", "llm"):
            raise ValueError(f"unknown proposer backend {self.proposer.backend!r}")
        if not p1_in_range(self.budget, self.p1):
            warnings.warn(f"p1={self.p1} is outside the balanced-budget range for M={self.budget}")

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: str | Path | None = None) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if base_dir is not None:
            base = Path(base_dir)
            for key in ("data", "schema", "output_dir"):
                if d.get(key):
                    d[key] = str(base / d[key])
            prop = dict(d.get("proposer") or {})
            if prop.get("script"):
                prop["script"] = str(base / prop["script"])
            d["proposer"] = prop
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        """Load a JSON config; relative paths resolve against the file's directory."""
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), base_dir=path.parent)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# event log

class EventLog:
    """Append-only JSONL sink; safe to call from several threads."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        self._lock = threading.Lock()
        self._fh = open(self.path, "w", encoding="utf-8") if self.path is not None else None

    def __call__(self, record: dict) -> None:
        with self._lock:
            record = {"seq": len(self.records), **record}
            self.records.append(record)
            if self._fh is not None:
                self._fh.write(json.dumps(record, sort_keys=True, default=_jsonable) + "\n")

    def count(self, type_: str) -> int:
        return sum(r["type"] == type_ for r in self.records)

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


def _jsonable(o: Any):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, OperationSpec):
        return o.to_dict()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not serializable: {type(o).__name__}")


def _num(v: float | None):
    # JSON has no infinities
    return None if v is None or not math.isfinite(v) else v


# ---------------------------------------------------------------------------
# evaluation plumbing

def fit_encoding_guard(train: DataTable):
    """Frequency-encode map for every categorical feature still present."""
    cats = [c for c in train.feature_names if train.column(c).kind == CATEGORICAL]
    if not cats:
        return None
    pipeline, _ = fit_pipeline([OperationSpec("frequency_encode", {}, (c,)) for c in cats], train)
    return pipeline


def terminal_encoding_guard(table: DataTable, fitted_on: DataTable | None = None) -> DataTable:
    """Encode leftover categorical features by their frequency in ``fitted_on``
    (defaults to ``table`` itself); unseen categories map to 0."""
    guard = fit_encoding_guard(table if fitted_on is None else fitted_on)
    return table if guard is None else apply_pipeline(guard, table)


def guarded_score(learner: str, config: Mapping, train: DataTable, eval: DataTable) -> float:
    guard = fit_encoding_guard(train)
    if guard is not None:
        train, eval = apply_pipeline(guard, train), apply_pipeline(guard, eval)
    return train_and_score(learner, config, train, eval)


def refit_final(specs, config: Mapping, train: DataTable, val: DataTable, test: DataTable, learner: str) -> float:
    """Re-fit every step on train+val, train the learner there and score on test."""
    full = concat_rows(train, val)
    try:
        pipeline, full_t = fit_pipeline(list(specs), full)
        test_t = apply_pipeline(pipeline, test)
    except OperationError as exc:
        raise EngineError(f"refit failed: {exc}") from exc
    return guarded_score(learner, config, full_t, test_t)


# ---------------------------------------------------------------------------
# report

@dataclass
class HistoryEntry:
    step: int
    action: str
    node: int | None
    score: float | None
    new_best: bool
    success: bool
    detail: str = ""


@dataclass
class RunReport:
    best_node: int
    best_pipeline: list[dict]
    best_config: dict
    best_val_score: float
    root_score: float
    test_score: float | None
    history: list[HistoryEntry]
    scheduler_counts: dict
    scheduler_successes: dict
    global_range: dict
    constants: dict
    config: dict
    n_nodes: int
    n_observations: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["test_score"] = _num(self.test_score)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=_jsonable) + "\n"

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "action", "score", "best_so_far"])
        best = self.root_score
        for h in self.history:
            if h.score is not None:
                best = max(best, h.score)
            w.writerow([h.step, h.action, "" if h.score is None else repr(h.score), repr(best)])
        return buf.getvalue()


def _constants(config: RunConfig) -> dict:
    return {
        "C1": config.c1, "C2": config.c2, "p1": config.p1, "p2": config.p2, "M": config.budget,
        "root_quota": {d.value: q for d, q in fetree.ROOT_QUOTA.items()},
        "node_quota": {d.value: q for d, q in fetree.NODE_QUOTA.items()},
        "bo_trees": condbo.N_TREES, "bo_variance_floor": condbo.VARIANCE_FLOOR,
        "bo_neighbors": condbo.N_NEIGHBORS, "bo_random": condbo.N_RANDOM, "bo_pool_cap": condbo.POOL_CAP,
        "bo_cold_start": condbo.COLD_START, "scheduler_cold_q": scheduler.COLD_Q,
        "learner_seed": learners.LEARNER_SEED, "cache_budget": config.cache_budget,
    }


# ---------------------------------------------------------------------------
# main loop

def make_backend(config: RunConfig, seed: int):
    script = load_script(config.proposer.script) if config.proposer.script else []
    scripted = ScriptedBackend(script, seed=seed)
    if config.proposer.backend == "scripted":
        return scripted
    p = config.proposer
    return LLMBackend.from_env(base_url=p.base_url, model=p.model, timeout=p.timeout,
                               max_attempts=p.max_attempts, fallback=scripted)


class _Run:
    def __init__(self, config: RunConfig, train: DataTable, val: DataTable, backend, events: EventLog,
                 schema: Schema | None):
        self.config = config
        self.train, self.val = train, val
        self.backend = backend
        self.events = events
        self.notes = dict(schema.notes) if schema else {}
        self.description = schema.description if schema else ""
        self.space = hyperparameter_space(config.learner)
        self.default = default_config(config.learner)
        self.tree = SearchTree()
        self.states = StateCache(self.tree, train, val, config.cache_budget)
        self.observations: list[Observation] = []
        self.sched = SchedulerState(config.budget, config.p1, config.c2, config.p2)
        seeds = np.random.SeedSequence(config.seed).spawn(1)
        self.rng = np.random.default_rng(seeds[0])
        self.history: list[HistoryEntry] = []
        self.best = -math.inf

    def evaluate(self, node, config: dict, train: DataTable, val: DataTable, source: str, step: int) -> float:
        v = guarded_score(self.config.learner, config, train, val)
        self.observations.append(Observation(node.id, encode(node.meta, config, self.space), v, source))
        self.events({"type": "evaluation", "step": step, "source": source, "config": config, "score": v,
                     "node": node.id})
        return v

    def init_root(self) -> float:
        root = self.tree.root
        root.meta = compute_meta_features(self.train)
        v = self.evaluate(root, self.default, self.train, self.val, "root", 0)
        self.tree.record_evaluation(root, self.default, v)
        self.best = v
        return v

    def context(self, node, directive, state: DataTable) -> ProposerContext:
        path = self.tree.ancestors(node)
        ancestors = [AncestorStep("do nothing", "", path[0].best_score)]
        ancestors += [AncestorStep(n.reasoning, n.way, n.best_score, tuple(s.spec for s in n.steps))
                      for n in path[1:]]
        memory = retrieve_memory(self.tree, state.names) if directive is Directive.EXPLOITATION else []
        return ProposerContext(render_dataset_info(state, self.notes, self.description), ancestors, directive,
                               self.config.learner, state.schema, state.target, memory)

    def fe_step(self, step: int) -> HistoryEntry:
        path = uct_select(self.tree, self.config.c1)
        if path is None:
            return HistoryEntry(step, FE, None, None, False, False, "tree exhausted")
        node = path[-1]
        directive = choose_directive(node)
        state, _ = self.states.get(node)
        ctx = self.context(node, directive, state)
        self.events({"type": "selection", "step": step, "path": [n.id for n in path],
                     "directive": directive.value})
        try:
            proposal = self.backend.propose(ctx)
        except ProposerError as exc:
            node.directive_counts[directive] = node.directive_counts.get(directive, 0) + 1
            self.events({"type": "proposal_failed", "step": step, "node": node.id, "reason": str(exc)})
            return HistoryEntry(step, FE, node.id, None, False, False, f"proposer failed: {exc}")
        self.events({"type": "proposal", "step": step, "node": node.id, "proposal": proposal.to_dict()})
        best_before = self.tree.global_best()

        def evaluate(config, tr, va):
            return guarded_score(self.config.learner, config, tr, va)

        result = expand_and_playout(self.tree, node, directive, proposal, self.states, evaluate, self.default)
        if isinstance(result, FailureRecord):
            self.events({"type": "expansion_failed", "step": step, "node": node.id, "reason": result.reason})
            return HistoryEntry(step, FE, node.id, None, False, False, result.reason)
        child = result.node
        self.observations.append(Observation(child.id, encode(child.meta, result.config, self.space),
                                             result.score, "fe"))
        self.events({"type": "evaluation", "step": step, "source": "fe", "config": result.config,
                     "score": result.score, "node": child.id})
        r = backpropagate(self.tree, child, result.score, best_before)
        success = result.score > result.parent_score
        return HistoryEntry(step, FE, child.id, result.score, bool(r), success,
                            "; ".join(s.spec.describe() for s in child.steps))

    def hpo_step(self, step: int) -> HistoryEntry:
        choice = hpo_step(self.tree, self.observations, self.space, self.tree.global_best(), self.rng)
        node = self.tree[choice.node_id]
        self.events({"type": "selection", "step": step, "node": node.id, "config": choice.config,
                     "ei": choice.ei, "pool_size": choice.pool_size, "cold_start": choice.cold_start})
        train, val = self.states.get(node)
        prior = node.best_score
        best_before = self.tree.global_best()
        try:
            v = self.evaluate(node, choice.config, train, val, "hpo", step)
        except (ValueError, ArithmeticError) as exc:
            self.events({"type": "evaluation_failed", "step": step, "node": node.id, "reason": str(exc)})
            return HistoryEntry(step, HPO, node.id, None, False, False, f"evaluation failed: {exc}")
        self.tree.record_evaluation(node, choice.config, v)
        localized_vmax_update(self.tree, node, v)
        return HistoryEntry(step, HPO, node.id, v, v > best_before, v > prior, "")

    def loop(self) -> None:
        for step in range(1, self.config.budget + 1):
            action = pucb_select(self.sched)
            entry = self.fe_step(step) if action == FE else self.hpo_step(step)
            record_outcome(self.sched, action, entry.success)
            if entry.score is not None:
                self.best = max(self.best, entry.score)
            self.history.append(entry)
            log.debug("step %d %s node=%s score=%s", step, action, entry.node, entry.score)

    def best_node(self):
        best = None
        for nid in sorted(self.tree.nodes):
            n = self.tree[nid]
            if n.evaluations and (best is None or n.best_score > best.best_score):
                best = n
        return best


def run(config: RunConfig, table: DataTable | None = None, backend=None, schema: Schema | None = None,
        events: EventLog | None = None) -> RunReport:
    """Run the joint search; writes events.jsonl, report.json and curve.csv when
    ``config.output_dir`` is set."""
    if table is None:
        schema = load_schema(config.schema)
        table = load_csv(config.data, schema)
    train, val, test = split(table, config.split)
    out = Path(config.output_dir) if config.output_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    own_log = events is None
    if events is None:
        events = EventLog(out / "events.jsonl" if out is not None else None)
    if backend is None:
        backend = make_backend(config, seed=int(np.random.SeedSequence(config.seed).generate_state(1)[0]))
    backend.log = events
    try:
        r = _Run(config, train, val, backend, events, schema)
        root_score = r.init_root()
        r.loop()
        node = r.best_node()
        specs = [s.spec for s in r.tree.pipeline_to(node).steps]
        try:
            test_score = refit_final(specs, node.best_config, train, val, test, config.learner)
        except (EngineError, ValueError, ArithmeticError) as exc:
            events({"type": "refit_failed", "reason": str(exc)})
            test_score = None
        events({"type": "final", "best_node": node.id, "best_val_score": node.best_score,
                "test_score": _num(test_score)})
        report = RunReport(
            best_node=node.id,
            best_pipeline=[s.to_dict() for s in specs],
            best_config=dict(node.best_config),
            best_val_score=node.best_score,
            root_score=root_score,
            test_score=test_score,
            history=r.history,
            scheduler_counts=dict(r.sched.counts),
            scheduler_successes=dict(r.sched.successes),
            global_range={"lo": r.tree.range.lo, "hi": r.tree.range.hi},
            constants=_constants(config),
            config={k: v for k, v in config.to_dict().items() if k != "output_dir"},
            n_nodes=len(r.tree),
            n_observations=len(r.observations),
        )
    finally:
        if own_log:
            events.close()
    if out is not None:
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "curve.csv").write_text(report.curve_csv(), encoding="utf-8")
    return report
