"""Tree search over dataset states, plus the global operation memory.

Nodes are dataset states; an edge is one FE step (one or more fitted
operations).  Selection uses UCT with ``Q = R/N + normalized v_max``;
rewards are binary (did the playout beat the global best?).
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .feops import FittedOperation, OperationError, Pipeline, apply_pipeline, fit_pipeline
from .metafeat import compute_meta_features
from .proposer import Directive, Proposal
from .tabular import DataTable

ROOT_QUOTA = {Directive.INITIALIZATION: 5}
NODE_QUOTA = {Directive.EXPLORATION: 2, Directive.EXPLOITATION: 2}
RANGE_EPS = 1e-12


class TreeError(RuntimeError):
    pass


@dataclass
class GlobalRange:
    lo: float = math.inf
    hi: float = -math.inf

    @property
    def initialized(self) -> bool:
        return self.lo <= self.hi

    def observe(self, v: float) -> None:
        self.lo = min(self.lo, v)
        self.hi = max(self.hi, v)


def normalize_score(v: float, rng: GlobalRange) -> float:
    if not rng.initialized:
        raise TreeError("score range has no observations yet")
    span = rng.hi - rng.lo
    if span < RANGE_EPS:
        return 0.5
    return (v - rng.lo) / span


@dataclass
class TreeNode:
    id: int
    parent: int | None
    steps: tuple[FittedOperation, ...] = ()
    reasoning: str = ""
    way: str = ""
    directive: Directive | None = None
    N: int = 0
    R: int = 0
    v_max: float = -math.inf
    directive_counts: dict = field(default_factory=dict)
    evaluations: list = field(default_factory=list)  # (config, score)
    meta: np.ndarray | None = None
    children: list = field(default_factory=list)

    @property
    def is_root(self) -> bool:
        return self.parent is None

    @property
    def best_evaluation(self) -> tuple[dict, float] | None:
        if not self.evaluations:
            return None
        best = 0
        for i, (_, v) in enumerate(self.evaluations):
            if v > self.evaluations[best][1]:
                best = i
        return self.evaluations[best]

    @property
    def best_config(self) -> dict | None:
        ev = self.best_evaluation
        return None if ev is None else ev[0]

    @property
    def best_score(self) -> float:
        ev = self.best_evaluation
        return -math.inf if ev is None else ev[1]

    @property
    def quota(self) -> dict:
        return ROOT_QUOTA if self.is_root else NODE_QUOTA

    @property
    def fully_expanded(self) -> bool:
        return all(self.directive_counts.get(d, 0) >= q for d, q in self.quota.items())

    def snapshot(self) -> dict:
        return {"id": self.id, "parent": self.parent, "N": self.N, "R": self.R, "v_max": self.v_max,
                "directive_counts": {d.value: c for d, c in self.directive_counts.items()},
                "op": "; ".join(s.spec.describe() for s in self.steps) or "root"}


@dataclass
class MemoryEntry:
    reasoning: str
    required_features: tuple[str, ...]
    op_specs: tuple
    v: float
    dv: float
    way: str = ""
    node_id: int | None = None


class SearchTree:
    def __init__(self):
        self.nodes: dict[int, TreeNode] = {}
        self.range = GlobalRange()
        self.memory: list[MemoryEntry] = []
        self.successful_playouts = 0
        self.root = self._add(TreeNode(0, None))

    def _add(self, node: TreeNode) -> TreeNode:
        self.nodes[node.id] = node
        if node.parent is not None:
            self.nodes[node.parent].children.append(node.id)
        return node

    def new_child(self, parent: TreeNode, **kwargs) -> TreeNode:
        return self._add(TreeNode(len(self.nodes), parent.id, **kwargs))

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    def ancestors(self, node: TreeNode) -> list[TreeNode]:
        """Path from the root to ``node`` inclusive."""
        path = [node]
        while path[-1].parent is not None:
            path.append(self.nodes[path[-1].parent])
        return path[::-1]

    def pipeline_to(self, node: TreeNode) -> Pipeline:
        return Pipeline(tuple(s for n in self.ancestors(node) for s in n.steps))

    def record_evaluation(self, node: TreeNode, config: dict, v: float) -> None:
        node.evaluations.append((dict(config), v))
        node.v_max = max(node.v_max, v)
        self.range.observe(v)

    def global_best(self) -> float:
        return self.root.v_max

    def snapshot(self) -> list[dict]:
        return [n.snapshot() for n in self.nodes.values()]

    def check_heap(self) -> bool:
        return all(self.nodes[n.parent].v_max >= n.v_max for n in self.nodes.values() if n.parent is not None)


def node_q(node: TreeNode, rng: GlobalRange) -> float:
    if node.N < 1:
        raise TreeError(f"node {node.id} has not been visited")
    return node.R / node.N + normalize_score(node.v_max, rng)


def uct_value(parent: TreeNode, child: TreeNode, c1: float, rng: GlobalRange) -> float:
    explore = math.sqrt(math.log(parent.N) / child.N) if parent.N > 0 else 0.0
    return node_q(child, rng) + c1 * explore


def uct_select(tree: SearchTree, c1: float) -> list[TreeNode] | None:
    """Descend from the root by UCT until a node whose expansion quota is unmet.

    Children whose subtrees hold no expandable node are skipped; ``None`` is
    returned when the whole tree is exhausted.
    """
    open_memo: dict[int, bool] = {}

    def is_open(n: TreeNode) -> bool:
        if n.id not in open_memo:
            open_memo[n.id] = (not n.fully_expanded) or any(is_open(tree[c]) for c in n.children)
        return open_memo[n.id]

    node = tree.root
    if not is_open(node):
        return None
    path = [node]
    while node.fully_expanded:
        best, best_val = None, -math.inf
        for cid in sorted(node.children):
            child = tree[cid]
            if not is_open(child):
                continue
            val = uct_value(node, child, c1, tree.range)
            if val > best_val:
                best, best_val = child, val
        node = best
        path.append(node)
    return path


def choose_directive(node: TreeNode) -> Directive:
    counts = node.directive_counts
    if node.is_root:
        if counts.get(Directive.INITIALIZATION, 0) < ROOT_QUOTA[Directive.INITIALIZATION]:
            return Directive.INITIALIZATION
    else:
        for d in (Directive.EXPLORATION, Directive.EXPLOITATION):
            if counts.get(d, 0) < NODE_QUOTA[d]:
                return d
    raise TreeError(f"node {node.id} is fully expanded")


def backpropagate(tree: SearchTree, new_node: TreeNode, v_new: float, global_best_before: float) -> int:
    """Binary-reward update of N, R and v_max from ``new_node`` up to the root."""
    r = 1 if v_new > global_best_before else 0
    for n in tree.ancestors(new_node):
        n.N += 1
        n.R += r
        n.v_max = max(n.v_max, v_new)
    tree.range.observe(v_new)
    tree.successful_playouts += 1
    return r


def localized_vmax_update(tree: SearchTree, node: TreeNode, v: float) -> None:
    """Raise v_max along the ancestor path; N and R are left alone."""
    for n in tree.ancestors(node):
        if v > n.v_max:
            n.v_max = v
    tree.range.observe(v)


# ---------------------------------------------------------------------------
# memory retrieval

def memory_filter(memory: Iterable[MemoryEntry], available: Iterable[str]) -> list[MemoryEntry]:
    avail = set(available)
    return [e for e in memory if set(e.required_features) <= avail]


def pareto_mask(points: np.ndarray) -> np.ndarray:
    """Non-dominated mask for 2-D points under maximization of both coordinates.

    Exact duplicates do not dominate each other.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    keep = np.zeros(n, dtype=bool)
    if n == 0:
        return keep
    order = np.lexsort((-pts[:, 1], -pts[:, 0]))  # v desc, then dv desc
    best_prev = -math.inf  # best dv among strictly larger v
    i = 0
    while i < n:
        j = i
        v = pts[order[i], 0]
        while j < n and pts[order[j], 0] == v:
            j += 1
        group = order[i:j]
        top = pts[group[0], 1]
        if not best_prev >= top:
            keep[group[pts[group, 1] == top]] = True
        best_prev = max(best_prev, top)
        i = j
    return keep


def pareto_select(candidates: Sequence[MemoryEntry]) -> list[MemoryEntry]:
    if not candidates:
        return []
    mask = pareto_mask(np.array([[e.v, e.dv] for e in candidates]))
    return [e for e, k in zip(candidates, mask) if k]


def retrieve_memory(tree: SearchTree, available: Iterable[str]) -> list[MemoryEntry]:
    return pareto_select(memory_filter(tree.memory, available))


# ---------------------------------------------------------------------------
# materialized states

class StateCache:
    """Transformed (train, val) tables per node, LRU-bounded.

    Evicted states are rebuilt by replaying fitted steps from the nearest
    cached ancestor; the root state is always kept.
    """

    def __init__(self, tree: SearchTree, train: DataTable, val: DataTable, budget: int = 64):
        self.tree = tree
        self.budget = max(1, budget)
        self.root_state = (train, val)
        self._cache: OrderedDict[int, tuple[DataTable, DataTable]] = OrderedDict()
        self.replays = 0

    def put(self, node: TreeNode, state: tuple[DataTable, DataTable]) -> None:
        if node.is_root:
            return
        self._cache[node.id] = state
        self._cache.move_to_end(node.id)
        while len(self._cache) > self.budget:
            self._cache.popitem(last=False)

    def get(self, node: TreeNode) -> tuple[DataTable, DataTable]:
        if node.is_root:
            return self.root_state
        if node.id in self._cache:
            self._cache.move_to_end(node.id)
            return self._cache[node.id]
        path = self.tree.ancestors(node)
        start = 0
        train, val = self.root_state
        for i in range(len(path) - 1, 0, -1):
            if path[i].id in self._cache:
                train, val = self._cache[path[i].id]
                start = i
                break
        steps = Pipeline(tuple(s for n in path[start + 1:] for s in n.steps))
        state = (apply_pipeline(steps, train), apply_pipeline(steps, val))
        self.replays += 1
        self.put(node, state)
        return state


# ---------------------------------------------------------------------------
# expansion + playout

@dataclass
class FailureRecord:
    node_id: int
    directive: Directive
    reason: str


@dataclass
class Playout:
    node: TreeNode
    score: float
    config: dict
    parent_score: float
    memory: MemoryEntry


Evaluate = Callable[[dict, DataTable, DataTable], float]


def expand_and_playout(tree: SearchTree, node: TreeNode, directive: Directive, proposal: Proposal,
                       states: StateCache, evaluate: Evaluate, default_config: dict) -> Playout | FailureRecord:
    """Apply ``proposal`` to ``node``'s state and evaluate the resulting child.

    The child is scored with the parent's best configuration (the default
    configuration when the parent has none). The directive counter is
    incremented whether or not the expansion succeeds.
    """
    node.directive_counts[directive] = node.directive_counts.get(directive, 0) + 1
    train, val = states.get(node)
    try:
        pipeline, new_train = fit_pipeline(proposal.op_specs, train)
        new_val = apply_pipeline(pipeline, val)
    except (OperationError, KeyError) as exc:
        return FailureRecord(node.id, directive, f"transform failed: {exc}")
    config = dict(node.best_config) if node.best_config is not None else dict(default_config)
    try:
        v = evaluate(config, new_train, new_val)
        meta = compute_meta_features(new_train)
    except (ValueError, ArithmeticError) as exc:
        return FailureRecord(node.id, directive, f"evaluation failed: {exc}")
    parent_score = node.best_score
    child = tree.new_child(node, steps=pipeline.steps, reasoning=proposal.reasoning,
                           way=proposal.way, directive=directive, meta=meta)
    child.evaluations.append((config, v))
    child.v_max = v
    states.put(child, (new_train, new_val))
    entry = MemoryEntry(proposal.reasoning, proposal.required_features, proposal.op_specs,
                        v, v - parent_score, proposal.way, child.id)
    tree.memory.append(entry)
    return Playout(child, v, config, parent_score, entry)
