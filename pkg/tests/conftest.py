from __future__ import annotations

import numpy as np
import pytest

from jointfe.tabular import CATEGORICAL, CLASSIFICATION, NUMERIC, REGRESSION, DataTable


def make_regression(n=60, seed=0, with_cat=True, with_missing=True):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n)
    b = rng.exponential(size=n)
    c = rng.choice(["x", "y", "z"], size=n).astype(object)
    y = 2 * a - b + (c == "x") + 0.1 * rng.normal(size=n)
    if with_missing:
        a[rng.choice(n, size=max(1, n // 10), replace=False)] = np.nan
    data = {"a": a, "b": b}
    kinds = {"a": NUMERIC, "b": NUMERIC}
    if with_cat:
        data["c"] = c
        kinds["c"] = CATEGORICAL
    data["y"] = y
    kinds["y"] = NUMERIC
    return DataTable.from_dict(data, kinds, "y", REGRESSION)


def make_classification(n=60, seed=0, n_classes=2):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n)
    b = rng.normal(size=n)
    c = rng.choice(["p", "q"], size=n).astype(object)
    score = a + 0.5 * b
    edges = np.quantile(score, np.linspace(0, 1, n_classes + 1)[1:-1])
    y = np.array([f"k{int(np.searchsorted(edges, s))}" for s in score], dtype=object)
    kinds = {"a": NUMERIC, "b": NUMERIC, "c": CATEGORICAL, "y": CATEGORICAL}
    return DataTable.from_dict({"a": a, "b": b, "c": c, "y": y}, kinds, "y", CLASSIFICATION)


@pytest.fixture
def reg_table():
    return make_regression()


@pytest.fixture
def clf_table():
    return make_classification()


def kind_specs():
    """One representative spec per DSL kind, valid on ``make_regression`` / ``make_classification``."""
    from jointfe.feops import OperationSpec as S

    return {
        "impute": S("impute", {"strategy": "median"}, ("a",)),
        "standard_scale": S("standard_scale", {}, ("a",)),
        "minmax_scale": S("minmax_scale", {}, ("b",)),
        "log1p": S("log1p", {}, ("b",), ("b_log",)),
        "signed_power": S("signed_power", {}, ("b",)),
        "clip_outliers": S("clip_outliers", {"lower": 0.05, "upper": 0.95}, ("a",)),
        "one_hot": S("one_hot", {"max_card": 2}, ("c",)),
        "frequency_encode": S("frequency_encode", {}, ("c",)),
        "target_encode": S("target_encode", {"smoothing": 2.0}, ("c",)),
        "arithmetic": S("arithmetic", {"op": "div"}, ("a", "b")),
        "unary": S("unary", {"fn": "sqrt"}, ("b",), ("b_sqrt",)),
        "cyclic_encode": S("cyclic_encode", {"period": 3.0}, ("b",)),
        "bin": S("bin", {"strategy": "equal_frequency", "k": 4}, ("a",)),
        "select_k_best": S("select_k_best", {"k": 1}),
        "drop_columns": S("drop_columns", {}, ("b",)),
        "drop_zero_variance": S("drop_zero_variance"),
    }


def random_tree_ops(n_ops, seed, shift=0.0, c1=2 ** 0.5, check_every=0):
    """Drive a SearchTree with random expansions, failures and HPO-style updates.

    Scores are multiples of 1/8 so shifting them by an integer is exact in
    floating point. Returns ``(tree, decisions, n_playouts)`` where
    ``decisions`` lists every ``uct_select`` outcome as node-id paths.
    """
    from jointfe.fetree import SearchTree, backpropagate, choose_directive, localized_vmax_update, uct_select

    rng = np.random.default_rng(seed)
    tree = SearchTree()
    tree.record_evaluation(tree.root, {}, int(rng.integers(0, 65)) / 8 + shift)
    decisions, playouts = [], 0
    for step in range(n_ops):
        if rng.random() < 0.6:
            path = uct_select(tree, c1)
            decisions.append(None if path is None else [n.id for n in path])
            if path is None:
                continue
            node = path[-1]
            d = choose_directive(node)
            node.directive_counts[d] = node.directive_counts.get(d, 0) + 1
            if rng.random() < 0.1:
                continue  # failed expansion: quota consumed, no node
            v = int(rng.integers(0, 65)) / 8 + shift
            best = tree.global_best()
            child = tree.new_child(node, directive=d)
            child.evaluations.append(({}, v))
            child.v_max = v
            backpropagate(tree, child, v, best)
            playouts += 1
        else:
            node = tree[int(rng.integers(len(tree)))]
            v = int(rng.integers(0, 65)) / 8 + shift
            tree.record_evaluation(node, {}, v)
            localized_vmax_update(tree, node, v)
        if check_every and step % check_every == 0:
            assert tree.check_heap()
    return tree, decisions, playouts


ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE.append((name, ok, detail))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    n_ok = sum(ok for _, ok, _ in ACCEPTANCE)
    terminalreporter.write_line(f"{n_ok}/{len(ACCEPTANCE)} criteria passed")
