from __future__ import annotations

import numpy as np
import pytest

from aptdrl.data import DataSplit, Dataset


def make_split(X, y, k=None, ids=None) -> DataSplit:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    k = int(y.max()) + 1 if k is None else k
    ids = ids or [f"{i:064x}" for i in range(len(y))]
    return DataSplit(ids, y, X, [f"c{i}" for i in range(k)])


def make_dataset(X, labels) -> Dataset:
    return Dataset([f"{i:064x}" for i in range(len(labels))], list(labels), np.asarray(X, dtype=np.float64))


def blob_split(k=3, per_class=20, dim=4, sep=4.0, sigma=0.1, seed=0) -> DataSplit:
    rng = np.random.default_rng(seed)
    centers = np.eye(k, dim) * sep
    y = np.repeat(np.arange(k), per_class)
    X = centers[y] + rng.normal(0, sigma, size=(len(y), dim))
    return make_split(X, y, k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, passed, detail = results[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}: {detail}")
