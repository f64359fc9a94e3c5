from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aptdrl.errors import CodeOutOfRange, EmptyLog, EmptyMatrix, LengthMismatch
from aptdrl.metrics import EvalLog, class_metrics, confusion, emit_reports, evaluate_policy, write_comparison
from aptdrl.network import NetworkConfig, forward, init_params

from conftest import blob_split, make_split


def naive_metrics(true, pred, k):
    """Per-pair counting oracle, exact rationals throughout."""
    n = len(true)
    tp = [sum(1 for t, p in zip(true, pred) if t == c and p == c) for c in range(k)]
    fp = [sum(1 for t, p in zip(true, pred) if t != c and p == c) for c in range(k)]
    fn = [sum(1 for t, p in zip(true, pred) if t == c and p != c) for c in range(k)]
    prec = [Fraction(tp[c], tp[c] + fp[c]) if tp[c] + fp[c] else Fraction(0) for c in range(k)]
    rec = [Fraction(tp[c], tp[c] + fn[c]) if tp[c] + fn[c] else Fraction(0) for c in range(k)]
    f1 = [2 * p * r / (p + r) if p + r else Fraction(0) for p, r in zip(prec, rec)]
    support = [tp[c] + fn[c] for c in range(k)]
    return {
        "accuracy": Fraction(sum(tp), n),
        "precision": prec,
        "recall": rec,
        "f1": f1,
        "macro_f1": sum(f1, Fraction(0)) / k,
        "weighted_f1": sum((f * s for f, s in zip(f1, support)), Fraction(0)) / n,
    }


def test_confusion_examples():
    assert confusion([0, 1], [0, 1], 2).tolist() == [[1, 0], [0, 1]]
    assert confusion([0, 0], [1, 1], 2).tolist() == [[0, 2], [0, 0]]
    assert confusion([], [], 3).tolist() == [[0] * 3] * 3


def test_confusion_errors():
    with pytest.raises(LengthMismatch):
        confusion([0, 1], [0], 2)
    with pytest.raises(CodeOutOfRange):
        confusion([0, 2], [0, 1], 2)
    with pytest.raises(CodeOutOfRange):
        confusion([0, 1], [-1, 1], 2)


def test_class_metrics_example():
    m = class_metrics(np.array([[1, 1], [0, 2]]), exact=True)
    assert m.precision[0] == 1 and m.recall[0] == Fraction(1, 2) and m.f1[0] == Fraction(2, 3)
    assert m.accuracy == Fraction(3, 4)


def test_perfect_and_empty():
    m = class_metrics(np.diag([3, 4, 5]))
    assert all(v == 1.0 for v in m.aggregate().values())
    with pytest.raises(EmptyMatrix):
        class_metrics(np.zeros((2, 2), int))


def test_never_predicted_class_has_zero_precision():
    m = class_metrics(confusion([0, 1, 2], [0, 0, 0], 3))
    assert m.precision[1] == 0.0 and m.recall[1] == 0.0 and m.f1[1] == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(1, 1000), st.integers(0, 2**32 - 1))
def test_agrees_with_counting_oracle(k, n, seed):
    rng = np.random.default_rng(seed)
    true = rng.integers(0, k, n).tolist()
    pred = rng.integers(0, k, n).tolist()
    m = class_metrics(confusion(true, pred, k), exact=True)
    ref = naive_metrics(true, pred, k)
    assert m.accuracy == ref["accuracy"]
    assert m.precision == ref["precision"] and m.recall == ref["recall"] and m.f1 == ref["f1"]
    assert m.macro_f1 == ref["macro_f1"] and m.weighted_f1 == ref["weighted_f1"]
    assert m.macro_f1 <= (m.macro_precision + m.macro_recall) / 2
    assert all(0 <= v <= 1 for v in class_metrics(confusion(true, pred, k)).aggregate().values())


def zero_net(d, k):
    cfg = NetworkConfig(d, k, hidden=(4,))
    p = init_params(cfg, 0)
    for t in p.tensors():
        t[...] = 0
    return cfg, p


def test_zero_net_predicts_action_zero():
    cfg, p = zero_net(3, 3)
    acc, _ = evaluate_policy(p, cfg, make_split(np.ones((5, 3)), [0] * 5, 3))
    assert acc == 1.0
    acc, cm = evaluate_policy(p, cfg, make_split(np.ones((9, 3)), [0, 1, 2] * 3, 3))
    assert acc == pytest.approx(1 / 3) and cm[:, 0].sum() == 9


def test_evaluate_matches_independent_argmax():
    split = blob_split(k=4, per_class=25, dim=6, seed=2)
    cfg = NetworkConfig(6, 4, hidden=(16, 8))
    p = init_params(cfg, 9)
    acc, cm = evaluate_policy(p, cfg, split)
    pred = [int(np.argmax(forward(p, cfg, x)[0])) for x in split.X]
    assert cm.tolist() == confusion(split.y, pred, 4).tolist()
    assert acc == np.mean(np.array(pred) == split.y)
    assert evaluate_policy(p, cfg, split)[1].tolist() == cm.tolist()


def test_eval_log_steps_increase():
    log = EvalLog()
    log.add(500, "test", np.diag([1, 1]))
    log.add(500, "train", np.diag([1, 1]))
    with pytest.raises(ValueError):
        log.add(500, "test", np.diag([1, 1]))
    assert log.splits() == ["test", "train"] and log.last("test").accuracy == 1.0


def test_emit_reports(tmp_path):
    log = EvalLog()
    log.add(500, "test", np.array([[2, 0], [1, 1]]))
    cm = np.array([[2, 0], [1, 1]])
    emit_reports(log, cm, tmp_path, ["APT 1", "APT 10"], [("KNN", 0.5), ("DRL", 0.75)])
    assert (tmp_path / "accuracy_test.csv").read_text() == "step,accuracy\n500,0.750000\n"
    assert (tmp_path / "per_class.csv").read_text().splitlines() == [
        "class,precision,recall,f1",
        "APT 1,0.666667,1.000000,0.800000",
        "APT 10,1.000000,0.500000,0.666667",
    ]
    agg = dict(line.split(",") for line in (tmp_path / "aggregate.csv").read_text().splitlines()[1:])
    assert agg["accuracy"] == "0.750000" and "f1_weighted" in agg
    assert (tmp_path / "comparison.csv").read_text() == "model,test_accuracy\nKNN,0.500000\nDRL,0.750000\n"


def test_emit_reports_empty_log_writes_nothing(tmp_path):
    with pytest.raises(EmptyLog):
        emit_reports(EvalLog(), np.eye(2, dtype=int), tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_per_class_rows_for_twelve_classes(tmp_path):
    log = EvalLog()
    cm = np.diag(np.arange(1, 13))
    log.add(1, "test", cm)
    emit_reports(log, cm, tmp_path)
    assert len((tmp_path / "per_class.csv").read_text().splitlines()) == 13


def test_comparison_text(tmp_path):
    write_comparison([("SGD", 0.7147), ("DRL (DQN)", 0.8927)], tmp_path / "t.csv", tmp_path / "t.txt")
    text = (tmp_path / "t.txt").read_text().splitlines()
    assert text[2].endswith("71.47%") and text[3].startswith("DRL (DQN)")
