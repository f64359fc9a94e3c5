import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aptdrl.errors import ClassTooSmall, DimensionMismatch
from aptdrl.pipeline import (
    SmoteConfig,
    SplitConfig,
    apply_minmax,
    encode_labels,
    fit_minmax,
    prepare,
    read_prepared,
    smote_oversample,
    stratified_split,
    write_prepared,
)

from conftest import make_dataset, make_split


def test_encode_lexicographic():
    ds = make_dataset(np.zeros((4, 1)), ["Winnti", "APT 1", "APT 10", "APT 1"])
    book, coded = encode_labels(ds)
    assert book.codes == {"APT 1": 0, "APT 10": 1, "Winnti": 2}
    assert coded.y.tolist() == [2, 0, 1, 0]
    assert book.decode(1) == "APT 10"


def test_encode_single_label():
    _, coded = encode_labels(make_dataset(np.zeros((3, 1)), ["x"] * 3))
    assert coded.y.tolist() == [0, 0, 0]


def test_split_exact_stratification():
    s = make_split(np.arange(100.0)[:, None], [0] * 50 + [1] * 50)
    train, test = stratified_split(s, SplitConfig(0.2, seed=1))
    assert test.class_counts().tolist() == [10, 10]
    assert train.class_counts().tolist() == [40, 40]


def test_split_deterministic_and_partition():
    s = make_split(np.arange(30.0)[:, None], np.arange(30) % 3)
    a = stratified_split(s, SplitConfig(seed=5))
    b = stratified_split(s, SplitConfig(seed=5))
    assert a[1].ids == b[1].ids
    assert set(a[0].ids).isdisjoint(a[1].ids) and set(a[0].ids) | set(a[1].ids) == set(s.ids)


def test_split_class_too_small():
    s = make_split(np.zeros((3, 1)), [0, 0, 1])
    with pytest.raises(ClassTooSmall) as info:
        stratified_split(s, SplitConfig())
    assert "c1" in str(info.value)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(2, 40), min_size=1, max_size=6), st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
def test_split_properties(sizes, fraction, seed):
    y = np.concatenate([np.full(n, c) for c, n in enumerate(sizes)])
    s = make_split(np.arange(len(y), dtype=float)[:, None], y)
    train, test = stratified_split(s, SplitConfig(fraction, seed))
    assert set(train.ids).isdisjoint(test.ids)
    assert sorted(train.ids + test.ids) == sorted(s.ids)
    for c, n in enumerate(sizes):
        got = int((test.y == c).sum())
        assert abs(got - fraction * n) <= 1
        assert 1 <= got <= n - 1


def test_smote_match_majority_example():
    rng = np.random.default_rng(0)
    s = make_split(rng.random((14, 3)), [0] * 10 + [1] * 4)
    out = smote_oversample(s, SmoteConfig(seed=0))
    assert out.class_counts().tolist() == [10, 10]
    assert out.synthetic.sum() == 6 and (out.y[out.synthetic] == 1).all()
    assert out.ids[:14] == s.ids and np.array_equal(out.X[:14], s.X)


def test_smote_balanced_is_identity():
    s = make_split(np.arange(8.0).reshape(4, 2), [0, 1, 0, 1])
    out = smote_oversample(s, SmoteConfig())
    assert out.ids == s.ids and np.array_equal(out.X, s.X) and np.array_equal(out.y, s.y)


def test_smote_singleton_class_rejected():
    with pytest.raises(ClassTooSmall):
        smote_oversample(make_split(np.zeros((4, 1)), [0, 0, 0, 1]), SmoteConfig())


def test_smote_two_point_segment_1000_draws():
    X = np.array([[5.0], [6.0], [7.0], [0.0], [1.0]])
    s = make_split(X, [0, 0, 0, 1, 1])
    out_of_range = 0
    for seed in range(1000):
        out = smote_oversample(s, SmoteConfig(seed=seed))
        vals = out.X[out.synthetic, 0]
        out_of_range += int(((vals < 0.0) | (vals > 1.0)).sum())
    assert out_of_range == 0


def brute_force_on_segment(x, members, k):
    """True if x = a + u (b - a) for some member a and one of a's k nearest members b."""
    for i, a in enumerate(members):
        d = np.sqrt(((members - a) ** 2).sum(axis=1))
        d[i] = np.inf
        order = sorted(range(len(members)), key=lambda j: (d[j], j))[:k]
        for j in order:
            b = members[j]
            seg = b - a
            denom = float(seg @ seg)
            u = 0.0 if denom == 0 else float((x - a) @ seg) / denom
            if -1e-12 <= u <= 1 + 1e-12 and np.allclose(a + u * seg, x, atol=1e-9):
                return True
    return False


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 9), min_size=2, max_size=4), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_smote_geometry_and_balance(sizes, k, seed):
    rng = np.random.default_rng(seed)
    y = np.concatenate([np.full(n, c) for c, n in enumerate(sizes)])
    s = make_split(rng.normal(size=(len(y), 3)), y)
    out = smote_oversample(s, SmoteConfig(k_neighbors=k, seed=seed))
    assert out.class_counts().tolist() == [max(sizes)] * len(sizes)
    for row in np.flatnonzero(out.synthetic):
        members = s.X[s.y == out.y[row]]
        assert brute_force_on_segment(out.X[row], members, min(k, len(members) - 1))


def test_minmax_examples():
    s = make_split(np.array([[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]]), [0, 0, 0])
    p = fit_minmax(s)
    assert p.min.tolist() == [2.0, 5.0] and p.max.tolist() == [6.0, 5.0]
    out = apply_minmax(s, p)
    assert out.X[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert out.X[:, 1].tolist() == [0.0, 0.0, 0.0]
    test = make_split(np.array([[8.0, 5.0], [0.0, 9.0]]), [0, 0])
    assert apply_minmax(test, p).X.tolist() == [[1.0, 0.0], [0.0, 0.0]]


def test_minmax_single_record_and_mismatch():
    s = make_split(np.array([[3.0, 4.0]]), [0])
    p = fit_minmax(s)
    assert np.array_equal(p.min, p.max)
    with pytest.raises(DimensionMismatch):
        apply_minmax(make_split(np.zeros((1, 3)), [0]), p)


def test_scaler_ignores_test_data():
    rng = np.random.default_rng(0)
    ds = make_dataset(rng.random((40, 3)), ["a", "b"] * 20)
    a = prepare(ds, SplitConfig(seed=1), SmoteConfig(seed=1))
    test_rows = set(a.test.ids)
    X2 = ds.X.copy()
    for i, sid in enumerate(ds.ids):
        if sid in test_rows:
            X2[i] = 1e6
    b = prepare(make_dataset(X2, ds.labels), SplitConfig(seed=1), SmoteConfig(seed=1))
    assert np.array_equal(a.scaler.min, b.scaler.min) and np.array_equal(a.scaler.max, b.scaler.max)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_prepare_range_and_determinism(seed, paper_order):
    rng = np.random.default_rng(seed)
    labels = ["a"] * 12 + ["b"] * 5 + ["c"] * 3
    ds = make_dataset(rng.exponential(size=(20, 4)), labels)
    a = prepare(ds, SplitConfig(seed=seed), SmoteConfig(seed=seed), paper_order)
    b = prepare(ds, SplitConfig(seed=seed), SmoteConfig(seed=seed), paper_order)
    for part in (a.train, a.test):
        assert ((part.X >= 0) & (part.X <= 1)).all()
    assert np.array_equal(a.train.X, b.train.X) and np.array_equal(a.test.X, b.test.X)
    assert len(set(a.train.class_counts().tolist())) == 1


def test_prepare_without_smote_keeps_imbalance():
    ds = make_dataset(np.random.default_rng(0).random((20, 2)), ["a"] * 15 + ["b"] * 5)
    p = prepare(ds, SplitConfig(), None)
    assert p.train.class_counts().tolist() == [12, 4]
    assert not p.train.synthetic.any()


def test_prepared_round_trip(tmp_path):
    ds = make_dataset(np.random.default_rng(0).random((30, 3)), ["x", "y", "z"] * 10)
    p = prepare(ds, SplitConfig(), SmoteConfig())
    write_prepared(p, tmp_path)
    train, test, meta = read_prepared(tmp_path)
    assert np.array_equal(train.X, p.train.X) and np.array_equal(test.y, p.test.y)
    assert meta["classes"] == ["x", "y", "z"]
    first = (tmp_path / "train.csv").read_bytes()
    write_prepared(prepare(ds, SplitConfig(), SmoteConfig()), tmp_path)
    assert (tmp_path / "train.csv").read_bytes() == first
