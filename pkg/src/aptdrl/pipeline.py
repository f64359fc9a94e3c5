"""Label encoding, stratified splitting, SMOTE and min-max scaling.

Default order is split, then SMOTE on the training part only, then a scaler fit
on the (oversampled) training part and applied to both parts.
``paper_order=True`` oversamples the whole dataset before splitting instead.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import SYNTHETIC_PREFIX, DataSplit, Dataset, format_float, read_split_csv, write_split_csv
from .errors import AptError, ClassTooSmall, DimensionMismatch


@dataclass(frozen=True)
class LabelCodebook:
    labels: tuple[str, ...]

    @property
    def codes(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}

    def encode(self, label: str) -> int:
        return self.codes[label]

    def decode(self, code: int) -> str:
        return self.labels[code]

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.2
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must be in (0, 1), got {self.test_fraction}")


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    seed: int = 0
    target: str = "match-majority"

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.target != "match-majority":
            raise ValueError(f"unsupported SMOTE target {self.target!r}")


@dataclass(frozen=True)
class ScalerParams:
    min: np.ndarray
    max: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.min)


def encode_labels(dataset: Dataset) -> tuple[LabelCodebook, DataSplit]:
    if len(dataset) == 0:
        raise AptError("cannot encode labels of an empty dataset")
    book = LabelCodebook(tuple(sorted(set(dataset.labels))))
    codes = book.codes
    y = np.array([codes[label] for label in dataset.labels], dtype=np.int64)
    return book, DataSplit(dataset.ids, y, dataset.X.copy(), list(book.labels))


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(data: DataSplit, cfg: SplitConfig) -> tuple[DataSplit, DataSplit]:
    """Partition into (train, test); records keep their original relative order."""
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    test_idx: list[int] = []
    if cfg.stratified:
        for code in range(data.num_classes):
            members = np.flatnonzero(data.y == code)
            if len(members) == 0:
                continue
            if len(members) < 2:
                raise ClassTooSmall(data.classes[code], len(members))
            n_test = min(max(_round_half_up(cfg.test_fraction * len(members)), 1), len(members) - 1)
            test_idx.extend(rng.permutation(members)[:n_test].tolist())
    else:
        test_idx = rng.permutation(n)[: _round_half_up(cfg.test_fraction * n)].tolist()
    is_test = np.zeros(n, dtype=bool)
    is_test[test_idx] = True
    return data.subset(np.flatnonzero(~is_test)), data.subset(np.flatnonzero(is_test))


def _neighbor_table(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest other points (Euclidean), ties by lower index."""
    out = np.empty((len(points), k), dtype=np.int64)
    for i, p in enumerate(points):
        d2 = ((points - p) ** 2).sum(axis=1)
        d2[i] = np.inf
        out[i] = np.argsort(d2, kind="stable")[:k]
    return out


def smote_oversample(train: DataSplit, cfg: SmoteConfig) -> DataSplit:
    """Oversample every class up to the majority count.

    Each synthetic point is ``x + u * (x_nn - x)`` for a uniformly chosen real
    member ``x``, one of its ``k`` nearest same-class neighbours ``x_nn`` and
    ``u ~ U[0, 1]``. ``k`` shrinks to ``class_size - 1`` for small classes.
    Originals come first, unchanged; synthetic rows get ``synthetic-`` ids.
    """
    counts = train.class_counts()
    for code, c in enumerate(counts):
        if 0 < c < 2:
            raise ClassTooSmall(train.classes[code], int(c))
    target = int(counts.max()) if len(counts) else 0
    if np.all((counts == target) | (counts == 0)):
        return DataSplit(train.ids, train.y.copy(), train.X.copy(), train.classes)
    rng = np.random.default_rng(cfg.seed)
    new_ids, new_y, new_X = [], [], []
    for code, c in enumerate(counts):
        need = target - int(c)
        if c == 0 or need == 0:
            continue
        members = np.flatnonzero(train.y == code)
        pts = train.X[members]
        k = min(cfg.k_neighbors, len(members) - 1)
        nn = _neighbor_table(pts, k)
        base = rng.integers(len(members), size=need)
        pick = nn[base, rng.integers(k, size=need)]
        u = rng.random(need)[:, None]
        synth = pts[base] + u * (pts[pick] - pts[base])
        new_ids.extend(f"{SYNTHETIC_PREFIX}{code}-{i:06d}" for i in range(need))
        new_y.append(np.full(need, code, dtype=np.int64))
        new_X.append(synth)
    return DataSplit(
        train.ids + new_ids,
        np.concatenate([train.y] + new_y),
        np.vstack([train.X] + new_X),
        train.classes,
    )


def fit_minmax(train: DataSplit) -> ScalerParams:
    if len(train) == 0:
        raise AptError("cannot fit a scaler on an empty split")
    return ScalerParams(train.X.min(axis=0), train.X.max(axis=0))


def apply_minmax(split: DataSplit, params: ScalerParams) -> DataSplit:
    """``(x - min) / (max - min)`` per column, constant columns to 0, clipped to [0, 1]."""
    if split.dim != params.dim:
        raise DimensionMismatch(f"split has {split.dim} features, scaler was fit on {params.dim}")
    span = params.max - params.min
    const = span <= 0
    scaled = (split.X - params.min) / np.where(const, 1.0, span)
    scaled[:, const] = 0.0
    return split.with_features(np.clip(scaled, 0.0, 1.0))


@dataclass
class Prepared:
    train: DataSplit
    test: DataSplit
    codebook: LabelCodebook
    scaler: ScalerParams
    split_cfg: SplitConfig
    smote_cfg: SmoteConfig | None
    paper_order: bool = False

    def metadata(self) -> dict:
        return {
            "classes": list(self.codebook.labels),
            "dim": self.train.dim,
            "scaler": {
                "min": [format_float(v) for v in self.scaler.min],
                "max": [format_float(v) for v in self.scaler.max],
            },
            "split": asdict(self.split_cfg),
            "smote": asdict(self.smote_cfg) if self.smote_cfg else None,
            "paper_order": self.paper_order,
            "train_counts": [int(c) for c in self.train.class_counts()],
            "test_counts": [int(c) for c in self.test.class_counts()],
        }


def prepare(
    dataset: Dataset,
    split_cfg: SplitConfig,
    smote_cfg: SmoteConfig | None = SmoteConfig(),
    paper_order: bool = False,
) -> Prepared:
    """Run the full preprocessing chain; ``smote_cfg=None`` disables oversampling."""
    book, coded = encode_labels(dataset)
    if paper_order:
        balanced = smote_oversample(coded, smote_cfg) if smote_cfg else coded
        train, test = stratified_split(balanced, split_cfg)
    else:
        train, test = stratified_split(coded, split_cfg)
        if smote_cfg:
            train = smote_oversample(train, smote_cfg)
    scaler = fit_minmax(train)
    return Prepared(apply_minmax(train, scaler), apply_minmax(test, scaler), book, scaler, split_cfg, smote_cfg, paper_order)


def write_prepared(prep: Prepared, out_dir: str | Path, extra_meta: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_split_csv(prep.train, out / "train.csv")
    write_split_csv(prep.test, out / "test.csv")
    meta = prep.metadata()
    if extra_meta:
        meta.update(extra_meta)
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_metadata(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise AptError(f"cannot read split metadata {path}: {exc}") from exc


def read_prepared(split_dir: str | Path) -> tuple[DataSplit, DataSplit, dict]:
    d = Path(split_dir)
    for name in ("train.csv", "test.csv", "metadata.json"):
        if not (d / name).is_file():
            raise AptError(f"missing {d / name}")
    meta = read_metadata(d / "metadata.json")
    classes = meta.get("classes")
    train = read_split_csv(d / "train.csv", classes)
    test = read_split_csv(d / "test.csv", classes)
    if train.dim != test.dim:
        raise DimensionMismatch(f"train has {train.dim} features, test has {test.dim}")
    return train, test, meta
