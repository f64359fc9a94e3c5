"""Confusion matrices, per-class metrics, policy evaluation and report files."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DataSplit
from .errors import AptError, CodeOutOfRange, DimensionMismatch, EmptyLog, EmptyMatrix, LengthMismatch, ShapeMismatch
from .network import NetworkConfig, QNetworkParams, forward


def confusion(true, pred, k: int) -> np.ndarray:
    """``cm[t, p]`` counts samples of true class ``t`` predicted as ``p``."""
    true = np.asarray(true, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    if true.shape != pred.shape:
        raise LengthMismatch(f"{len(true)} true labels vs {len(pred)} predictions")
    for name, codes in (("true", true), ("predicted", pred)):
        if codes.size and (codes.min() < 0 or codes.max() >= k):
            raise CodeOutOfRange(f"{name} label outside [0, {k})")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


@dataclass
class ClassMetrics:
    precision: list
    recall: list
    f1: list
    support: list
    accuracy: object
    macro_precision: object
    macro_recall: object
    macro_f1: object
    weighted_precision: object
    weighted_recall: object
    weighted_f1: object

    def aggregate(self) -> dict[str, float]:
        return {
            "accuracy": float(self.accuracy),
            "precision_macro": float(self.macro_precision),
            "recall_macro": float(self.macro_recall),
            "f1_macro": float(self.macro_f1),
            "precision_weighted": float(self.weighted_precision),
            "recall_weighted": float(self.weighted_recall),
            "f1_weighted": float(self.weighted_f1),
        }


def _ratio(num: int, den: int) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


def class_metrics(cm, exact: bool = False) -> ClassMetrics:
    """Per-class precision, recall and F1 plus macro/weighted averages and accuracy.

    Every quantity is computed as an exact rational first and rounded once, so
    the floats equal the correctly rounded true values. A zero denominator gives
    0. Pass ``exact=True`` to get the :class:`~fractions.Fraction` values instead.
    """
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ShapeMismatch(f"confusion matrix must be square, got {cm.shape}")
    total = int(cm.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix has no samples")
    k = cm.shape[0]
    tp = [int(cm[c, c]) for c in range(k)]
    actual = [int(v) for v in cm.sum(axis=1)]
    predicted = [int(v) for v in cm.sum(axis=0)]
    prec = [_ratio(tp[c], predicted[c]) for c in range(k)]
    rec = [_ratio(tp[c], actual[c]) for c in range(k)]
    # 2PR/(P+R) reduces to 2tp/(actual+predicted)
    f1 = [_ratio(2 * tp[c], actual[c] + predicted[c]) for c in range(k)]

    def weighted(vals):
        return sum((v * actual[c] for c, v in enumerate(vals)), Fraction(0)) / total

    m = ClassMetrics(
        precision=prec,
        recall=rec,
        f1=f1,
        support=actual,
        accuracy=Fraction(sum(tp), total),
        macro_precision=sum(prec, Fraction(0)) / k,
        macro_recall=sum(rec, Fraction(0)) / k,
        macro_f1=sum(f1, Fraction(0)) / k,
        weighted_precision=weighted(prec),
        weighted_recall=weighted(rec),
        weighted_f1=weighted(f1),
    )
    if exact:
        return m
    conv = float
    return ClassMetrics(
        precision=[conv(v) for v in m.precision],
        recall=[conv(v) for v in m.recall],
        f1=[conv(v) for v in m.f1],
        support=m.support,
        accuracy=conv(m.accuracy),
        macro_precision=conv(m.macro_precision),
        macro_recall=conv(m.macro_recall),
        macro_f1=conv(m.macro_f1),
        weighted_precision=conv(m.weighted_precision),
        weighted_recall=conv(m.weighted_recall),
        weighted_f1=conv(m.weighted_f1),
    )


def greedy_actions(params: QNetworkParams, config: NetworkConfig, X: np.ndarray, batch: int = 1024) -> np.ndarray:
    """Argmax action per row; ``np.argmax`` resolves ties to the lowest index."""
    out = np.empty(len(X), dtype=np.int64)
    for start in range(0, len(X), batch):
        q = forward(params, config, X[start:start + batch])
        out[start:start + batch] = q.argmax(axis=1)
    return out


def evaluate_policy(params: QNetworkParams, config: NetworkConfig, split: DataSplit) -> tuple[float, np.ndarray]:
    if split.dim != config.input_dim:
        raise DimensionMismatch(f"split has {split.dim} features, network expects {config.input_dim}")
    if split.num_classes > config.output_dim:
        raise DimensionMismatch(f"split has {split.num_classes} classes, network outputs {config.output_dim}")
    pred = greedy_actions(params, config, split.X)
    cm = confusion(split.y, pred, config.output_dim)
    acc = float(Fraction(int(np.trace(cm)), len(split))) if len(split) else 0.0
    return acc, cm


@dataclass(frozen=True)
class EvalRecord:
    step: int
    split: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class_precision: tuple[float, ...] = ()
    per_class_recall: tuple[float, ...] = ()
    per_class_f1: tuple[float, ...] = ()


@dataclass
class EvalLog:
    records: list[EvalRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __bool__(self) -> bool:
        return bool(self.records)

    def add(self, step: int, split: str, cm: np.ndarray) -> EvalRecord:
        prior = [r.step for r in self.records if r.split == split]
        if prior and step <= prior[-1]:
            raise ValueError(f"eval steps must increase per split ({step} after {prior[-1]})")
        m = class_metrics(cm)
        rec = EvalRecord(
            step=int(step),
            split=split,
            accuracy=m.accuracy,
            precision=m.macro_precision,
            recall=m.macro_recall,
            f1=m.macro_f1,
            per_class_precision=tuple(m.precision),
            per_class_recall=tuple(m.recall),
            per_class_f1=tuple(m.f1),
        )
        self.records.append(rec)
        return rec

    def for_split(self, split: str) -> list[EvalRecord]:
        return [r for r in self.records if r.split == split]

    def splits(self) -> list[str]:
        seen: list[str] = []
        for r in self.records:
            if r.split not in seen:
                seen.append(r.split)
        return seen

    def last(self, split: str) -> EvalRecord | None:
        recs = self.for_split(split)
        return recs[-1] if recs else None


def fmt6(x: float) -> str:
    return f"{x:.6f}"


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def comparison_text(rows: Sequence[tuple[str, float]]) -> str:
    """Aligned two-column table of model test accuracies."""
    name_w = max([len("Model")] + [len(r[0]) for r in rows])
    lines = [f"{'Model':<{name_w}}  Test Accuracy", f"{'-' * name_w}  {'-' * 13}"]
    lines += [f"{name:<{name_w}}  {100 * acc:12.2f}%" for name, acc in rows]
    return "\n".join(lines) + "\n"


def write_comparison(rows: Sequence[tuple[str, float]], csv_path: str | Path, text_path: str | Path | None = None) -> None:
    csv_path = Path(csv_path)
    _write_csv(csv_path, ["model", "test_accuracy"], [[n, fmt6(a)] for n, a in rows])
    if text_path is not None:
        Path(text_path).write_text(comparison_text(rows), encoding="utf-8")


def emit_reports(
    log: EvalLog,
    cm: np.ndarray,
    out_dir: str | Path,
    class_names: Sequence[str] | None = None,
    comparison: Sequence[tuple[str, float]] | None = None,
) -> list[Path]:
    """Write the plotting-surface CSVs for a finished run.

    Produces ``accuracy_<split>.csv`` per evaluated split, ``per_class.csv``
    and ``aggregate.csv`` from ``cm``, and ``comparison.csv``/``.txt`` when
    baseline rows are supplied. Nothing is written when the log is empty.
    """
    if not log:
        raise EmptyLog("evaluation log is empty; nothing to report")
    cm = np.asarray(cm)
    metrics = class_metrics(cm)
    k = cm.shape[0]
    names = list(class_names) if class_names is not None else [str(c) for c in range(k)]
    if len(names) != k:
        raise DimensionMismatch(f"{len(names)} class names for a {k}-class confusion matrix")
    out = Path(out_dir)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for split in log.splits():
            p = out / f"accuracy_{split}.csv"
            _write_csv(p, ["step", "accuracy"], [[r.step, fmt6(r.accuracy)] for r in log.for_split(split)])
            written.append(p)
        p = out / "per_class.csv"
        _write_csv(
            p,
            ["class", "precision", "recall", "f1"],
            [[names[c], fmt6(metrics.precision[c]), fmt6(metrics.recall[c]), fmt6(metrics.f1[c])] for c in range(k)],
        )
        written.append(p)
        p = out / "aggregate.csv"
        _write_csv(p, ["metric", "value"], [[key, fmt6(v)] for key, v in metrics.aggregate().items()])
        written.append(p)
        if comparison:
            write_comparison(comparison, out / "comparison.csv", out / "comparison.txt")
            written += [out / "comparison.csv", out / "comparison.txt"]
    except OSError as exc:
        raise AptError(f"cannot write reports to {out}: {exc}") from exc
    return written
