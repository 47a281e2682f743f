"""Confusion matrices and accuracy / macro recall / macro precision."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, FormatError, InputError
from .geo import NULL_CLASS

NULL_COLUMN = "null"


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes plus a trailing null column."""

    counts: np.ndarray
    class_names: tuple

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.class_names)
        if counts.shape != (n, n + 1):
            raise InputError(f"confusion counts must be {n}x{n + 1}, got {counts.shape}")
        if (counts < 0).any():
            raise InputError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return (
            isinstance(other, ConfusionMatrix)
            and self.class_names == other.class_names
            and np.array_equal(self.counts, other.counts)
        )


def default_names(n_classes: int) -> tuple:
    return tuple(str(k) for k in range(1, n_classes + 1))


def confusion(truth, pred, n_classes: int | None = None, class_names=None) -> ConfusionMatrix:
    """Tally (truth, prediction) pairs; null predictions land in the last column."""
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise InputError(f"truth has {truth.size} entries but predictions have {pred.size}")
    if (truth == NULL_CLASS).any():
        raise InputError("truth labels must not be null")
    if class_names is not None:
        n_classes = len(class_names)
    if n_classes is None:
        n_classes = int(max(truth.max(initial=0), pred.max(initial=0)))
    names = tuple(class_names) if class_names is not None else default_names(n_classes)
    if truth.size and (truth.min() < 1 or truth.max() > n_classes):
        raise InputError(f"truth classes outside 1..{n_classes}")
    if pred.size and (pred.min() < 0 or pred.max() > n_classes):
        raise InputError(f"predicted classes outside 1..{n_classes}")
    col = np.where(pred == NULL_CLASS, n_classes, pred - 1)
    counts = np.zeros((n_classes, n_classes + 1), dtype=np.int64)
    np.add.at(counts, (truth - 1, col), 1)
    return ConfusionMatrix(counts, names)


def sum_confusions(matrices) -> ConfusionMatrix:
    mats = list(matrices)
    if not mats:
        raise InputError("no confusion matrices to sum")
    names = mats[0].class_names
    for m in mats[1:]:
        if m.class_names != names:
            raise ConsistencyError(f"class legend mismatch: {m.class_names} vs {names}")
    return ConfusionMatrix(sum(m.counts for m in mats), names)


def metrics(cm: ConfusionMatrix, null_as_error: bool = True) -> dict:
    """Accuracy plus per-class and macro-averaged recall and precision.

    Null predictions count as errors for accuracy and recall; with
    ``null_as_error=False`` those objects are dropped instead. Precision uses
    only real predicted-class columns. Macro averages run over the classes
    present in the truth.
    """
    counts = cm.counts if null_as_error else cm.counts[:, :-1]
    total = counts.sum()
    if total <= 0:
        raise InputError("cannot compute metrics of an empty confusion matrix")
    square = cm.counts[:, :-1]
    diag = np.diag(square).astype(np.float64)
    row = counts.sum(axis=1).astype(np.float64)
    col = square.sum(axis=0).astype(np.float64)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    present = row > 0
    return {
        "accuracy": float(diag.sum() / total),
        "macro_recall": float(recall[present].mean()),
        "macro_precision": float(precision[present].mean()),
        "recall": {n: float(r) for n, r in zip(cm.class_names, recall)},
        "precision": {n: float(p) for n, p in zip(cm.class_names, precision)},
        "n_objects": int(total),
        "n_null_predictions": int(cm.counts[:, -1].sum()),
    }


def confusion_to_csv(cm: ConfusionMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["true\\pred", *cm.class_names, NULL_COLUMN])
    for name, row in zip(cm.class_names, cm.counts):
        w.writerow([name, *[int(v) for v in row]])
    return buf.getvalue()


def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    Path(path).write_text(confusion_to_csv(cm))


def read_confusion_csv(path) -> ConfusionMatrix:
    try:
        rows = list(csv.reader(Path(path).read_text().splitlines()))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise FormatError(path, "line 1", "empty confusion matrix file")
    header = rows[0][1:]
    has_null = bool(header) and header[-1] == NULL_COLUMN
    names = header[:-1] if has_null else header
    counts = []
    for k, row in enumerate(rows[1:], start=2):
        try:
            vals = [int(v) for v in row[1:]]
        except ValueError:
            raise FormatError(path, f"line {k}", "non-integer count") from None
        if len(vals) != len(header):
            raise FormatError(path, f"line {k}", f"expected {len(header)} counts")
        counts.append(vals if has_null else vals + [0])
    if [r[0] for r in rows[1:]] != names:
        raise FormatError(path, "line 1", "row and column class names differ")
    return ConfusionMatrix(np.array(counts, dtype=np.int64).reshape(len(names), len(names) + 1), names)
