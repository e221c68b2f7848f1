"""
Ground-truth scoring in the layout of a metrics row plus a row-normalized
confusion matrix (rows = truth, columns = prediction).

Headline precision/recall/F1 are one-vs-rest per class, averaged with
weights proportional to true-class support. A class that is never
predicted has precision 0.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .model import AnomalyClass, AnomalyPrediction, class_profile


class MissingLabel(KeyError):
    def __init__(self, windows: Sequence[Any]):
        self.windows = list(windows)
        super().__init__(f"no ground-truth label for window(s): {self.windows}")


class ProfileError(ValueError):
    def __init__(self, message: str, rows: Sequence[Any] = ()):
        self.rows = list(rows)
        super().__init__(message if not self.rows else f"{message}: {self.rows}")


Key = tuple[str, int]


@dataclass
class GroundTruthSet:
    """Truth labels keyed by ``(video_id, window_index)``; video_id may be empty."""

    labels: dict[Key, AnomalyClass] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, m: Mapping[int | Key, AnomalyClass | str]) -> "GroundTruthSet":
        labels = {}
        for k, v in m.items():
            key = k if isinstance(k, tuple) else ("", int(k))
            labels[(str(key[0]), int(key[1]))] = AnomalyClass.parse(v)
        return cls(labels)

    @classmethod
    def from_csv(cls, path: str | os.PathLike) -> "GroundTruthSet":
        labels = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"window_index", "label"} - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
            for lineno, row in enumerate(reader, 2):
                try:
                    key = (row.get("video_id") or "", int(row["window_index"]))
                    labels[key] = AnomalyClass.parse(row["label"])
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
        return cls(labels)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["video_id", "window_index", "label"])
        for (vid, idx), label in sorted(self.labels.items()):
            w.writerow([vid, idx, label.value])
        return buf.getvalue()

    @property
    def video_ids(self) -> set[str]:
        return {k[0] for k in self.labels}

    def key_for(self, window_index: int, video_id: str | None = None) -> Key:
        if video_id is None:
            vids = self.video_ids
            video_id = next(iter(vids)) if len(vids) == 1 else ""
        return (video_id, int(window_index))


@dataclass
class EvalReport:
    classes: tuple[AnomalyClass, ...]
    confusion_counts: np.ndarray
    excluded: int = 0

    @property
    def total(self) -> int:
        return int(self.confusion_counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.confusion_counts.sum(axis=1)

    @property
    def confusion_row_pct(self) -> np.ndarray:
        c = self.confusion_counts.astype(np.float64)
        sup = c.sum(axis=1, keepdims=True)
        return np.divide(100.0 * c, sup, out=np.zeros_like(c), where=sup > 0)

    def per_class(self) -> dict[AnomalyClass, dict[str, float]]:
        c = self.confusion_counts.astype(np.float64)
        tp = np.diag(c)
        predicted = c.sum(axis=0)
        support = c.sum(axis=1)
        out = {}
        for i, cls in enumerate(self.classes):
            p = tp[i] / predicted[i] if predicted[i] else 0.0
            r = tp[i] / support[i] if support[i] else 0.0
            f = 2 * p * r / (p + r) if p + r else 0.0
            out[cls] = {"precision": p, "recall": r, "f1": f, "support": int(support[i])}
        return out

    def _weighted(self, metric: str) -> float:
        total = self.total
        if not total:
            return 0.0
        return 100.0 * sum(m[metric] * m["support"] for m in self.per_class().values()) / total

    @property
    def accuracy(self) -> float:
        total = self.total
        return 100.0 * float(np.trace(self.confusion_counts)) / total if total else 0.0

    @property
    def weighted_precision(self) -> float:
        return self._weighted("precision")

    @property
    def weighted_recall(self) -> float:
        return self._weighted("recall")

    @property
    def weighted_f1(self) -> float:
        return self._weighted("f1")

    def metrics(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "precision": self.weighted_precision,
            "recall": self.weighted_recall,
            "f1": self.weighted_f1,
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "classes": [c.value for c in self.classes],
            "metrics": self.metrics(),
            "confusion_counts": self.confusion_counts.tolist(),
            "confusion_row_pct": self.confusion_row_pct.tolist(),
            "per_class": {c.value: m for c, m in self.per_class().items()},
            "scored": self.total,
            "excluded": self.excluded,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def score_labels(
    truth: Sequence[AnomalyClass | str],
    predicted: Sequence[AnomalyClass | str],
    profile: int = 4,
    excluded: int = 0,
) -> EvalReport:
    """Confusion counts and weighted metrics from aligned label sequences."""
    if len(truth) != len(predicted):
        raise ValueError(f"length mismatch: {len(truth)} truths vs {len(predicted)} predictions")
    if not truth:
        raise ValueError("nothing to score: empty prediction list")
    classes = class_profile(profile)
    index = {c: i for i, c in enumerate(classes)}
    t = [AnomalyClass.parse(x) for x in truth]
    p = [AnomalyClass.parse(x) for x in predicted]
    bad = [(i, a.value, b.value) for i, (a, b) in enumerate(zip(t, p)) if a not in index or b not in index]
    if bad:
        raise ProfileError(f"labels outside the {profile}-class profile (row, truth, predicted)", bad)
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(counts, ([index[a] for a in t], [index[b] for b in p]), 1)
    return EvalReport(classes, counts, excluded)


def score(
    predictions: Iterable[AnomalyPrediction],
    truth: GroundTruthSet,
    profile: int = 4,
    video_id: str | None = None,
    skipped: int = 0,
) -> EvalReport:
    """Score run predictions against ground truth; skipped windows are only counted."""
    preds = list(predictions)
    missing, t, p = [], [], []
    for pred in preds:
        key = truth.key_for(pred.window_index, video_id)
        if key not in truth.labels:
            missing.append(pred.window_index if not key[0] else key)
            continue
        t.append(truth.labels[key])
        p.append(pred.label)
    if missing:
        raise MissingLabel(missing)
    return score_labels(t, p, profile, excluded=skipped)


def load_prediction_pairs(path: str | os.PathLike) -> list[tuple[str | None, int, AnomalyClass]]:
    """Read predictions from a run report (JSON) or a CSV with window_index,label columns."""
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return [(None, int(p["window_index"]), AnomalyClass.parse(p["label"])) for p in doc["predictions"]]
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    missing = {"window_index", "label"} - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
    for lineno, row in enumerate(reader, 2):
        try:
            rows.append((row.get("video_id") or None, int(row["window_index"]), AnomalyClass.parse(row["label"])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return rows


def score_pairs(
    pairs: Iterable[tuple[str | None, int, AnomalyClass]], truth: GroundTruthSet, profile: int = 4
) -> EvalReport:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("nothing to score: empty prediction list")
    missing, t, p = [], [], []
    for vid, idx, label in pairs:
        key = truth.key_for(idx, vid)
        if key not in truth.labels:
            missing.append(key if key[0] else idx)
            continue
        t.append(truth.labels[key])
        p.append(label)
    if missing:
        raise MissingLabel(missing)
    return score_labels(t, p, profile)


# --------------------------------------------------------------------------
# formatting


def _pct(x: float) -> str:
    return f"{x:.2f}%"


def format_table(report: EvalReport, title: str = "Confusion matrix (in percent)") -> str:
    """Metrics row followed by the row-normalized confusion matrix, as plain text."""
    m = report.metrics()
    heads = ["Accuracy", "Precision", "Recall", "F1-Score"]
    vals = [_pct(m["accuracy"]), _pct(m["precision"]), _pct(m["recall"]), _pct(m["f1"])]
    width = max(len(h) for h in heads) + 2
    lines = [
        "".join(h.ljust(width) for h in heads).rstrip(),
        "".join(v.ljust(width) for v in vals).rstrip(),
        "",
        title,
    ]
    names = [c.title for c in report.classes]
    corner = "Truth \\ Predicted"
    first = max(len(corner), *(len(n) for n in names)) + 2
    col = max(9, *(len(n) + 2 for n in names))
    lines.append((corner.ljust(first) + "".join(n.ljust(col) for n in names)).rstrip())
    for name, row in zip(names, report.confusion_row_pct):
        lines.append((name.ljust(first) + "".join(_pct(v).ljust(col) for v in row)).rstrip())
    return "\n".join(lines) + "\n"


def format_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    m = report.metrics()
    w.writerow(["Accuracy", "Precision", "Recall", "F1-Score"])
    w.writerow([f"{m[k]:.2f}" for k in ("accuracy", "precision", "recall", "f1")])
    w.writerow([])
    w.writerow(["Truth\\Predicted", *(c.title for c in report.classes)])
    for cls, row in zip(report.classes, report.confusion_row_pct):
        w.writerow([cls.title, *(f"{v:.2f}" for v in row)])
    return buf.getvalue()


def class_profile_report(report: EvalReport, profile: int) -> tuple[str, str]:
    """Render ``report`` as (text, csv) after checking it matches the class profile."""
    classes = class_profile(profile)
    if report.classes != classes:
        raise ProfileError(
            f"report classes {[c.value for c in report.classes]} do not match the {profile}-class profile"
        )
    title = f"Confusion matrix (in percent, {profile} classes)"
    return format_table(report, title), format_csv(report)
