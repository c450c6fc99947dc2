import json
import logging

import numpy as np
import scipy.stats

from dataclasses import dataclass, replace

from app.errors import DomainError


logger = logging.getLogger(__name__)

COLUMNS = [("accuracy", "Accuracy"), ("precision", "Precision"), ("recall", "Recall"), ("f_score", "F-score"), ("auc", "AUC")]


@dataclass(frozen=True)
class MetricsReport:
    """
    Bag-level classification quality.

    Attributes:
        accuracy, precision, recall, f_score (float): Confusion statistics at `threshold`.
        auc (float | None): Mann-Whitney AUC, None when undefined or not computed.
        tp, fp, tn, fn (int): Confusion counts.
        threshold (float): Decision threshold (predict 1 iff theta >= threshold).
        undefined (tuple[str]): Ratios that were 0/0 and are reported as 0.
    """

    accuracy: float
    precision: float
    recall: float
    f_score: float
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float = 0.5
    auc: float | None = None
    undefined: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
            "f_score": self.f_score, "auc": self.auc,
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "threshold": self.threshold, "undefined": list(self.undefined),
        }


def _as_arrays(thetas, labels) -> tuple[np.ndarray, np.ndarray]:
    thetas = np.asarray(thetas, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if thetas.size != labels.size:
        raise DomainError(f"Got {thetas.size} predictions for {labels.size} labels")
    if thetas.size == 0:
        raise DomainError("Metrics need at least one prediction")
    if not np.isin(labels, (0, 1)).all():
        raise DomainError("Labels must be 0 or 1")
    return thetas, labels.astype(int)


def _ratio(numerator: int, denominator: int, name: str, undefined: list[str]) -> float:
    if denominator == 0:
        undefined.append(name)
        return 0.0
    return numerator / denominator


def confusion_metrics(thetas, labels, threshold: float = 0.5) -> MetricsReport:
    """
    Accuracy, precision, recall and F-score at a decision threshold.

    0/0 ratios are reported as 0 and listed in `undefined`.
    """
    thetas, labels = _as_arrays(thetas, labels)
    predicted = thetas >= threshold
    actual = labels == 1
    tp = int(np.count_nonzero(predicted & actual))
    fp = int(np.count_nonzero(predicted & ~actual))
    tn = int(np.count_nonzero(~predicted & ~actual))
    fn = int(np.count_nonzero(~predicted & actual))

    undefined: list[str] = []
    precision = _ratio(tp, tp + fp, "precision", undefined)
    recall = _ratio(tp, tp + fn, "recall", undefined)
    if precision + recall > 0:
        f_score = 2.0 * precision * recall / (precision + recall)
    else:
        undefined.append("f_score")
        f_score = 0.0
    if undefined:
        logger.warning(f"Undefined ratio(s) reported as 0: {', '.join(undefined)}")

    return MetricsReport(
        accuracy=(tp + tn) / thetas.size, precision=precision, recall=recall, f_score=f_score,
        tp=tp, fp=fp, tn=tn, fn=fn, threshold=threshold, undefined=tuple(undefined),
    )


def auc(thetas, labels) -> float:
    """
    Area under the ROC curve as the Mann-Whitney statistic, ties counted half.

    Raises:
        DomainError: If only one class is present.
    """
    thetas, labels = _as_arrays(thetas, labels)
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DomainError("AUC is undefined without both positive and negative labels")
    ranks = scipy.stats.rankdata(thetas, method="average")
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate_predictions(thetas, labels, threshold: float = 0.5) -> MetricsReport:
    """
    Confusion metrics plus AUC (None, with a warning, on single-class input).
    """
    report = confusion_metrics(thetas, labels, threshold)
    try:
        return replace(report, auc=auc(thetas, labels))
    except DomainError as e:
        logger.warning(f"{e}; AUC left empty")
        return report


def mean_report(reports: list[MetricsReport]) -> dict[str, float | None]:
    """
    Column-wise mean of the Table-style metrics; AUC averages the defined folds.
    """
    mean = {}
    for key, _ in COLUMNS:
        values = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        mean[key] = float(np.mean(values)) if values else None
    return mean


def metrics_json(reports: list[MetricsReport]) -> str:
    """
    Per-fold reports plus their mean, as deterministic JSON.
    """
    payload = {f"fold_{i}": r.to_dict() for i, r in enumerate(reports)}
    payload["mean"] = mean_report(reports)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def metrics_table(reports: list[MetricsReport], method: str = "") -> str:
    """
    Aligned text table with the columns Accuracy, Precision, Recall, F-score, AUC.
    """
    def cell(value):
        return "N/A" if value is None else f"{value:.3f}"

    header = ["Fold"] + [title for _, title in COLUMNS]
    rows = [[str(i)] + [cell(getattr(r, key)) for key, _ in COLUMNS] for i, r in enumerate(reports)]
    mean = mean_report(reports)
    rows.append([f"Mean {method}".strip()] + [cell(mean[key]) for key, _ in COLUMNS])
    widths = [max(len(row[c]) for row in [header] + rows) for c in range(len(header))]
    lines = ["  ".join(text.rjust(w) if c else text.ljust(w) for c, (text, w) in enumerate(zip(row, widths)))
             for row in [header] + rows]
    return "\n".join(lines) + "\n"
