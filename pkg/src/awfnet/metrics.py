"""Screening and trustworthiness metrics over predicted class probabilities."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .exceptions import ContractError, DimensionError, UndefinedMetricError

REPORT_FIELDS = ("acc", "precision", "sensitivity", "f1", "specificity", "b_acc", "auc", "ece", "mce")


@dataclass
class PredictionSet:
    probs: np.ndarray
    labels: np.ndarray
    positive_class: int = 1

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.labels = np.asarray(self.labels).astype(np.int64)
        if self.probs.ndim != 2:
            raise DimensionError("probs must be [N, C]", self.probs.shape)
        N, C = self.probs.shape
        if N < 1:
            raise ContractError("prediction set is empty")
        if self.labels.shape != (N,):
            raise DimensionError("labels must have one entry per row", self.labels.shape, self.probs.shape)
        if self.labels.min() < 0 or self.labels.max() >= C:
            raise ContractError(f"labels must lie in [0, {C})")
        if not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-5):
            raise ContractError("probability rows must sum to 1")

    @property
    def num_classes(self):
        return self.probs.shape[1]

    def predictions(self):
        # np.argmax returns the first maximum, i.e. ties go to the lowest index
        return np.argmax(self.probs, axis=1)


@dataclass
class MetricReport:
    acc: float = 0.0
    precision: float = 0.0
    sensitivity: float = 0.0
    f1: float = 0.0
    specificity: float = 0.0
    b_acc: float = 0.0
    auc: float = 0.0
    ece: float = 0.0
    mce: float = 0.0
    bin_count: int = 15
    confusion: list = field(default_factory=list)
    undefined: list = field(default_factory=list)

    def row(self):
        return [getattr(self, name) for name in REPORT_FIELDS]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def confusion_matrix(labels, preds, num_classes):
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def _ratio(num, den, name, undefined):
    if den == 0:
        undefined.append(name)
        return 0.0
    return float(num) / float(den)


def classification_metrics(p: PredictionSet) -> MetricReport:
    """ACC, precision, sensitivity, F1, specificity and balanced accuracy.

    Binary problems report the positive class; with more classes precision,
    sensitivity, F1 and specificity are macro-averaged. A zero denominator
    yields 0 and the metric name is appended to ``report.undefined``.
    """
    C = p.num_classes
    cm = confusion_matrix(p.labels, p.predictions(), C)
    N = cm.sum()
    undefined = []
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    tn = N - tp - fp - fn

    def per_class(k):
        prec = _ratio(tp[k], tp[k] + fp[k], f"precision[{k}]", undefined)
        sen = _ratio(tp[k], tp[k] + fn[k], f"sensitivity[{k}]", undefined)
        spe = _ratio(tn[k], tn[k] + fp[k], f"specificity[{k}]", undefined)
        f1 = _ratio(2 * tp[k], 2 * tp[k] + fp[k] + fn[k], f"f1[{k}]", undefined)
        return prec, sen, spe, f1

    if C == 2:
        prec, sen, spe, f1 = per_class(p.positive_class)
    else:
        prec, sen, spe, f1 = np.mean([per_class(k) for k in range(C)], axis=0)

    present = [k for k in range(C) if tp[k] + fn[k] > 0]
    b_acc = float(np.mean([tp[k] / (tp[k] + fn[k]) for k in present]))
    return MetricReport(
        acc=float(tp.sum()) / N, precision=float(prec), sensitivity=float(sen), f1=float(f1),
        specificity=float(spe), b_acc=b_acc, confusion=cm.tolist(), undefined=undefined,
    )


def _binary_auc(scores, is_pos):
    n_pos = int(is_pos.sum())
    n_neg = is_pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both positive and negative samples")
    ranks = rankdata(scores)  # average ranks handle ties
    return (ranks[is_pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def auc(p: PredictionSet) -> float:
    """Mann-Whitney AUC; macro one-vs-rest over present classes when C > 2."""
    present = np.unique(p.labels)
    if present.size < 2:
        raise UndefinedMetricError("AUC is undefined when only one class is present")
    if p.num_classes == 2:
        k = p.positive_class
        return float(_binary_auc(p.probs[:, k], p.labels == k))
    return float(np.mean([_binary_auc(p.probs[:, k], p.labels == k) for k in present]))


def calibration_errors(p: PredictionSet, bins=15):
    """(ECE, MCE) over equal-width confidence bins (lo, hi] on (0, 1]."""
    if bins < 1:
        raise ContractError("bins must be >= 1")
    conf = p.probs.max(axis=1)
    correct = (p.predictions() == p.labels).astype(np.float64)
    # bin m covers (m/bins, (m+1)/bins]
    idx = np.clip(np.ceil(conf * bins).astype(np.int64) - 1, 0, bins - 1)
    N = conf.size
    ece, mce = 0.0, 0.0
    for m in range(bins):
        in_bin = idx == m
        count = int(in_bin.sum())
        if count == 0:
            continue
        gap = abs(correct[in_bin].mean() - conf[in_bin].mean())
        ece += count / N * gap
        mce = max(mce, gap)
    return float(ece), float(mce)


def metric_report(p: PredictionSet, bins=15) -> MetricReport:
    report = classification_metrics(p)
    try:
        report.auc = auc(p)
    except UndefinedMetricError:
        report.auc = 0.0
        report.undefined.append("auc")
    report.ece, report.mce = calibration_errors(p, bins)
    report.bin_count = bins
    return report
