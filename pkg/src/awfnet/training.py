"""Training protocol, run records, run-directory artifacts and evaluation."""
from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import checkpoint
from .data import Dataset, DatasetSpec
from .estimator import AWFNetClassifier
from .exceptions import ConfigError, IncompatibleCheckpointError
from .losses import LossConfig
from .metrics import REPORT_FIELDS, MetricReport, PredictionSet, metric_report
from .network import AwfConfig, NetworkSpec, build_awfnet
from .losses import softmax_np
from .tensor import Tensor, no_grad

METRICS_HEADER = ("epoch", "train_loss", "val_loss") + REPORT_FIELDS
CHECKPOINT_NAME = "model.awfn"


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 30
    early_stop_patience: int = 20
    early_stop_min_delta: float = 1e-4
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    random_rotation_degrees: float = 10.0
    intensity_normalization: bool = True
    threads: int = 1
    calibration_bins: int = 15

    def validate(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 for batch normalization")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        return self


@dataclass
class RunRecord:
    config: dict
    epochs: list
    best_epoch: int
    test_report: MetricReport
    checkpoint_path: str | None
    wall_clock_seconds: float
    seed: int
    threads: int
    skipped_files: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["test_report"] = self.test_report.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["test_report"] = MetricReport.from_dict(d["test_report"])
        return cls(**d)

    def best_row(self):
        return next(row for row in self.epochs if row["epoch"] == self.best_epoch)

    def peak_val(self, metric="b_acc"):
        return max(row["val"][metric] for row in self.epochs)

    def metrics_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for row in self.epochs:
            values = [row["train_loss"], row["val_loss"]] + [row["val"][k] for k in REPORT_FIELDS]
            writer.writerow([row["epoch"]] + [f"{v:.6f}" for v in values])
        return buf.getvalue()


def make_estimator(net_spec: NetworkSpec, awf_cfg: AwfConfig, train_cfg: TrainConfig, class_counts=None):
    loss = train_cfg.loss
    return AWFNetClassifier(
        num_awf_blocks=net_spec.num_awf_blocks, stem=net_spec.stem,
        stem_channels=tuple(net_spec.stem_channels), groups=awf_cfg.groups,
        expansion_ratio=awf_cfg.expansion_ratio, weighting_variant=awf_cfg.weighting_variant,
        channel_mixer=awf_cfg.channel_mixer, awf_mixer=awf_cfg.awf_mixer,
        loss=loss.kind, alpha=loss.alpha, lam=loss.lam, t=loss.t, focal_gamma=loss.focal_gamma,
        sign_convention=loss.sign_convention, class_counts=class_counts,
        learning_rate=train_cfg.lr, batch_size=train_cfg.batch_size, max_epochs=train_cfg.max_epochs,
        patience=train_cfg.early_stop_patience, min_delta=train_cfg.early_stop_min_delta,
        rotation_degrees=train_cfg.random_rotation_degrees, calibration_bins=train_cfg.calibration_bins,
        n_threads=train_cfg.threads, random_state=train_cfg.seed,
    )


def config_snapshot(net_spec, awf_cfg, train_cfg, data_spec):
    return {
        "network": net_spec.to_dict(),
        "awf": asdict(awf_cfg),
        "train": asdict(train_cfg),
        "dataset": data_spec.to_dict() if data_spec is not None else None,
    }


def train(net_spec: NetworkSpec, awf_cfg: AwfConfig, train_cfg: TrainConfig, dataset: Dataset,
          data_spec: DatasetSpec | None = None, out_dir=None) -> RunRecord:
    """Fit on the train split with early stopping on val, then score the test split.

    Class counts for the CS/BC losses come from the train split and are
    written back into the loss config so the snapshot is self-contained.
    When ``out_dir`` is given the run directory artifacts are written there.
    """
    train_cfg.validate()
    if net_spec.num_classes != dataset.num_classes:
        raise ConfigError(f"network has {net_spec.num_classes} classes, dataset {dataset.num_classes}")
    counts = train_cfg.loss.class_counts or dataset.class_counts("train")
    train_cfg.loss.class_counts = [int(c) for c in counts]
    X_tr, y_tr = dataset["train"]
    X_val, y_val = dataset["val"]
    net_spec.input_size = tuple(X_tr.shape[-2:])
    net_spec.in_channels = X_tr.shape[1]
    if awf_cfg.channels is None:
        awf_cfg = awf_cfg.resolve(net_spec.stem_channels[-1]) if net_spec.num_awf_blocks else awf_cfg

    start = time.perf_counter()
    clf = make_estimator(net_spec, awf_cfg, train_cfg, train_cfg.loss.class_counts)
    clf.fit(X_tr, y_tr, X_val, y_val)
    with threadpool_limits(limits=train_cfg.threads):
        test_report = clf.report(*dataset["test"])
    elapsed = time.perf_counter() - start

    epochs = [{"epoch": h["epoch"], "train_loss": h["train_loss"], "val_loss": h["val_loss"],
               "val": h["report"].to_dict()} for h in clf.history_]
    ckpt_path = os.path.join(out_dir, CHECKPOINT_NAME) if out_dir else None
    record = RunRecord(config_snapshot(net_spec, awf_cfg, train_cfg, data_spec), epochs,
                       clf.best_epoch_, test_report, ckpt_path, elapsed, train_cfg.seed,
                       train_cfg.threads, list(dataset.skipped))
    if out_dir:
        write_run_dir(out_dir, record, clf.net_)
    record.estimator = clf
    return record


def write_run_dir(out_dir, record: RunRecord, net):
    from .config import dump_config, flatten_snapshot

    os.makedirs(out_dir, exist_ok=True)
    checkpoint.save_network(os.path.join(out_dir, CHECKPOINT_NAME), net)
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write(record.metrics_csv())
    with open(os.path.join(out_dir, "report"), "w") as fh:
        json.dump(record.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "config"), "w") as fh:
        fh.write(dump_config(flatten_snapshot(record.config)))


def read_run_record(out_dir) -> RunRecord:
    with open(os.path.join(out_dir, "report")) as fh:
        return RunRecord.from_dict(json.load(fh))


def evaluate(checkpoint_path, net_spec: NetworkSpec, awf_cfg: AwfConfig, split, bins=15) -> MetricReport:
    """Eval-mode metrics of a saved network on ``split = (X, y)``."""
    X, y = split
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 3:
        X = X[:, None]
    y = np.asarray(y, dtype=np.int64)
    num_classes = int(y.max()) + 1
    if num_classes > net_spec.num_classes:
        raise IncompatibleCheckpointError(
            f"split has labels up to {num_classes - 1} but the checkpoint has {net_spec.num_classes} classes"
        )
    net = build_awfnet(net_spec, awf_cfg, seed=0)
    checkpoint.load_into(net, checkpoint_path)
    net.eval()
    logits = []
    with no_grad():
        for start in range(0, len(X), 64):
            logits.append(net(Tensor(X[start:start + 64])).data)
    probs = softmax_np(np.concatenate(logits))
    return metric_report(PredictionSet(probs, y, positive_class=1), bins)
