"""scikit-learn compatible classifier wrapping AWFNet training and inference."""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y
from threadpoolctl import threadpool_limits

from .data import random_rotate
from .exceptions import DivergenceError
from .losses import LossConfig, compute_loss, softmax_np
from .metrics import PredictionSet, metric_report
from .network import AwfConfig, NetworkSpec, build_awfnet
from .optim import Adam, EarlyStopping
from .tensor import Tensor, first_nonfinite_op, no_grad

logger = logging.getLogger(__name__)


def _as_images(X):
    """Accept [N, H, W] or [N, C, H, W] and return float32 [N, C, H, W]."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 3:
        X = X[:, None]
    if X.ndim != 4:
        raise ValueError(f"expected images shaped [N, H, W] or [N, C, H, W], got {X.shape}")
    return np.ascontiguousarray(X)


class AWFNetClassifier(ClassifierMixin, BaseEstimator):
    """Image classifier: small CNN stem, stacked AWF blocks, linear head.

    Trained with Adam on shuffled mini-batches. After every epoch the
    validation loss drives early stopping, and the best-validation weights
    are restored at the end of :meth:`fit`. Without an explicit validation
    set, a stratified ``validation_fraction`` of the training data is held
    out.

    Parameters mirror :class:`NetworkSpec`, :class:`AwfConfig` and
    :class:`LossConfig`; ``loss`` is one of ``"CE"``, ``"CS"``, ``"BC"``,
    ``"FL"``. ``class_counts=None`` derives the counts from ``y``.
    """

    def __init__(self, num_awf_blocks=3, stem="small_cnn", stem_channels=(8, 16, 32), groups=None,
                 expansion_ratio=2, weighting_variant="grouped_linear", channel_mixer=True,
                 awf_mixer=True, loss="BC", alpha=0.5, lam=0.8, t=2.0, focal_gamma=2.0,
                 sign_convention="convex", class_counts=None, learning_rate=1e-4, batch_size=16,
                 max_epochs=30, patience=20, min_delta=1e-4, rotation_degrees=10.0,
                 validation_fraction=0.15, calibration_bins=15, n_threads=None, random_state=0,
                 verbose=False):
        self.num_awf_blocks = num_awf_blocks
        self.stem = stem
        self.stem_channels = stem_channels
        self.groups = groups
        self.expansion_ratio = expansion_ratio
        self.weighting_variant = weighting_variant
        self.channel_mixer = channel_mixer
        self.awf_mixer = awf_mixer
        self.loss = loss
        self.alpha = alpha
        self.lam = lam
        self.t = t
        self.focal_gamma = focal_gamma
        self.sign_convention = sign_convention
        self.class_counts = class_counts
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.min_delta = min_delta
        self.rotation_degrees = rotation_degrees
        self.validation_fraction = validation_fraction
        self.calibration_bins = calibration_bins
        self.n_threads = n_threads
        self.random_state = random_state
        self.verbose = verbose

    # ------------------------------------------------------------ configs
    def network_spec(self, input_shape, num_classes):
        return NetworkSpec(self.stem, list(self.stem_channels), self.num_awf_blocks, num_classes,
                           tuple(input_shape[1:]), input_shape[0])

    def awf_config(self):
        return AwfConfig(None, self.groups, self.expansion_ratio, self.weighting_variant,
                         self.channel_mixer, self.awf_mixer)

    def loss_config(self, class_counts):
        return LossConfig(self.loss, self.alpha, self.lam, self.t, list(class_counts),
                          self.focal_gamma, self.sign_convention)

    # ---------------------------------------------------------------- fit
    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float32)
        check_classification_targets(y)
        X = _as_images(X)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if X_val is None:
            X, y_enc, X_val, y_val_enc = self._holdout(X, y_enc)
        else:
            X_val = _as_images(check_array(X_val, allow_nd=True, dtype=np.float32))
            y_val_enc = np.searchsorted(self.classes_, np.asarray(y_val))
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch normalization)")

        with threadpool_limits(limits=self.n_threads):
            self._fit(X, y_enc, X_val, y_val_enc)
        return self

    def _holdout(self, X, y):
        rng = np.random.default_rng(self.random_state)
        val_idx = []
        for c in np.unique(y):
            idx = rng.permutation(np.flatnonzero(y == c))
            val_idx.append(idx[:max(1, int(round(self.validation_fraction * idx.size)))])
        val_idx = np.sort(np.concatenate(val_idx))
        train_mask = np.ones(len(y), dtype=bool)
        train_mask[val_idx] = False
        return X[train_mask], y[train_mask], X[val_idx], y[val_idx]

    def _fit(self, X, y, X_val, y_val):
        num_classes = len(self.classes_)
        counts = self.class_counts
        if counts is None:
            counts = np.bincount(y, minlength=num_classes).tolist()
        self.class_counts_ = [int(c) for c in counts]
        self.loss_config_ = self.loss_config(self.class_counts_).validate(num_classes)
        self.network_spec_ = self.network_spec(X.shape[1:], num_classes)
        self.awf_config_ = self.awf_config()
        self.net_ = build_awfnet(self.network_spec_, self.awf_config_, seed=self.random_state)
        self.n_features_in_ = int(np.prod(X.shape[1:]))

        seeds = np.random.SeedSequence(self.random_state).spawn(2)
        shuffle_rng, augment_rng = (np.random.default_rng(s) for s in seeds)
        optimizer = Adam(self.net_.parameters(), lr=self.learning_rate)
        stopper = EarlyStopping(self.patience, self.min_delta)
        best_state = None
        self.history_ = []

        for epoch in range(1, self.max_epochs + 1):
            train_loss = self._train_epoch(X, y, optimizer, shuffle_rng, augment_rng)
            val_loss, report = self._evaluate(X_val, y_val)
            improved = stopper.update(val_loss, epoch)
            if improved:
                best_state = [(name, np.array(a, copy=True)) for name, a in self.net_.state_arrays()]
            self.history_.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                                  "report": report, "best": improved})
            if self.verbose:
                logger.info("epoch %d train %.4f val %.4f b_acc %.4f", epoch, train_loss, val_loss, report.b_acc)
            if stopper.should_stop:
                break

        self.best_epoch_ = stopper.best_epoch
        self.net_.load_state_arrays(best_state)
        self.net_.eval()

    def _train_epoch(self, X, y, optimizer, shuffle_rng, augment_rng):
        self.net_.train()
        order = shuffle_rng.permutation(len(y))
        total, seen = 0.0, 0
        for start in range(0, len(order), self.batch_size):
            idx = order[start:start + self.batch_size]
            if len(idx) < 2:  # BN cannot normalize a single sample
                continue
            xb = random_rotate(X[idx], augment_rng, self.rotation_degrees).astype(np.float32)
            out = compute_loss(self.net_(Tensor(xb)), y[idx], self.loss_config_)
            value = out.value.item()
            if not np.isfinite(value):
                op = first_nonfinite_op(out.value)
                raise DivergenceError(f"loss became non-finite; first bad op: {op}", op)
            optimizer.zero_grad()
            out.value.backward()
            optimizer.step()
            total += value * len(idx)
            seen += len(idx)
        return total / seen

    def _logits(self, X, batch_size=64):
        self.net_.eval()
        chunks = []
        with no_grad():
            for start in range(0, len(X), batch_size):
                chunks.append(self.net_(Tensor(X[start:start + batch_size])).data)
        return np.concatenate(chunks)

    def _evaluate(self, X, y):
        logits = self._logits(X)
        with no_grad():
            loss = compute_loss(Tensor(logits), y, self.loss_config_)
        probs = softmax_np(logits)
        report = metric_report(PredictionSet(probs, y, positive_class=min(1, len(self.classes_) - 1)),
                               self.calibration_bins)
        return loss.value.item(), report

    # ---------------------------------------------------------- inference
    def decision_function(self, X):
        check_is_fitted(self, "net_")
        X = _as_images(check_array(X, allow_nd=True, dtype=np.float32))
        return self._logits(X)

    def predict_proba(self, X):
        return softmax_np(self.decision_function(X))

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def report(self, X, y):
        """Full screening + calibration :class:`MetricReport` on ``(X, y)``."""
        y_enc = np.searchsorted(self.classes_, np.asarray(y))
        probs = self.predict_proba(X)
        return metric_report(PredictionSet(probs, y_enc, positive_class=min(1, len(self.classes_) - 1)),
                             self.calibration_bins)
