"""Cross-entropy, the balanced confidence loss family and a focal-loss baseline.

The confidence-boost loss rescales every competitor logit's exponential by a
factor ``S_k = T_k * M_k`` before normalizing:

    p_hat_j = exp(z_j) / (sum_{k != j} S_k exp(z_k) + exp(z_j))

which is a softmax over ``z + log S`` with ``S_j = 1``. ``T_k`` grows with the
probability ratio of an over-confident competitor, ``M_k`` with the
head-to-tail class-count ratio when the target is the more frequent class.
The factors are held constant during backward.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from .exceptions import ConfigError, DimensionError, LabelError
from .tensor import Tensor

LOSS_KINDS = ("CE", "CS", "BC", "FL")
PROB_FLOOR = 1e-12


@dataclass
class LossConfig:
    kind: str = "BC"
    alpha: float = 0.5
    lam: float = 0.8
    t: float = 2.0
    class_counts: list = field(default_factory=list)
    focal_gamma: float = 2.0
    sign_convention: str = "convex"

    def __post_init__(self):
        self.kind = self.kind.upper()

    def validate(self, num_classes=None):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}; choose from {LOSS_KINDS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.lam < 0 or self.t < 0:
            raise ConfigError("lambda and t must be non-negative")
        if self.sign_convention not in ("convex", "literal"):
            raise ConfigError("sign_convention must be 'convex' or 'literal'")
        if self.kind in ("CS", "BC"):
            if not self.class_counts or any(n < 1 for n in self.class_counts):
                raise ConfigError("class_counts must be positive for CS/BC losses")
            if num_classes is not None and len(self.class_counts) != num_classes:
                raise ConfigError(
                    f"class_counts has {len(self.class_counts)} entries for {num_classes} classes"
                )
        return self


@dataclass
class LossOutput:
    value: Tensor
    per_sample: np.ndarray

    def __float__(self):
        return self.value.item()


def _check(logits, targets):
    if logits.ndim != 2:
        raise DimensionError("logits must be [N, C]", logits.shape)
    targets = np.asarray(targets)
    N, C = logits.shape
    if N < 1:
        raise DimensionError("need at least one sample", logits.shape)
    if targets.shape != (N,):
        raise DimensionError("targets must be a length-N vector", targets.shape, logits.shape)
    if not np.issubdtype(targets.dtype, np.integer) or targets.min() < 0 or targets.max() >= C:
        raise LabelError(f"targets must be integers in [0, {C})")
    return targets


def _nll(log_probs, targets):
    N = log_probs.shape[0]
    picked = F.getitem(log_probs, (np.arange(N), targets))
    per_sample = -picked.data.astype(np.float64)
    return LossOutput(F.mul(F.mean(picked), -1.0), per_sample)


def ce_loss(logits, targets):
    targets = _check(logits, targets)
    return _nll(F.log_softmax(logits), targets)


def ce_gradient_closed_form(logits, targets):
    """d(ce_loss)/d(logits) = (softmax(z) - onehot(y)) / N."""
    targets = _check(logits, targets)
    p = softmax_np(logits.data if isinstance(logits, Tensor) else logits)
    p[np.arange(len(targets)), targets] -= 1.0
    return p / len(targets)


def balance_factors(p, n, target, lam=0.8, t=2.0):
    """Competitor scaling factors S = T * M for one sample; ``S[target] == 1``."""
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    pj = max(p[target], PROB_FLOOR)
    T = np.where(p <= p[target], 1.0, (np.maximum(p, PROB_FLOOR) / pj) ** lam)
    M = np.where(n[target] <= n, 1.0, (n[target] / n) ** t)
    S = T * M
    S[target] = 1.0
    return S


def batch_balance_factors(probs, targets, n, lam=0.8, t=2.0):
    """Vectorised :func:`balance_factors` over a batch of probability rows."""
    probs = np.asarray(probs, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    rows = np.arange(len(targets))
    pj = probs[rows, targets][:, None]
    T = np.where(probs <= pj, 1.0, (np.maximum(probs, PROB_FLOOR) / np.maximum(pj, PROB_FLOOR)) ** lam)
    nj = n[targets][:, None]
    M = np.where(nj <= n[None, :], 1.0, (nj / n[None, :]) ** t)
    S = T * M
    S[rows, targets] = 1.0
    return S


def softmax_np(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cs_loss(logits, targets, cfg: LossConfig, factors=None):
    """Confidence-boost loss. ``factors`` overrides the [N, C] matrix of S values,
    which is otherwise computed from the current (detached) softmax."""
    targets = _check(logits, targets)
    cfg.validate(logits.shape[1])
    if factors is None:
        S = batch_balance_factors(softmax_np(logits.data), targets, cfg.class_counts, cfg.lam, cfg.t)
    else:
        S = np.asarray(factors, dtype=np.float64)
        if S.shape != logits.shape:
            raise DimensionError("factors must match logits", S.shape, logits.shape)
    shifted = F.add(logits, Tensor(np.log(S), dtype=logits.dtype))
    return _nll(F.log_softmax(shifted), targets)


def _combine(a, b, wa, wb):
    value = F.add(F.mul(a.value, wa), F.mul(b.value, wb))
    return LossOutput(value, wa * a.per_sample + wb * b.per_sample)


def bc_loss(logits, targets, cfg: LossConfig, factors=None):
    """``alpha * CS + (1 - alpha) * CE``; the literal convention negates the CS term."""
    cs = cs_loss(logits, targets, cfg, factors)
    ce = ce_loss(logits, targets)
    sign = -1.0 if cfg.sign_convention == "literal" else 1.0
    return _combine(cs, ce, sign * cfg.alpha, 1.0 - cfg.alpha)


def focal_loss(logits, targets, gamma=2.0):
    targets = _check(logits, targets)
    N = logits.shape[0]
    log_p = F.getitem(F.log_softmax(logits), (np.arange(N), targets))
    if gamma == 0:
        weighted = log_p
    else:
        one_minus = F.relu(F.add(F.mul(F.exp(log_p), -1.0), 1.0))
        weighted = F.mul(F.power(one_minus, float(gamma)), log_p)
    per_sample = -weighted.data.astype(np.float64)
    return LossOutput(F.mul(F.mean(weighted), -1.0), per_sample)


def compute_loss(logits, targets, cfg: LossConfig, factors=None):
    kind = cfg.kind.upper()
    if kind == "CE":
        return ce_loss(logits, targets)
    if kind == "CS":
        return cs_loss(logits, targets, cfg, factors)
    if kind == "BC":
        return bc_loss(logits, targets, cfg, factors)
    if kind == "FL":
        return focal_loss(logits, targets, cfg.focal_gamma)
    raise ConfigError(f"unknown loss kind {cfg.kind!r}")
