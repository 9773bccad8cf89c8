"""Single-level orthonormal Haar analysis/synthesis over the spatial axes.

Subband naming follows the usual separable convention, with the first letter
for the filter along the width and the second along the height:

* ``ll``: low/low, the approximation
* ``lh``: low along width, high along height (horizontal detail)
* ``hl``: high along width, low along height (vertical detail)
* ``hh``: high/high (diagonal detail)

For a 2x2 block ``[[a, b], [c, d]]``::

    ll = (a + b + c + d) / 2      lh = (a + b - c - d) / 2
    hl = (a - b + c - d) / 2      hh = (a - b - c + d) / 2

The 4x4 matrix mapping the block to its subbands is orthogonal and symmetric,
so synthesis applies the same matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, GeometryError
from .functional import getitem, stack
from .tensor import Tensor

SQRT1_2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class HaarBasis:
    low: tuple = (SQRT1_2, SQRT1_2)
    high: tuple = (SQRT1_2, -SQRT1_2)

    def block_matrix(self):
        """4x4 map from a flattened 2x2 block (a, b, c, d) to (ll, lh, hl, hh)."""
        lo, hi = np.asarray(self.low), np.asarray(self.high)
        rows = []
        for fw, fh in ((lo, lo), (lo, hi), (hi, lo), (hi, hi)):
            rows.append(np.outer(fh, fw).ravel())
        return np.array(rows)


@dataclass
class SubbandSet:
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def __post_init__(self):
        shapes = {t.shape for t in self}
        if len(shapes) != 1:
            raise DimensionError("subbands must share one shape", *sorted(shapes))

    def __iter__(self):
        return iter((self.ll, self.lh, self.hl, self.hh))

    @property
    def shape(self):
        return self.ll.shape


def _analysis(x):
    B, C, H, W = x.shape
    blocks = x.reshape(B, C, H // 2, 2, W // 2, 2)
    a = blocks[:, :, :, 0, :, 0]
    b = blocks[:, :, :, 0, :, 1]
    c = blocks[:, :, :, 1, :, 0]
    d = blocks[:, :, :, 1, :, 1]
    return np.stack([a + b + c + d, a + b - c - d, a - b + c - d, a - b - c + d]) * 0.5


def _synthesis(s):
    ll, lh, hl, hh = s
    _, B, C, h, w = s.shape
    out = np.empty((B, C, h, 2, w, 2), dtype=s.dtype)
    out[:, :, :, 0, :, 0] = ll + lh + hl + hh
    out[:, :, :, 0, :, 1] = ll + lh - hl - hh
    out[:, :, :, 1, :, 0] = ll - lh + hl - hh
    out[:, :, :, 1, :, 1] = ll - lh - hl + hh
    return (out * 0.5).reshape(B, C, 2 * h, 2 * w)


def haar_analysis(x):
    """[B, C, H, W] -> stacked subbands [4, B, C, H/2, W/2] (ll, lh, hl, hh)."""
    if x.ndim != 4:
        raise DimensionError("dwt2 expects [B, C, H, W]", x.shape)
    H, W = x.shape[2:]
    if H < 2 or W < 2 or H % 2 or W % 2:
        raise GeometryError(
            f"dwt2 needs even spatial dims >= 2, got {H}x{W}; pad the input before the transform"
        )
    return Tensor._from_op(_analysis(x.data), (x,), lambda g: (_synthesis(g),), "dwt2")


def haar_synthesis(s):
    """Stacked subbands [4, B, C, h, w] -> [B, C, 2h, 2w]."""
    if s.ndim != 5 or s.shape[0] != 4:
        raise DimensionError("idwt2 expects stacked subbands [4, B, C, h, w]", s.shape)
    return Tensor._from_op(_synthesis(s.data), (s,), lambda g: (_analysis(g),), "idwt2")


def dwt2(x):
    stacked = haar_analysis(x)
    return SubbandSet(*(getitem(stacked, i) for i in range(4)))


def idwt2(s):
    if not isinstance(s, SubbandSet):
        s = SubbandSet(*s)
    return haar_synthesis(stack(list(s)))
