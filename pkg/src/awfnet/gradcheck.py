"""Central finite-difference oracle for analytic backward passes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DeterminismError
from .tensor import Tensor, backward


@dataclass
class GradReport:
    op_name: str
    max_rel_error: float
    worst_index: int
    passed: bool
    tolerance: float = 1e-3
    num_checked: int = 0
    worst_analytic: float = 0.0
    worst_numeric: float = 0.0

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.op_name}: max_rel_error={self.max_rel_error:.3e} "
                f"(tol {self.tolerance:g}, worst index {self.worst_index}: analytic {self.worst_analytic:.6g} "
                f"vs numeric {self.worst_numeric:.6g}, {self.num_checked} entries)")


def _scalarize(out, projection):
    if out.size == 1:
        return out.reshape(())
    from .functional import mul, sum as tsum
    return tsum(mul(out, projection))


def gradcheck(f, inputs, eps=1e-3, tol=1e-3, op_name=None, max_entries=None, seed=0):
    """Compare the analytic gradient of ``f()`` w.r.t. ``inputs`` with central differences.

    ``f`` takes no arguments and reads ``inputs`` by closure; every input's
    data is temporarily promoted to float64 while probing. Non-scalar outputs
    are reduced with a fixed random projection. ``max_entries`` caps the
    number of probed entries per input (a seeded subset is drawn) for large
    networks.
    """
    op_name = op_name or getattr(f, "__name__", "f")
    rng = np.random.default_rng([seed, 0x9C])
    saved = [(t.data, t.grad, t.requires_grad) for t in inputs]
    try:
        for t in inputs:
            t.data = t.data.astype(np.float64)
            t.grad = None
            t.requires_grad = True
        out = f()
        projection = rng.standard_normal(out.shape) if out.size > 1 else None
        scalar = _scalarize(out, projection)
        base = scalar.item()
        backward(scalar)
        analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.astype(np.float64)
                    for t in inputs]

        def value():
            return _scalarize(f(), projection).item()

        if value() != base:
            raise DeterminismError(f"{op_name}: forward value drifted between identical calls")

        worst, worst_idx, checked = 0.0, -1, 0
        worst_pair = (0.0, 0.0)
        offset = 0
        for t, a in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
            a_flat = a.reshape(-1)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + eps
                fp = value()
                flat[i] = orig - eps
                fm = value()
                flat[i] = orig
                num = (fp - fm) / (2 * eps)
                rel = abs(a_flat[i] - num) / max(abs(a_flat[i]), abs(num), 1e-8)
                checked += 1
                if rel > worst:
                    worst, worst_idx = rel, offset + int(i)
                    worst_pair = (float(a_flat[i]), float(num))
            offset += flat.size
        if value() != base:
            raise DeterminismError(f"{op_name}: forward value drifted during probing")
    finally:
        for t, (data, grad, req) in zip(inputs, saved):
            t.data, t.grad, t.requires_grad = data, grad, req
    return GradReport(op_name, worst, worst_idx, worst <= tol, tol, checked, *worst_pair)


def tensors(*arrays, dtype=np.float64):
    """Convenience: wrap arrays as gradient-tracking tensors."""
    return [Tensor(a, requires_grad=True, dtype=dtype) for a in arrays]
