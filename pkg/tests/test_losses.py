import math

import numpy as np
import pytest

from awfnet.exceptions import ConfigError, DimensionError, LabelError
from awfnet.gradcheck import gradcheck
from awfnet.losses import (LossConfig, balance_factors, batch_balance_factors, bc_loss, ce_gradient_closed_form,
                           ce_loss, compute_loss, cs_loss, focal_loss, softmax_np)
from awfnet.tensor import Tensor, backward


def z64(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad, dtype=np.float64)


def cfg(**kw):
    kw.setdefault("class_counts", [300, 100])
    return LossConfig(**kw)


class TestCrossEntropy:
    def test_uniform(self):
        assert ce_loss(z64([[0.0, 0.0]]), [0]).value.item() == pytest.approx(math.log(2), abs=1e-12)

    def test_saturated(self):
        assert ce_loss(z64([[50.0, 0.0]]), [0]).value.item() <= 1e-8

    def test_formula_and_gradient_oracle(self):
        rng = np.random.default_rng(0)
        z, y = rng.standard_normal((4, 3)), np.array([0, 2, 1, 2])
        expected = np.mean([math.log(sum(math.exp(v) for v in row)) - row[k] for row, k in zip(z, y)])
        zt = z64(z)
        out = ce_loss(zt, y)
        assert out.value.item() == pytest.approx(expected, abs=1e-6)
        backward(out.value)
        onehot = np.eye(3)[y]
        np.testing.assert_allclose(zt.grad, (softmax_np(z) - onehot) / 4, atol=1e-6)
        np.testing.assert_allclose(ce_gradient_closed_form(z, y), zt.grad, atol=1e-12)

    def test_single_sample_gradient(self):
        np.testing.assert_allclose(ce_gradient_closed_form(np.zeros((1, 2)), [0]), [[-0.5, 0.5]])

    def test_class_sums_have_case_split_signs(self):
        rng = np.random.default_rng(1)
        z, y = rng.standard_normal((20, 3)), np.repeat(0, 20)
        g = ce_gradient_closed_form(z, y).sum(axis=0)
        assert g[0] < 0 and np.all(g[1:] > 0)

    def test_gradcheck(self):
        z = z64(np.random.default_rng(2).standard_normal((5, 3)))
        y = np.array([0, 1, 2, 1, 0])
        assert gradcheck(lambda: ce_loss(z, y).value, [z], eps=1e-5, tol=1e-6).passed

    def test_bad_labels(self):
        with pytest.raises(LabelError):
            ce_loss(z64(np.zeros((2, 3))), [0, 3])
        with pytest.raises(LabelError):
            ce_loss(z64(np.zeros((2, 3))), [0, -1])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ce_loss(z64(np.zeros((2, 3))), [0, 1, 1])


class TestBalanceFactors:
    def test_uniform_balanced(self):
        np.testing.assert_array_equal(balance_factors(np.full(3, 1 / 3), [10, 10, 10], 0), np.ones(3))

    def test_worked_example(self):
        p = softmax_np([[0.0, 1.0]])[0]
        np.testing.assert_allclose(p, [0.26894, 0.73106], atol=1e-5)
        S = balance_factors(p, [300, 100], 0, lam=0.8, t=2.0)
        assert S[0] == 1.0
        assert S[1] == pytest.approx(math.exp(0.8) * 9, rel=1e-9)
        assert S[1] == pytest.approx(20.0299, abs=1e-4)

    def test_rare_target_never_inflates(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = rng.dirichlet(np.ones(4))
            S = balance_factors(p, [50, 40, 30, 5], 3)
            T = np.where(p <= p[3], 1.0, (p / p[3]) ** 0.8)
            T[3] = 1.0
            np.testing.assert_allclose(S, T)

    def test_batch_matches_per_sample(self):
        rng = np.random.default_rng(4)
        probs = rng.dirichlet(np.ones(3), size=8)
        y = rng.integers(0, 3, 8)
        n = [70, 20, 10]
        expected = np.stack([balance_factors(p, n, k) for p, k in zip(probs, y)])
        np.testing.assert_allclose(batch_balance_factors(probs, y, n), expected)

    def test_count_scale_invariance(self):
        p = np.array([0.2, 0.5, 0.3])
        np.testing.assert_allclose(balance_factors(p, [60, 30, 10], 0), balance_factors(p, [600, 300, 100], 0))


class TestCSLoss:
    def test_collapses_to_ce_when_s_is_one(self):
        rng = np.random.default_rng(5)
        z, y = rng.standard_normal((6, 3)), rng.integers(0, 3, 6)
        c = LossConfig("CS", class_counts=[10, 10, 10])
        assert cs_loss(z64(z), y, c, np.ones((6, 3))).value.item() == ce_loss(z64(z), y).value.item()

    def test_worked_example(self):
        out = cs_loss(z64([[0.0, 1.0]]), [0], cfg(kind="CS"))
        p_hat = 1.0 / (math.exp(0.8) * 9 * math.e + 1.0)
        assert p_hat == pytest.approx(0.018035, abs=1e-6)
        assert out.value.item() == pytest.approx(-math.log(p_hat), abs=1e-9)
        assert out.value.item() == pytest.approx(4.0154, abs=1e-4)

    def test_monotone_in_t(self):
        z = z64([[0.3, 0.1, -0.2]])
        values = [cs_loss(z, [0], LossConfig("CS", t=t, class_counts=[90, 30, 10])).value.item()
                  for t in np.linspace(0.0, 4.0, 17)]
        assert np.all(np.diff(values) > 0)

    def test_never_below_ce(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            z, y = rng.standard_normal((5, 3)) * 2, rng.integers(0, 3, 5)
            c = LossConfig("CS", class_counts=[50, 30, 20])
            assert np.all(cs_loss(z64(z), y, c).per_sample >= ce_loss(z64(z), y).per_sample - 1e-12)

    def test_factors_held_constant(self):
        z = z64([[0.0, 1.0]])
        out = cs_loss(z, [0], cfg(kind="CS"))
        backward(out.value)
        S = balance_factors(softmax_np(z.data)[0], [300, 100], 0)
        q = softmax_np(z.data + np.log(S))
        np.testing.assert_allclose(z.grad, q - np.eye(2)[[0]], atol=1e-12)

    def test_requires_counts(self):
        with pytest.raises(ConfigError):
            cs_loss(z64(np.zeros((1, 2))), [0], LossConfig("CS"))


class TestBCLoss:
    def test_alpha_zero_is_ce(self):
        rng = np.random.default_rng(7)
        z, y = rng.standard_normal((6, 2)), rng.integers(0, 2, 6)
        got = bc_loss(z64(z), y, cfg(alpha=0.0)).value.item()
        assert got == ce_loss(z64(z), y).value.item()

    def test_alpha_one_is_cs(self):
        rng = np.random.default_rng(8)
        z, y = rng.standard_normal((6, 2)), rng.integers(0, 2, 6)
        got = bc_loss(z64(z), y, cfg(alpha=1.0)).value.item()
        assert got == pytest.approx(cs_loss(z64(z), y, cfg(kind="CS")).value.item(), abs=1e-12)

    def test_unit_factors_convex(self):
        rng = np.random.default_rng(9)
        z, y = rng.standard_normal((6, 2)), rng.integers(0, 2, 6)
        got = bc_loss(z64(z), y, cfg(), np.ones((6, 2))).value.item()
        assert got == pytest.approx(ce_loss(z64(z), y).value.item(), abs=1e-6)

    def test_unit_factors_literal_cancels(self):
        rng = np.random.default_rng(10)
        z, y = rng.standard_normal((6, 2)), rng.integers(0, 2, 6)
        got = bc_loss(z64(z), y, cfg(sign_convention="literal"), np.ones((6, 2))).value.item()
        assert abs(got) <= 1e-6

    def test_gradcheck_fixed_factors(self):
        rng = np.random.default_rng(11)
        z, y = z64(rng.standard_normal((6, 2))), rng.integers(0, 2, 6)
        S = batch_balance_factors(softmax_np(z.data), y, [300, 100])
        assert gradcheck(lambda: bc_loss(z, y, cfg(), S).value, [z], eps=1e-4, tol=1e-4).passed


class TestFocal:
    def test_gamma_zero_is_ce(self):
        rng = np.random.default_rng(12)
        z, y = rng.standard_normal((4, 3)), rng.integers(0, 3, 4)
        assert focal_loss(z64(z), y, 0.0).value.item() == pytest.approx(ce_loss(z64(z), y).value.item(), abs=1e-12)

    def test_certain_prediction_is_zero(self):
        assert focal_loss(z64([[60.0, 0.0]]), [0]).value.item() == pytest.approx(0.0, abs=1e-12)

    def test_scalar_oracle(self):
        rng = np.random.default_rng(13)
        z, y = rng.standard_normal((4, 3)), rng.integers(0, 3, 4)
        expected = []
        for row, k in zip(z, y):
            p = math.exp(row[k]) / sum(math.exp(v) for v in row)
            expected.append(-((1 - p) ** 2) * math.log(p))
        assert focal_loss(z64(z), y, 2.0).value.item() == pytest.approx(np.mean(expected), abs=1e-6)


def test_compute_loss_dispatch():
    z, y = z64(np.random.default_rng(14).standard_normal((3, 2))), np.array([0, 1, 1])
    for kind in ("CE", "CS", "BC", "FL"):
        assert np.isfinite(compute_loss(z, y, cfg(kind=kind)).value.item())
    with pytest.raises(ConfigError):
        LossConfig("XX").validate()
