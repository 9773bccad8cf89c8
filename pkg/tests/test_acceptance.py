"""Release acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and echoed in the pytest terminal summary (see
conftest.py). Criteria 6-8 train on the default synthetic task and take
several minutes on one core.

Run standalone with ``python tests/test_acceptance.py``.
"""
import math
import os
import sys
import tempfile
import time
from itertools import product

import numpy as np
import pytest

from awfnet import checkpoint
from awfnet.config import build_configs
from awfnet.data import load_dataset
from awfnet.exceptions import CorruptCheckpointError
from awfnet.gradsuite import run_gradient_suite
from awfnet.losses import (LossConfig, balance_factors, bc_loss, ce_gradient_closed_form, ce_loss, cs_loss,
                           softmax_np)
from awfnet.metrics import PredictionSet, auc, calibration_errors, classification_metrics
from awfnet.network import AWFBlock, AwfConfig, NetworkSpec, build_awfnet
from awfnet.tensor import Tensor, backward
from awfnet.training import CHECKPOINT_NAME, train
from awfnet.wavelet import dwt2, idwt2

RESULTS = {}

# pinned from the seed-0 reference run: AWFNet-3 peaked at 0.966, the bare stem at 0.862
BLOCK_MARGIN = 0.05


def record(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    return passed


_runs = {}


def reference_run(name, **options):
    """Train once per configuration per session on the default synthetic task."""
    if name not in _runs:
        out_dir = tempfile.mkdtemp(prefix=f"awf_{name}_")
        net_spec, awf_cfg, train_cfg, data_spec = build_configs(options)
        start = time.perf_counter()
        rec = train(net_spec, awf_cfg, train_cfg, load_dataset(data_spec), data_spec, out_dir)
        _runs[name] = (rec, out_dir, time.perf_counter() - start)
    return _runs[name]


def test_criterion_1_wavelet():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_rec, worst_energy = 0.0, 0.0
    for _ in range(50):
        shape = (int(rng.integers(1, 4)), int(rng.integers(1, 5)), 2 * int(rng.integers(1, 9)),
                 2 * int(rng.integers(1, 9)))
        x = rng.standard_normal(shape).astype(np.float32)
        bands = dwt2(Tensor(x))
        worst_rec = max(worst_rec, float(np.max(np.abs(idwt2(bands).data - x))))
        e_in = float(np.sum(x.astype(np.float64) ** 2))
        e_out = sum(float(np.sum(b.data.astype(np.float64) ** 2)) for b in bands)
        worst_energy = max(worst_energy, abs(e_out - e_in) / e_in)
    elapsed = time.perf_counter() - start
    ok = worst_rec <= 1e-5 and worst_energy <= 1e-5 and elapsed < 1.0
    assert record(1, ok, f"max recon err {worst_rec:.2e}, max energy rel err {worst_energy:.2e}, "
                         f"{elapsed:.3f}s (limits 1e-5, 1e-5, 1s)")


def test_criterion_2_gradient_suite():
    start = time.perf_counter()
    results = run_gradient_suite(seeds=5, include_network=True)
    elapsed = time.perf_counter() - start
    failed = [r for r in results if not r.passed]
    seeds = {r.op_name.split("[")[1] for r in results}
    ok = not failed and len(seeds) >= 5 and elapsed < 120
    worst = max(results, key=lambda r: r.max_rel_error / r.tolerance)
    assert record(2, ok, f"{len(results) - len(failed)}/{len(results)} checks over {len(seeds)} seeds, "
                         f"worst {worst.op_name} {worst.max_rel_error:.2e} (tol {worst.tolerance:g}), "
                         f"{elapsed:.1f}s (limit 120s)"), "\n".join(map(str, failed))


def test_criterion_3_loss_oracles():
    rng = np.random.default_rng(3)
    z, y = rng.standard_normal((8, 3)), rng.integers(0, 3, 8)
    zt = Tensor(z, requires_grad=True, dtype=np.float64)
    backward(ce_loss(zt, y).value)
    grad_err = float(np.max(np.abs(zt.grad - (softmax_np(z) - np.eye(3)[y]) / 8)))
    grad_err = max(grad_err, float(np.max(np.abs(ce_gradient_closed_form(z, y) - zt.grad))))

    cfg = LossConfig("CS", class_counts=[300, 100], lam=0.8, t=2.0)
    S1 = balance_factors(softmax_np([[0.0, 1.0]])[0], [300, 100], 0, 0.8, 2.0)[1]
    cs = cs_loss(Tensor([[0.0, 1.0]], dtype=np.float64), [0], cfg).value.item()
    example_err = max(abs(S1 - 20.0299), abs(cs - 4.0154))
    # independent scalar evaluation of the same example
    oracle = math.log(1 + math.exp(0.8) * 9 * math.e)
    oracle_err = abs(cs - oracle)

    zb = Tensor(z[:, :2], dtype=np.float64)
    yb = y % 2
    ce = ce_loss(zb, yb).value.item()
    alpha0 = abs(bc_loss(zb, yb, LossConfig("BC", alpha=0.0, class_counts=[300, 100])).value.item() - ce)
    ones = np.ones((8, 2))
    convex = abs(bc_loss(zb, yb, LossConfig("BC", class_counts=[300, 100]), ones).value.item() - ce)
    literal = abs(bc_loss(zb, yb, LossConfig("BC", class_counts=[300, 100], sign_convention="literal"),
                          ones).value.item())
    ok = grad_err <= 1e-6 and example_err <= 1e-4 and oracle_err <= 1e-9 and alpha0 == 0.0 and convex <= 1e-6 and literal <= 1e-6
    assert record(3, ok, f"CE grad err {grad_err:.1e}; S_1={S1:.4f}, CS={cs:.4f}; alpha=0 diff {alpha0:.1e}, "
                         f"S=1 convex diff {convex:.1e}, literal {literal:.1e}")


def test_criterion_4_metric_oracles():
    rng = np.random.default_rng(4)
    worst_auc = 0.0
    for trial in range(60):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))
        pos, neg = scores[labels == 1], scores[labels == 0]
        pairs = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in product(pos, neg))
        got = auc(PredictionSet(np.stack([1 - scores, scores], 1), labels))
        worst_auc = max(worst_auc, abs(got - pairs / (len(pos) * len(neg))))
    worked = auc(PredictionSet(np.array([[0.1, 0.9], [0.2, 0.8], [0.6, 0.4], [0.7, 0.3]]), [1, 0, 1, 0]))
    ece, mce = calibration_errors(PredictionSet(np.array([[0.9, 0.1], [0.9, 0.1]]), [0, 1]))
    const_ok = True
    for C in (2, 3, 4, 7):
        probs = np.zeros((10 * C, C))
        probs[:, 0] = 1.0
        const_ok &= classification_metrics(PredictionSet(probs, np.arange(10 * C) % C)).b_acc == 1.0 / C
    ok = worst_auc <= 1e-12 and worked == 0.75 and abs(ece - 0.4) <= 1e-9 and abs(mce - 0.4) <= 1e-9 and const_ok
    assert record(4, ok, f"AUC vs pair count max diff {worst_auc:.1e} (60 vectors), worked AUC {worked}, "
                         f"ECE {ece:.12f} MCE {mce:.12f}, constant b-ACC == 1/C: {const_ok}")


def test_criterion_5_ablation_separability():
    spec = lambda n: NetworkSpec(num_awf_blocks=n)
    bare, full = build_awfnet(spec(0), seed=0), build_awfnet(spec(3), seed=0)
    bare_params = dict(bare.named_parameters())
    shared = [(n, p) for n, p in full.named_parameters() if not n.startswith("blocks.")]
    identical = (len(shared) == len(bare_params)
                 and all(np.array_equal(p.data, bare_params[n].data) for n, p in shared)
                 and bare.num_parameters() == bare.stem.num_parameters() + bare.head.num_parameters())
    x = Tensor(np.random.default_rng(5).standard_normal((2, 1, 64, 64)))
    same_logits = np.array_equal(bare.eval()(x).data, build_awfnet(spec(0), seed=0).eval()(x).data)

    cfg = AwfConfig(channels=32, groups=8)
    mixer_only = AWFBlock(AwfConfig(channels=32, groups=8, awf_mixer=False), np.random.default_rng(0))
    full_block = AWFBlock(cfg, np.random.default_rng(0))
    xb = Tensor(np.random.default_rng(6).standard_normal((2, 32, 8, 8)))
    distinct = (mixer_only.aglw is None and mixer_only.num_parameters() < full_block.num_parameters()
                and not np.allclose(mixer_only(xb).data, full_block(xb).data))
    net_mixer_only = build_awfnet(spec(3), AwfConfig(awf_mixer=False), seed=0)
    runs = net_mixer_only(x).shape == (2, 2)
    ok = identical and same_logits and distinct and runs
    assert record(5, ok, f"0-block params identical to stem+head: {identical}; "
                         f"channel-mixer-only builds and differs from full AWF: {distinct and runs}")


@pytest.mark.slow
def test_criterion_6_synthetic_regression():
    awf, _, t_awf = reference_run("awf3_bc", blocks=3)
    base, _, t_base = reference_run("awf0_bc", blocks=0)
    peak_awf, peak_base = awf.peak_val("b_acc"), base.peak_val("b_acc")
    epochs = len(awf.epochs)
    total = t_awf + t_base
    ok = peak_awf >= 0.90 and epochs <= 30 and peak_awf - peak_base >= BLOCK_MARGIN and total <= 600
    assert record(6, ok, f"AWFNet-3 peak val b-ACC {peak_awf:.4f} (>= 0.90) in {epochs} epochs; "
                         f"stem baseline {peak_base:.4f}, margin {peak_awf - peak_base:+.4f} "
                         f"(>= {BLOCK_MARGIN}); {total:.0f}s (limit 600s)")


@pytest.mark.slow
def test_criterion_7_calibration_direction():
    bc, _, _ = reference_run("awf3_bc", blocks=3)
    ce, _, _ = reference_run("awf3_ce", blocks=3, loss="CE")
    b, c = bc.test_report, ce.test_report
    ece_ok = b.ece <= c.ece + 0.01
    bacc_ok = b.b_acc >= c.b_acc - 0.005
    assert record(7, ece_ok and bacc_ok,
                  f"test ECE BC {b.ece:.4f} vs CE {c.ece:.4f} (need <= CE + 0.01: {ece_ok}); "
                  f"b-ACC BC {b.b_acc:.4f} vs CE {c.b_acc:.4f} (need >= CE - 0.005: {bacc_ok})")


@pytest.mark.slow
def test_criterion_8_determinism_and_persistence():
    first, first_dir, _ = reference_run("awf3_bc", blocks=3)
    second, second_dir, _ = reference_run("awf3_bc_repeat", blocks=3)
    csv_a = open(os.path.join(first_dir, "metrics.csv"), "rb").read()
    csv_b = open(os.path.join(second_dir, "metrics.csv"), "rb").read()
    same_csv = csv_a == csv_b

    ckpt = os.path.join(first_dir, CHECKPOINT_NAME)
    blob = open(ckpt, "rb").read()
    net_spec, awf_cfg, _, _ = build_configs({"blocks": 3})
    net = build_awfnet(net_spec, awf_cfg, seed=123)
    checkpoint.load_into(net, ckpt)
    round_trip = checkpoint.encode(net.state_arrays()) == blob

    rejected = 0
    corruptions = [blob[:-1], blob[:len(blob) // 2], blob[:-9] + bytes([blob[-9] ^ 1]) + blob[-8:],
                   b"AWFN0" + blob[5:]]
    for bad in corruptions:
        try:
            checkpoint.decode(bad)
        except CorruptCheckpointError:
            rejected += 1
    ok = same_csv and round_trip and rejected == len(corruptions)
    assert record(8, ok, f"metrics.csv bitwise identical across runs: {same_csv}; "
                         f"checkpoint round trip byte-identical: {round_trip}; "
                         f"corrupt files rejected {rejected}/{len(corruptions)}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
