"""The project-wide gradient check suite (also exposed as ``awfnet gradcheck``).

Each case builds random float64 inputs for one differentiable op (or the whole
network) and compares its backward pass with central differences. Losses are
held to 1e-4, everything else to 1e-3. Network-level cases use a 1e-6 probe
step so that ReLU kinks are rarely straddled.
"""
from __future__ import annotations

import numpy as np

from . import functional as F
from .gradcheck import gradcheck
from .losses import LossConfig, batch_balance_factors, bc_loss, ce_loss, cs_loss, focal_loss, softmax_np
from .network import AWFBlock, AwfConfig, ChannelMixer, NetworkSpec, build_awfnet
from .tensor import Tensor
from .wavelet import dwt2, idwt2

OP_TOL = 1e-3
LOSS_TOL = 1e-4


def _t(rng, *shape, scale=1.0, offset=0.0):
    return Tensor(rng.standard_normal(shape) * scale + offset, requires_grad=True, dtype=np.float64)


def _op_cases(rng):
    x = _t(rng, 2, 3, 6, 6)
    w = _t(rng, 4, 3, 3, 3)
    b = _t(rng, 4)
    yield "conv2d", lambda: F.conv2d(x, w, b, stride=1, padding=1), [x, w, b], {}
    yield "conv2d_stride2", lambda: F.conv2d(x, w, b, stride=2, padding=1), [x, w, b], {}
    wd = _t(rng, 3, 1, 3, 3)
    bd = _t(rng, 3)
    yield "depthwise_conv2d", lambda: F.depthwise_conv2d(x, wd, bd), [x, wd, bd], {}
    gamma, beta = _t(rng, 3, offset=1.0), _t(rng, 3)
    rm, rv = np.zeros(3), np.ones(3)
    yield ("batch_norm_train", lambda: F.batch_norm(x, gamma, beta, rm, rv, True),
           [x, gamma, beta], {"eps": 1e-5})
    rm_eval, rv_eval = rng.standard_normal(3), rng.uniform(0.5, 2.0, 3)
    yield ("batch_norm_eval", lambda: F.batch_norm(x, gamma, beta, rm_eval, rv_eval, False),
           [x, gamma, beta], {})
    xg = _t(rng, 2, 8, 4, 4)
    gg, bg = _t(rng, 8, offset=1.0), _t(rng, 8)
    yield "group_norm", lambda: F.group_norm(xg, 4, gg, bg), [xg, gg, bg], {"eps": 1e-5}
    xl = _t(rng, 2, 2, 3, 2, 2)
    wl, bl = _t(rng, 2, 3, 3), _t(rng, 2, 3)
    yield "grouped_linear", lambda: F.grouped_linear(xl, wl, bl), [xl, wl, bl], {}
    a, c = _t(rng, 2, 3, 4, 4), _t(rng, 2, 3, 4, 4)
    yield "add", lambda: F.add(a, c), [a, c], {}
    yield "mul", lambda: F.mul(a, c), [a, c], {}
    yield "relu", lambda: F.relu(a), [a], {"eps": 1e-6}
    yield "sigmoid", lambda: F.sigmoid(a), [a], {}
    yield "concat_channels", lambda: F.concat_channels([a, c]), [a, c], {}
    yield "global_avg_pool", lambda: F.global_avg_pool(a), [a], {}
    xv, wv, bv = _t(rng, 4, 5), _t(rng, 3, 5), _t(rng, 3)
    yield "linear", lambda: F.linear(xv, wv, bv), [xv, wv, bv], {}
    yield "softmax", lambda: F.softmax(xv), [xv], {}
    yield "log_softmax", lambda: F.log_softmax(xv), [xv], {}
    xw = _t(rng, 2, 3, 8, 8)
    yield "dwt2", lambda: F.stack(list(dwt2(xw))), [xw], {}
    sb = [_t(rng, 2, 3, 4, 4) for _ in range(4)]
    yield "idwt2", lambda: idwt2(sb), sb, {}


def _block_cases(rng, seed):
    cfg = AwfConfig(channels=8, groups=2, expansion_ratio=2)
    mixer = ChannelMixer(8, 2, np.random.default_rng(seed))
    xm = _t(rng, 2, 8, 4, 4)
    yield "channel_mixer", lambda: mixer(xm), [xm] + mixer.parameters(), {"eps": 1e-6}
    block = AWFBlock(cfg, np.random.default_rng(seed))
    xb = _t(rng, 2, 8, 4, 4)
    yield "awf_block", lambda: block(xb), [xb] + block.parameters(), {"eps": 1e-6}


def _loss_cases(rng):
    z = _t(rng, 6, 3)
    y = rng.integers(0, 3, 6)
    cfg = LossConfig("BC", class_counts=[50, 20, 5])
    S = batch_balance_factors(softmax_np(z.data), y, cfg.class_counts)
    yield "ce_loss", lambda: ce_loss(z, y).value, [z], {"tol": LOSS_TOL, "eps": 1e-4}
    yield "cs_loss", lambda: cs_loss(z, y, cfg, S).value, [z], {"tol": LOSS_TOL, "eps": 1e-4}
    yield "bc_loss", lambda: bc_loss(z, y, cfg, S).value, [z], {"tol": LOSS_TOL, "eps": 1e-4}
    yield "focal_loss", lambda: focal_loss(z, y, 2.0).value, [z], {"tol": LOSS_TOL, "eps": 1e-4}


def _network_case(seed, max_entries):
    spec = NetworkSpec(stem_channels=[8, 16], num_awf_blocks=3, num_classes=2, input_size=(16, 16))
    net = build_awfnet(spec, AwfConfig(), seed=seed)
    net.train()
    x = Tensor(np.random.default_rng(seed).standard_normal((2, 1, 16, 16)), dtype=np.float64)
    y = np.array([0, 1])
    cfg = LossConfig("BC", class_counts=[3, 1])
    S = batch_balance_factors(softmax_np(net(x).data), y, cfg.class_counts)
    return ("awfnet+bc_loss", lambda: bc_loss(net(x), y, cfg, S).value, net.parameters(),
            {"eps": 1e-6, "max_entries": max_entries})


def run_gradient_suite(seeds=5, include_network=True, network_entries=4, report=None):
    """Run every case for ``seeds`` seeds; returns a list of GradReport."""
    results = []
    for seed in range(seeds):
        rng = np.random.default_rng(1000 + seed)
        cases = list(_op_cases(rng)) + list(_block_cases(rng, seed)) + list(_loss_cases(rng))
        if include_network:
            cases.append(_network_case(seed, network_entries))
        for name, f, inputs, kwargs in cases:
            kwargs = dict(kwargs)
            kwargs.setdefault("tol", OP_TOL)
            result = gradcheck(f, inputs, op_name=f"{name}[seed={seed}]", seed=seed, **kwargs)
            results.append(result)
            if report is not None:
                report(result)
    return results
