"""The adaptive wavelet filter block and the AWFNet assembly."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import functional as F
from .exceptions import ConfigError, DimensionError, GeometryError
from .layers import (
    BasicBlock, BatchNorm2d, Conv2d, ConvBNReLU, DepthwiseConv2d, GroupNorm, Linear, Module,
    he_uniform,
)
from .tensor import Parameter
from .wavelet import SubbandSet, dwt2, idwt2

WEIGHTING_VARIANTS = ("grouped_linear", "identity", "scalar_gate")
STEMS = ("small_cnn", "resnet18_like")
SUBBANDS = ("ll", "lh", "hl", "hh")


@dataclass
class AwfConfig:
    """Hyperparameters of one AWF block.

    ``channels=None`` means "take the stem's output width". ``groups=None``
    picks G so that each group holds 4 channels (or 1 group when C < 4).
    """

    channels: int | None = None
    groups: int | None = None
    expansion_ratio: int = 2
    weighting_variant: str = "grouped_linear"
    channel_mixer: bool = True
    awf_mixer: bool = True

    def resolve(self, channels):
        groups = self.groups if self.groups is not None else max(1, channels // 4)
        cfg = AwfConfig(channels, groups, self.expansion_ratio, self.weighting_variant,
                        self.channel_mixer, self.awf_mixer)
        cfg.validate()
        return cfg

    @property
    def group_size(self):
        return self.channels // self.groups

    def validate(self):
        if self.channels is None or self.channels < 1:
            raise ConfigError(f"channels must be a positive int, got {self.channels}")
        if self.groups is None or self.groups < 1 or self.channels % self.groups:
            raise ConfigError(f"channels ({self.channels}) must be divisible by groups ({self.groups})")
        if self.expansion_ratio < 1:
            raise ConfigError("expansion_ratio must be >= 1")
        if self.weighting_variant not in WEIGHTING_VARIANTS:
            raise ConfigError(f"unknown weighting_variant {self.weighting_variant!r}")


@dataclass
class NetworkSpec:
    stem: str = "small_cnn"
    stem_channels: list = field(default_factory=lambda: [8, 16, 32])
    num_awf_blocks: int = 3
    num_classes: int = 2
    input_size: tuple = (64, 64)
    in_channels: int = 1

    def validate(self):
        if self.stem not in STEMS:
            raise ConfigError(f"unknown stem {self.stem!r}; choose from {STEMS}")
        if not self.stem_channels or any(c < 1 for c in self.stem_channels):
            raise ConfigError("stem_channels must be a non-empty list of positive ints")
        if not 0 <= self.num_awf_blocks <= 5:
            raise ConfigError("num_awf_blocks must lie in [0, 5]")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        H, W = self.input_size
        if self.num_awf_blocks > 0:
            h, w = self.stem_output_size()
            if h % 2 or w % 2 or h < 2 or w < 2:
                raise ConfigError(
                    f"stem output {h}x{w} is not even; AWF blocks need even feature maps "
                    f"(input {H}x{W})"
                )

    def stem_output_size(self):
        h, w = self.input_size
        # both stems halve the resolution once per entry in stem_channels
        for _ in self.stem_channels:
            h, w = (h - 1) // 2 + 1, (w - 1) // 2 + 1
        return h, w

    def to_dict(self):
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        return d


class ChannelMixer(Module):
    """BN -> 1x1 conv (C -> rC) -> 3x3 depthwise -> 1x1 conv (rC -> C) -> BN, no residual."""

    def __init__(self, channels, expansion_ratio, rng):
        hidden = channels * expansion_ratio
        self.bn_in = BatchNorm2d(channels)
        # the chain between the two BNs is linear, so conv biases would be cancelled
        self.expand = Conv2d(channels, hidden, 1, rng, bias=False)
        self.dwconv = DepthwiseConv2d(hidden, rng, bias=False)
        self.project = Conv2d(hidden, channels, 1, rng, bias=False)
        self.bn_out = BatchNorm2d(channels)

    def forward(self, x):
        return self.bn_out(self.project(self.dwconv(self.expand(self.bn_in(x)))))


class SubbandWeighting(Module):
    """Per-subband GroupNorm -> grouped linear -> ReLU -> grouped linear weights."""

    def __init__(self, cfg: AwfConfig, rng):
        G, S = cfg.groups, cfg.group_size
        self.groups, self.size = G, S
        self.norm = GroupNorm(G, cfg.channels)
        self.w1 = Parameter(he_uniform(rng, (G, S, S), S))
        self.b1 = Parameter(np.zeros((G, S)))
        self.w2 = Parameter(he_uniform(rng, (G, S, S), S))
        self.b2 = Parameter(np.zeros((G, S)))

    def forward(self, x):
        B, C, h, w = x.shape
        grouped = self.norm(x).reshape(B, self.groups, self.size, h, w)
        hidden = F.relu(F.grouped_linear(grouped, self.w1, self.b1))
        return F.grouped_linear(hidden, self.w2, self.b2).reshape(B, C, h, w)


class ScalarGate(Module):
    def __init__(self):
        self.gate = Parameter(np.ones(1))

    def forward(self, x):
        return F.mul(x, self.gate)


class AGLW(Module):
    """Adaptive group linear weighting applied independently to the four subbands.

    Every subband is multiplied elementwise by weights computed from its own
    normalized copy; the product uses the un-normalized subband.
    """

    def __init__(self, cfg: AwfConfig, rng):
        self.variant = cfg.weighting_variant
        if self.variant == "grouped_linear":
            self.bands = [SubbandWeighting(cfg, rng) for _ in SUBBANDS]
        elif self.variant == "scalar_gate":
            self.bands = [ScalarGate() for _ in SUBBANDS]
        else:
            self.bands = []

    def weights(self, band, i):
        if self.variant == "identity":
            return band
        return self.bands[i](band)

    def forward(self, s: SubbandSet) -> SubbandSet:
        return SubbandSet(*(F.mul(self.weights(band, i), band) for i, band in enumerate(s)))


class AWFBlock(Module):
    """Channel mixer followed by the wavelet token mixer and conv fusion.

    ``x_hat = mixer(x)``; ``x_out = x_hat + idwt2(aglw(dwt2(x_hat)))``;
    ``y = conv3x3(concat[x, conv1x1(x_out)])``.
    """

    def __init__(self, cfg: AwfConfig, rng):
        C = cfg.channels
        self.cfg = cfg
        self.mixer = ChannelMixer(C, cfg.expansion_ratio, rng) if cfg.channel_mixer else None
        self.aglw = AGLW(cfg, rng) if cfg.awf_mixer else None
        self.fuse_pointwise = Conv2d(C, C, 1, rng)
        self.fuse = Conv2d(2 * C, C, 3, rng, padding=1)

    def wavelet_path(self, x_hat, bypass_weighting=False):
        subbands = dwt2(x_hat)
        if not bypass_weighting:
            subbands = self.aglw(subbands)
        return F.add(x_hat, idwt2(subbands))

    def forward(self, x, bypass_weighting=False):
        if x.ndim != 4 or x.shape[1] != self.cfg.channels:
            raise DimensionError(f"AWF block expects {self.cfg.channels} channels", x.shape)
        H, W = x.shape[2:]
        if H % 2 or W % 2:
            raise GeometryError(f"AWF block needs even spatial dims, got {H}x{W}")
        x_hat = self.mixer(x) if self.mixer is not None else x
        x_out = self.wavelet_path(x_hat, bypass_weighting) if self.aglw is not None else x_hat
        return self.fuse(F.concat_channels([x, self.fuse_pointwise(x_out)]))


class SmallCNNStem(Module):
    def __init__(self, in_channels, channels, rng):
        widths = [in_channels] + list(channels)
        self.stages = [ConvBNReLU(widths[i], widths[i + 1], rng) for i in range(len(channels))]

    def forward(self, x):
        for stage in self.stages:
            x = stage(x)
        return x


class ResNetLikeStem(Module):
    """Strided 3x3 entry conv then two basic blocks per width, downsampling between widths."""

    def __init__(self, in_channels, channels, rng):
        self.entry = ConvBNReLU(in_channels, channels[0], rng, stride=2)
        blocks, prev = [], channels[0]
        for i, c in enumerate(channels):
            stride = 1 if i == 0 else 2
            blocks += [BasicBlock(prev, c, rng, stride=stride), BasicBlock(c, c, rng)]
            prev = c
        self.blocks = blocks

    def forward(self, x):
        x = self.entry(x)
        for block in self.blocks:
            x = block(x)
        return x


class AWFNet(Module):
    """Stem -> N AWF blocks -> global average pool -> linear classifier."""

    def __init__(self, spec: NetworkSpec, cfg: AwfConfig, seed=0):
        spec.validate()
        self.spec = spec
        self.cfg = cfg.resolve(spec.stem_channels[-1])
        stem_rng, awf_rng, head_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
        stem_cls = SmallCNNStem if spec.stem == "small_cnn" else ResNetLikeStem
        self.stem = stem_cls(spec.in_channels, spec.stem_channels, stem_rng)
        self.blocks = [AWFBlock(self.cfg, awf_rng) for _ in range(spec.num_awf_blocks)]
        self.head = Linear(spec.stem_channels[-1], spec.num_classes, head_rng)
        for name, p in self.named_parameters():
            p.name = name

    def features(self, x):
        x = self.stem(x)
        for block in self.blocks:
            x = block(x)
        return x

    def forward(self, x):
        expected = (self.spec.in_channels, *self.spec.input_size)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise DimensionError(f"network expects input [B, {expected[0]}, {expected[1]}, {expected[2]}]",
                                 x.shape)
        return self.head(F.global_avg_pool(self.features(x)))

    def state_arrays(self):
        """Ordered (name, array) pairs of every parameter and running statistic."""
        items = [(name, p.data) for name, p in self.named_parameters()]
        items += list(self.named_buffers())
        return items

    def load_state_arrays(self, arrays):
        params = dict(self.named_parameters())
        buffers = {name: buf for name, buf in self.named_buffers()}
        for name, value in arrays:
            if name in params:
                params[name].data = np.ascontiguousarray(value, dtype=params[name].dtype).reshape(params[name].shape)
            else:
                buffers[name][...] = value


def build_awfnet(spec: NetworkSpec, cfg: AwfConfig | None = None, seed=0) -> AWFNet:
    return AWFNet(spec, cfg or AwfConfig(), seed)


def forward(net: AWFNet, batch, mode="eval"):
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    net.train(mode == "train")
    return net(batch)
