"""Flat ``key = value`` run configuration shared by the CLI and run directories.

Keys are the CLI flag names without the leading dashes. A run directory's
``config`` file lists every resolved key, so ``awfnet train --config
<run>/config`` relaunches the identical run.
"""
from __future__ import annotations

from .data import DatasetSpec
from .exceptions import ConfigError
from .losses import LossConfig
from .network import AwfConfig, NetworkSpec
from .training import TrainConfig


def _intlist(text):
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


def _floatlist(text):
    return [float(v) for v in str(text).replace(" ", "").split(",") if v]


def _optional_int(text):
    return None if str(text).lower() in ("", "none", "auto") else int(text)


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _size(text):
    parts = str(text).lower().replace(" ", "").replace("x", ",").split(",")
    sizes = [int(p) for p in parts if p]
    return (sizes[0], sizes[0]) if len(sizes) == 1 else tuple(sizes[:2])


def _optional_str(text):
    return None if str(text).lower() in ("", "none") else str(text)


# key -> (section, attribute, parser)
OPTIONS = {
    "stem": ("network", "stem", str),
    "stem-channels": ("network", "stem_channels", _intlist),
    "blocks": ("network", "num_awf_blocks", int),
    "groups": ("awf", "groups", _optional_int),
    "expansion": ("awf", "expansion_ratio", int),
    "weighting": ("awf", "weighting_variant", str),
    "channel-mixer": ("awf", "channel_mixer", _bool),
    "awf-mixer": ("awf", "awf_mixer", _bool),
    "loss": ("loss", "kind", str.upper),
    "alpha": ("loss", "alpha", float),
    "lambda": ("loss", "lam", float),
    "t": ("loss", "t", float),
    "focal-gamma": ("loss", "focal_gamma", float),
    "sign-convention": ("loss", "sign_convention", str),
    "class-counts": ("loss", "class_counts", _intlist),
    "lr": ("train", "lr", float),
    "batch-size": ("train", "batch_size", int),
    "epochs": ("train", "max_epochs", int),
    "patience": ("train", "early_stop_patience", int),
    "min-delta": ("train", "early_stop_min_delta", float),
    "rotation": ("train", "random_rotation_degrees", float),
    "bins": ("train", "calibration_bins", int),
    "seed": ("train", "seed", int),
    "threads": ("train", "threads", int),
    "data-kind": ("dataset", "kind", str),
    "data-root": ("dataset", "root", _optional_str),
    "num-samples": ("dataset", "num_samples", int),
    "class-ratio": ("dataset", "class_ratio", _floatlist),
    "image-size": ("dataset", "image_size", _size),
    "contrast": ("dataset", "contrast", float),
    "data-seed": ("dataset", "seed", int),
}


def parse_config(text):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    options = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in OPTIONS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        options[key] = value
    return options


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


def dump_config(options):
    return "".join(f"{key} = {_format(options[key])}\n" for key in OPTIONS if key in options)


def build_configs(options):
    """Resolve option strings (or already-typed values) into the four config objects.

    The dataset seed defaults to the run seed when ``data-seed`` is absent.
    """
    sections = {"network": NetworkSpec(), "awf": AwfConfig(), "loss": LossConfig(),
                "train": TrainConfig(), "dataset": DatasetSpec()}
    for key, raw in options.items():
        if raw is None:
            continue
        if key not in OPTIONS:
            raise ConfigError(f"unknown option {key!r}")
        section, attr, parse = OPTIONS[key]
        try:
            value = parse(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
        setattr(sections[section], attr, value)
    if "data-seed" not in options or options["data-seed"] is None:
        sections["dataset"].seed = sections["train"].seed
    sections["loss"].kind = sections["loss"].kind.upper()
    sections["train"].loss = sections["loss"]
    sections["network"].input_size = tuple(sections["dataset"].image_size)
    sections["dataset"].class_ratio = tuple(sections["dataset"].class_ratio)
    return sections["network"], sections["awf"], sections["train"], sections["dataset"]


def flatten_snapshot(snapshot):
    """Invert :func:`build_configs` on a RunRecord config snapshot."""
    options = {}
    for key, (section, attr, _) in OPTIONS.items():
        if section == "loss":
            source = snapshot["train"]["loss"]
        else:
            source = snapshot.get(section) or {}
        if attr in source:
            options[key] = source[attr]
    return options
