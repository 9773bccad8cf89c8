"""Command-line entry point: ``awfnet {gen-data,train,eval,gradcheck,ablate}``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

from threadpoolctl import threadpool_limits

from .config import OPTIONS, build_configs, dump_config, parse_config
from .data import Dataset, DatasetSpec, load_dataset
from .exceptions import AWFError
from .losses import LOSS_KINDS
from .metrics import REPORT_FIELDS
from .training import CHECKPOINT_NAME, evaluate, read_run_record, train

logger = logging.getLogger("awfnet")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
ABLATION_HEADER = ("blocks", "loss", "best_epoch") + REPORT_FIELDS

DATA_KEYS = ("data-kind", "data-root", "num-samples", "class-ratio", "image-size", "contrast", "data-seed")


class UsageError(Exception):
    reported = False


class _Parser(argparse.ArgumentParser):
    """Raises UsageError instead of exiting, so ``main`` owns the exit code."""

    def error(self, message):
        self.print_help(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        exc = UsageError(message)
        exc.reported = True
        raise exc


def _add_globals(p, top=False):
    # subparsers suppress their defaults so `awfnet --seed 3 train` survives
    default = None if top else argparse.SUPPRESS
    p.add_argument("--seed", type=int, default=default, help="run / data seed (default 0)")
    p.add_argument("--threads", type=int, default=default, help="BLAS thread count (default 1)")
    p.add_argument("--out", default=default, help="output directory")


def _add_options(p, keys):
    for key in keys:
        if key in ("seed", "threads"):
            continue
        p.add_argument(f"--{key}", dest=key.replace("-", "_"), default=None, metavar="V")


def build_parser():
    parser = _Parser(prog="awfnet", description="AWFNet training, evaluation and checks.")
    _add_globals(parser, top=True)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic (or ingested) dataset directory")
    _add_globals(gen)
    _add_options(gen, DATA_KEYS)

    tr = sub.add_parser("train", help="train one configuration and write a run directory")
    _add_globals(tr)
    tr.add_argument("--config", help="key = value file (flags override it)")
    tr.add_argument("--data", help="dataset directory written by gen-data")
    _add_options(tr, OPTIONS)

    ev = sub.add_parser("eval", help="evaluate a run's checkpoint on a dataset split")
    _add_globals(ev)
    ev.add_argument("--run", required=True, help="run directory written by train")
    ev.add_argument("--checkpoint", help="checkpoint path (default <run>/model.awfn)")
    ev.add_argument("--data", help="dataset directory (default: regenerate from the run config)")
    ev.add_argument("--split", default="test", choices=("train", "val", "test"))

    gc = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    _add_globals(gc)
    gc.add_argument("--seeds", type=int, default=5)
    gc.add_argument("--no-network", action="store_true", help="skip the end-to-end network case")

    ab = sub.add_parser("ablate", help="sweep block counts and/or losses")
    _add_globals(ab)
    ab.add_argument("--config", help="key = value base configuration")
    ab.add_argument("--data", help="dataset directory written by gen-data")
    ab.add_argument("--blocks", default=None, help="comma list of AWF block counts, 0-5")
    ab.add_argument("--losses", default=None, help="comma list from CE,FL,CS,BC")
    _add_options(ab, [k for k in OPTIONS if k not in ("blocks", "loss")])
    return parser


def _collect(args, base=None):
    options = dict(base or {})
    for key in OPTIONS:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            options[key] = value
    return options


def _read_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        return parse_config(fh.read())


def _dataset(args, data_spec):
    """Load ``--data`` if given (adopting its recorded spec), else build from ``data_spec``."""
    if getattr(args, "data", None):
        spec_path = os.path.join(args.data, "spec.json")
        if os.path.exists(spec_path):
            with open(spec_path) as fh:
                recorded = json.load(fh)
            recorded["class_ratio"] = tuple(recorded["class_ratio"])
            recorded["image_size"] = tuple(recorded["image_size"])
            data_spec = DatasetSpec(**recorded)
        return Dataset.load(args.data), data_spec
    return load_dataset(data_spec), data_spec


def _cmd_gen_data(args):
    options = _collect(args)
    if args.seed is not None:
        options["seed"] = args.seed
    *_, data_spec = build_configs(options)
    dataset = load_dataset(data_spec)
    out = args.out or "data"
    dataset.save(out)
    with open(os.path.join(out, "spec.json"), "w") as fh:
        json.dump(data_spec.to_dict(), fh, indent=2)
    counts = {name: dataset.class_counts(name) for name in ("train", "val", "test")}
    print(f"wrote {out}: {counts}")
    return EXIT_OK


def _run(options, args, out_dir):
    net_spec, awf_cfg, train_cfg, data_spec = build_configs(options)
    dataset, data_spec = _dataset(args, data_spec)
    net_spec.num_classes = dataset.num_classes
    return train(net_spec, awf_cfg, train_cfg, dataset, data_spec, out_dir)


def _global_options(args, options):
    if args.seed is not None:
        options["seed"] = args.seed
    if args.threads is not None:
        options["threads"] = args.threads
    return options


def _cmd_train(args):
    options = _global_options(args, _collect(args, _read_config(args.config)))
    out = args.out or "run"
    record = _run(options, args, out)
    best = record.best_row()["val"]
    print(f"best epoch {record.best_epoch}: val b_acc {best['b_acc']:.4f}; "
          f"test b_acc {record.test_report.b_acc:.4f} ece {record.test_report.ece:.4f}")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_eval(args):
    record = read_run_record(args.run)
    with open(os.path.join(args.run, "config")) as fh:
        options = parse_config(fh.read())
    net_spec, awf_cfg, train_cfg, data_spec = build_configs(options)
    dataset, _ = _dataset(args, data_spec)
    net_spec.num_classes = record.config["network"]["num_classes"]
    net_spec.input_size = tuple(record.config["network"]["input_size"])
    if net_spec.num_awf_blocks:
        awf_cfg = awf_cfg.resolve(net_spec.stem_channels[-1])
    ckpt = args.checkpoint or os.path.join(args.run, CHECKPOINT_NAME)
    with threadpool_limits(limits=args.threads or train_cfg.threads):
        report = evaluate(ckpt, net_spec, awf_cfg, dataset[args.split], train_cfg.calibration_bins)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, f"eval_{args.split}.json"), "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def _cmd_gradcheck(args):
    from .gradsuite import run_gradient_suite

    with threadpool_limits(limits=args.threads or 1):
        results = run_gradient_suite(seeds=args.seeds, include_network=not args.no_network,
                                     report=print)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} gradient checks passed")
    return EXIT_OK if not failed else EXIT_RUNTIME


def _split_list(text, cast):
    return [cast(v) for v in text.split(",") if v.strip()]


def _cmd_ablate(args):
    base = _global_options(args, _collect(args, _read_config(args.config)))
    if args.blocks is None and args.losses is None:
        raise UsageError("ablate needs --blocks and/or --losses")
    try:
        blocks = _split_list(args.blocks, int) if args.blocks else [int(base.get("blocks", 3))]
    except ValueError:
        raise UsageError(f"--blocks must be a comma list of integers, got {args.blocks!r}") from None
    losses = _split_list(args.losses, lambda s: s.strip().upper()) if args.losses else [
        str(base.get("loss", "BC")).upper()]
    bad = [b for b in blocks if not 0 <= b <= 5]
    if bad:
        raise UsageError(f"block counts must lie in 0..5, got {bad}")
    unknown = [k for k in losses if k not in LOSS_KINDS]
    if unknown:
        raise UsageError(f"unknown loss kinds {unknown}; choose from {', '.join(LOSS_KINDS)}")

    rows = []
    for loss in losses:
        for n in blocks:
            options = dict(base, blocks=n, loss=loss)
            out_dir = os.path.join(args.out, f"blocks{n}_{loss.lower()}") if args.out else None
            record = _run(options, args, out_dir)
            report = record.test_report
            rows.append([n, loss, record.best_epoch] + [getattr(report, k) for k in REPORT_FIELDS])

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ABLATION_HEADER)
    for row in rows:
        writer.writerow(row[:3] + [f"{v:.6f}" for v in row[3:]])
    table = buf.getvalue()
    print(table, end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "ablation.csv"), "w") as fh:
            fh.write(table)
        with open(os.path.join(args.out, "config"), "w") as fh:
            fh.write(dump_config(base))
    return EXIT_OK


COMMANDS = {"gen-data": _cmd_gen_data, "train": _cmd_train, "eval": _cmd_eval,
            "gradcheck": _cmd_gradcheck, "ablate": _cmd_ablate}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        if not exc.reported:
            sys.stderr.write(f"awfnet: error: {exc}\n")
        return EXIT_USAGE
    except (AWFError, OSError, ValueError) as exc:
        sys.stderr.write(f"awfnet: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
