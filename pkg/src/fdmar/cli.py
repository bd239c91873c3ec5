"""Command line entry points: simulate, train, eval, ablate, profile-plot.

Every subcommand accepts ``--config`` (flat key = value file) plus targeted
flag overrides; invalid input exits nonzero with a one-line diagnostic.
"""

import argparse
import sys
from pathlib import Path

from .config import TrainConfig
from .model import AblationVariant, build_model


def _add_config_args(parser):
    parser.add_argument("--config", type=Path, default=None,
                        help="flat key = value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--image-size", type=int, default=None)
    parser.add_argument("--max-steps", type=int, default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--extractor", type=str, default=None)


def _load_config(args) -> TrainConfig:
    overrides = {}
    for flag, key in (("seed", "seed"), ("image_size", "image_size"),
                      ("max_steps", "max_steps"), ("epochs", "epochs"),
                      ("extractor", "extractor")):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[key] = val
    if args.config is not None:
        return TrainConfig.from_file(args.config, overrides)
    return TrainConfig().replace(**overrides)


def _cmd_simulate(args) -> int:
    from .data import generate_dataset, save_dataset

    eta_set = [float(tok) for tok in args.eta_set.split(",") if tok.strip()]
    dataset = generate_dataset(args.n, args.size, eta_set, args.seed)
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} samples ({args.size}x{args.size}) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .data import load_dataset
    from .train import train

    cfg = _load_config(args)
    dataset = load_dataset(args.data)
    model = build_model(AblationVariant(args.variant), cfg)
    ckpt, log = train(model, dataset, cfg)
    save_checkpoint(ckpt, args.out)
    if args.log_csv:
        log.to_csv(args.log_csv)
    last = log.records[-1] if log.records else {}
    print(f"trained {ckpt.step} steps; final loss {last.get('loss', float('nan')):.5f}; "
          f"checkpoint at {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint, load_model_arrays
    from .data import load_dataset
    from .train import evaluate

    dataset = load_dataset(args.data)
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        cfg = TrainConfig.from_dict(ckpt.config)
        model = build_model(AblationVariant(args.variant), cfg)
        load_model_arrays(model, ckpt.arrays)
        report = evaluate(dataset, model, method=args.variant)
    else:
        report = evaluate(dataset, model=None, method="input")
    print(report.format_table())
    if args.out_csv:
        report.to_csv(args.out_csv)
    return 0


def _cmd_ablate(args) -> int:
    from .data import load_dataset
    from .train import ablate

    cfg = _load_config(args)
    dataset = load_dataset(args.data)
    report = ablate(dataset, cfg)
    print(report.format_table())
    if args.out_csv:
        report.to_csv(args.out_csv)
    return 0


def _cmd_profile_plot(args) -> int:
    from .data import read_array
    from .plots import profile_plot

    images = {}
    for spec in args.image:
        name, _, path = spec.partition("=")
        if not path:
            raise ValueError(f"expected NAME=PATH, got {spec!r}")
        images[name] = read_array(path)
    p0 = tuple(float(v) for v in args.start.split(","))
    p1 = tuple(float(v) for v in args.end.split(","))
    if len(p0) != 2 or len(p1) != 2:
        raise ValueError("endpoints must be 'row,col'")
    out = profile_plot(images, p0, p1, args.out, args.n_samples)
    print(f"wrote {out} and {out.with_suffix('.csv')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdmar",
        description="Metal artifact reduction at desk scale: simulation, "
                    "training, evaluation, ablation, profile plots.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a paired dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--eta-set", type=str, default="0.5,1.0,2.0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train a model variant")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--variant", type=str, default="full",
                   choices=[v.value for v in AblationVariant])
    p.add_argument("--log-csv", type=Path, default=None)
    _add_config_args(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint (or the raw input)")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--variant", type=str, default="full",
                   choices=[v.value for v in AblationVariant])
    p.add_argument("--out-csv", type=Path, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="train and score every variant")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out-csv", type=Path, default=None)
    _add_config_args(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("profile-plot", help="intensity profiles along a line")
    p.add_argument("--image", action="append", required=True,
                   metavar="NAME=PATH", help="repeatable")
    p.add_argument("--start", type=str, required=True, help="row,col")
    p.add_argument("--end", type=str, required=True, help="row,col")
    p.add_argument("--n-samples", type=int, default=100)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_profile_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
