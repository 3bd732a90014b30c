"""Command line entry point: gen-data, train, eval, sample, plot."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .checkpoint import CheckpointError, load_checkpoint
from .layers import ConfigurationError
from .model import PRESETS
from .synthgen.dataset import Dataset, DatasetError, generate_dataset, make_splits, read_dataset, write_dataset
from .synthgen.scene import DEFAULT_CLASSES, TOY_CLASSES
from .synthgen.skeleton import default_skeleton, paper_skeleton
from .training import NumericalAbort, TrainConfig, train

log = logging.getLogger("pose2scene")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
CLASS_SETS = {"default": DEFAULT_CLASSES, "toy": TOY_CLASSES}
SKELETONS = {"default": default_skeleton, "paper": paper_skeleton}
SPLIT_KINDS = {"s1": "sequence", "s2": "room"}


def _data_dir(args) -> Path:
    path = args.data or os.environ.get("P2R_DATA_DIR")
    if not path:
        raise DatasetError("no dataset given: pass --data or set P2R_DATA_DIR")
    return Path(path)


def _load_config(path: str | None, overrides: dict, num_classes: int | None = None) -> TrainConfig:
    """Preset model defaults, then the YAML file, then command-line overrides.

    ``num_classes`` fills the model's class count unless the file sets it, in
    which case the two must agree.
    """
    raw: dict = {}
    if path:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{path}: top level must be a mapping")
    preset = raw.pop("preset", "desk")
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    model = PRESETS[preset].to_dict()
    for key, value in (raw.get("model") or {}).items():
        if key == "encoder":
            model["encoder"].update(value)
        elif key in model:
            model[key] = value
        else:
            raise ConfigurationError(f"unknown model option {key!r}")
    explicit = "num_classes" in (raw.get("model") or {})
    if num_classes is not None:
        if explicit and model["num_classes"] != num_classes:
            raise ConfigurationError(f"config has {model['num_classes']} classes, dataset has {num_classes}")
        model["num_classes"] = num_classes
    raw["model"] = model
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(raw)


def _split_ids(dataset: Dataset, split: str, seed: int, subset: str) -> list[int]:
    s = make_splits(dataset, SPLIT_KINDS[split], 0.9, np.random.default_rng(seed))
    return list(s.train_ids if subset == "train" else s.test_ids)


def cmd_gen_data(args) -> int:
    ds = generate_dataset(
        args.rooms,
        args.sequences_per_room,
        args.seed,
        class_set=CLASS_SETS[args.classes],
        skeleton=SKELETONS[args.skeleton](),
        max_objects=args.max_objects,
    )
    write_dataset(ds, args.out)
    print(f"wrote {len(ds.sequences)} sequences to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = read_dataset(_data_dir(args))
    config = _load_config(args.config, {"seed": args.seed}, dataset.num_classes)
    ids = _split_ids(dataset, args.split, config.seed, "train")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "history.jsonl", "w") as fh:
        result = train(config, dataset, ids, out, on_step=lambda r: fh.write(json.dumps(r) + "\n"))
    (out / "val_history.json").write_text(json.dumps(result.val_history, indent=1))
    print(f"trained {result.step} steps over {result.epoch} epochs; checkpoints in {out}")
    return EXIT_OK


def _eval_setup(args):
    ckpt = load_checkpoint(args.checkpoint)
    dataset = read_dataset(_data_dir(args))
    if list(dataset.class_names) != list(ckpt.class_names):
        raise ConfigurationError("checkpoint classes do not match the dataset")
    if dataset.skeleton.joint_count != ckpt.model.skeleton.joint_count:
        raise ConfigurationError("checkpoint skeleton does not match the dataset")
    seed = ckpt.config.seed if args.seed is None else args.seed
    return ckpt, dataset, seed


def cmd_eval(args) -> int:
    from .evaluation import evaluate

    ckpt, dataset, seed = _eval_setup(args)
    ids = _split_ids(dataset, args.split, ckpt.config.seed, args.subset)
    report, _ = evaluate(ckpt.model, dataset, ids, args.hypotheses, seed, args.out)
    print(report.table())
    return EXIT_OK


def cmd_sample(args) -> int:
    from .evaluation import sample, write_predictions

    ckpt, dataset, seed = _eval_setup(args)
    if args.sequence_id not in dataset.by_id():
        raise DatasetError(f"sequence {args.sequence_id} not in dataset")
    pred = sample(ckpt.model, dataset, args.sequence_id, args.hypotheses, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = write_predictions(out / f"sample_seq{args.sequence_id:05d}.json", [pred], dataset.class_names)
    print(f"wrote {len(pred.hypotheses)} hypotheses to {path}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .evaluation import read_predictions
    from .metrics import average_precision
    from .plotting import plot_class_ap, plot_pr_curves, plot_predictions

    preds, names = read_predictions(args.predictions)
    dataset = read_dataset(_data_dir(args))
    lookup = dataset.by_id()
    missing = [p.sequence_id for p in preds if p.sequence_id not in lookup]
    if missing:
        raise DatasetError(f"predictions reference unknown sequences {missing}")
    out = Path(args.out)
    paths = plot_predictions(preds, dataset, out, names)
    ap = average_precision([p.ml for p in preds], [lookup[p.sequence_id].scene for p in preds])
    paths.append(plot_pr_curves(ap.curves, names, out / "pr_curves.png"))
    paths.append(plot_class_ap({names[c]: v for c, v in ap.per_class_ap.items()}, out / "class_ap.png"))
    print(f"wrote {len(paths)} images to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pose2scene", description="Estimate object boxes from pose trajectories.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--rooms", type=int, default=10)
    p.add_argument("--sequences-per-room", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", choices=sorted(CLASS_SETS), default="default")
    p.add_argument("--skeleton", choices=sorted(SKELETONS), default="default")
    p.add_argument("--max-objects", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--split", choices=sorted(SPLIT_KINDS), default="s1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval", cmd_eval, "evaluate a checkpoint"), ("sample", cmd_sample, "sample hypotheses")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data")
        p.add_argument("--seed", type=int)
        p.add_argument("--hypotheses", type=int, default=10)
        p.add_argument("--out", required=True)
        if name == "eval":
            p.add_argument("--split", choices=sorted(SPLIT_KINDS), default="s1")
            p.add_argument("--subset", choices=["train", "test"], default="test")
        else:
            p.add_argument("--sequence-id", type=int, required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("plot", help="render prediction files")
    p.add_argument("--predictions", required=True)
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    if getattr(args, "hypotheses", 1) < 1:
        print("error: --hypotheses must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc} (batch dump: {exc.dump_path})", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigurationError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
