"""The `attngan` command: synth / augment / train / infer / eval / gradcheck.

Exit codes: 0 success, 1 validation error (bad flags, unusable inputs),
2 runtime or numeric error. All randomness is governed by --seed; with
ATTNGAN_THREADS=1 (the default) every subcommand is bitwise re-runnable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .checkpoint import CheckpointFormatError, load_checkpoint
from .data import (DatasetError, augment, default_train_count, load_dataset,
                   normalize, select_pairs, split, write_dataset,
                   _resize_area_u8, load_image_rgb, save_image_rgb, to_hwc_u8)
from .errors import ConfigError
from .gradcheck import DEFAULT_TOLERANCE, gradcheck, registered_ops
from .losses import LossWeights
from .metrics import evaluate
from .model import ModelConfig
from .synth import synth_dataset
from .tensor import NumericError, ShapeError, TapeError, Tensor
from .trainer import TrainConfig, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="attngan",
        description="Attention-guided cyclic GAN for satellite cloud removal.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", help="write a synthetic cloudy/clean dataset",
                       formatter_class=fmt)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", type=int, default=64, help="number of pairs")
    p.add_argument("--size", type=int, default=64, help="image side in pixels")
    p.add_argument("--seed", type=int, default=42, help="RNG seed")
    p.add_argument("--config", default=None, help="JSON config file; flags override it")

    p = sub.add_parser("augment", help="materialize an augmented copy of a dataset",
                       formatter_class=fmt)
    p.add_argument("--data", required=True, help="input dataset directory")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--ops", default="rot90,flip_h,flip_v",
                   help="comma-separated augmentation ops")
    p.add_argument("--size", type=int, default=None, help="resize on load (native if unset)")
    p.add_argument("--seed", type=int, default=42, help="RNG seed")
    p.add_argument("--config", default=None, help="JSON config file; flags override it")

    p = sub.add_parser("train", help="train on a paired dataset", formatter_class=fmt)
    p.add_argument("--data", required=True, help="dataset directory (manifest split honored)")
    p.add_argument("--out", required=True, help="run directory for checkpoints and log")
    p.add_argument("--size", type=int, default=64, help="image side in pixels")
    p.add_argument("--epochs", type=int, default=30, help="training epochs")
    p.add_argument("--batch", type=int, default=1, help="batch size")
    p.add_argument("--lr", type=float, default=2e-4, help="Adam learning rate")
    p.add_argument("--masks", type=int, default=2, help="attention masks incl. background")
    p.add_argument("--seed", type=int, default=42, help="RNG seed")
    p.add_argument("--lambda-cyc", type=float, default=10.0, help="cycle loss weight")
    p.add_argument("--lambda-pix", type=float, default=1.0,
                   help="paired pixel loss weight (0 = unpaired mode)")
    p.add_argument("--lambda-adv", type=float, default=1.0, help="adversarial loss weight")
    p.add_argument("--lambda-att-adv", type=float, default=1.0,
                   help="attention-guided adversarial loss weight")
    p.add_argument("--decay-start", type=int, default=None,
                   help="epoch where linear lr decay begins (epochs/2 if unset)")
    p.add_argument("--config", default=None, help="JSON config file; flags override it")

    p = sub.add_parser("infer", help="translate one cloudy image", formatter_class=fmt)
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--in", dest="input", required=True, help="input PNG")
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--dump-masks", default=None,
                   help="directory for attention masks as grayscale PNGs")
    p.add_argument("--seed", type=int, default=42, help="RNG seed (inference is deterministic)")
    p.add_argument("--config", default=None, help="JSON config file; flags override it")

    p = sub.add_parser("eval", help="score a checkpoint on the test split",
                       formatter_class=fmt)
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", default=".", help="output directory for report and grid")
    p.add_argument("--report", default=None, help="report path (default <out>/report.json)")
    p.add_argument("--seed", type=int, default=42, help="RNG seed (evaluation is deterministic)")
    p.add_argument("--config", default=None, help="JSON config file; flags override it")

    p = sub.add_parser("gradcheck", help="finite-difference check of registered ops",
                       formatter_class=fmt)
    p.add_argument("--ops", default="all", help="comma-separated op names, or 'all'")
    p.add_argument("--count", type=int, default=10, help="trials per op")
    p.add_argument("--seed", type=int, default=42, help="RNG seed")
    p.add_argument("--config", default=None, help="JSON config file; flags override it")

    return parser


def _explicit_flags(argv: list[str]) -> set[str]:
    flags = set()
    for token in argv:
        if token.startswith("--"):
            flags.add(token[2:].split("=", 1)[0].replace("-", "_"))
    return flags


def _merge_config_file(ns: argparse.Namespace, parser: _Parser, argv: list[str]) -> None:
    if not getattr(ns, "config", None):
        return
    try:
        with open(ns.config, encoding="utf-8") as f:
            file_cfg = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {ns.config}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {ns.config}: {exc}") from exc
    if not isinstance(file_cfg, dict):
        raise ConfigError(f"config file {ns.config}: expected a flat JSON object")

    sub_parser = parser._subparsers._group_actions[0].choices[ns.command]
    actions = {a.dest: a for a in sub_parser._actions
               if a.dest not in ("help", "config")}
    explicit = _explicit_flags(argv)
    for raw_key, value in file_cfg.items():
        key = raw_key.replace("-", "_")
        if key not in actions:
            raise ConfigError(f"unknown config key {raw_key!r} for {ns.command}")
        if key in explicit:
            continue  # command line wins
        action = actions[key]
        try:
            setattr(ns, key, action.type(value) if action.type and value is not None else value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {raw_key!r}: {exc}") from exc


def _echo_config(ns: argparse.Namespace) -> None:
    effective = {k: v for k, v in sorted(vars(ns).items()) if k != "config"}
    print(f"[attngan] effective config: {json.dumps(effective)}", file=sys.stderr)


def _training_pairs(data_dir: str, size: int | None):
    manifest, pairs = load_dataset(data_dir, size)
    if manifest.train_ids:
        return manifest, select_pairs(pairs, manifest.train_ids)
    return manifest, pairs


def _cmd_synth(ns) -> None:
    manifest = synth_dataset(ns.count, ns.size, ns.seed, ns.out)
    manifest = split(manifest, default_train_count(len(manifest.ids)), ns.seed)
    manifest.save()
    print(f"[attngan] wrote {len(manifest.ids)} pairs "
          f"({len(manifest.train_ids)} train / {len(manifest.test_ids)} test) to {ns.out}",
          file=sys.stderr)


def _cmd_augment(ns) -> None:
    ops = [o.strip() for o in ns.ops.split(",") if o.strip()]
    if not ops:
        raise ConfigError("--ops must name at least one augmentation")
    manifest, pairs = load_dataset(ns.data, ns.size)
    expanded, provenance = augment(pairs, ops, ns.seed)
    manifest.ids = [p.id for p in expanded]
    manifest.train_ids, manifest.test_ids = [], []
    manifest.seed = ns.seed
    manifest.provenance = provenance
    write_dataset(ns.out, expanded, manifest)
    print(f"[attngan] wrote {len(expanded)} pairs to {ns.out}", file=sys.stderr)


def _cmd_train(ns) -> None:
    cfg = TrainConfig(
        epochs=ns.epochs,
        batch_size=ns.batch,
        lr=ns.lr,
        decay_start=ns.decay_start,
        seed=ns.seed,
        weights=LossWeights(
            lambda_adv=ns.lambda_adv,
            lambda_att_adv=ns.lambda_att_adv,
            lambda_cyc=ns.lambda_cyc,
            lambda_pix=ns.lambda_pix,
        ),
        model=ModelConfig(image_size=ns.size, n_masks=ns.masks),
    )
    _, pairs = _training_pairs(ns.data, ns.size)
    state = train(pairs, cfg, ns.out)
    print(f"[attngan] trained {cfg.epochs} epochs ({state.step} steps); "
          f"final checkpoint in {ns.out}", file=sys.stderr)


def _cmd_infer(ns) -> None:
    state = load_checkpoint(ns.ckpt)
    size = state.model.cfg.image_size
    hwc = _resize_area_u8(load_image_rgb(ns.input), size)
    chw = np.ascontiguousarray(normalize(hwc).transpose(2, 0, 1))
    out = state.model.gen_xy(Tensor(chw[None]))
    os.makedirs(os.path.dirname(ns.out) or ".", exist_ok=True)
    save_image_rgb(ns.out, to_hwc_u8(out.fused.data[0]))
    if ns.dump_masks:
        os.makedirs(ns.dump_masks, exist_ok=True)
        attention = out.attention.data[0]
        from PIL import Image
        for i in range(attention.shape[0]):
            mask_u8 = np.rint(np.clip(attention[i], 0, 1) * 255).astype(np.uint8)
            Image.fromarray(mask_u8, mode="L").save(
                os.path.join(ns.dump_masks, f"mask_{i}.png"), format="PNG")
    print(f"[attngan] wrote {ns.out}", file=sys.stderr)


def _cmd_eval(ns) -> None:
    state = load_checkpoint(ns.ckpt)
    manifest, pairs = load_dataset(ns.data, state.model.cfg.image_size)
    test_pairs = select_pairs(pairs, manifest.test_ids) if manifest.test_ids else pairs
    os.makedirs(ns.out, exist_ok=True)
    report_path = ns.report or os.path.join(ns.out, "report.json")
    grid_path = os.path.join(ns.out, "grid.png")
    report = evaluate(state, test_pairs, report_path, grid_path)
    print(f"[attngan] evaluated {len(test_pairs)} pairs: "
          f"psnr {report.summary['psnr_db_mean']:.2f} dB "
          f"(baseline {report.baseline['psnr_db_mean']:.2f}), "
          f"ssim {report.summary['ssim_mean']:.4f} "
          f"(baseline {report.baseline['ssim_mean']:.4f})", file=sys.stderr)


def _cmd_gradcheck(ns) -> None:
    if ns.ops.strip() == "all":
        names = registered_ops()
    else:
        names = [o.strip() for o in ns.ops.split(",") if o.strip()]
    failures = []
    for name in names:
        try:
            report = gradcheck(name, trials=ns.count, seed=ns.seed)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        status = "PASS" if report.passed else "FAIL"
        print(f"{name:24s} max_rel_error={report.max_rel_error:.3e} "
              f"points={report.points} {status}")
        if not report.passed:
            failures.append(name)
    if failures:
        raise NumericError(
            f"gradcheck failed for {', '.join(failures)} (tolerance {DEFAULT_TOLERANCE})"
        )


_HANDLERS = {
    "synth": _cmd_synth,
    "augment": _cmd_augment,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        _merge_config_file(ns, parser, argv)
        _echo_config(ns)
        _HANDLERS[ns.command](ns)
        return 0
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (NumericError, TapeError) as exc:
        print(f"attngan: numeric error: {exc}", file=sys.stderr)
        return 2
    except ShapeError as exc:
        print(f"attngan: shape error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DatasetError, CheckpointFormatError) as exc:
        print(f"attngan: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"attngan: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"attngan: I/O error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything else is a runtime failure
        print(f"attngan: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
