"""Command-line entry point: ``pat-ynet gen|train|eval|recon|schema``.

Exit status is 0 when every requested output was written, 2 for usage
errors and 1 for any other failure (invalid config, missing dataset or
checkpoint, geometry mismatch).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import RUN_CONFIG_SCHEMA, ConfigError, configure_threads, load_run_config
from .data import DatasetManifest, build_dataset
from .evaluate import ALL_METHODS, VARIANT_METHOD, check_methods, evaluate, is_learned, reconstruct_single
from .io import FormatError, read_tensor, write_pgm, write_png, write_tensor
from .train import TrainingDiverged, train
from .ynet import VARIANTS

log = logging.getLogger("pat_ynet")

# accepted by ``recon --method``; "ynet" is shorthand for the full variant
RECON_METHODS = ("das", "ubp", "ynet") + tuple(m for m in ALL_METHODS if is_learned(m))


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pat-ynet", description="Photoacoustic reconstruction toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--config", help="run configuration (JSON)")
    g.add_argument("--count", type=_positive_int, required=True, help="number of samples")
    g.add_argument("--test-count", type=_nonneg_int, help="samples held out as the test split")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="dataset directory")
    g.add_argument("--workers", type=_positive_int, default=1)
    g.add_argument("--no-previews", action="store_true")

    t = sub.add_parser("train", help="train a Y-Net variant")
    t.add_argument("--config")
    t.add_argument("--data", help="dataset directory (default: config data.dataset_dir)")
    t.add_argument("--out", required=True, help="run directory for checkpoints and loss log")
    t.add_argument("--variant", choices=VARIANTS, help="overrides the config variant")
    t.add_argument("--epochs", type=_positive_int, help="overrides the config epoch count")
    t.add_argument("--seed", type=int, help="overrides the config training seed")
    t.add_argument("--resume", help="checkpoint to resume from")

    e = sub.add_parser("eval", help="score reconstructions on the test split")
    e.add_argument("--config")
    e.add_argument("--data")
    e.add_argument("--ckpt", nargs="*", default=[], help="checkpoints for the learned methods")
    e.add_argument("--methods", default="das,ubp", help=f"comma list from {','.join(ALL_METHODS)}")
    e.add_argument("--diff", help="directory for |gt - f| difference images")
    e.add_argument("--out", default="report.csv", help="metrics CSV path")

    r = sub.add_parser("recon", help="reconstruct one sinogram or image")
    r.add_argument("--config")
    r.add_argument("--input", required=True, help="PATN sinogram (or DAS image for unet)")
    r.add_argument("--method", required=True, choices=RECON_METHODS)
    r.add_argument("--ckpt")
    r.add_argument("--out", required=True, help="output PATN path; .pgm/.png previews are written beside it")

    sub.add_parser("schema", help="print the run-configuration JSON schema")
    return p


def cmd_gen(args, cfg) -> int:
    test_count = args.test_count if args.test_count is not None else cfg.test_count
    if test_count > args.count:
        raise ValueError(f"--test-count {test_count} exceeds --count {args.count}")
    m = build_dataset(args.out, args.count, args.seed, cfg.geometry, test_count=test_count,
                      mask_paths=cfg.mask_paths or None, previews=not args.no_previews, workers=args.workers)
    c = m.counts
    print(f"wrote {c['total']} samples ({c['train']} train, {c['test']} test) to {m.root}")
    return 0


def _dataset(args, cfg) -> DatasetManifest:
    root = args.data or cfg.dataset_dir
    if not root:
        raise ConfigError("no dataset given (use --data or data.dataset_dir)")
    return DatasetManifest.load(root)


def cmd_train(args, cfg) -> int:
    manifest = _dataset(args, cfg)
    g = manifest.geometry
    model_cfg = dataclasses.replace(cfg.model, signal_shape=g.sinogram_shape, image_shape=g.image_shape,
                                    **({"variant": args.variant} if args.variant else {}))
    overrides = {k: v for k, v in (("epochs", args.epochs), ("seed", args.seed)) if v is not None}
    train_cfg = dataclasses.replace(cfg.train, **overrides)
    res = train(manifest, train_cfg, model_cfg, args.out, resume=args.resume)
    last = res.history[-1]["total"] if res.history else float("nan")
    print(f"trained {model_cfg.variant} for {train_cfg.epochs} epochs; final batch loss {last:.6g}")
    print(f"checkpoint: {res.checkpoint}")
    print(f"loss log: {res.log_path}")
    return 0


def cmd_eval(args, cfg) -> int:
    methods = check_methods(m.strip() for m in args.methods.split(",") if m.strip())
    if not methods:
        raise ValueError("--methods is empty")
    for c in args.ckpt:
        if not Path(c).exists():
            raise FileNotFoundError(f"checkpoint not found: {c}")
    manifest = _dataset(args, cfg)
    report = evaluate(manifest, args.ckpt, methods, out_csv=args.out, diff_dir=args.diff)
    for m, agg in report.aggregate().items():
        print(f"{m:24s} ssim {agg['ssim_mean']:.4f}  psnr {agg['psnr_db_mean']:.3f} dB  "
              f"snr {agg['snr_db_mean']:.3f} dB")
    print(f"report: {args.out}")
    return 0


def cmd_recon(args, cfg) -> int:
    method = VARIANT_METHOD["full"] if args.method == "ynet" else args.method
    arr = read_tensor(args.input)
    img, seconds = reconstruct_single(arr, method, cfg.geometry, checkpoint=args.ckpt)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(out, img)
    write_pgm(out.with_suffix(".pgm"), img)
    write_png(out.with_suffix(".png"), img)
    print(f"{method}: {img.shape[0]}x{img.shape[1]} image written to {out} in {seconds:.4f} s")
    return 0


def is_learned_choice(method: str) -> bool:
    return method == "ynet" or is_learned(method)


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "recon": cmd_recon}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "schema":
        print(json.dumps(RUN_CONFIG_SCHEMA, indent=2))
        return 0
    if args.command == "recon" and is_learned_choice(args.method) and not args.ckpt:
        parser.error(f"--method {args.method} requires --ckpt")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config)
        _limits = configure_threads(cfg.deterministic)  # noqa: F841 (kept alive for the run)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, FormatError, TrainingDiverged, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
