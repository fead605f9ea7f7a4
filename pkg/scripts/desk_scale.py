#!/usr/bin/env python3
"""Desk-scale comparison: Y-Net (full) and the U-Net baseline against DAS/UBP.

    python scripts/desk_scale.py --out runs/desk

Prints the mean metrics per method and writes report.csv, summary.json,
difference images and both training runs under --out.
"""
import argparse
import json
import logging

from threadpoolctl import threadpool_limits

from pat_ynet.experiments import DeskScaleConfig, run_desk_scale


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default="runs/desk")
    p.add_argument("--epochs", type=int, default=DeskScaleConfig.epochs)
    p.add_argument("--base-channels", type=int, default=DeskScaleConfig.base_channels)
    p.add_argument("--workers", type=int, default=1, help="processes for dataset generation")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    cfg = DeskScaleConfig(epochs=args.epochs, base_channels=args.base_channels, workers=args.workers)
    with threadpool_limits(1):
        summary = run_desk_scale(args.out, cfg)
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
