#!/usr/bin/env python3
"""Nine-point resolution study: line profiles through the upper row of targets.

    python scripts/point_target_study.py --out runs/points [--ckpt runs/desk/run_full/final.ckpt ...]

Simulates the nine-point phantom at 60 dB, reconstructs it with DAS, UBP and
any learned method whose checkpoint is given, and writes ``profiles.csv``
(one column per method) plus PATN/PGM images of every reconstruction.
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from pat_ynet.data import simulate_from_phantom
from pat_ynet.evaluate import VARIANT_METHOD, reconstruct_single
from pat_ynet.geometry import ImagingGeometry
from pat_ynet.io import write_pgm, write_tensor
from pat_ynet.metrics import line_profile
from pat_ynet.phantoms import nine_point_centers, point_phantom
from pat_ynet.train import load_checkpoint


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default="runs/points")
    p.add_argument("--ckpt", nargs="*", default=[], help="checkpoints of learned variants to include")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    args = p.parse_args()

    geom = ImagingGeometry()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gt = point_phantom(radius=args.radius).astype(np.float32)
    sino, _ = simulate_from_phantom(gt, args.seed, geom)

    images = {"gt": gt}
    for method in ("das", "ubp"):
        images[method], _ = reconstruct_single(sino, method, geom)
    for ckpt in args.ckpt:
        _, _, header = load_checkpoint(ckpt)
        method = VARIANT_METHOD[header["model"]["variant"]]
        images[method], _ = reconstruct_single(sino, method, geom, ckpt)

    row = nine_point_centers()[0][0]
    profiles = {m: line_profile(np.clip(img, 0, 1) if m != "gt" else img, row) for m, img in images.items()}
    with open(out / "profiles.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["col"] + list(profiles))
        for c in range(geom.image_shape[1]):
            w.writerow([c] + [f"{profiles[m][c]:.6g}" for m in profiles])
    for m, img in images.items():
        write_tensor(out / f"{m}.patn", img)
        write_pgm(out / f"{m}.pgm", img)
    print(f"profile along row {row} for {', '.join(profiles)} written to {out / 'profiles.csv'}")


if __name__ == "__main__":
    main()
