"""Batch evaluation and single-shot reconstruction."""
from __future__ import annotations

import csv
import math
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .beamform import das_reconstruct, ubp_reconstruct
from .data import DatasetManifest, load_split, normalize_sinogram
from .geometry import ImagingGeometry, check_sinogram
from .io import read_tensor, write_pgm, write_tensor
from .metrics import MetricsReport, ZeroBackgroundError, background_from_gt, psnr, snr, ssim
from .nn import Tensor
from .train import load_checkpoint
from .ynet import YNetModel, ynet_forward

VARIANT_METHOD = {"full": "ynet_full", "enc2_only_skips": "ynet_enc2_only_skips",
                  "enc1_only_skips": "ynet_enc1_only_skips", "unet_post": "unet"}
METHOD_VARIANT = {v: k for k, v in VARIANT_METHOD.items()}
CLASSICAL = ("gt", "das", "ubp")
ALL_METHODS = CLASSICAL + tuple(METHOD_VARIANT)
CSV_FIELDS = ("sample_id", "method", "ssim", "psnr_db", "snr_db")


def is_learned(method: str) -> bool:
    return method in METHOD_VARIANT


def check_methods(methods: Iterable[str]) -> List[str]:
    methods = list(methods)
    for m in methods:
        if m not in ALL_METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {ALL_METHODS}")
    return methods


def match_checkpoints(methods: Sequence[str], checkpoints: Sequence[Union[str, Path]]) -> Dict[str, YNetModel]:
    """Load one model per learned method, matched by the variant stored in
    each checkpoint."""
    found = {}
    for path in checkpoints:
        model, _, _ = load_checkpoint(path)
        found.setdefault(VARIANT_METHOD[model.config.variant], model)
    models = {}
    for m in methods:
        if is_learned(m):
            if m not in found:
                raise FileNotFoundError(f"no checkpoint supplied for learned method {m!r}")
            models[m] = found[m]
    return models


def infer(model: YNetModel, sinograms: Optional[np.ndarray], das: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Eval-mode forward pass over ``(N, 1, ...)`` arrays."""
    cfg = model.config
    outs = []
    for start in range(0, len(das), batch_size):
        sl = slice(start, start + batch_size)
        b = Tensor(sinograms[sl]) if cfg.uses_encoder1 else None
        fstar = Tensor(das[sl]) if cfg.uses_encoder2 else None
        f, _ = ynet_forward(model, b, fstar, training=False)
        outs.append(f.data)
    return np.concatenate(outs, axis=0)


def score(recon: np.ndarray, gt: np.ndarray) -> Tuple[float, float, float]:
    """(ssim, psnr_db, snr_db) on the reconstruction clamped to [0, 1]."""
    f = np.clip(recon, 0.0, 1.0)
    try:
        s = snr(f, background_from_gt(gt))
    except ZeroBackgroundError:
        s = math.inf
    return ssim(f, gt), psnr(f, gt), s


def evaluate(manifest: DatasetManifest, checkpoints: Sequence[Union[str, Path]], methods: Sequence[str],
             out_csv: Optional[Union[str, Path]] = None, diff_dir: Optional[Union[str, Path]] = None,
             batch_size: int = 8) -> MetricsReport:
    methods = check_methods(methods)
    models = match_checkpoints(methods, checkpoints)
    g = manifest.geometry
    need_sino = "ubp" in methods or any(m.config.uses_encoder1 for m in models.values())
    data = load_split(manifest, "test", with_sinograms=need_sino)
    entries = manifest.split("test")

    recons: Dict[str, np.ndarray] = {}
    for m in methods:
        if m == "gt":
            recons[m] = data.gt[:, 0]
        elif m == "das":
            recons[m] = data.das[:, 0]
        elif m == "ubp":
            recons[m] = np.stack([ubp_reconstruct(read_tensor(manifest.path(e.sinogram)), g) for e in entries])
        else:
            recons[m] = infer(models[m], data.sinograms, data.das, batch_size)[:, 0]

    report = MetricsReport()
    for k, sid in enumerate(data.ids):
        gt = data.gt[k, 0]
        for m in methods:
            report.add(sid, m, *score(recons[m][k], gt))
    if diff_dir is not None:
        d = Path(diff_dir)
        d.mkdir(parents=True, exist_ok=True)
        for m in methods:
            for k, sid in enumerate(data.ids):
                diff = np.abs(data.gt[k, 0] - np.clip(recons[m][k], 0, 1)).astype(np.float32)
                write_tensor(d / f"{sid}_{m}_diff.patn", diff)
                write_pgm(d / f"{sid}_{m}_diff.pgm", diff)
    if out_csv is not None:
        write_report_csv(out_csv, report)
    return report


def _fmt(v: float) -> str:
    return repr(float(v))


def write_report_csv(path: Union[str, Path], report: MetricsReport) -> None:
    """One row per (sample, method), then ``__mean__`` and ``__std__`` rows
    per method."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in report.rows:
            w.writerow([r["sample_id"], r["method"], _fmt(r["ssim"]), _fmt(r["psnr_db"]), _fmt(r["snr_db"])])
        for m, agg in report.aggregate().items():
            for stat in ("mean", "std"):
                w.writerow([f"__{stat}__", m] + [_fmt(agg[f"{k}_{stat}"]) for k in ("ssim", "psnr_db", "snr_db")])


def read_report_csv(path: Union[str, Path]) -> List[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("ssim", "psnr_db", "snr_db"):
            r[k] = float(r[k])
    return rows


def reconstruct_single(input_array: np.ndarray, method: str, geom: ImagingGeometry,
                       checkpoint: Optional[Union[str, Path]] = None) -> Tuple[np.ndarray, float]:
    """Reconstruct one input and return ``(image, seconds)``.

    ``input_array`` is a sinogram for das/ubp/Y-Net methods; the U-Net
    baseline also accepts an already beamformed image.
    """
    if method not in ALL_METHODS or method == "gt":
        raise ValueError(f"unknown reconstruction method {method!r}")
    arr = np.asarray(input_array)
    if method in ("das", "ubp"):
        t0 = time.perf_counter()
        s = check_sinogram(arr, geom)
        img = das_reconstruct(s, geom) if method == "das" else ubp_reconstruct(s, geom)
        img = img.astype(np.float32)
    else:
        if checkpoint is None:
            raise ValueError(f"method {method!r} needs a checkpoint")
        model, _, _ = load_checkpoint(checkpoint)
        if VARIANT_METHOD[model.config.variant] != method:
            raise ValueError(f"checkpoint holds variant {model.config.variant!r}, not {method!r}")
        # timing covers the reconstruction only, not checkpoint loading
        t0 = time.perf_counter()
        if arr.shape == geom.image_shape:
            if model.config.uses_encoder1:
                raise ValueError(f"method {method!r} needs a sinogram, got an image")
            sino, fstar = None, arr.astype(np.float32)
        else:
            s = check_sinogram(arr, geom)
            sino = normalize_sinogram(s)[None, None]
            fstar = das_reconstruct(s, geom).astype(np.float32)
        img = infer(model, sino, fstar[None, None])[0, 0]
    return img, time.perf_counter() - t0
