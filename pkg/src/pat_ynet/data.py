"""Synthetic dataset generation and loading.

Each sample is produced by: vessel phantom -> forward projection ->
transducer band-pass -> 60 dB noise -> delay-and-sum.  The ground truth,
the noisy sinogram and the DAS image are stored as float32 PATN files; the
DAS image is computed from the stored (float32) sinogram so that
reconstructing a stored sinogram reproduces it bit for bit.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .acoustics import add_noise, apply_bandpass, forward_project
from .beamform import das_reconstruct, normalize_max_abs
from .geometry import ImagingGeometry
from .io import read_tensor, write_pgm, write_tensor
from .phantoms import compose_vessel_phantom, mask_source

TARGET_SNR_DB = 60.0
MANIFEST_NAME = "manifest.json"


@dataclass
class SampleEntry:
    id: str
    split: str
    gt: str
    sinogram: str
    das: str


@dataclass
class DatasetManifest:
    root: Path
    seed: int
    geometry: ImagingGeometry
    samples: List[SampleEntry] = field(default_factory=list)

    def split(self, name: str) -> List[SampleEntry]:
        return [s for s in self.samples if s.split == name]

    @property
    def counts(self) -> dict:
        return {"train": len(self.split("train")), "test": len(self.split("test")), "total": len(self.samples)}

    def to_dict(self) -> dict:
        return {
            "format": "pat-ynet-dataset",
            "version": 1,
            "seed": self.seed,
            "geometry": self.geometry.to_dict(),
            "counts": self.counts,
            "samples": [s.__dict__ for s in self.samples],
        }

    def save(self) -> Path:
        path = self.root / MANIFEST_NAME
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, root: Union[str, Path]) -> "DatasetManifest":
        root = Path(root)
        path = root / MANIFEST_NAME if root.is_dir() else root
        if not path.exists():
            raise FileNotFoundError(f"no dataset manifest at {path}")
        doc = json.loads(path.read_text())
        m = cls(root=path.parent, seed=doc["seed"], geometry=ImagingGeometry.from_dict(doc["geometry"]),
                samples=[SampleEntry(**s) for s in doc["samples"]])
        m.validate()
        return m

    def validate(self) -> None:
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest has duplicate sample ids")
        for s in self.samples:
            if s.split not in ("train", "test"):
                raise ValueError(f"sample {s.id}: unknown split {s.split!r}")
            for rel in (s.gt, s.sinogram, s.das):
                if not (self.root / rel).exists():
                    raise FileNotFoundError(f"sample {s.id}: missing file {rel}")

    def path(self, rel: str) -> Path:
        return self.root / rel


def simulate_from_phantom(gt: np.ndarray, noise_seed: int, geom: ImagingGeometry):
    """``(sinogram, das)`` as float32 arrays for one initial-pressure map."""
    s = apply_bandpass(forward_project(gt, geom), geom)
    s = add_noise(s, TARGET_SNR_DB, noise_seed).astype(np.float32)
    das = das_reconstruct(s, geom).astype(np.float32)
    return s, das


def simulate_sample(mask, phantom_seed: int, noise_seed: int, geom: ImagingGeometry):
    """``(gt, sinogram, das)`` as float32 arrays for one vessel mask."""
    gt = compose_vessel_phantom(mask, phantom_seed)
    s, das = simulate_from_phantom(gt, noise_seed, geom)
    return gt.astype(np.float32), s, das


def _generate_one(args):
    index, seed, geom, mask_paths = args
    rng = np.random.default_rng([seed, index])
    draw = mask_source(mask_paths)
    while True:
        mask = draw(rng)
        phantom_seed, noise_seed = (int(v) for v in rng.integers(0, 2 ** 31, size=2))
        gt = compose_vessel_phantom(mask, phantom_seed)
        # the two drawn quadrants can both be empty; redraw from the same stream
        if gt.max() > 0:
            s, das = simulate_from_phantom(gt, noise_seed, geom)
            return gt.astype(np.float32), s, das


def build_dataset(out_dir: Union[str, Path], count: int, seed: int, geom: Optional[ImagingGeometry] = None,
                  test_count: int = 0, mask_paths: Optional[Sequence[str]] = None, previews: bool = True,
                  workers: int = 1) -> DatasetManifest:
    """Generate ``count`` samples under ``out_dir``; the last ``test_count``
    form the test split.  Sample ``i`` depends only on ``(seed, i)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0 <= test_count <= count:
        raise ValueError("test_count must lie in [0, count]")
    geom = geom or ImagingGeometry()
    root = Path(out_dir)
    try:
        (root / "samples").mkdir(parents=True, exist_ok=True)
        if previews:
            (root / "previews").mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {root}: {exc}") from exc

    jobs = [(i, seed, geom, list(mask_paths) if mask_paths else None) for i in range(count)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_generate_one, jobs)
    else:
        results = map(_generate_one, jobs)

    manifest = DatasetManifest(root=root, seed=seed, geometry=geom)
    for i, (gt, s, das) in enumerate(results):
        sid = f"s{i:05d}"
        entry = SampleEntry(id=sid, split="test" if i >= count - test_count else "train",
                            gt=f"samples/{sid}_gt.patn", sinogram=f"samples/{sid}_sino.patn",
                            das=f"samples/{sid}_das.patn")
        write_tensor(root / entry.gt, gt)
        write_tensor(root / entry.sinogram, s)
        write_tensor(root / entry.das, das)
        if previews:
            write_pgm(root / "previews" / f"{sid}_gt.pgm", gt)
            write_pgm(root / "previews" / f"{sid}_das.pgm", das)
        manifest.samples.append(entry)
    manifest.save()
    return manifest


def normalize_sinogram(s: np.ndarray) -> np.ndarray:
    """Per-sample max-abs scaling into [-1, 1]."""
    return normalize_max_abs(np.asarray(s, dtype=np.float32)).astype(np.float32)


@dataclass
class SplitArrays:
    ids: List[str]
    sinograms: np.ndarray  # (N, 1, T, S), max-abs normalized
    das: np.ndarray        # (N, 1, H, W)
    gt: np.ndarray         # (N, 1, H, W)


def load_split(manifest: DatasetManifest, split: str, with_sinograms: bool = True) -> SplitArrays:
    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"dataset has no {split!r} samples")
    g = manifest.geometry
    n = len(entries)
    sino = np.zeros((n, 1, *g.sinogram_shape), np.float32) if with_sinograms else None
    das = np.zeros((n, 1, *g.image_shape), np.float32)
    gt = np.zeros((n, 1, *g.image_shape), np.float32)
    for k, e in enumerate(entries):
        if with_sinograms:
            sino[k, 0] = normalize_sinogram(read_tensor(manifest.path(e.sinogram)))
        das[k, 0] = read_tensor(manifest.path(e.das))
        gt[k, 0] = read_tensor(manifest.path(e.gt))
    return SplitArrays([e.id for e in entries], sino, das, gt)
