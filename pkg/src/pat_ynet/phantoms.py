"""Ground-truth initial-pressure phantoms.

Vessel phantoms follow the fundus-vessel recipe: cut a vessel mask into four
equal quadrants, pick two of them at random, rotate each by a random multiple
of 90 degrees and superpose them.  A procedural branching-walk generator
stands in for real segmentation masks.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

PHANTOM_SIZE = 128


def _as_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2D, got {m.ndim}D")
    m = m != 0
    if not m.any():
        raise ValueError("mask is empty (no vessel pixels)")
    return m


def resample_nearest(img: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resampling; keeps binary masks binary."""
    h, w = img.shape
    rows = np.minimum((np.arange(shape[0]) + 0.5) * h / shape[0], h - 1).astype(int)
    cols = np.minimum((np.arange(shape[1]) + 0.5) * w / shape[1], w - 1).astype(int)
    return img[np.ix_(rows, cols)]


def split_quadrants(mask: np.ndarray, size: int = PHANTOM_SIZE) -> list:
    """Four equal quadrants (top-left, top-right, bottom-left, bottom-right),
    each resampled to ``size x size`` when needed."""
    h, w = mask.shape
    hh, hw = h // 2, w // 2
    quads = [mask[:hh, :hw], mask[:hh, hw:2 * hw], mask[hh:2 * hh, :hw], mask[hh:2 * hh, hw:2 * hw]]
    return [q if q.shape == (size, size) else resample_nearest(q, (size, size)) for q in quads]


def compose_vessel_phantom(mask, seed: int, size: int = PHANTOM_SIZE) -> np.ndarray:
    """Superpose two randomly chosen, randomly rotated quadrants of ``mask``.

    Draw order from ``numpy.random.default_rng(seed)``: two quadrant indices
    (with replacement), then two quarter-turn counts in {0, 1, 2, 3}.  The
    quadrants are combined with a pixelwise maximum and the result is scaled
    so its maximum is 1 (an all-zero combination stays zero).
    """
    m = _as_mask(mask)
    quads = split_quadrants(m, size)
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, 4, size=2)
    turns = rng.integers(0, 4, size=2)
    out = np.maximum(np.rot90(quads[picks[0]], turns[0]), np.rot90(quads[picks[1]], turns[1]))
    out = out.astype(np.float64)
    peak = out.max()
    return out / peak if peak > 0 else out


def nine_point_centers(size: int = PHANTOM_SIZE) -> list:
    """Two rows at 1/3 and 2/3 depth; five points on the upper row at
    k/6 of the width, four on the lower row offset by half a step."""
    upper = [(round(size / 3), round(size * k / 6)) for k in range(1, 6)]
    lower = [(round(2 * size / 3), round(size * (k + 0.5) / 6)) for k in range(1, 5)]
    return upper + lower


def point_phantom(centers: Optional[Sequence[Tuple[float, float]]] = None, radius: float = 1.0,
                  shape: Tuple[int, int] = (PHANTOM_SIZE, PHANTOM_SIZE)) -> np.ndarray:
    """Unit disks of ``radius`` pixels at each ``(row, col)`` centre.

    ``centers=None`` gives the default nine-point scene.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if centers is None:
        centers = nine_point_centers(shape[0])
    rows, cols = np.indices(shape)
    img = np.zeros(shape, dtype=np.float64)
    for r, c in centers:
        if not (0 <= r <= shape[0] - 1 and 0 <= c <= shape[1] - 1):
            raise ValueError(f"point centre ({r}, {c}) lies outside the {shape} grid")
        img[(rows - r) ** 2 + (cols - c) ** 2 <= radius ** 2] = 1.0
    return img


@dataclass(frozen=True)
class VesselParams:
    """Controls for :func:`procedural_vessel_mask`.

    ``n_branches`` counts every walk, forks included (1..64); ``steps`` is the
    step budget of a root walk (1..2000); ``step_length`` in pixels
    (0.5..8); ``thickness`` is the drawn vessel diameter in pixels (1..15).
    """

    n_branches: int = 10
    steps: int = 160
    step_length: float = 1.5
    thickness: int = 3
    turn_sd: float = 0.2
    fork_prob: float = 0.03
    size: int = 256

    def validate(self) -> None:
        if not 1 <= self.n_branches <= 64:
            raise ValueError(f"n_branches must be in [1, 64], got {self.n_branches}")
        if not 1 <= self.steps <= 2000:
            raise ValueError(f"steps must be in [1, 2000], got {self.steps}")
        if not 0.5 <= self.step_length <= 8:
            raise ValueError(f"step_length must be in [0.5, 8], got {self.step_length}")
        if not 1 <= self.thickness <= 15:
            raise ValueError(f"thickness must be in [1, 15], got {self.thickness}")
        if self.turn_sd < 0 or not 0 <= self.fork_prob <= 1:
            raise ValueError("turn_sd must be >= 0 and fork_prob in [0, 1]")
        if self.size < 16:
            raise ValueError("size must be at least 16")


def _stamp(mask: np.ndarray, r: float, c: float, thickness: int) -> None:
    rad = (thickness - 1) / 2
    r0, c0 = int(round(r)), int(round(c))
    span = int(np.ceil(rad))
    n = mask.shape[0]
    for dr in range(-span, span + 1):
        for dc in range(-span, span + 1):
            if dr * dr + dc * dc <= rad * rad + 1e-9:
                rr, cc = r0 + dr, c0 + dc
                if 0 <= rr < n and 0 <= cc < n:
                    mask[rr, cc] = True


def procedural_vessel_mask(seed: int, params: Optional[VesselParams] = None, **overrides) -> np.ndarray:
    """Binary vessel-like mask from seeded branching random walks.

    Root walks start near the image centre and head outwards; each step may
    fork a thinner child walk while the branch budget lasts.  Segments
    between successive walk points are rasterized densely so vessels are
    connected.
    """
    if params is None:
        params = VesselParams(**overrides)
    elif overrides:
        params = VesselParams(**{**params.__dict__, **overrides})
    params.validate()
    n = params.size
    rng = np.random.default_rng(seed)
    mask = np.zeros((n, n), dtype=bool)

    centre = np.array([n / 2, n / 2])
    n_roots = max(1, min(params.n_branches, int(np.ceil(params.n_branches / 3))))
    # queue of (row, col, heading, steps, thickness)
    queue = []
    for _ in range(n_roots):
        start = centre + rng.uniform(-n / 8, n / 8, size=2)
        queue.append((start[0], start[1], rng.uniform(0, 2 * np.pi), params.steps, params.thickness))
    walks = 0
    while queue and walks < params.n_branches:
        r, c, heading, steps, thick = queue.pop(0)
        walks += 1
        _stamp(mask, r, c, thick)
        for _ in range(steps):
            heading += rng.normal(0.0, params.turn_sd)
            nr = r + params.step_length * np.sin(heading)
            nc = c + params.step_length * np.cos(heading)
            n_sub = max(2, int(np.ceil(params.step_length / 0.25)))
            for t in np.linspace(0, 1, n_sub + 1)[1:]:
                _stamp(mask, r + t * (nr - r), c + t * (nc - c), thick)
            r, c = nr, nc
            if not (0 <= r < n and 0 <= c < n):
                break
            if walks + len(queue) < params.n_branches and rng.random() < params.fork_prob:
                child = heading + rng.choice([-1.0, 1.0]) * rng.uniform(0.4, 1.0)
                queue.append((r, c, child, max(1, steps // 2), max(1, thick - 1)))
    return mask


def load_mask(path: Union[str, Path]) -> np.ndarray:
    """Read an 8-bit grayscale PGM/PNG; nonzero pixels are vessel."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr != 0


def mask_source(paths: Optional[Iterable[Union[str, Path]]] = None):
    """Callable ``(rng) -> mask`` drawing from user masks or, when no paths
    are given, from the procedural generator."""
    if paths:
        masks = [load_mask(p) for p in paths]

        def draw(rng):
            return masks[int(rng.integers(len(masks)))]
    else:
        def draw(rng):
            return procedural_vessel_mask(int(rng.integers(2 ** 31)))
    return draw
