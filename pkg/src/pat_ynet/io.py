"""On-disk formats: PATN tensor files, checkpoints and image previews.

PATN layout (all integers little-endian)::

    b"PATN" | version u8 (=1) | dtype u8 | ndim u8 | ndim x u64 dims | payload

dtype codes: 1 = float32, 2 = float64, 3 = uint8.  The payload is the
row-major array.

A checkpoint is ``b"PATC" | version u8 | header_len u64 | JSON header``
followed by one PATN record per tensor, in the order listed in the header.
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import BinaryIO, Dict, Tuple, Union

import numpy as np

MAGIC = b"PATN"
CKPT_MAGIC = b"PATC"
VERSION = 1
CODE_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("u1")}

PathLike = Union[str, Path]


class FormatError(ValueError):
    pass


def _dtype_code(dtype) -> int:
    dt = np.dtype(dtype)
    for code, ref in CODE_DTYPES.items():
        if dt.kind == ref.kind and dt.itemsize == ref.itemsize:
            return code
    raise FormatError(f"unsupported dtype {dtype}; PATN stores float32, float64 and uint8")


def write_tensor_stream(fh: BinaryIO, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    code = _dtype_code(arr.dtype)
    if arr.ndim > 255:
        raise FormatError("too many dimensions")
    fh.write(MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype=CODE_DTYPES[code]).tobytes())


def read_tensor_stream(fh: BinaryIO) -> np.ndarray:
    head = fh.read(7)
    if len(head) != 7 or head[:4] != MAGIC:
        raise FormatError("not a PATN tensor record")
    version, code, ndim = struct.unpack("<BBB", head[4:])
    if version != VERSION:
        raise FormatError(f"unsupported PATN version {version}")
    if code not in CODE_DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    raw = fh.read(8 * ndim)
    if len(raw) != 8 * ndim:
        raise FormatError("truncated PATN header")
    dims = struct.unpack(f"<{ndim}Q", raw)
    dtype = CODE_DTYPES[code]
    nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = fh.read(nbytes)
    if len(payload) != nbytes:
        raise FormatError(f"PATN payload has {len(payload)} bytes, expected {nbytes}")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def write_tensor(path: PathLike, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_tensor_stream(fh, arr)


def read_tensor(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        arr = read_tensor_stream(fh)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after PATN payload")
    return arr


# -- checkpoints ----------------------------------------------------------------

def write_checkpoint(path: PathLike, header: dict, tensors: Dict[str, np.ndarray]) -> None:
    header = dict(header)
    header["tensors"] = list(tensors)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC + struct.pack("<BQ", VERSION, len(blob)))
    buf.write(blob)
    for arr in tensors.values():
        write_tensor_stream(buf, arr)
    Path(path).write_bytes(buf.getvalue())


def read_checkpoint(path: PathLike) -> Tuple[dict, Dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        head = fh.read(13)
        if len(head) != 13 or head[:4] != CKPT_MAGIC:
            raise FormatError(f"{path}: not a PATC checkpoint")
        version, hlen = struct.unpack("<BQ", head[4:])
        if version != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        tensors = {name: read_tensor_stream(fh) for name in header["tensors"]}
    return header, tensors


# -- previews -------------------------------------------------------------------

def preview_bytes(img: np.ndarray) -> Tuple[np.ndarray, str]:
    """8-bit rendering plus a description of the mapping.

    Non-negative images map ``[0, max]`` to ``[0, 255]``; signed images map
    ``[-max|.|, +max|.|]`` to ``[0, 255]``.
    """
    img = np.asarray(img, dtype=np.float64)
    peak = float(np.max(np.abs(img))) if img.size else 0.0
    if peak == 0:
        return np.zeros(img.shape, np.uint8), "mapping linear [0, 0] -> [0, 255]"
    if img.min() >= 0:
        out = img / peak * 255
        desc = f"mapping linear [0, {peak:.6g}] -> [0, 255]"
    else:
        out = (img + peak) / (2 * peak) * 255
        desc = f"mapping linear [{-peak:.6g}, {peak:.6g}] -> [0, 255]"
    return np.clip(np.round(out), 0, 255).astype(np.uint8), desc


def write_pgm(path: PathLike, img: np.ndarray) -> None:
    """Binary (P5) PGM preview; the value mapping is recorded as a comment."""
    data, desc = preview_bytes(img)
    h, w = data.shape
    header = f"P5\n# {desc}\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def write_png(path: PathLike, img: np.ndarray) -> None:
    from PIL import Image

    data, _ = preview_bytes(img)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def read_pgm(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM")
    tokens, pos = [], 2
    while len(tokens) < 3:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(int(raw[pos:end]))
        pos = end
    w, h, maxval = tokens
    if maxval > 255:
        raise FormatError("16-bit PGM is not supported")
    pos += 1
    return np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8).reshape(h, w).copy()
