"""Differentiable primitives used by the Y-Net.

All image tensors are laid out ``(batch, channels, height, width)``.
Convolution is cross-correlation (no kernel flip).
"""
from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .tensor import Tensor, as_tensor

IntPair = Union[int, Tuple[int, int]]

# im2col buffers are built per (sample, band of output rows) and kept near
# this many elements, so they stay cache resident on wide, shallow layers
_TILE_ELEMENTS = 1 << 18


def _pair(v: IntPair) -> Tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def _require_4d(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{op}: expected a 4D (B, C, H, W) tensor, got shape {x.shape}")


def _tiles(batch: int, ho: int, per_row: int):
    """``(sample, first_row, end_row)`` output tiles of about ``_TILE_ELEMENTS``
    im2col entries each."""
    band = max(1, _TILE_ELEMENTS // max(per_row, 1))
    for n in range(batch):
        for r0 in range(0, ho, band):
            yield n, r0, min(ho, r0 + band)


def _im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, ho: int, wo: int) -> np.ndarray:
    b, c = xp.shape[:2]
    cols = np.empty((b, c, kh, kw, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw]
    return cols.reshape(b, c * kh * kw, ho * wo)


def _col2im(gcols: np.ndarray, gxp: np.ndarray, kh: int, kw: int, sh: int, sw: int,
            ho: int, wo: int) -> None:
    b, c = gxp.shape[:2]
    gcols = gcols.reshape(b, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += gcols[:, :, i, j]


def _correlate(xp: np.ndarray, w2: np.ndarray, kh: int, kw: int, sh: int, sw: int,
               ho: int, wo: int) -> np.ndarray:
    """Valid cross-correlation of padded ``xp`` with flattened kernel ``w2``
    of shape ``(out, in * kh * kw)``; tile ``(n, r0, r1)`` reads padded rows
    ``[r0*sh, (r1-1)*sh + kh)``."""
    b, c = xp.shape[:2]
    o = w2.shape[0]
    out = np.empty((b, o, ho, wo), dtype=np.result_type(xp.dtype, w2.dtype))
    for n, r0, r1 in _tiles(b, ho, c * kh * kw * wo):
        cols = _im2col(xp[n:n + 1, :, r0 * sh:(r1 - 1) * sh + kh], kh, kw, sh, sw, r1 - r0, wo)[0]
        out[n, :, r0:r1] = (w2 @ cols).reshape(o, r1 - r0, wo)
    return out


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None,
           stride: IntPair = 1, padding: IntPair = 0) -> Tensor:
    """Zero-padded 2D cross-correlation.

    ``kernel`` has shape ``(out_channels, in_channels, kh, kw)``.  The output
    spatial size is ``(H + 2*ph - kh) // sh + 1`` (likewise for the width).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    _require_4d(x, "conv2d")
    if kernel.ndim != 4:
        raise ValueError(f"conv2d: kernel must be 4D, got shape {kernel.shape}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    b, c, h, w = x.shape
    o, kc, kh, kw = kernel.shape
    if kc != c:
        raise ValueError(f"conv2d: kernel expects {kc} input channels, input has {c}")
    if sh < 1 or sw < 1 or ph < 0 or pw < 0:
        raise ValueError("conv2d: stride must be >= 1 and padding >= 0")
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    if ho < 1 or wo < 1 or h + 2 * ph < kh or w + 2 * pw < kw:
        raise ValueError(f"conv2d: empty output for input {x.shape} and kernel {kernel.shape}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ValueError(f"conv2d: bias must have shape ({o},), got {bias.shape}")

    dtype = np.result_type(x.dtype, kernel.dtype)
    xp = np.pad(x.data.astype(dtype, copy=False), ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    w2 = kernel.data.astype(dtype, copy=False).reshape(o, c * kh * kw)
    out = _correlate(xp, w2, kh, kw, sh, sw, ho, wo)
    if bias is not None:
        out += bias.data.astype(dtype, copy=False)[None, :, None, None]
    # a stride-1 input gradient is itself a correlation (with the flipped kernel)
    transposed = sh == sw == 1 and ph < kh and pw < kw

    def backward(g: np.ndarray) -> None:
        gw = np.zeros_like(w2) if kernel.requires_grad else None
        gxp = None
        if x.requires_grad and not transposed:
            gxp = np.zeros_like(xp)
        for n, r0, r1 in _tiles(b, ho, c * kh * kw * wo):
            gs = g[n, :, r0:r1].reshape(o, -1)
            rows = slice(r0 * sh, (r1 - 1) * sh + kh)
            if gw is not None:
                gw += gs @ _im2col(xp[n:n + 1, :, rows], kh, kw, sh, sw, r1 - r0, wo)[0].T
            if gxp is not None:
                _col2im(w2.T @ gs, gxp[n:n + 1, :, rows], kh, kw, sh, sw, r1 - r0, wo)
        if x.requires_grad and transposed:
            wf = kernel.data.astype(dtype, copy=False)[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            gp = np.pad(g, ((0, 0), (0, 0), (kh - 1 - ph, kh - 1 - ph), (kw - 1 - pw, kw - 1 - pw)))
            x._accumulate(_correlate(gp, wf.reshape(c, o * kh * kw), kh, kw, 1, 1, h, w), owned=True)
        if gw is not None:
            kernel._accumulate(gw.reshape(kernel.shape))
        if gxp is not None:
            x._accumulate(gxp[:, :, ph:ph + h, pw:pw + w])
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._make(out, parents, backward)


def up_conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, stride: IntPair = 2) -> Tensor:
    """Transposed convolution ("up-convolution").

    ``kernel`` has shape ``(in_channels, out_channels, kh, kw)``; with a 2x2
    kernel and stride 2 the spatial size doubles.  This is the adjoint of
    :func:`conv2d` with the same kernel array and stride.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    _require_4d(x, "up_conv2d")
    if kernel.ndim != 4 or kernel.shape[0] != x.shape[1]:
        raise ValueError(f"up_conv2d: kernel {kernel.shape} does not match input channels {x.shape[1]}")
    sh, sw = _pair(stride)
    b, c, h, w = x.shape
    _, o, kh, kw = kernel.shape
    ho, wo = (h - 1) * sh + kh, (w - 1) * sw + kw
    dtype = np.result_type(x.dtype, kernel.dtype)
    xd = x.data.astype(dtype, copy=False).reshape(b, c, h * w)
    kd = kernel.data.astype(dtype, copy=False)
    out = np.zeros((b, o, ho, wo), dtype=dtype)
    for i in range(kh):
        for j in range(kw):
            blk = np.matmul(kd[:, :, i, j].T, xd).reshape(b, o, h, w)
            out[:, :, i:i + sh * (h - 1) + 1:sh, j:j + sw * (w - 1) + 1:sw] += blk
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ValueError(f"up_conv2d: bias must have shape ({o},), got {bias.shape}")
        out += bias.data.astype(dtype, copy=False)[None, :, None, None]

    def backward(g: np.ndarray) -> None:
        gx = np.zeros((b, c, h * w), dtype=dtype) if x.requires_grad else None
        gk = np.zeros_like(kd) if kernel.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                gs = np.ascontiguousarray(
                    g[:, :, i:i + sh * (h - 1) + 1:sh, j:j + sw * (w - 1) + 1:sw]).reshape(b, o, h * w)
                if gx is not None:
                    gx += np.matmul(kd[:, :, i, j], gs)
                if gk is not None:
                    gk[:, :, i, j] = np.einsum("bcp,bop->co", xd, gs, optimize=True)
        if gx is not None:
            x._accumulate(gx.reshape(x.shape))
        if gk is not None:
            kernel._accumulate(gk)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._make(out, parents, backward)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.maximum(x.data, 0)

    def backward(g):
        x._accumulate(g * (out > 0), owned=True)

    return Tensor._make(out, (x,), backward)


def batch_norm2d(x: Tensor, scale: Tensor, shift: Tensor, running_mean: np.ndarray,
                 running_var: np.ndarray, training: bool = True, momentum: float = 0.1,
                 eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization.

    In training mode the batch statistics over (batch, H, W) are used and the
    running buffers are updated in place with ``momentum`` (unbiased variance,
    as in common frameworks).  In eval mode the running buffers are used.
    """
    x, scale, shift = as_tensor(x), as_tensor(scale), as_tensor(shift)
    _require_4d(x, "batch_norm2d")
    c = x.shape[1]
    for label, arr in (("scale", scale.data), ("shift", shift.data),
                       ("running_mean", running_mean), ("running_var", running_var)):
        if np.shape(arr) != (c,):
            raise ValueError(f"batch_norm2d: {label} has shape {np.shape(arr)}, expected ({c},)")
    dtype = x.dtype
    gamma = scale.data.astype(dtype, copy=False)[None, :, None, None]
    beta = shift.data.astype(dtype, copy=False)[None, :, None, None]
    n = x.shape[0] * x.shape[2] * x.shape[3]
    flat = (x.shape[0], c, -1)

    if training:
        mean = _channel_sum(x.data) / n
        centered = x.data - mean.astype(dtype)[None, :, None, None]
        cr = centered.reshape(flat)
        var = np.einsum("bcn,bcn->c", cr, cr) / n
        unbiased = var * (n / (n - 1)) if n > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
        inv = (1.0 / np.sqrt(var + eps)).astype(dtype)
        xhat = centered
        xhat *= inv[None, :, None, None]
    else:
        inv = (1.0 / np.sqrt(running_var + eps)).astype(dtype)
        xhat = (x.data - running_mean.astype(dtype)[None, :, None, None]) * inv[None, :, None, None]
    out = xhat * gamma + beta

    def backward(g):
        # sum(g) and sum(g * xhat) serve both the affine and the input gradients
        gsum = _channel_sum(g)
        gxsum = np.einsum("bcn,bcn->c", g.reshape(flat), xhat.reshape(flat))
        if scale.requires_grad:
            scale._accumulate(gxsum)
        if shift.requires_grad:
            shift._accumulate(gsum)
        if not x.requires_grad:
            return
        k = (gamma[0, :, 0, 0] * inv).astype(dtype)[None, :, None, None]
        if training:
            gx = g - (gsum / n).astype(dtype)[None, :, None, None]
            gx -= xhat * (gxsum / n).astype(dtype)[None, :, None, None]
            gx *= k
        else:
            gx = g * k
        x._accumulate(gx, owned=True)

    return Tensor._make(out, (x, scale, shift), backward)


def _channel_sum(a: np.ndarray) -> np.ndarray:
    """Sum over (batch, H, W) with contiguous inner reductions."""
    return a.reshape(a.shape[0], a.shape[1], -1).sum(axis=2).sum(axis=0)


def max_pool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; ties route the gradient to the first
    element in row-major order."""
    x = as_tensor(x)
    _require_4d(x, "max_pool2d")
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max_pool2d: spatial dims must be even, got {h}x{w}")
    win = x.data.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros((b, c, h // 2, w // 2, 4), dtype=g.dtype)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = gw.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
        x._accumulate(gx, owned=True)

    return Tensor._make(out, (x,), backward)


def bilinear_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """Row-stochastic ``(n_out, n_in)`` matrix of corner-aligned linear
    interpolation weights."""
    if n_in < 1 or n_out < 1:
        raise ValueError("bilinear_matrix: sizes must be >= 1")
    m = np.zeros((n_out, n_in), dtype=dtype)
    if n_in == 1 or n_out == 1:
        m[:, 0] = 1.0
        return m
    pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    frac = pos - lo
    rows = np.arange(n_out)
    m[rows, lo] = 1.0 - frac
    m[rows, lo + 1] += frac
    return m


def resize_bilinear(x: Tensor, target_h: int, target_w: int) -> Tensor:
    """Bilinear resize with corner alignment; separable, so it is two matrix
    products whose transposes give the gradient."""
    x = as_tensor(x)
    _require_4d(x, "resize_bilinear")
    if target_h < 1 or target_w < 1:
        raise ValueError("resize_bilinear: target size must be >= 1")
    _, _, h, w = x.shape
    if (h, w) == (target_h, target_w):
        return x
    ry = bilinear_matrix(h, target_h, x.dtype)
    rx = bilinear_matrix(w, target_w, x.dtype)
    out = np.matmul(np.matmul(ry, x.data), rx.T)

    def backward(g):
        x._accumulate(np.matmul(np.matmul(ry.T, g), rx), owned=True)

    return Tensor._make(out, (x,), backward)


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    if not xs:
        raise ValueError("concat_channels: empty input list")
    for t in xs:
        _require_4d(t, "concat_channels")
    ref = xs[0].shape
    for t in xs[1:]:
        if t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ValueError(f"concat_channels: shape {t.shape} incompatible with {ref}")
    if len(xs) == 1:
        return xs[0]
    sizes = [t.shape[1] for t in xs]
    offsets = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in xs], axis=1)

    def backward(g):
        for t, a, z in zip(xs, offsets[:-1], offsets[1:]):
            t._accumulate(g[:, a:z])

    return Tensor._make(out, tuple(xs), backward)


def mse(f: Tensor, gt) -> Tensor:
    """Half squared Frobenius error summed per sample and averaged over the
    leading (batch) axis: ``0.5 * sum((f - gt)**2) / batch``.

    The scalar is always accumulated and returned in float64.
    """
    f = as_tensor(f)
    target = gt.data if isinstance(gt, Tensor) else np.asarray(gt)
    if target.shape != f.shape:
        raise ValueError(f"mse: shape mismatch {f.shape} vs {target.shape}")
    batch = f.shape[0] if f.ndim > 0 else 1
    diff = f.data - target.astype(f.dtype, copy=False)
    out = np.asarray(0.5 * np.sum(diff * diff, dtype=np.float64) / batch)

    def backward(g):
        scale = float(g) / batch
        f._accumulate((diff * scale).astype(f.dtype, copy=False))
        if isinstance(gt, Tensor) and gt.requires_grad:
            gt._accumulate((-diff * scale).astype(gt.dtype, copy=False))

    parents = (f, gt) if isinstance(gt, Tensor) else (f,)
    return Tensor._make(out, parents, backward)


def area_downsample(img: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Block-average a ``(..., H, W)`` array to ``(..., target_h, target_w)``.

    H and W must be integer multiples of the targets.
    """
    h, w = img.shape[-2:]
    if h % target_h or w % target_w:
        raise ValueError(f"area_downsample: {h}x{w} is not divisible into {target_h}x{target_w}")
    fh, fw = h // target_h, w // target_w
    return img.reshape(*img.shape[:-2], target_h, fh, target_w, fw).mean(axis=(-3, -1))
