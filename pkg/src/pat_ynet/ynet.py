"""Y-Net: a sinogram encoder and an image encoder feeding one decoder.

Layer plan for ``base_channels = c`` (spatial sizes at the default shapes)::

    Encoder I   (sinogram)  2560x128:c -> 1280x64:2c -> 640x32:4c -> 320x16:8c -> 160x8:16c
                            then a 20x3 conv, stride (20, 1), pad (0, 1): 160x8 -> 8x8 (z1)
    Encoder II  (DAS image)  128x128:c ->   64x64:2c ->  32x32:4c ->  16x16:8c ->   8x8:16c (z2)
    Decoder                  8x8 -> 16x16 -> 32x32 -> 64x64 -> 128x128, then a 1x1 conv

Every encoder layer is two (3x3 conv, BN, ReLU) blocks, preceded by a 2x2
max-pool from the second layer on.  Decoder layers concatenate the previous
feature with the mirrored encoder skips (Encoder I skips are bilinearly
resized first), apply two conv blocks and a 2x2 stride-2 up-convolution
followed by BN and ReLU; the last layer ends with a linear 1x1 convolution.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import nn
from .nn import Tensor

VARIANTS = ("full", "enc2_only_skips", "enc1_only_skips", "unet_post")
BOTTLENECK_KERNEL = (20, 3)
N_LAYERS = 5


@dataclass
class YNetConfig:
    base_channels: int = 16
    variant: str = "full"
    aux_weight: float = 0.5
    signal_shape: Tuple[int, int] = (2560, 128)
    image_shape: Tuple[int, int] = (128, 128)
    # False keeps both bottlenecks in the single-encoder variants and only drops skips
    disconnect_bottleneck: bool = True
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        self.signal_shape = tuple(int(v) for v in self.signal_shape)
        self.image_shape = tuple(int(v) for v in self.image_shape)
        self.validate()

    def validate(self) -> None:
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.aux_weight < 0:
            raise ValueError("aux_weight must be >= 0")
        ih, iw = self.image_shape
        sh, sw = self.signal_shape
        if ih % 16 or iw % 16:
            raise ValueError(f"image_shape {self.image_shape} must be divisible by 16")
        if sh % 16 or sw % 16:
            raise ValueError(f"signal_shape {self.signal_shape} must be divisible by 16")
        kh = BOTTLENECK_KERNEL[0]
        if sh // 16 != kh * (ih // 16) or sw != iw:
            raise ValueError(
                f"signal_shape {self.signal_shape} must be ({kh}*{ih}, {iw}) so the 20x3 "
                "bottleneck convolution lands on the image bottleneck size")

    @property
    def channels(self) -> List[int]:
        c = self.base_channels
        return [c, 2 * c, 4 * c, 8 * c, 16 * c]

    @property
    def uses_encoder1(self) -> bool:
        return self.variant in ("full", "enc1_only_skips") or (
            not self.disconnect_bottleneck and self.variant == "enc2_only_skips")

    @property
    def uses_encoder2(self) -> bool:
        return self.variant != "enc1_only_skips" or not self.disconnect_bottleneck

    @property
    def bottleneck_sources(self) -> Tuple[str, ...]:
        if self.variant == "full" or not self.disconnect_bottleneck and self.variant != "unet_post":
            return ("enc1", "enc2")
        return ("enc1",) if self.variant == "enc1_only_skips" else ("enc2",)

    @property
    def skip_sources(self) -> Tuple[str, ...]:
        return {"full": ("enc1", "enc2"), "enc2_only_skips": ("enc2",),
                "enc1_only_skips": ("enc1",), "unet_post": ("enc2",)}[self.variant]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["signal_shape"] = list(self.signal_shape)
        d["image_shape"] = list(self.image_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "YNetConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class YNetModel:
    """Parameters (name -> Tensor, insertion-ordered), BN running buffers and
    the configuration.  Parameter names are prefixed ``enc1.``, ``enc2.``,
    ``dec.`` or ``aux.``."""

    config: YNetConfig
    params: Dict[str, Tensor] = field(default_factory=dict)
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)

    def group(self, prefix: str) -> Dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    def arrays(self) -> Dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def zero_grad(self) -> None:
        nn.zero_grads(self.params.values())

    def grads(self) -> Dict[str, np.ndarray]:
        return {k: v.grad for k, v in self.params.items() if v.grad is not None}

    def astype(self, dtype) -> "YNetModel":
        params = {k: Tensor(v.data.astype(dtype), requires_grad=True, name=k) for k, v in self.params.items()}
        buffers = {k: v.astype(dtype) for k, v in self.buffers.items()}
        return YNetModel(self.config, params, buffers)


# -- initialization -----------------------------------------------------------

def _param_specs(cfg: YNetConfig):
    """Yield ``(name, shape, kind)`` in a fixed order; kind is one of
    conv / upconv / bn / bias / zero."""
    ch = cfg.channels

    def block(prefix, cin, cout):
        yield f"{prefix}.conv1.kernel", (cout, cin, 3, 3), "conv"
        yield f"{prefix}.bn1", (cout,), "bn"
        yield f"{prefix}.conv2.kernel", (cout, cout, 3, 3), "conv"
        yield f"{prefix}.bn2", (cout,), "bn"

    for enc in ("enc1", "enc2"):
        cin = 1
        for k in range(N_LAYERS):
            yield from block(f"{enc}.l{k + 1}", cin, ch[k])
            cin = ch[k]
    yield "enc1.bottleneck.kernel", (ch[4], ch[4], *BOTTLENECK_KERNEL), "conv"

    n_bottleneck = len(cfg.bottleneck_sources)
    n_skip = len(cfg.skip_sources)
    # decoder layer j works at encoder level 5 - j (0-based: level 4 is the bottleneck)
    cin = ch[4] * n_bottleneck
    for j in range(N_LAYERS):
        level = N_LAYERS - 1 - j
        if j > 0:
            cin = ch[level] + ch[level] * n_skip
        yield from block(f"dec.l{j + 1}", cin, ch[level])
        if j < N_LAYERS - 1:
            yield f"dec.l{j + 1}.up.kernel", (ch[level], ch[level - 1], 2, 2), "upconv"
            yield f"dec.l{j + 1}.upbn", (ch[level - 1],), "bn"
    yield "dec.out.kernel", (1, ch[0], 1, 1), "zero"
    yield "dec.out.bias", (1,), "bias"
    yield "aux.kernel", (1, ch[4], 1, 1), "conv"


def fan_in(shape: Tuple[int, ...], kind: str) -> int:
    if kind == "conv":
        return int(np.prod(shape[1:]))
    # 2x2 stride-2 transposed conv: each output sees one input pixel per channel
    return int(shape[0])


def init_params(config: YNetConfig, seed: int = 0, dtype=np.float32) -> YNetModel:
    """He-normal kernels (variance 2/fan_in), BN scale 1 / shift 0, zero
    biases; deterministic per seed.  Parameters for every branch are
    created regardless of variant so checkpoints share one layout.

    The linear 1x1 output kernel starts at zero.  With He draws its few
    weights give the initial image a random offset of order one, and
    removing that offset at lr 0.005 can switch off the last ReLU layer for
    good, leaving a constant output.
    """
    rng = np.random.default_rng(seed)
    model = YNetModel(config)
    for name, shape, kind in _param_specs(config):
        if kind in ("conv", "upconv"):
            std = np.sqrt(2.0 / fan_in(shape, kind))
            arr = (rng.standard_normal(shape) * std).astype(dtype)
            model.params[name] = Tensor(arr, requires_grad=True, name=name)
        elif kind == "bn":
            model.params[name + ".scale"] = Tensor(np.ones(shape, dtype), requires_grad=True, name=name + ".scale")
            model.params[name + ".shift"] = Tensor(np.zeros(shape, dtype), requires_grad=True, name=name + ".shift")
            model.buffers[name + ".running_mean"] = np.zeros(shape, dtype)
            model.buffers[name + ".running_var"] = np.ones(shape, dtype)
        else:
            model.params[name] = Tensor(np.zeros(shape, dtype), requires_grad=True, name=name)
    return model


# -- building blocks ------------------------------------------------------------

def _bn_relu(model: YNetModel, x: Tensor, name: str, training: bool) -> Tensor:
    cfg = model.config
    y = nn.batch_norm2d(x, model.params[name + ".scale"], model.params[name + ".shift"],
                        model.buffers[name + ".running_mean"], model.buffers[name + ".running_var"],
                        training=training, momentum=cfg.bn_momentum, eps=cfg.bn_eps)
    return nn.relu(y)


def _double_conv(model: YNetModel, x: Tensor, prefix: str, training: bool) -> Tensor:
    for i in (1, 2):
        x = nn.conv2d(x, model.params[f"{prefix}.conv{i}.kernel"], padding=1)
        x = _bn_relu(model, x, f"{prefix}.bn{i}", training)
    return x


def _encode(model: YNetModel, x: Tensor, enc: str, training: bool):
    skips = []
    for k in range(N_LAYERS):
        if k > 0:
            x = nn.max_pool2d(x)
        x = _double_conv(model, x, f"{enc}.l{k + 1}", training)
        if k < N_LAYERS - 1:
            skips.append(x)
    return skips, x


def _check_input(x: Tensor, shape: Tuple[int, int], what: str) -> Tensor:
    x = nn.as_tensor(x)
    if x.ndim != 4 or x.shape[1] != 1 or tuple(x.shape[2:]) != tuple(shape):
        raise ValueError(f"{what}: expected (batch, 1, {shape[0]}, {shape[1]}), got {x.shape}")
    return x


def encoder1_forward(model: YNetModel, b, training: bool = False):
    """Sinogram branch; returns ``(skips, z1)`` with four skip features."""
    b = _check_input(b, model.config.signal_shape, "encoder1")
    skips, x = _encode(model, b, "enc1", training)
    z1 = nn.conv2d(x, model.params["enc1.bottleneck.kernel"], stride=(BOTTLENECK_KERNEL[0], 1), padding=(0, 1))
    return skips, z1


def encoder2_forward(model: YNetModel, fstar, training: bool = False):
    """Beamformed-image branch; returns ``(skips, z2)``."""
    fstar = _check_input(fstar, model.config.image_shape, "encoder2")
    return _encode(model, fstar, "enc2", training)


def decoder_forward(model: YNetModel, z1: Optional[Tensor], z2: Optional[Tensor],
                    skips1: Optional[List[Tensor]], skips2: Optional[List[Tensor]],
                    training: bool = False) -> Tensor:
    cfg = model.config
    feats = {"enc1": z1, "enc2": z2}
    parts = []
    for src in cfg.bottleneck_sources:
        if feats[src] is None:
            raise ValueError(f"variant {cfg.variant!r} needs the {src} bottleneck")
        parts.append(feats[src])
    ref = parts[0].shape
    for p in parts[1:]:
        if p.shape != ref:
            raise ValueError(f"bottleneck shapes disagree: {p.shape} vs {ref}")
    skip_lists = {"enc1": skips1, "enc2": skips2}
    for src in cfg.skip_sources:
        if skip_lists[src] is None or len(skip_lists[src]) != N_LAYERS - 1:
            raise ValueError(f"variant {cfg.variant!r} needs four {src} skip features")

    x = nn.concat_channels(parts)
    for j in range(N_LAYERS):
        level = N_LAYERS - 1 - j
        if j > 0:
            cat = [x]
            h, w = x.shape[2:]
            for src in cfg.skip_sources:
                s = skip_lists[src][level]
                if src == "enc1":
                    s = nn.resize_bilinear(s, h, w)
                if s.shape[2:] != (h, w) or s.shape[1] != x.shape[1]:
                    raise ValueError(f"skip {src} level {level + 1} has shape {s.shape}, decoder feature {x.shape}")
                cat.append(s)
            x = nn.concat_channels(cat)
        x = _double_conv(model, x, f"dec.l{j + 1}", training)
        if j < N_LAYERS - 1:
            x = nn.up_conv2d(x, model.params[f"dec.l{j + 1}.up.kernel"], stride=2)
            x = _bn_relu(model, x, f"dec.l{j + 1}.upbn", training)
    return nn.conv2d(x, model.params["dec.out.kernel"], bias=model.params["dec.out.bias"])


def ynet_forward(model: YNetModel, b=None, fstar=None, training: bool = False):
    """Full network.  Returns ``(f, z2)``; ``z2`` is None when Encoder II is
    not part of the variant."""
    cfg = model.config
    skips1 = z1 = skips2 = z2 = None
    if cfg.uses_encoder1:
        if b is None:
            raise ValueError(f"variant {cfg.variant!r} requires the sinogram input")
        skips1, z1 = encoder1_forward(model, b, training)
    if cfg.uses_encoder2:
        if fstar is None:
            raise ValueError(f"variant {cfg.variant!r} requires the beamformed image input")
        skips2, z2 = encoder2_forward(model, fstar, training)
    f = decoder_forward(model, z1, z2, skips1, skips2, training)
    return f, z2


def aux_projection(model: YNetModel, z2: Tensor) -> Tensor:
    return nn.conv2d(z2, model.params["aux.kernel"])


def compute_loss(model: YNetModel, f: Tensor, z2: Optional[Tensor], gt):
    """``(total, L_rec, L_aux)`` with ``total = L_rec + aux_weight * L_aux``.

    ``L_aux`` compares the one-channel projection of ``z2`` with the ground
    truth block-averaged to the bottleneck size; it is zero when Encoder II
    is not evaluated.
    """
    gt = np.asarray(gt.data if isinstance(gt, Tensor) else gt)
    if gt.shape != f.shape:
        raise ValueError(f"compute_loss: output {f.shape} vs ground truth {gt.shape}")
    l_rec = nn.mse(f, gt)
    if z2 is None:
        l_aux = Tensor(np.zeros((), dtype=l_rec.dtype))
    else:
        proj = aux_projection(model, z2)
        target = nn.area_downsample(gt, *proj.shape[2:])
        l_aux = nn.mse(proj, target)
    total = l_rec + l_aux * model.config.aux_weight
    return total, l_rec, l_aux
