"""Training loop, checkpoints and resumption."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .config import TrainConfig
from .data import DatasetManifest, SplitArrays, load_split
from .io import read_checkpoint, write_checkpoint
from .nn import AdamState, Tensor, adam_step
from .ynet import YNetConfig, YNetModel, compute_loss, init_params, ynet_forward

log = logging.getLogger(__name__)

LOG_FIELDS = ("epoch", "batch", "l_rec", "l_aux", "total")


class TrainingDiverged(RuntimeError):
    pass


def save_checkpoint(path: Union[str, Path], model: YNetModel, state: AdamState, epoch: int,
                    train_cfg: Optional[TrainConfig] = None) -> Path:
    header = {
        "format": "pat-ynet-checkpoint",
        "model": model.config.to_dict(),
        "train": train_cfg.to_dict() if train_cfg else None,
        "epoch": epoch,
        "adam": {"lr": state.lr, "beta1": state.beta1, "beta2": state.beta2, "eps": state.eps, "t": state.t},
    }
    tensors = {}
    for k, p in model.params.items():
        tensors["param/" + k] = p.data
    for k, b in model.buffers.items():
        tensors["buffer/" + k] = b
    for k in model.params:
        tensors["adam.m/" + k] = state.m[k]
        tensors["adam.v/" + k] = state.v[k]
    write_checkpoint(path, header, tensors)
    return Path(path)


def load_checkpoint(path: Union[str, Path]) -> Tuple[YNetModel, AdamState, dict]:
    header, tensors = read_checkpoint(path)
    if header.get("format") != "pat-ynet-checkpoint":
        raise ValueError(f"{path}: not a Y-Net checkpoint")
    cfg = YNetConfig.from_dict(header["model"])
    model = YNetModel(cfg)
    adam = header["adam"]
    state = AdamState(lr=adam["lr"], beta1=adam["beta1"], beta2=adam["beta2"], eps=adam["eps"], t=adam["t"])
    for name, arr in tensors.items():
        kind, _, key = name.partition("/")
        if kind == "param":
            model.params[key] = Tensor(arr, requires_grad=True, name=key)
        elif kind == "buffer":
            model.buffers[key] = arr
        elif kind == "adam.m":
            state.m[key] = arr
        elif kind == "adam.v":
            state.v[key] = arr
    return model, state, header


@dataclass
class TrainResult:
    model: YNetModel
    state: AdamState
    history: List[dict] = field(default_factory=list)
    checkpoint: Optional[Path] = None
    log_path: Optional[Path] = None


def _batches(n: int, batch_size: int, seed: int, epoch: int):
    order = np.random.default_rng([seed, epoch]).permutation(n)
    for bi, start in enumerate(range(0, n, batch_size)):
        yield bi, np.sort(order[start:start + batch_size])


def train_arrays(model: YNetModel, data: SplitArrays, cfg: TrainConfig, state: Optional[AdamState] = None,
                 start_epoch: int = 0, out_dir: Optional[Union[str, Path]] = None,
                 log_name: str = "loss_log.csv", on_epoch=None) -> TrainResult:
    """Optimize ``model`` on in-memory arrays with Adam.

    Batches are drawn from a permutation seeded by ``(cfg.seed, epoch)``, so
    a run resumed at an epoch boundary follows the same sequence as an
    uninterrupted one.
    """
    mcfg = model.config
    if state is None:
        state = AdamState.for_params(model.arrays(), lr=cfg.lr)
    out = Path(out_dir) if out_dir is not None else None
    writer = fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / log_name
        fresh = start_epoch == 0 or not log_path.exists()
        fh = open(log_path, "w" if fresh else "a", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(LOG_FIELDS)
    history = []
    n = len(data.gt)
    result = TrainResult(model, state, history, log_path=out / log_name if out else None)
    try:
        for epoch in range(start_epoch, cfg.epochs):
            for bi, idx in _batches(n, cfg.batch_size, cfg.seed, epoch):
                b = Tensor(data.sinograms[idx]) if mcfg.uses_encoder1 else None
                fstar = Tensor(data.das[idx]) if mcfg.uses_encoder2 else None
                f, z2 = ynet_forward(model, b, fstar, training=True)
                total, l_rec, l_aux = compute_loss(model, f, z2, data.gt[idx])
                row = {"epoch": epoch, "batch": bi, "l_rec": float(l_rec.data),
                       "l_aux": float(l_aux.data), "total": float(total.data)}
                if not np.isfinite(row["total"]):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {bi}")
                model.zero_grad()
                total.backward()
                adam_step(model.arrays(), model.grads(), state)
                history.append(row)
                if writer:
                    writer.writerow([row[k] if k in ("epoch", "batch") else repr(row[k]) for k in LOG_FIELDS])
            if fh:
                fh.flush()
            log.info("epoch %d: last total loss %.6g", epoch, history[-1]["total"])
            done = epoch + 1
            if out is not None and cfg.checkpoint_interval and done % cfg.checkpoint_interval == 0 \
                    and done < cfg.epochs:
                save_checkpoint(out / f"epoch_{done:04d}.ckpt", model, state, done, cfg)
            if on_epoch is not None:
                on_epoch(done, model, state)
        if out is not None:
            result.checkpoint = save_checkpoint(out / "final.ckpt", model, state, cfg.epochs, cfg)
    finally:
        if fh:
            fh.close()
    return result


def train(manifest: DatasetManifest, cfg: TrainConfig, model_cfg: YNetConfig,
          out_dir: Union[str, Path], resume: Optional[Union[str, Path]] = None) -> TrainResult:
    """Train on the manifest's train split; writes ``loss_log.csv`` and
    checkpoints under ``out_dir``."""
    data = load_split(manifest, "train", with_sinograms=model_cfg.uses_encoder1)
    if resume is not None:
        model, state, header = load_checkpoint(resume)
        if model.config.to_dict() != model_cfg.to_dict():
            raise ValueError("checkpoint model configuration differs from the requested one")
        start = int(header["epoch"])
    else:
        model = init_params(model_cfg, cfg.seed)
        state, start = None, 0
    return train_arrays(model, data, cfg, state=state, start_epoch=start, out_dir=out_dir)


def read_loss_log(path: Union[str, Path]) -> List[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{"epoch": int(r["epoch"]), "batch": int(r["batch"]), "l_rec": float(r["l_rec"]),
             "l_aux": float(r["l_aux"]), "total": float(r["total"])} for r in rows]
