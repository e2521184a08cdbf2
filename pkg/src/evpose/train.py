"""End-to-end training: Adam over the full loss on chunked window sequences."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import camera as cam_mod
from .checkpoint import load_checkpoint, restore, save_checkpoint
from .config import Config
from .data import dataset_surfaces, training_chunks
from .errors import NumericFault
from .losses import (LossWeights, loss_2d, loss_3d, loss_bone_angle,
                     loss_bone_length, loss_delta, loss_total)
from .metrics import mpjpe
from .model.net import PoseNet
from .nn.params import ParameterStore
from .nn.tensor import Tensor, set_finite_checks
from .skeleton import default_topology
from .synth import Dataset


def build_net(cfg: Config, seed: int | None = None) -> tuple[ParameterStore, PoseNet]:
    """A fresh parameter store plus the model registered into it."""
    store = ParameterStore(np.dtype(cfg["core.dtype"]))
    return store, PoseNet(store, cfg, seed=seed)


@dataclass
class EpochRow:
    epoch: int
    loss: float
    mpjpe: float
    seconds: float


@dataclass
class TrainResult:
    store: ParameterStore
    net: PoseNet
    curve: list[EpochRow] = field(default_factory=list)
    ckpt_path: str | None = None
    stopped_early: bool = False

    def curve_csv(self) -> str:
        lines = ["epoch,loss,mpjpe_mm,seconds"]
        for r in self.curve:
            lines.append(f"{r.epoch},{r.loss:.8f},{r.mpjpe:.4f},{r.seconds:.2f}")
        return "\n".join(lines) + "\n"


def train(cfg: Config, dataset: Dataset, out_dir: str | None = None,
          resume_from: str | None = None, log=None) -> TrainResult:
    """Optimise the model on one continuous synthetic stream.

    The stream is cut into non-overlapping train.seq_len chunks, each run
    from fresh state; training normally uses the bidirectional encoder
    (train.causal=true flips it for the directionality comparison). A
    non-finite loss aborts with the last finished epoch saved as the
    checkpoint. The mpjpe column of the curve is measured on the training
    forward passes themselves.
    """
    cfg.validate()
    set_finite_checks(cfg["core.finite_checks"])
    dtype = np.dtype(cfg["core.dtype"])
    store, net = build_net(cfg)
    epochs, lr = cfg["train.epochs"], cfg["train.lr"]
    if resume_from is not None:
        _, arrays = load_checkpoint(resume_from)
        restore(store, arrays)
        if cfg["train.finetune_epochs"] > 0:
            epochs, lr = cfg["train.finetune_epochs"], cfg["train.finetune_lr"]

    frames, _ = dataset_surfaces(dataset, cfg.window_us())
    chunk_f, chunk_p = training_chunks(frames, dataset.poses.poses,
                                       cfg["train.seq_len"])
    n_chunks = chunk_f.shape[0]
    batch = max(1, min(cfg["train.batch"], n_chunks))
    enc_mode = "causal" if cfg["train.causal"] else "bidirectional"
    weights = LossWeights.from_config(cfg)
    cam = cam_mod.CameraModel.from_config(cfg)
    topology = default_topology()
    target = cfg["train.target_mpjpe"]

    ckpt_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        ckpt_path = os.path.join(out_dir, "model.ckpt")
    result = TrainResult(store, net, ckpt_path=ckpt_path)
    rng = np.random.default_rng(cfg["train.seed"] + 101)
    last_good = {k: v.copy() for k, v in store.state_arrays().items()}

    for epoch in range(epochs):
        tick = time.perf_counter()
        order = rng.permutation(n_chunks)
        sum_loss = sum_err = seen = 0.0
        for start in range(0, n_chunks, batch):
            sel = order[start:start + batch]
            fb = Tensor(chunk_f[sel].astype(dtype))
            gt = chunk_p[sel]
            try:
                out = net.rollout(fb, enc_mode, training=True)
                parts = {
                    "3d": loss_3d(out.poses, gt),
                    "delta": (loss_delta(out.deltas, gt)
                              if out.deltas is not None else None),
                    "2d": loss_2d(out.poses, gt, cam),
                    "bl": loss_bone_length(out.poses, gt, topology),
                    "ba": loss_bone_angle(out.poses, gt, topology),
                }
                loss = loss_total(parts, weights)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise NumericFault("loss is not finite")
                if loss.requires_grad:
                    store.zero_grad()
                    loss.backward()
                    store.adam_step(lr)
            except NumericFault as exc:
                store.load_arrays(last_good)
                if ckpt_path is not None:
                    save_checkpoint(ckpt_path, store, cfg)
                where = f"; last-good checkpoint at {ckpt_path}" \
                    if ckpt_path else ""
                raise NumericFault(
                    f"training aborted in epoch {epoch}: {exc}{where}") from exc
            sum_loss += value * len(sel)
            sum_err += mpjpe(out.poses.data, gt) * len(sel)
            seen += len(sel)
        row = EpochRow(epoch, sum_loss / seen, sum_err / seen,
                       time.perf_counter() - tick)
        result.curve.append(row)
        last_good = {k: v.copy() for k, v in store.state_arrays().items()}
        if log is not None:
            log(f"epoch {epoch + 1}/{epochs}  loss {row.loss:.4f}  "
                f"mpjpe {row.mpjpe:.2f} mm  ({row.seconds:.1f}s)")
        if target > 0 and row.mpjpe < target:
            result.stopped_early = True
            break

    if ckpt_path is not None:
        save_checkpoint(ckpt_path, store, cfg)
        with open(os.path.join(out_dir, "loss_curve.csv"), "w") as fh:
            fh.write(result.curve_csv())
    return result
