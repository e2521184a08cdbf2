"""Training losses over pose sequences.

Predictions are Tensors (gradients flow), ground truth is plain arrays.
Pose tensors are (..., J, 3) in millimetres; sequence losses expect the
time axis immediately before the joint axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import camera as cam_mod
from .errors import ShapeMismatchError
from .nn import Tensor, ops

_ANGLE_EPS = 1e-8          # floor on length denominators, mm
_SQ_EPS = _ANGLE_EPS ** 2  # same floor applied before the sqrt


@dataclass(frozen=True)
class LossWeights:
    w3d: float = 0.01
    wdelta: float = 0.01
    w2d: float = 0.01
    wbl: float = 1e-3
    wba: float = 1e-3

    @classmethod
    def from_config(cls, cfg) -> "LossWeights":
        return cls(cfg["loss.w3d"], cfg["loss.wdelta"], cfg["loss.w2d"],
                   cfg["loss.wbl"], cfg["loss.wba"])


def loss_3d(pred: Tensor, gt: np.ndarray) -> Tensor:
    """Mean squared Euclidean joint error, mm^2."""
    d = pred - gt
    return (d * d).sum(axis=-1).mean()


def loss_2d(pred: Tensor, gt: np.ndarray, cam) -> Tensor:
    """Mean squared pixel error of the projected joints.

    Ground-truth joints outside the field of view are excluded; if none
    remain the loss is exactly zero.
    """
    mask = cam_mod.in_fov(gt, cam)
    count = int(mask.sum())
    if count == 0:
        return Tensor(np.zeros((), dtype=pred.dtype))
    px_pred = ops.project_points(pred, cam)
    px_gt = cam_mod.project(gt, cam, validate=False)
    d = px_pred - px_gt
    sq = (d * d).sum(axis=-1) * mask.astype(pred.dtype)
    return sq.sum() / float(count)


def loss_delta(pred_deltas: Tensor, gt_seq: np.ndarray) -> Tensor:
    """Mean squared displacement error, mm^2.

    pred_deltas: (..., N-1, J, 3) delta-head outputs for windows 2..N;
    gt_seq: (..., N, J, 3) ground-truth poses.
    """
    if gt_seq.shape[-3] < 2:
        raise ShapeMismatchError("displacement loss needs at least 2 windows")
    gt_d = gt_seq[..., 1:, :, :] - gt_seq[..., :-1, :, :]
    if pred_deltas.shape != gt_d.shape:
        raise ShapeMismatchError(
            f"expected deltas of shape {gt_d.shape}, got {pred_deltas.shape}")
    d = pred_deltas - gt_d
    return (d * d).sum(axis=-1).mean()


def _bone_vectors(pose, topology):
    parents, children = topology.bone_index_arrays()
    return (pose[..., children, :] - pose[..., parents, :])


def loss_bone_length(pred: Tensor, gt: np.ndarray, topology) -> Tensor:
    """Mean absolute bone-length difference, mm."""
    bp = _bone_vectors(pred, topology)
    lp = (bp * bp).sum(axis=-1).clip_min(_SQ_EPS).sqrt()
    lg = topology.bone_lengths(gt)
    return (lp - lg).abs().mean()


def loss_bone_angle(pred: Tensor, gt: np.ndarray, topology) -> Tensor:
    """Mean cosine distance between predicted and true bone directions."""
    bp = _bone_vectors(pred, topology)
    bg = _bone_vectors(np.asarray(gt), topology)
    dot = (bp * bg).sum(axis=-1)
    np_p = (bp * bp).sum(axis=-1).clip_min(_SQ_EPS).sqrt()
    ng = np.maximum(np.linalg.norm(bg, axis=-1), _ANGLE_EPS)
    cos = dot / (np_p * ng)
    return (1.0 - cos).mean()


def loss_total(parts: dict[str, Tensor | None], weights: LossWeights) -> Tensor:
    """Weighted sum; a zero weight removes its term without evaluating it.

    parts maps {"3d", "delta", "2d", "bl", "ba"} to loss Tensors (or None
    when the term was not computed, e.g. no delta head in direct mode).
    With every term removed the sum is an empty one: a constant zero that
    carries no gradient, so an optimizer step leaves parameters unchanged.
    """
    w = {"3d": weights.w3d, "delta": weights.wdelta, "2d": weights.w2d,
         "bl": weights.wbl, "ba": weights.wba}
    total = None
    for name, term in parts.items():
        lam = w[name]
        if lam == 0.0 or term is None:
            continue
        piece = term * lam
        total = piece if total is None else total + piece
    if total is None:
        return Tensor(np.zeros(()))
    return total
