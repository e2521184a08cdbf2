"""Batch evaluation of a trained model on continuous event streams."""

from __future__ import annotations

import numpy as np

from .config import Config
from .data import dataset_surfaces
from .errors import ConfigError
from .events import windows_aligned
from .metrics import MetricsReport, mpjpe, pog
from .model.net import PoseNet
from .nn.tensor import Tensor, no_grad
from .stream import StreamingEngine
from .synth import Dataset

JOINT_FILTERS = ("all", "occluded-only")


def _segments(n: int, reset_every: int) -> list[tuple[int, int]]:
    if reset_every <= 0:
        return [(0, n)]
    return [(s, min(s + reset_every, n)) for s in range(0, n, reset_every)]


def predict_causal(net: PoseNet, cfg: Config, ds: Dataset, reset_every: int,
                   prm_mode: str | None = None) -> np.ndarray:
    """Frame-by-frame replay through the streaming state machine."""
    wins = windows_aligned(ds.events, 0, cfg.window_us(), len(ds.poses))
    engine = StreamingEngine(net, cfg, window_us=cfg.window_us(),
                             reset_every=reset_every, prm_mode=prm_mode)
    return np.stack([engine.process(w) for w in wins])


def predict_noncausal(net: PoseNet, cfg: Config, ds: Dataset, reset_every: int,
                      prm_mode: str | None = None) -> np.ndarray:
    """Whole-sequence bidirectional evaluation, one rollout per segment."""
    frames, _ = dataset_surfaces(ds, cfg.window_us())
    dtype = np.dtype(cfg["core.dtype"])
    n = frames.shape[0]
    poses = np.zeros((n, net.joints, 3))
    with no_grad():
        for s, e in _segments(n, reset_every):
            out = net.rollout(Tensor(frames[None, s:e].astype(dtype)),
                              "bidirectional", prm_mode=prm_mode)
            poses[s:e] = out.poses.data[0]
    return poses


def evaluate(net: PoseNet, cfg: Config, ds: Dataset, mode: str | None = None,
             joint_filter: str = "all", reset_every: int | None = None,
             name: str = "synthetic") -> MetricsReport:
    """MetricsReport over one continuous stream.

    mode defaults to infer.mode; reset_every to prm.reset_every. The
    occluded-only filter restricts the error means to joints the camera
    could not see; if the stream has no such joints the report comes back
    empty rather than inventing zeros.
    """
    mode = cfg["infer.mode"] if mode is None else mode
    if mode not in ("causal", "non-causal"):
        raise ConfigError(f"infer.mode must be causal or non-causal, got {mode!r}")
    if joint_filter not in JOINT_FILTERS:
        raise ConfigError(f"joint_filter must be one of {JOINT_FILTERS}")
    reset = cfg["prm.reset_every"] if reset_every is None else reset_every

    if mode == "causal":
        pred = predict_causal(net, cfg, ds, reset)
    else:
        pred = predict_noncausal(net, cfg, ds, reset)
    gt = ds.poses.poses.astype(np.float64)

    report = MetricsReport(extras={"reset_every": float(reset)})
    if joint_filter == "occluded-only":
        occluded = ~ds.poses.visibility
        report.extras["occluded_pairs"] = float(occluded.sum())
        if not occluded.any():
            return report
        report.add(name, pred, gt, mask=occluded)
    else:
        report.add(name, pred, gt)
    return report


def pog_selection(ds: Dataset, history: int) -> np.ndarray:
    """(N, J) mask: joint occluded now but visible for the prior frames.

    Frames earlier than `history` windows into the stream are excluded so
    the same set works for every history length up to that bound.
    """
    vis = ds.poses.visibility
    sel = np.zeros_like(vis)
    n = len(vis)
    for t in range(history, n):
        sel[t] = ~vis[t] & vis[t - history:t].all(axis=0)
    return sel


def pog_experiment(net: PoseNet, cfg: Config, ds: Dataset,
                   ks: tuple[int, ...] = (0, 10, 20, 40)
                   ) -> dict[int, float] | None:
    """Past-only gain: how much k windows of history help at occluded joints.

    For each selected (frame, joint) pair the model is re-run causally from
    fresh state k windows before the frame; the mask is identical for every
    k. Returns None when the stream has no qualifying occlusions.
    """
    ks = tuple(sorted(set(int(k) for k in ks)))
    if 0 not in ks:
        ks = (0,) + ks
    horizon = max(ks)
    sel = pog_selection(ds, horizon)
    if not sel.any():
        return None
    frames, _ = dataset_surfaces(ds, cfg.window_us())
    dtype = np.dtype(cfg["core.dtype"])
    gt = ds.poses.poses.astype(np.float64)
    targets = np.flatnonzero(sel.any(axis=1))

    errors: dict[int, float] = {}
    with no_grad():
        for k in ks:
            per_pair = []
            for t in targets:
                carry = net.init_stream(1, dtype)
                for i in range(t - k, t + 1):
                    pose, carry = net.step(
                        Tensor(frames[i:i + 1].astype(dtype)), carry)
                per_pair.append(mpjpe(pose.data[0], gt[t], mask=sel[t]))
            errors[k] = float(np.mean(per_pair))
    return pog(errors)
