"""Live inference: a single-threaded window-to-pose state machine."""

from __future__ import annotations

import time

import numpy as np

from .config import Config
from .events import EventWindow, build_lnes, event_array, window_stream, windows_aligned
from .model.net import PoseNet
from .nn.tensor import Tensor, no_grad


class StreamingEngine:
    """Consumes event windows in order, emits one pose per window.

    Carries SSM and fusion state between windows. Every window is fed to
    the network, an empty one as an all-zero frame, so the state advances
    on the same inputs a batch causal replay would see; but the pose
    emitted for an empty window after the first holds the previous
    estimate, so a silent sensor keeps the last pose. reset_every > 0
    drops all state every that many windows.
    """

    def __init__(self, net: PoseNet, cfg: Config, window_us: int | None = None,
                 reset_every: int | None = None, prm_mode: str | None = None):
        self.net = net
        self.prm_mode = prm_mode
        self.width = cfg["img.width"]
        self.height = cfg["img.height"]
        self.dtype = np.dtype(cfg["core.dtype"])
        self.window_us = window_us if window_us is not None \
            else cfg.window_us(inference=True)
        # operating at a window length other than the training one rescales
        # the state-space timestep by the same factor
        self.dt_scale = self.window_us / float(cfg.window_us())
        self.reset_every = cfg["prm.reset_every"] if reset_every is None \
            else reset_every
        self.reset()
        self.windows = 0
        self.elapsed = 0.0

    def reset(self) -> None:
        self._carry = None
        self._last = None
        self._since_reset = 0

    def process(self, window: EventWindow) -> np.ndarray:
        """One pose (J, 3) in mm for one window."""
        tick = time.perf_counter()
        if self.reset_every > 0 and self._since_reset >= self.reset_every:
            self.reset()
        frame = build_lnes(window, self.width, self.height) \
            .values.transpose(2, 0, 1)
        if self._carry is None:
            self._carry = self.net.init_stream(1, self.dtype)
        with no_grad():
            out, self._carry = self.net.step(
                Tensor(frame[None].astype(self.dtype)), self._carry,
                prm_mode=self.prm_mode, dt_scale=self.dt_scale)
        if window.events.size == 0 and self._last is not None:
            pose = self._last
        else:
            pose = out.data[0].astype(np.float64)
            self._last = pose
        self._since_reset += 1
        self.windows += 1
        self.elapsed += time.perf_counter() - tick
        return pose

    @property
    def throughput(self) -> float:
        """Sustained poses per second over everything processed so far."""
        return self.windows / self.elapsed if self.elapsed > 0 else 0.0


def stream_poses(net: PoseNet, cfg: Config, events, t0: int | None = None,
                 count: int | None = None
                 ) -> tuple[np.ndarray, np.ndarray, float]:
    """Run the engine over a raw event stream.

    Returns (times, poses, throughput): times (n,) are the window-end
    timestamps in us, poses (n, J, 3) in mm. With count given the window
    grid is exactly count windows from t0 even if the stream is empty;
    otherwise windows run from the first event to the last.
    """
    ev = event_array(events)
    T = cfg.window_us(inference=True)
    engine = StreamingEngine(net, cfg)
    if count is not None:
        wins = windows_aligned(ev, t0 if t0 is not None else 0, T, count)
    else:
        wins = window_stream(ev, T, t0)
    times, poses = [], []
    for w in wins:
        times.append(w.t0 + w.duration)
        poses.append(engine.process(w))
    if not poses:
        j = net.joints
        return np.zeros(0, np.int64), np.zeros((0, j, 3)), 0.0
    return np.asarray(times, np.int64), np.stack(poses), engine.throughput


def hold_empty(poses: np.ndarray, empty: np.ndarray) -> np.ndarray:
    """Apply the engine's emission rule to batch-computed poses.

    Poses at empty windows (after the first emitted one) are replaced by
    the previous emitted pose, so a batch causal replay reproduces the
    streaming output pose-for-pose.
    """
    out = np.array(poses, copy=True)
    held = None
    for i in range(len(out)):
        if empty[i] and held is not None:
            out[i] = held
        else:
            held = out[i]
    return out


def match_nearest(times: np.ndarray, gt_times: np.ndarray) -> np.ndarray:
    """Index of the nearest ground-truth timestamp for each emitted pose."""
    gt = np.asarray(gt_times, np.int64)
    t = np.asarray(times, np.int64)
    if len(gt) == 1:
        return np.zeros(len(t), np.int64)
    pos = np.searchsorted(gt, t)
    pos = np.clip(pos, 1, len(gt) - 1)
    left = gt[pos - 1]
    right = gt[pos]
    return np.where(t - left <= right - t, pos - 1, pos)
