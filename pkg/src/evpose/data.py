"""Turning event datasets into the window tensors the model consumes."""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError
from .events import EventWindow, build_lnes, windows_aligned
from .synth import Dataset


def window_surfaces(wins: list[EventWindow], width: int, height: int
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Render windows to stacked surfaces.

    Returns (frames, empty): frames is (n, 2, H, W) float32 channels-first,
    empty marks windows that contained no events at all.
    """
    frames = np.zeros((len(wins), 2, height, width), np.float32)
    empty = np.zeros(len(wins), bool)
    for i, w in enumerate(wins):
        empty[i] = w.events.size == 0
        frames[i] = build_lnes(w, width, height).values.transpose(2, 0, 1)
    return frames, empty


def dataset_surfaces(ds: Dataset, window_us: int) -> tuple[np.ndarray, np.ndarray]:
    """One surface per ground-truth pose, on the grid the poses were sampled on.

    Pose i closes window i, so the windows start at t=0 and abut.
    """
    wins = windows_aligned(ds.events, 0, window_us, len(ds.poses))
    return window_surfaces(wins, ds.width, ds.height)


def training_chunks(frames: np.ndarray, poses: np.ndarray, seq_len: int
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Split a continuous stream into non-overlapping seq_len chunks.

    Each chunk starts from fresh model state during training; the ragged
    tail that cannot fill a chunk is dropped.
    """
    if frames.shape[0] != poses.shape[0]:
        raise ShapeMismatchError(
            f"{frames.shape[0]} windows but {poses.shape[0]} poses")
    n = frames.shape[0] // seq_len
    if n == 0:
        raise ShapeMismatchError(
            f"stream of {frames.shape[0]} windows cannot fill one "
            f"chunk of {seq_len}")
    f = frames[:n * seq_len].reshape(n, seq_len, *frames.shape[1:])
    p = poses[:n * seq_len].reshape(n, seq_len, *poses.shape[1:])
    return f, p
