"""Asynchronous event records, fixed time windows, and normalized time surfaces.

An event is (x, y, t, p): pixel coordinates, a microsecond timestamp, and a
polarity in {-1, +1}. Streams are kept as packed numpy record arrays whose
layout doubles as the on-disk "EVS1" format, so file I/O is a straight
frombuffer/tobytes. A window of length T starting at t0 collects the events
with floor((t - t0) / T) equal to its index; each window renders to an
(H, W, 2) float32 surface holding, per pixel and polarity, the normalized
age (t - t0) / T of the newest event there (zero where no event landed).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import CorruptStreamError, FormatError, SequencingError
from .kernels import lnes_accumulate

# Record layout shared by in-memory streams and EVS1 files (13 bytes packed).
EVENT_DTYPE = np.dtype([("x", "<u2"), ("y", "<u2"), ("p", "<i1"), ("t", "<u8")])

_EVS1_MAGIC = b"EVS1"


class Event(NamedTuple):
    """One event; convenience view used at API edges, not in bulk storage."""

    x: int
    y: int
    t: int
    p: int


def event_array(events: Iterable | np.ndarray) -> np.ndarray:
    """Coerce events given as tuples/Events/record array to EVENT_DTYPE."""
    if isinstance(events, np.ndarray) and events.dtype == EVENT_DTYPE:
        return events
    rows = [(e.x, e.y, e.p, e.t) if isinstance(e, Event) else
            (e[0], e[1], e[3], e[2]) for e in events]
    out = np.zeros(len(rows), dtype=EVENT_DTYPE)
    for i, (x, y, p, t) in enumerate(rows):
        out[i] = (x, y, p, t)
    return out


def check_sorted(events: np.ndarray) -> None:
    if events.size > 1 and np.any(np.diff(events["t"].astype(np.int64)) < 0):
        raise SequencingError("event timestamps are not non-decreasing")


def check_bounds(events: np.ndarray, width: int, height: int) -> None:
    if events.size == 0:
        return
    if int(events["x"].max(initial=0)) >= width or \
            int(events["y"].max(initial=0)) >= height:
        raise CorruptStreamError(
            f"event pixel outside {width}x{height} sensor bounds")
    if not np.all(np.abs(events["p"].astype(np.int32)) == 1):
        raise CorruptStreamError("event polarity must be -1 or +1")


@dataclass
class EventWindow:
    """Events assigned to one window [t0, t0 + duration).

    Events are stored sorted by timestamp (stable, so ties keep stream
    order). A manually built window may carry an event at exactly
    t0 + duration - the closed final window of a stream - which renders to
    a normalized age of exactly 1.0.
    """

    t0: int
    duration: int
    events: np.ndarray

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("window duration must be positive")
        ev = event_array(self.events)
        t = ev["t"].astype(np.int64)
        if ev.size and (t.min() < self.t0 or t.max() > self.t0 + self.duration):
            raise SequencingError(
                "window events must satisfy t0 <= t <= t0 + duration")
        order = np.argsort(t, kind="stable")
        if not np.array_equal(order, np.arange(ev.size)):
            ev = ev[order]
        self.events = ev

    def __len__(self) -> int:
        return int(self.events.size)


def window_stream(events, duration: int, t0: int | None = None
                  ) -> Iterator[EventWindow]:
    """Split a time-sorted stream into consecutive windows of length T.

    Windows start at t0 (default: the first event's timestamp) and are
    emitted contiguously up to the window holding the last event - including
    empty windows in between, which render to all-zero surfaces.
    """
    ev = event_array(events)
    check_sorted(ev)
    if duration <= 0:
        raise ValueError("window duration must be positive")
    if ev.size == 0:
        return
    t = ev["t"].astype(np.int64)
    if t0 is None:
        t0 = int(t[0])
    if t[0] < t0:
        raise SequencingError("events precede the window origin t0")
    idx = (t - t0) // duration
    n_windows = int(idx[-1]) + 1
    bounds = np.searchsorted(idx, np.arange(n_windows + 1))
    for i in range(n_windows):
        yield EventWindow(t0 + i * duration, duration,
                          ev[bounds[i]:bounds[i + 1]])


def windows_aligned(events, t0: int, duration: int, count: int
                    ) -> list[EventWindow]:
    """Exactly `count` windows from t0, regardless of where events fall.

    Dataset pipelines use this so the window grid stays aligned with the
    ground-truth pose timestamps (one pose per window end). Events outside
    [t0, t0 + count * duration) are ignored.
    """
    ev = event_array(events)
    check_sorted(ev)
    t = ev["t"].astype(np.int64)
    out = []
    for i in range(count):
        lo, hi = t0 + i * duration, t0 + (i + 1) * duration
        sel = ev[np.searchsorted(t, lo):np.searchsorted(t, hi)]
        out.append(EventWindow(lo, duration, sel))
    return out


def concatenate_windows(a: EventWindow, b: EventWindow) -> np.ndarray:
    """Merge the events of two adjacent windows into one sorted stream."""
    if a.t0 + a.duration != b.t0:
        raise SequencingError("windows are not adjacent")
    return np.concatenate([a.events, b.events])


@dataclass
class LNESFrame:
    """A locally normalized event surface: (H, W, 2) float32 in [0, 1]."""

    width: int
    height: int
    values: np.ndarray

    def validate(self) -> None:
        if self.values.shape != (self.height, self.width, 2):
            raise FormatError("surface shape does not match declared size")
        if self.values.dtype != np.float32:
            raise FormatError("surface values must be float32")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise FormatError("surface values must lie in [0, 1]")


def build_lnes(window: EventWindow, width: int, height: int) -> LNESFrame:
    """Render a window to its normalized time surface.

    Channel 0 holds positive polarity, channel 1 negative. Per cell the
    newest event wins; its value is the normalized age (t - t0) / duration.
    An event at exactly t0 contributes 0.0 and is indistinguishable from an
    empty cell, which the surface definition accepts.
    """
    ev = window.events
    check_bounds(ev, width, height)
    surface = np.zeros((height, width, 2), dtype=np.float32)
    if ev.size:
        t = ev["t"].astype(np.int64)
        order = np.argsort(t, kind="stable")  # canonical order, ties stable
        ev = ev[order]
        t = t[order]
        vals = ((t - window.t0) / float(window.duration)).astype(np.float32)
        chans = np.where(ev["p"] > 0, 0, 1).astype(np.int64)
        lnes_accumulate(surface, ev["x"].astype(np.int64),
                        ev["y"].astype(np.int64), chans, vals)
    return LNESFrame(width, height, surface)


# --- EVS1 serialization ------------------------------------------------------


def write_events(path: str, events: np.ndarray, width: int, height: int) -> None:
    """Write an "EVS1" file: magic, u16 width, u16 height, packed records."""
    ev = event_array(events)
    check_sorted(ev)
    check_bounds(ev, width, height)
    with open(path, "wb") as fh:
        fh.write(_EVS1_MAGIC)
        fh.write(np.uint16(width).tobytes())
        fh.write(np.uint16(height).tobytes())
        fh.write(ev.tobytes())


def parse_events(blob: bytes, origin: str = "buffer"
                 ) -> tuple[np.ndarray, int, int]:
    """Parse EVS1 bytes; returns (events, width, height)."""
    if len(blob) < 8 or blob[:4] != _EVS1_MAGIC:
        raise FormatError(f"{origin}: not an EVS1 stream")
    width = int(np.frombuffer(blob, "<u2", 1, 4)[0])
    height = int(np.frombuffer(blob, "<u2", 1, 6)[0])
    body = blob[8:]
    if len(body) % EVENT_DTYPE.itemsize:
        raise FormatError(f"{origin}: truncated event record")
    ev = np.frombuffer(body, dtype=EVENT_DTYPE).copy()
    try:
        check_sorted(ev)
        check_bounds(ev, width, height)
    except (SequencingError, CorruptStreamError) as exc:
        raise FormatError(f"{origin}: {exc}") from exc
    return ev, width, height


def read_events(path: str) -> tuple[np.ndarray, int, int]:
    """Read an "EVS1" file; returns (events, width, height)."""
    with open(path, "rb") as fh:
        return parse_events(fh.read(), origin=path)
