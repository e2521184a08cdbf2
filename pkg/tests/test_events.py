"""Windowing and surface construction against brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evpose.errors import CorruptStreamError, FormatError, SequencingError
from evpose.events import (EVENT_DTYPE, EventWindow, build_lnes,
                           check_bounds, check_sorted, concatenate_windows,
                           event_array, parse_events, read_events,
                           window_stream, windows_aligned, write_events)

from conftest import random_events


def _ev(rows):
    arr = np.zeros(len(rows), dtype=EVENT_DTYPE)
    for i, (x, y, t, p) in enumerate(rows):
        arr[i] = (x, y, p, t)
    return arr


def lnes_bruteforce(window, width, height):
    """Dict-based reference: newest event per (x, y, polarity) wins."""
    latest = {}
    for rec in window.events:
        key = (int(rec["x"]), int(rec["y"]), 0 if rec["p"] > 0 else 1)
        latest[key] = max(latest.get(key, -1), int(rec["t"]))
    surface = np.zeros((height, width, 2), dtype=np.float32)
    for (x, y, c), t in latest.items():
        surface[y, x, c] = np.float32((t - window.t0) / float(window.duration))
    return surface


# --- window assignment ---------------------------------------------------------


def test_three_events_three_windows():
    ev = _ev([(0, 0, 5000, 1), (1, 0, 25000, -1), (2, 0, 45000, 1)])
    wins = list(window_stream(ev, 20000, t0=0))
    assert [w.t0 for w in wins] == [0, 20000, 40000]
    assert [len(w) for w in wins] == [1, 1, 1]


def test_default_origin_is_first_event():
    ev = _ev([(0, 0, 1000, 1), (0, 0, 15000, 1), (0, 0, 21000, -1)])
    wins = list(window_stream(ev, 20000))
    assert [w.t0 for w in wins] == [1000, 21000]
    assert [len(w) for w in wins] == [2, 1]


def test_boundary_event_opens_next_window():
    # t = t0 + T belongs to window 1, not window 0: intervals are half-open
    ev = _ev([(0, 0, 0, 1), (0, 0, 20000, 1)])
    wins = list(window_stream(ev, 20000, t0=0))
    assert [len(w) for w in wins] == [1, 1]
    assert wins[1].t0 == 20000


def test_empty_windows_are_emitted():
    ev = _ev([(0, 0, 0, 1), (0, 0, 90000, 1)])
    wins = list(window_stream(ev, 20000, t0=0))
    assert [len(w) for w in wins] == [1, 0, 0, 0, 1]
    frame = build_lnes(wins[2], 4, 4)
    assert not frame.values.any()


def test_windows_partition_the_stream(rng):
    ev = random_events(rng, 500, 8, 8, 100000)
    wins = list(window_stream(ev, 7000, t0=0))
    merged = np.concatenate([w.events for w in wins])
    assert np.array_equal(merged, np.sort(ev, order="t", kind="stable"))
    for w in wins:
        t = w.events["t"].astype(np.int64)
        assert ((t >= w.t0) & (t < w.t0 + w.duration)).all()


def test_events_before_origin_rejected():
    ev = _ev([(0, 0, 500, 1)])
    with pytest.raises(SequencingError):
        list(window_stream(ev, 1000, t0=1000))


def test_windows_aligned_fixed_count():
    ev = _ev([(0, 0, 5000, 1), (0, 0, 999999, 1)])
    wins = windows_aligned(ev, 0, 20000, 3)
    assert len(wins) == 3
    assert [len(w) for w in wins] == [1, 0, 0]  # far event ignored


def test_concatenate_requires_adjacency():
    a = EventWindow(0, 100, _ev([]))
    b = EventWindow(100, 100, _ev([]))
    c = EventWindow(300, 100, _ev([]))
    assert concatenate_windows(a, b).size == 0
    with pytest.raises(SequencingError):
        concatenate_windows(a, c)


# --- surface values ------------------------------------------------------------


def test_surface_value_is_normalized_age():
    w = EventWindow(0, 20000, _ev([(3, 2, 15000, 1)]))
    frame = build_lnes(w, 8, 8)
    assert frame.values[2, 3, 0] == np.float32(0.75)
    assert frame.values.sum() == np.float32(0.75)


def test_latest_event_wins_per_cell():
    w = EventWindow(0, 10000, _ev([(1, 1, 2000, 1), (1, 1, 8000, 1)]))
    frame = build_lnes(w, 4, 4)
    assert frame.values[1, 1, 0] == np.float32(0.8)


def test_polarities_use_separate_channels():
    w = EventWindow(0, 10000, _ev([(0, 0, 4000, 1), (0, 0, 6000, -1)]))
    frame = build_lnes(w, 2, 2)
    assert frame.values[0, 0, 0] == np.float32(0.4)
    assert frame.values[0, 0, 1] == np.float32(0.6)


def test_event_at_t0_is_invisible():
    w = EventWindow(5000, 10000, _ev([(0, 0, 5000, 1)]))
    assert not build_lnes(w, 2, 2).values.any()


def test_closed_final_window_reaches_one():
    w = EventWindow(0, 10000, _ev([(0, 0, 10000, 1)]))
    frame = build_lnes(w, 2, 2)
    assert frame.values[0, 0, 0] == np.float32(1.0)
    frame.validate()


def test_window_rejects_out_of_range_times():
    with pytest.raises(SequencingError):
        EventWindow(0, 10000, _ev([(0, 0, 10001, 1)]))


def test_surface_matches_bruteforce(rng):
    for _ in range(20):
        ev = random_events(rng, 200, 6, 5, 10000)
        w = EventWindow(0, 10000, ev)
        frame = build_lnes(w, 6, 5)
        assert np.array_equal(frame.values, lnes_bruteforce(w, 6, 5))
        frame.validate()


@settings(deadline=None, max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 4),
                          st.integers(0, 9999), st.sampled_from([-1, 1])),
                max_size=60))
def test_surface_matches_bruteforce_property(rows):
    rows.sort(key=lambda r: r[2])
    w = EventWindow(0, 10000, _ev(rows))
    frame = build_lnes(w, 6, 5)
    assert np.array_equal(frame.values, lnes_bruteforce(w, 6, 5))


def test_bounds_checked_against_sensor():
    w = EventWindow(0, 1000, _ev([(7, 0, 10, 1)]))
    with pytest.raises(CorruptStreamError):
        build_lnes(w, 4, 4)


# --- stream validation ----------------------------------------------------------


def test_check_sorted_rejects_regression():
    ev = _ev([(0, 0, 100, 1), (0, 0, 50, 1)])
    with pytest.raises(SequencingError):
        check_sorted(ev)


def test_check_bounds_rejects_bad_polarity():
    ev = _ev([(0, 0, 100, 1)])
    ev["p"][0] = 0
    with pytest.raises(CorruptStreamError):
        check_bounds(ev, 4, 4)


def test_event_array_accepts_tuples():
    ev = event_array([(1, 2, 30, 1), (3, 4, 40, -1)])
    assert ev.dtype == EVENT_DTYPE
    assert ev["t"].tolist() == [30, 40]


# --- EVS1 files -----------------------------------------------------------------


def test_evs1_round_trip(tmp_path, rng):
    ev = random_events(rng, 300, 64, 48, 10**6)
    path = str(tmp_path / "s.evs1")
    write_events(path, ev, 64, 48)
    back, w, h = read_events(path)
    assert (w, h) == (64, 48)
    assert np.array_equal(back, ev)
    assert back.dtype.itemsize == 13


def test_evs1_record_layout(tmp_path):
    ev = _ev([(258, 5, 7, -1)])
    path = str(tmp_path / "one.evs1")
    write_events(path, ev, 512, 512)
    blob = open(path, "rb").read()
    assert blob[:4] == b"EVS1"
    assert len(blob) == 4 + 2 + 2 + 13
    assert blob[8:10] == (258).to_bytes(2, "little")  # x
    assert blob[12] == 0xFF  # p = -1 as signed byte


def test_evs1_rejects_bad_magic():
    with pytest.raises(FormatError):
        parse_events(b"NOPE" + bytes(17))


def test_evs1_rejects_truncated_record():
    good = b"EVS1" + (4).to_bytes(2, "little") + (4).to_bytes(2, "little")
    with pytest.raises(FormatError):
        parse_events(good + bytes(12))  # one byte short of a record
