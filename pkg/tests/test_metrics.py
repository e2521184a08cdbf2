"""Metric oracles: position error, Procrustes alignment, smoothness, gain."""

import numpy as np
import pytest

from evpose import metrics
from evpose.errors import ShapeMismatchError
from evpose.metrics import MetricsReport


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_rotation(rng):
    a = rng.normal(size=(3, 3))
    q, _ = np.linalg.qr(a)
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def test_mpjpe_zero_and_offset_oracle(rng):
    gt = rng.normal(size=(4, 6, 3)) * 100
    assert metrics.mpjpe(gt, gt) == 0.0
    off = gt + np.array([3.0, 4.0, 0.0])
    assert np.isclose(metrics.mpjpe(off, gt), 5.0)


def test_mpjpe_mask_selects_joints(rng):
    gt = np.zeros((2, 3, 3))
    pred = gt.copy()
    pred[:, 0, 0] = 10.0  # only joint 0 wrong
    mask = np.zeros((2, 3), bool)
    mask[:, 0] = True
    assert np.isclose(metrics.mpjpe(pred, gt, mask), 10.0)
    assert np.isclose(metrics.mpjpe(pred, gt, ~mask), 0.0)
    with pytest.raises(ShapeMismatchError):
        metrics.mpjpe(pred, gt, np.zeros((2, 3), bool))


def test_pa_mpjpe_removes_translation(rng):
    gt = rng.normal(size=(3, 8, 3)) * 100
    off = gt + np.array([3.0, 4.0, 0.0])
    assert np.isclose(metrics.mpjpe(off, gt), 5.0)
    assert metrics.pa_mpjpe(off, gt) < 1e-9


def test_pa_mpjpe_removes_similarity(rng):
    gt = rng.normal(size=(2, 8, 3)) * 100
    rot = random_rotation(rng)
    pred = 2.0 * gt @ rot.T + np.array([50.0, -30.0, 10.0])
    assert metrics.pa_mpjpe(pred, gt) < 1e-9


def test_pa_never_exceeds_mpjpe(rng):
    for _ in range(200):
        gt = rng.normal(size=(1, 8, 3)) * 100
        pred = gt + rng.normal(size=gt.shape) * rng.uniform(1, 50)
        assert metrics.pa_mpjpe(pred, gt) <= metrics.mpjpe(pred, gt) + 1e-9


def test_pa_degenerate_gt_falls_back_to_translation(rng):
    gt = np.zeros((1, 5, 3))  # all joints coincident
    pred = rng.normal(size=(1, 5, 3)) * 10
    out = metrics.pa_mpjpe(pred, gt)
    centered = pred[0] - pred[0].mean(axis=0)
    want = np.linalg.norm(centered, axis=-1).mean()
    assert np.isfinite(out)
    assert np.isclose(out, want)


def test_e_smooth_jitter_oracle():
    n = 6
    gt = np.zeros((n, 1, 3))
    pred = np.zeros((n, 1, 3))
    pred[::2, 0, 0] = 1.0   # alternate +-1 mm on x -> steps of 2 mm
    pred[1::2, 0, 0] = -1.0
    assert np.isclose(metrics.e_smooth(pred, gt), 2.0)


def test_e_smooth_offset_invariant(rng):
    gt = rng.normal(size=(5, 4, 3)) * 100
    pred = gt + rng.normal(size=(5, 4, 3))
    base = metrics.e_smooth(pred, gt)
    shifted = metrics.e_smooth(pred + np.array([10.0, 20.0, -5.0]), gt)
    assert np.isclose(base, shifted)


def test_e_smooth_needs_two_frames(rng):
    with pytest.raises(ShapeMismatchError):
        metrics.e_smooth(np.zeros((1, 4, 3)), np.zeros((1, 4, 3)))


def test_pog_oracle():
    out = metrics.pog({0: 100.0, 40: 60.0, 20: 80.0})
    assert out[0] == 0.0
    assert np.isclose(out[40], 40.0)
    assert np.isclose(out[20], 20.0)
    same = metrics.pog({0: 55.0, 10: 55.0})
    assert same[10] == 0.0
    with pytest.raises(ShapeMismatchError):
        metrics.pog({10: 60.0})


def test_report_aggregate_and_csv(rng):
    rep = MetricsReport()
    gt1 = rng.normal(size=(4, 5, 3)) * 100
    gt2 = rng.normal(size=(8, 5, 3)) * 100
    rep.add("seq0", gt1 + 1.0, gt1)
    rep.add("seq1", gt2 + 4.0, gt2)
    agg = rep.aggregate()
    # frame-weighted: (4*a + 8*b) / 12
    want = (4 * rep.sequences[0].mpjpe + 8 * rep.sequences[1].mpjpe) / 12
    assert np.isclose(agg.mpjpe, want)

    rep.throughput = 123.4
    rep.extras["pog_40"] = 7.5
    csv = rep.to_csv()
    lines = csv.strip().split("\n")
    assert lines[0] == "name,frames,mpjpe_mm,pa_mpjpe_mm,e_smooth_mm"
    assert lines[1].startswith("seq0,4,")
    assert lines[3].startswith("aggregate,12,")
    assert any(line.startswith("pog_40,") for line in lines)
    assert any(line.startswith("throughput") for line in lines)
    assert "seq0" in rep.table()
