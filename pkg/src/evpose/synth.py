"""Synthetic egocentric event data: motion, rendering, event emission, files.

The generator is deliberately simple but exact where it matters for testing:
joint-angle trajectories are band-limited sinusoids driven through forward
kinematics (bone lengths are preserved to rotation round-off), limbs render
as anti-aliased segments with a Gaussian cross-section in log-intensity, and
per-pixel event emission quantises intensity changes against a carried
reference level the way an ideal sensor would. Everything is deterministic
given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial import QhullError

from . import camera as cam_mod
from .camera import CameraModel
from .errors import FormatError, SequencingError
from .events import EVENT_DTYPE, check_bounds, check_sorted
from .kernels import emit_events
from .skeleton import (HEAD_OFFSET_MM, TORSO_JOINTS, SkeletonTopology,
                       default_topology, rest_directions)

_PSE1_MAGIC = b"PSE1"


@dataclass
class PoseSequence:
    """Ground-truth poses: times (N,) us, poses (N, J, 3) mm, visibility (N, J)."""

    times: np.ndarray
    poses: np.ndarray
    visibility: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.uint64)
        self.poses = np.asarray(self.poses)
        self.visibility = np.asarray(self.visibility, dtype=bool)
        n = self.times.shape[0]
        if self.poses.shape[:1] != (n,) or self.poses.shape[-1] != 3:
            raise ValueError("poses must be (N, J, 3)")
        if self.visibility.shape != self.poses.shape[:2]:
            raise ValueError("visibility must be (N, J)")
        if n > 1 and np.any(np.diff(self.times.astype(np.int64)) <= 0):
            raise SequencingError("pose timestamps must strictly increase")

    @property
    def joint_count(self) -> int:
        return self.poses.shape[1]

    def __len__(self) -> int:
        return int(self.times.shape[0])


# --- motion -------------------------------------------------------------------


def _chain_of(joint_name: str) -> str:
    if any(part in joint_name for part in ("elbow", "wrist")):
        return "arm"
    if any(part in joint_name for part in ("knee", "ankle", "foot")):
        return "leg"
    return "torso"


def _rodrigues(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rotation matrices (N, 3, 3) about one fixed axis by (N,) angles."""
    ax, ay, az = axis
    k = np.array([[0.0, -az, ay], [az, 0.0, -ax], [-ay, ax, 0.0]])
    s = np.sin(angles)[:, None, None]
    c = (1.0 - np.cos(angles))[:, None, None]
    return np.eye(3) + s * k + c * (k @ k)


def generate_motion(topology: SkeletonTopology, times_us: np.ndarray,
                    seed: int, ranges: dict[str, tuple[float, float, float, float]],
                    ) -> np.ndarray:
    """Forward-kinematic poses (N, J, 3) in mm for the given micro-times.

    ranges maps chain name ('arm'/'leg'/'torso') to (amp_lo, amp_hi,
    freq_lo, freq_hi); each bone gets a random fixed axis and a two-harmonic
    band-limited angle trajectory inside its chain's ranges. Same seed, same
    trajectory, bit for bit.
    """
    rng = np.random.default_rng(seed)
    t = np.asarray(times_us, dtype=np.float64) * 1e-6
    n = t.shape[0]
    j = topology.joint_count
    dirs = rest_directions()

    positions = np.empty((n, j, 3), dtype=np.float64)
    rotations = np.empty((n, j, 3, 3), dtype=np.float64)
    positions[:, 0] = HEAD_OFFSET_MM
    rotations[:, 0] = np.eye(3)

    for b, (parent, child) in enumerate(topology.bones):
        amp_lo, amp_hi, f_lo, f_hi = ranges[_chain_of(topology.joints[child])]
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = np.zeros(n)
        for harmonic in (1, 2):
            amp = rng.uniform(amp_lo, amp_hi) / harmonic
            freq = rng.uniform(f_lo, f_hi) * harmonic
            phase = rng.uniform(0.0, 2.0 * np.pi)
            angle += amp * np.sin(2.0 * np.pi * freq * t + phase)
        local = _rodrigues(axis, angle)
        glob = rotations[:, parent] @ local
        rotations[:, child] = glob
        offset = dirs[b] * topology.rest_lengths[b]
        positions[:, child] = positions[:, parent] + glob @ offset
    return positions


def motion_ranges_from_config(cfg) -> dict[str, tuple[float, float, float, float]]:
    return {
        "arm": (cfg["synth.arm_amp_lo"], cfg["synth.arm_amp_hi"],
                cfg["synth.arm_freq_lo"], cfg["synth.arm_freq_hi"]),
        "leg": (cfg["synth.leg_amp_lo"], cfg["synth.leg_amp_hi"],
                cfg["synth.leg_freq_lo"], cfg["synth.leg_freq_hi"]),
        "torso": (cfg["synth.torso_amp_lo"], cfg["synth.torso_amp_hi"],
                  cfg["synth.torso_freq_lo"], cfg["synth.torso_freq_hi"]),
    }


# --- visibility ---------------------------------------------------------------


def visibility_mask(poses: np.ndarray, cam: CameraModel) -> np.ndarray:
    """(N, J) visibility: in the field of view and not behind the torso.

    The occlusion proxy marks a limb joint invisible when its projection
    falls strictly inside the convex hull of the projected torso joints.
    Torso joints themselves are only subject to the field-of-view test.
    """
    n, j, _ = poses.shape
    vis = cam_mod.in_fov(poses, cam)
    torso = list(TORSO_JOINTS)
    limbs = [idx for idx in range(j) if idx not in TORSO_JOINTS]
    for i in range(n):
        good = np.linalg.norm(poses[i], axis=-1) > 1e-9
        if not good[torso].all():
            continue
        px = project_lenient(poses[i], cam)
        try:
            hull = ConvexHull(px[torso])
        except QhullError:
            continue  # degenerate torso projection: no occlusion
        eq = hull.equations  # rows (a, b, c): a*x + b*y + c <= 0 inside
        for joint in limbs:
            if not vis[i, joint] or not good[joint]:
                continue
            margin = eq[:, :2] @ px[joint] + eq[:, 2]
            if np.max(margin) < -1e-9:
                vis[i, joint] = False
    return vis


def project_lenient(points: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Projection without field-of-view validation (renderer/visibility use)."""
    return cam_mod.project(points, cam, validate=False)


# --- rendering ----------------------------------------------------------------


def render_log_intensity(pose: np.ndarray, topology: SkeletonTopology,
                         cam: CameraModel, width: int, height: int,
                         sigma: float = 1.5, gain: float = 1.0,
                         background: float = 0.0) -> np.ndarray:
    """Render one pose to an (H, W) float64 log-intensity image.

    Each bone whose endpoints are inside the field of view contributes a
    Gaussian ridge along its projected segment; a pose fully out of view
    leaves exactly the uniform background.
    """
    img = np.full((height, width), background, dtype=np.float64)
    ys, xs = np.mgrid[0:height, 0:width]
    grid = np.stack([xs, ys], axis=-1).astype(np.float64)  # (H, W, 2) as (u, v)
    fov_ok = cam_mod.in_fov(pose, cam)
    inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma)
    for parent, child in topology.bones:
        if not (fov_ok[parent] and fov_ok[child]):
            continue
        a = project_lenient(pose[parent], cam)
        b = project_lenient(pose[child], cam)
        seg = b - a
        seg_len2 = float(seg @ seg)
        rel = grid - a
        if seg_len2 > 1e-12:
            tpar = np.clip((rel @ seg) / seg_len2, 0.0, 1.0)
            rel = rel - tpar[..., None] * seg
        d2 = np.einsum("hwc,hwc->hw", rel, rel)
        img += gain * np.exp(-d2 * inv_two_sigma2)
    return img


# --- event emission -----------------------------------------------------------


def simulate_events(dense: PoseSequence, topology: SkeletonTopology,
                    cam: CameraModel, width: int, height: int,
                    contrast: float, sigma: float = 1.5, gain: float = 1.0,
                    background: float = 0.0) -> np.ndarray:
    """Scan a dense pose sequence and emit the event stream it would cause.

    The first frame initialises the per-pixel reference level and emits
    nothing. At each later micro-step, pixels whose log-intensity moved at
    least one contrast quantum from their reference emit floor(|delta|/C)
    events with interpolated timestamps; the reference advances by the
    emitted quanta. The returned record array is time-sorted.
    """
    def render(k: int) -> np.ndarray:
        return render_log_intensity(dense.poses[k], topology, cam, width,
                                    height, sigma, gain, background)

    prev = render(0)
    ref = prev.copy()
    chunks = []
    times = dense.times.astype(np.int64)
    for k in range(1, len(dense)):
        now = render(k)
        xs, ys, ts, ps = emit_events(now, prev, ref, int(times[k - 1]),
                                     int(times[k] - times[k - 1]), contrast)
        if ts.size:
            order = np.argsort(ts, kind="stable")
            chunk = np.zeros(ts.size, dtype=EVENT_DTYPE)
            chunk["x"] = xs[order]
            chunk["y"] = ys[order]
            chunk["p"] = ps[order]
            chunk["t"] = ts[order]
            chunks.append(chunk)
        prev = now
    if not chunks:
        return np.zeros(0, dtype=EVENT_DTYPE)
    events = np.concatenate(chunks)
    check_sorted(events)
    return events


# --- end-to-end synthesis -----------------------------------------------------


@dataclass
class Dataset:
    """An event stream plus the ground truth it was rendered from."""

    events: np.ndarray
    width: int
    height: int
    poses: PoseSequence


def synthesize_dataset(cfg, topology: SkeletonTopology | None = None,
                       seed: int | None = None) -> Dataset:
    """Simulate one sequence per the synth.* config keys.

    Ground truth is resampled at window ends: pose i sits at (i+1) * T from
    the simulation origin, which is exactly where the i-th window closes.
    """
    topology = topology or default_topology()
    cam = CameraModel.from_config(cfg)
    width, height = cfg["img.width"], cfg["img.height"]
    window_us = cfg.window_us()
    dt = cfg["synth.dt_us"]
    if window_us % dt != 0:
        raise ValueError("synth.dt_us must divide the window length")
    n_windows = int(cfg["synth.duration_s"] * 1e6) // window_us
    if n_windows < 1:
        raise ValueError("duration shorter than one window")
    micro = np.arange(0, n_windows * window_us + dt, dt, dtype=np.uint64)

    if seed is None:
        seed = cfg["synth.seed"]
    poses = generate_motion(topology, micro, seed, motion_ranges_from_config(cfg))
    dense = PoseSequence(micro, poses, np.ones(poses.shape[:2], dtype=bool))

    events = simulate_events(
        dense, topology, cam, width, height, cfg["synth.contrast"],
        sigma=cfg["synth.line_sigma"], gain=cfg["synth.line_gain"],
        background=cfg["synth.background"])

    gt_idx = ((np.arange(n_windows) + 1) * (window_us // dt)).astype(np.int64)
    gt_poses = poses[gt_idx]
    gt = PoseSequence(micro[gt_idx], gt_poses, visibility_mask(gt_poses, cam))
    return Dataset(events, width, height, gt)


# --- PSE1 serialization ---------------------------------------------------------


def _pose_dtype(j: int) -> np.dtype:
    return np.dtype([("t", "<u8"), ("pose", "<f4", (j, 3)), ("vis", "u1", (j,))])


def write_poses(path: str, seq: PoseSequence) -> None:
    """Write a "PSE1" file: magic, u16 joint count, packed records."""
    j = seq.joint_count
    rec = np.zeros(len(seq), dtype=_pose_dtype(j))
    rec["t"] = seq.times
    rec["pose"] = seq.poses.astype(np.float32)
    rec["vis"] = seq.visibility.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(_PSE1_MAGIC)
        fh.write(np.uint16(j).tobytes())
        fh.write(rec.tobytes())


def read_poses(path: str) -> PoseSequence:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6 or blob[:4] != _PSE1_MAGIC:
        raise FormatError(f"{path}: not a PSE1 file")
    j = int(np.frombuffer(blob, "<u2", 1, 4)[0])
    body = blob[6:]
    dtype = _pose_dtype(j)
    if len(body) % dtype.itemsize:
        raise FormatError(f"{path}: truncated pose record")
    rec = np.frombuffer(body, dtype=dtype)
    return PoseSequence(rec["t"].copy(), rec["pose"].astype(np.float32),
                        rec["vis"].astype(bool))


def write_dataset(base_path: str, dataset: Dataset) -> tuple[str, str]:
    """Write base_path.evs1 + base_path.pse1; returns the two paths."""
    from .events import write_events
    ev_path, pose_path = base_path + ".evs1", base_path + ".pse1"
    write_events(ev_path, dataset.events, dataset.width, dataset.height)
    write_poses(pose_path, dataset.poses)
    return ev_path, pose_path


def read_dataset(base_path: str) -> Dataset:
    from .events import read_events
    events, width, height = read_events(base_path + ".evs1")
    poses = read_poses(base_path + ".pse1")
    return Dataset(events, width, height, poses)
