"""Evaluation metrics and the report they aggregate into.

Everything here is plain numpy on (N, J, 3) arrays in millimetres; metrics
carry no gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError

_DEGENERATE_VAR = 1e-12


def mpjpe(pred: np.ndarray, gt: np.ndarray,
          mask: np.ndarray | None = None) -> float:
    """Mean per-joint position error in mm.

    mask (broadcastable to (..., J)) selects the (frame, joint) pairs that
    count; an empty selection raises rather than inventing a zero.
    """
    err = np.linalg.norm(np.asarray(pred, np.float64) - gt, axis=-1)
    if mask is None:
        return float(err.mean())
    mask = np.broadcast_to(mask, err.shape)
    if not mask.any():
        raise ShapeMismatchError("mpjpe over an empty joint selection")
    return float(err[mask].mean())


def _align_similarity(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Best-fit similarity transform of one frame's pred onto gt.

    Falls back to translation-only alignment when either cloud is
    (numerically) a single point, where scale and rotation are undefined.
    """
    mu_p = pred.mean(axis=0)
    mu_g = gt.mean(axis=0)
    pc = pred - mu_p
    gc = gt - mu_g
    var_p = (pc * pc).sum() / len(pred)
    var_g = (gc * gc).sum() / len(gt)
    if var_p < _DEGENERATE_VAR or var_g < _DEGENERATE_VAR:
        return pred - mu_p + mu_g
    cov = gc.T @ pc / len(pred)
    u, s, vt = np.linalg.svd(cov)
    d = np.ones(3)
    if np.linalg.det(u @ vt) < 0:
        d[-1] = -1.0
    rot = u @ np.diag(d) @ vt
    scale = (s * d).sum() / var_p
    return scale * pc @ rot.T + mu_g


def pa_mpjpe(pred: np.ndarray, gt: np.ndarray,
             mask: np.ndarray | None = None) -> float:
    """MPJPE after per-frame Procrustes alignment (rotation, translation,
    uniform scale).

    Alignment always uses every joint of a frame; mask only selects which
    (frame, joint) errors enter the mean.
    """
    pred = np.asarray(pred, np.float64)
    gt = np.asarray(gt, np.float64)
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
        if mask is not None:
            mask = np.asarray(mask)[None]
    if mask is not None:
        mask = np.broadcast_to(mask, pred.shape[:-1]).reshape(-1, pred.shape[-2])
        if not mask.any():
            raise ShapeMismatchError("pa_mpjpe over an empty joint selection")
    errs = []
    flat_p = pred.reshape(-1, *pred.shape[-2:])
    flat_g = gt.reshape(-1, *gt.shape[-2:])
    for i, (p, g) in enumerate(zip(flat_p, flat_g)):
        aligned = _align_similarity(p, g)
        e = np.linalg.norm(aligned - g, axis=-1)
        if mask is None:
            errs.append(e)
        elif mask[i].any():
            errs.append(e[mask[i]])
    return float(np.concatenate(errs).mean()) if mask is not None \
        else float(np.mean([e.mean() for e in errs]))


def e_smooth(pred: np.ndarray, gt: np.ndarray,
             mask: np.ndarray | None = None) -> float:
    """Mean absolute difference of consecutive-frame displacement magnitudes.

    mask (..., N, J) selects joints per frame; the displacement into frame t
    is evaluated where mask[t] holds, normalised by the evaluated count.
    """
    pred = np.asarray(pred, np.float64)
    gt = np.asarray(gt, np.float64)
    if pred.shape[-3] < 2:
        raise ShapeMismatchError("smoothness needs at least 2 frames")
    dp = np.linalg.norm(np.diff(pred, axis=-3), axis=-1)
    dg = np.linalg.norm(np.diff(gt, axis=-3), axis=-1)
    gap = np.abs(dg - dp)
    if mask is None:
        return float(gap.mean())
    mask = np.broadcast_to(mask, pred.shape[:-1])[..., 1:, :]
    if not mask.any():
        raise ShapeMismatchError("smoothness over an empty joint selection")
    return float(gap[mask].mean())


def pog(errors_by_history: dict[int, float]) -> dict[int, float]:
    """Past-only gain: error reduction relative to the no-history run.

    Input maps history length k (in windows) to the MPJPE measured on the
    same occluded-frame set; k=0 must be present.
    """
    if 0 not in errors_by_history:
        raise ShapeMismatchError("pog needs the k=0 baseline entry")
    base = errors_by_history[0]
    return {k: float(base - v) for k, v in sorted(errors_by_history.items())}


# --- reporting -------------------------------------------------------------------


@dataclass
class SequenceMetrics:
    name: str
    frames: int
    mpjpe: float
    pa_mpjpe: float
    e_smooth: float


@dataclass
class MetricsReport:
    sequences: list[SequenceMetrics] = field(default_factory=list)
    throughput: float | None = None       # poses per second, measured
    extras: dict[str, float] = field(default_factory=dict)

    def add(self, name: str, pred: np.ndarray, gt: np.ndarray,
            mask: np.ndarray | None = None) -> SequenceMetrics:
        row = SequenceMetrics(name, len(pred), mpjpe(pred, gt, mask),
                              pa_mpjpe(pred, gt, mask), e_smooth(pred, gt, mask))
        self.sequences.append(row)
        return row

    def aggregate(self) -> SequenceMetrics:
        """Frame-weighted means over all sequences."""
        if not self.sequences:
            raise ShapeMismatchError("no sequences in report")
        w = np.array([s.frames for s in self.sequences], np.float64)
        w = w / w.sum()

        def agg(attr):
            return float(sum(wi * getattr(s, attr)
                             for wi, s in zip(w, self.sequences)))

        return SequenceMetrics("aggregate", int(sum(s.frames for s in self.sequences)),
                               agg("mpjpe"), agg("pa_mpjpe"), agg("e_smooth"))

    @property
    def empty(self) -> bool:
        """True when nothing was evaluated (e.g. no occluded joints found)."""
        return not self.sequences

    def to_csv(self) -> str:
        lines = ["name,frames,mpjpe_mm,pa_mpjpe_mm,e_smooth_mm"]
        rows = self.sequences + [self.aggregate()] if self.sequences else []
        for s in rows:
            lines.append(f"{s.name},{s.frames},{s.mpjpe:.6f},"
                         f"{s.pa_mpjpe:.6f},{s.e_smooth:.6f}")
        for k, v in sorted(self.extras.items()):
            lines.append(f"{k},,{v:.6f},,")
        if self.throughput is not None:
            lines.append(f"throughput_poses_per_s,,{self.throughput:.2f},,")
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        rows = self.sequences + [self.aggregate()] if self.sequences else []
        head = f"{'sequence':<16}{'frames':>8}{'mpjpe':>10}{'pa':>10}{'smooth':>10}"
        body = [f"{s.name:<16}{s.frames:>8}{s.mpjpe:>10.2f}"
                f"{s.pa_mpjpe:>10.2f}{s.e_smooth:>10.2f}" for s in rows]
        if not rows:
            body = ["(empty: nothing matched the evaluation filter)"]
        tail = [f"{k:<34}{v:>10.3f}" for k, v in sorted(self.extras.items())]
        if self.throughput is not None:
            tail.append(f"{'throughput (poses/s)':<34}{self.throughput:>10.1f}")
        return "\n".join([head] + body + tail)
