"""Curve artifacts: CSV always, rendered images when matplotlib is present."""

from __future__ import annotations

import os

import numpy as np

from .config import Config
from .drift import run_drift
from .model.net import PoseNet
from .synth import Dataset


def _render(png_path: str, series: dict[str, tuple[np.ndarray, np.ndarray]],
            xlabel: str, ylabel: str) -> str | None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, y) in series.items():
        ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path


def plot_drift(out_dir: str, num_seeds: int = 100, t_final: int = 200,
               seed: int = 0) -> list[str]:
    """Error-vs-time curves for dead reckoning against the fused filter."""
    os.makedirs(out_dir, exist_ok=True)
    res = run_drift(num_seeds=num_seeds, t_final=t_final, seed=seed)
    t = np.arange(1, t_final + 1)
    csv_path = os.path.join(out_dir, "drift.csv")
    with open(csv_path, "w") as fh:
        fh.write("t,naive_mm,fused_mm\n")
        for i in range(t_final):
            fh.write(f"{t[i]},{res['naive_curve'][i]:.4f},"
                     f"{res['fused_curve'][i]:.4f}\n")
    out = [csv_path]
    png = _render(os.path.join(out_dir, "drift.png"),
                  {"delta-only dead reckoning": (t, res["naive_curve"]),
                   "fused": (t, res["fused_curve"])},
                  "window", "mean joint error (mm)")
    if png:
        out.append(png)
    return out


def plot_loss(out_dir: str, train_csv: str) -> list[str]:
    """Re-render a training loss_curve.csv as loss/mpjpe plots."""
    os.makedirs(out_dir, exist_ok=True)
    rows = np.genfromtxt(train_csv, delimiter=",", names=True)
    rows = np.atleast_1d(rows)
    csv_path = os.path.join(out_dir, "loss.csv")
    with open(csv_path, "w") as fh:
        fh.write("epoch,loss,mpjpe_mm\n")
        for r in rows:
            fh.write(f"{int(r['epoch'])},{r['loss']:.8f},{r['mpjpe_mm']:.4f}\n")
    out = [csv_path]
    png = _render(os.path.join(out_dir, "loss.png"),
                  {"loss": (rows["epoch"], rows["loss"]),
                   "mpjpe (mm)": (rows["epoch"], rows["mpjpe_mm"])},
                  "epoch", "value")
    if png:
        out.append(png)
    return out


def plot_jitter(out_dir: str, net: PoseNet, cfg: Config, ds: Dataset
                ) -> list[str]:
    """Per-window displacement magnitude of each pose route vs ground truth.

    Fused output should track the ground-truth displacement profile; the
    direct route shows the frame-to-frame jitter the filter removes.
    """
    from .evaluate import predict_causal  # local: avoids an import cycle

    os.makedirs(out_dir, exist_ok=True)
    curves = {}
    for mode in ("direct", "fused"):
        pred = predict_causal(net, cfg, ds, reset_every=0, prm_mode=mode)
        curves[mode] = np.linalg.norm(np.diff(pred, axis=0), axis=-1).mean(-1)
    gt = ds.poses.poses.astype(np.float64)
    curves["ground truth"] = np.linalg.norm(np.diff(gt, axis=0), axis=-1).mean(-1)

    t = np.arange(1, len(gt))
    csv_path = os.path.join(out_dir, "jitter.csv")
    with open(csv_path, "w") as fh:
        fh.write("t,direct_mm,fused_mm,gt_mm\n")
        for i in range(len(t)):
            fh.write(f"{t[i]},{curves['direct'][i]:.4f},"
                     f"{curves['fused'][i]:.4f},{curves['ground truth'][i]:.4f}\n")
    out = [csv_path]
    png = _render(os.path.join(out_dir, "jitter.png"),
                  {k: (t, v) for k, v in curves.items()},
                  "window", "mean displacement (mm)")
    if png:
        out.append(png)
    return out
