"""Finite-difference verification across every differentiable piece.

Each entry builds a small float64 problem and compares analytic gradients
against central differences. Per-operation checks probe individual
coordinates; the end-to-end entry uses directional derivatives through the
whole parameter set, which is still a pure finite-difference oracle but
costs two extra forward passes per direction instead of two per coordinate.
"""

from __future__ import annotations

import numpy as np

from . import camera as cam_mod
from .config import Config
from .losses import (LossWeights, loss_2d, loss_3d, loss_bone_angle,
                     loss_bone_length, loss_delta, loss_total)
from .model.attention import DeformableAttention
from .model.decoder import QueryDecoder
from .model.fusion import FusionFilter
from .model.heads import PoseHeads
from .model.ssm import SSMBlock
from .nn import ops
from .nn.gradcheck import grad_check
from .nn.params import ParameterStore
from .nn.tensor import Tensor
from .skeleton import default_topology
from .train import build_net


def _t(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _check_tensor_ops(rng) -> float:
    a = _t(rng, 3, 4)
    b = _t(rng, 3, 4)
    c = _t(rng, 4, 5)
    worst = grad_check(
        lambda: ((a * b + a / (b.abs() + 2.0) - b) @ c).sigmoid().sum(),
        [a, b, c])
    d = _t(rng, 2, 6)
    worst = max(worst, grad_check(
        lambda: (d.softmax(-1) * (d.exp() + 1.0).log().silu()).mean(), [d]))
    e = _t(rng, 5, 3)
    worst = max(worst, grad_check(
        lambda: ((e * e).sum(axis=-1).clip_min(1e-6).sqrt().sum()
                 + e[1:, :].reshape(2, 6).swapaxes(0, 1).mean(axis=0).sum()),
        [e]))
    f = _t(rng, 4)
    g = _t(rng, 4)
    from .nn import concat, stack
    worst = max(worst, grad_check(
        lambda: (concat([f, g], axis=0).cos()
                 + stack([f, g], axis=0).reshape(8).sin()).sum(), [f, g]))
    p = _t(rng, 3, 3)
    worst = max(worst, grad_check(lambda: (p ** 3.0).sum(), [p]))
    return worst


def _check_nn_ops(rng) -> float:
    x = _t(rng, 2, 3, 6, 6)
    w = _t(rng, 4, 3, 3, 3, scale=0.5)
    b = _t(rng, 4)
    worst = grad_check(lambda: ops.conv2d(x, w, b, stride=2, pad=1).sum(), [x, w, b])

    g = _t(rng, 3)
    be = _t(rng, 3)
    state = ops.BNState(np.zeros(3), np.ones(3))
    worst = max(worst, grad_check(
        lambda: (ops.batchnorm2d(x, g, be, state, training=True) ** 2.0).mean(),
        [x, g, be]))

    t = _t(rng, 4, 5)
    lg = _t(rng, 5)
    lb = _t(rng, 5)
    worst = max(worst, grad_check(
        lambda: (ops.layernorm(t, lg, lb) * t).sum(), [t, lg, lb]))

    lw = _t(rng, 5, 3)
    worst = max(worst, grad_check(lambda: ops.linear(t, lw, lb[:3]).sum(),
                                  [t, lw]))

    vals = _t(rng, 2, 5, 6, 3)
    ys = Tensor(rng.uniform(0.3, 3.7, (2, 7)), requires_grad=True)
    xs = Tensor(rng.uniform(0.3, 4.7, (2, 7)), requires_grad=True)
    worst = max(worst, grad_check(
        lambda: (ops.bilinear_sample(vals, ys, xs) ** 2.0).sum(),
        [vals, ys, xs]))

    m = _t(rng, 4, 4)
    rhs = _t(rng, 4, 2)
    worst = max(worst, grad_check(
        lambda: ops.solve_spd(m @ m.swapaxes(0, 1) + np.eye(4) * 4.0,
                              rhs).sum(), [m, rhs]))

    pts = Tensor(rng.standard_normal((3, 3)) * 50 + np.array([0, 0, 800.0]),
                 requires_grad=True)
    cfg = Config()
    cam = cam_mod.CameraModel.from_config(cfg)
    worst = max(worst, grad_check(
        lambda: ops.project_points(pts, cam).sum(), [pts]))

    v = _t(rng, 2, 3)
    worst = max(worst, grad_check(lambda: (ops.diag_embed(v) @ rhs[:3, :1]
                                           ).sum(), [v, rhs]))
    return worst


def _check_ssm(rng) -> float:
    store = ParameterStore(np.float64)
    block = SSMBlock(store, "s", dim=3, state_size=4, bandlimit=1.0, seed=5)
    x = _t(rng, 2, 6, 3)
    params = list(store.parameters().values())
    worst = 0.0
    for mode in ("causal", "bidirectional"):
        worst = max(worst, grad_check(
            lambda m=mode: (block.forward(x, m)[0] ** 2.0).mean(),
            [x] + params, max_coords=6))
    return worst


def _check_attention(rng) -> float:
    store = ParameterStore(np.float64)
    att = DeformableAttention(store, "a", dim=4, grid_hw=(4, 5), heads=2,
                              points=2, seed=3)
    store["a/b_off"].data += rng.uniform(-0.4, 0.4,
                                         store["a/b_off"].shape)
    x = _t(rng, 2, 4, 4, 5)
    params = list(store.parameters().values())
    return grad_check(lambda: (att.forward(x) ** 2.0).mean(),
                      [x] + params, max_coords=5)


def _check_decoder(rng) -> float:
    store = ParameterStore(np.float64)
    dec = QueryDecoder(store, "d", mem_dim=5, queries=3, dim=4, heads=2,
                       ffn_mult=2, seed=4)
    mem = _t(rng, 2, 6, 5)
    params = list(store.parameters().values())
    return grad_check(lambda: (dec.forward(mem) ** 2.0).mean(),
                      [mem] + params, max_coords=5)


def _check_heads_fusion(rng) -> float:
    store = ParameterStore(np.float64)
    heads = PoseHeads(store, "h", dim=6, embed_dim=4, seed=2)
    filt = FusionFilter(store, "f", n=9, q_init=1.5, r_init=0.5, sigma0=4.0)
    feats = _t(rng, 2, 3, 6)
    prev = _t(rng, 2, 3, 3, scale=40.0)

    def run():
        direct = heads.direct(feats)
        delta = heads.delta(feats, prev)
        state = filt.init_state(direct.reshape(2, 3, 3))
        state = filt.predict(state, delta)
        x, state = filt.correct(state, direct)
        return (x ** 2.0).mean() + (state.cov ** 2.0).mean()

    params = list(store.parameters().values())
    return grad_check(run, [feats, prev] + params, max_coords=5)


def _check_losses(rng) -> float:
    topo = default_topology()
    j = topo.joint_count
    gt = rng.standard_normal((2, 3, j, 3)) * 80 + np.array([0, 0, 900.0])
    pred = Tensor(gt + rng.standard_normal(gt.shape) * 5, requires_grad=True)
    deltas = Tensor(rng.standard_normal((2, 2, j, 3)), requires_grad=True)
    cam = cam_mod.CameraModel.from_config(Config())
    w = LossWeights()

    def run():
        parts = {
            "3d": loss_3d(pred, gt),
            "delta": loss_delta(deltas, gt),
            "2d": loss_2d(pred, gt, cam),
            "bl": loss_bone_length(pred, gt, topo),
            "ba": loss_bone_angle(pred, gt, topo),
        }
        return loss_total(parts, w)

    return grad_check(run, [pred, deltas], max_coords=12)


def _tiny_train_cfg() -> Config:
    cfg = Config()
    for k, v in (("img.width", "16"), ("img.height", "16"),
                 ("spem.widths", "4,4,4,4,4"), ("spem.ssm_state", "4"),
                 ("spem.bandlimit", "1.0"), ("spem.heads", "2"),
                 ("spem.points", "2"), ("spem.queries", "16"),
                 ("spem.query_dim", "4"), ("spem.decoder_heads", "2"),
                 ("prm.embed_dim", "4"), ("core.dtype", "float64"),
                 ("train.seq_len", "5")):
        cfg.set(k, v)
    cfg.validate()
    return cfg


def _check_end_to_end(rng, directions: int = 4) -> float:
    """Directional finite differences through a whole 5-window training loss."""
    cfg = _tiny_train_cfg()
    store, net = build_net(cfg)
    # at init every attention sampling point sits exactly on the pixel
    # lattice, the one place bilinear interpolation is not differentiable;
    # finite differences need the check point moved off those kinks
    for name, p in store.parameters().items():
        if name.endswith("attn/b_off"):
            mag = rng.uniform(0.15, 0.35, p.shape)
            p.data += np.where(rng.random(p.shape) < 0.5, -mag, mag)
    frames = Tensor(rng.uniform(0, 1, (1, 5, 2, 16, 16)))
    j = cfg["spem.queries"]
    gt = rng.standard_normal((1, 5, j, 3)) * 60 + np.array([0, 0, 900.0])
    cam = cam_mod.CameraModel.from_config(cfg)
    topo = default_topology()
    w = LossWeights()

    def loss_fn():
        out = net.rollout(frames, "bidirectional", training=False)
        parts = {"3d": loss_3d(out.poses, gt),
                 "delta": loss_delta(out.deltas, gt),
                 "2d": loss_2d(out.poses, gt, cam),
                 "bl": loss_bone_length(out.poses, gt, topo),
                 "ba": loss_bone_angle(out.poses, gt, topo)}
        return loss_total(parts, w)

    params = list(store.parameters().values())
    store.zero_grad()
    loss_fn().backward()
    grads = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
             for p in params]

    eps = 1e-6
    worst = 0.0
    for d in range(directions):
        drng = np.random.default_rng(100 + d)
        vs = [drng.standard_normal(p.shape) for p in params]
        analytic = float(sum((g * v).sum() for g, v in zip(grads, vs)))
        for p, v in zip(params, vs):
            p.data += eps * v
        hi = float(loss_fn().data)
        for p, v in zip(params, vs):
            p.data -= 2 * eps * v
        lo = float(loss_fn().data)
        for p, v in zip(params, vs):
            p.data += eps * v
        numeric = (hi - lo) / (2 * eps)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)
        worst = max(worst, rel)
    return worst


def run_suite(seed: int = 0) -> dict[str, float]:
    """Max relative gradient error per module; all should sit under 1e-4."""
    rng = np.random.default_rng(seed)
    return {
        "tensor-ops": _check_tensor_ops(rng),
        "nn-ops": _check_nn_ops(rng),
        "ssm": _check_ssm(rng),
        "attention": _check_attention(rng),
        "decoder": _check_decoder(rng),
        "heads+fusion": _check_heads_fusion(rng),
        "losses": _check_losses(rng),
        "end-to-end": _check_end_to_end(rng),
    }
