"""Pose heads, fusion filter, combination modes, and drift behaviour."""

import numpy as np
import pytest

from evpose.drift import run_drift
from evpose.model.fusion import FusionFilter, FusionState
from evpose.model.heads import PoseHeads
from evpose.model.net import PoseNet
from evpose.nn import ParameterStore, Tensor
from evpose.nn.gradcheck import grad_check

from conftest import make_cfg


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def scalar_filter(q=1.0, r=1.0):
    store = ParameterStore(dtype=np.float64)
    return FusionFilter(store, "f", 1, q_init=q, r_init=r, sigma0=100.0)


def state_of(x, cov):
    return FusionState(Tensor(np.array([[float(x)]])),
                       Tensor(np.array([[[float(cov)]]])))


# --- heads ---------------------------------------------------------------------


def test_direct_head_shape_and_weight_sharing(rng):
    store = ParameterStore(dtype=np.float64)
    heads = PoseHeads(store, "h", dim=8)
    f = rng.normal(size=(2, 5, 8))
    f[0, 3] = f[0, 1]  # two identical joint tokens
    out = heads.direct(Tensor(f))
    assert out.shape == (2, 5, 3)
    assert np.array_equal(out.data[0, 3], out.data[0, 1])


def test_direct_head_zero_weights_zero_pose(rng):
    store = ParameterStore(dtype=np.float64)
    heads = PoseHeads(store, "h", dim=8)
    heads.d_w2.data[:] = 0.0
    out = heads.direct(Tensor(rng.normal(size=(1, 4, 8))))
    assert np.array_equal(out.data, np.zeros((1, 4, 3)))


def test_delta_head_zero_weights_zero_delta(rng):
    store = ParameterStore(dtype=np.float64)
    heads = PoseHeads(store, "h", dim=8)
    heads.x_w2.data[:] = 0.0
    out = heads.delta(Tensor(rng.normal(size=(1, 4, 8))),
                      Tensor(rng.normal(size=(1, 4, 3)) * 100))
    assert np.array_equal(out.data, np.zeros((1, 4, 3)))


def test_delta_head_depends_on_previous_pose(rng):
    store = ParameterStore(dtype=np.float64)
    heads = PoseHeads(store, "h", dim=8)
    f = Tensor(rng.normal(size=(1, 4, 8)))
    p0 = rng.normal(size=(1, 4, 3)) * 100
    a = heads.delta(f, Tensor(p0))
    b = heads.delta(f, Tensor(p0 + 50.0))
    assert np.abs(a.data - b.data).max() > 1e-6


# --- filter: scalar oracle --------------------------------------------------------


def test_predict_scalar_oracle():
    filt = scalar_filter(q=1.0)
    st = filt.predict(state_of(0.0, 1.0), Tensor(np.array([[[2.0]]])))
    assert np.allclose(st.x.data, 2.0, atol=1e-12)
    assert np.allclose(st.cov.data, 2.0, atol=1e-12)


def test_predict_zero_q_zero_delta_keeps_state():
    filt = scalar_filter(q=1e-30)
    st = filt.predict(state_of(1.5, 2.5), Tensor(np.zeros((1, 1, 1))))
    assert np.allclose(st.x.data, 1.5, atol=1e-12)
    assert np.allclose(st.cov.data, 2.5, atol=1e-12)


def test_correct_scalar_oracle():
    """Continuation: X-=2, cov-=2, obs=3, R=1 -> K=2/3, P=8/3, cov=2/3."""
    filt = scalar_filter(r=1.0)
    x, st = filt.correct(state_of(2.0, 2.0), Tensor(np.array([[[3.0]]])))
    assert np.allclose(x.data, 8.0 / 3.0, atol=1e-8)
    assert np.allclose(st.cov.data, 2.0 / 3.0, atol=1e-8)


def test_correct_trusts_observation_when_r_vanishes():
    filt = scalar_filter(r=1e-12)
    x, _ = filt.correct(state_of(2.0, 2.0), Tensor(np.array([[[3.0]]])))
    assert np.allclose(x.data, 3.0, atol=1e-6)


def test_correct_trusts_motion_when_cov_vanishes():
    filt = scalar_filter(r=1.0)
    x, _ = filt.correct(state_of(2.0, 1e-12), Tensor(np.array([[[3.0]]])))
    assert np.allclose(x.data, 2.0, atol=1e-6)


def test_consistent_oracle_inputs_reproduce_truth(rng):
    """Exact displacement + exact observation -> exact pose, any covariance."""
    store = ParameterStore(dtype=np.float64)
    filt = FusionFilter(store, "f", 6, q_init=3.0, r_init=0.5, sigma0=7.0)
    gt_prev = rng.normal(size=(2, 2, 3)) * 100
    gt_now = gt_prev + rng.normal(size=(2, 2, 3)) * 30
    st = filt.init_state(Tensor(gt_prev))
    st = filt.predict(st, Tensor(gt_now - gt_prev))
    x, _ = filt.correct(st, Tensor(gt_now))
    assert np.allclose(x.data.reshape(2, 2, 3), gt_now, atol=1e-9)


def test_monotone_trust_in_r(rng):
    base = state_of(0.0, 2.0)
    obs = Tensor(np.array([[[1.0]]]))
    gains = []
    for r in (0.5, 1.0, 2.0, 4.0):
        x, _ = scalar_filter(r=r).correct(base, obs)
        gains.append(float(x.data.item()))  # K = P since X-=0, obs=1
    assert all(a > b for a, b in zip(gains, gains[1:]))


def test_joseph_equals_simple_form_at_optimal_gain(rng):
    n = 5
    store = ParameterStore(dtype=np.float64)
    filt = FusionFilter(store, "f", n, q_init=1.0, r_init=1.0)
    filt.log_r.data[:] = rng.uniform(-1, 1, n)
    a = rng.normal(size=(n, n))
    cov = a @ a.T + np.eye(n)
    st = FusionState(Tensor(rng.normal(size=(1, n))),
                     Tensor(cov[None].copy()))
    _, post = filt.correct(st, Tensor(rng.normal(size=(1, n))))

    r = np.exp(filt.log_r.data)
    s = cov + np.diag(r) + 1e-9 * np.eye(n)
    k = np.linalg.solve(s, cov).T
    simple = (np.eye(n) - k) @ cov
    assert np.allclose(post.cov.data[0], simple, rtol=1e-6, atol=1e-9)


def test_covariance_stays_symmetric_psd(rng):
    n = 6
    store = ParameterStore(dtype=np.float64)
    filt = FusionFilter(store, "f", n)
    st = FusionState(Tensor(np.zeros((1, n))), Tensor(np.eye(n)[None] * 50))
    for _ in range(500):
        filt.log_q.data[:] = rng.uniform(-2, 2, n)
        filt.log_r.data[:] = rng.uniform(-2, 2, n)
        st = filt.predict(st, Tensor(rng.normal(size=(1, 2, 3))))
        _, st = filt.correct(st, Tensor(rng.normal(size=(1, 2, 3)) * 10))
        cov = st.cov.data[0]
        assert np.abs(cov - cov.T).max() < 1e-9
        assert np.linalg.eigvalsh(cov).min() >= -1e-8


def test_filter_gradcheck_through_q_and_r(rng):
    store = ParameterStore(dtype=np.float64)
    filt = FusionFilter(store, "f", 4, q_init=2.0, r_init=0.5)
    x0 = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
    c = rng.normal(size=(4, 4))
    cov0 = Tensor((c @ c.T + 3 * np.eye(4))[None], requires_grad=True)
    delta = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
    obs = Tensor(rng.normal(size=(1, 4)), requires_grad=True)

    def fn():
        st = FusionState(x0, cov0)
        st = filt.predict(st, delta)
        x, st = filt.correct(st, obs)
        return (x * x).sum() + st.cov.sum()

    worst = grad_check(fn, [x0, cov0, delta, obs, filt.log_q, filt.log_r],
                       max_coords=8)
    assert worst < 1e-6


# --- full network combination modes ------------------------------------------------


def tiny_net(dtype=np.float64, **cfg_over):
    over = dict(img__width=16, img__height=16, spem__widths=(4, 4, 4, 4, 4),
                spem__ssm_state=4, spem__heads=2, spem__points=2,
                spem__queries=3, spem__query_dim=4, spem__decoder_heads=2,
                spem__ssm_stages=(2, 4))
    over.update(cfg_over)
    cfg = make_cfg(**over)
    store = ParameterStore(dtype=dtype)
    return PoseNet(store, cfg), store


def test_rollout_shapes_all_modes(rng):
    net, _ = tiny_net()
    frames = Tensor(rng.normal(size=(2, 3, 2, 16, 16)))
    for mode in ("fused", "direct", "naive"):
        out = net.rollout(frames, "causal", prm_mode=mode)
        assert out.poses.shape == (2, 3, 3, 3)
        assert out.state.prev.shape == (2, 3, 3)
        if mode == "direct":
            assert out.deltas is None
        else:
            assert out.deltas.shape == (2, 2, 3, 3)


def test_first_window_is_direct_in_every_mode(rng):
    net, _ = tiny_net()
    frames = Tensor(rng.normal(size=(1, 2, 2, 16, 16)))
    first = {}
    for mode in ("fused", "direct", "naive"):
        out = net.rollout(frames, "causal", prm_mode=mode)
        first[mode] = out.poses.data[:, 0].copy()
    assert np.allclose(first["fused"], first["direct"], atol=1e-12)
    assert np.allclose(first["naive"], first["direct"], atol=1e-12)


def test_naive_mode_with_zero_delta_head_holds_first_pose(rng):
    net, _ = tiny_net()
    net.heads.x_w2.data[:] = 0.0
    net.heads.x_b2.data[:] = 0.0
    frames = Tensor(rng.normal(size=(1, 4, 2, 16, 16)))
    poses = net.rollout(frames, "causal", prm_mode="naive").poses
    for t in range(1, 4):
        assert np.allclose(poses.data[:, t], poses.data[:, 0], atol=1e-12)


@pytest.mark.parametrize("mode", ["fused", "direct", "naive"])
def test_streaming_matches_rollout(mode, rng):
    net, _ = tiny_net()
    frames = rng.normal(size=(1, 4, 2, 16, 16))
    batch = net.rollout(Tensor(frames), "causal", prm_mode=mode).poses
    state = net.init_stream(1, np.float64)
    outs = []
    for t in range(4):
        pose, state = net.step(Tensor(frames[:, t]), state, prm_mode=mode)
        outs.append(pose.data)
    assert np.allclose(np.stack(outs, axis=1), batch.data, atol=1e-9)


def test_chunked_rollout_matches_full(rng):
    net, _ = tiny_net()
    frames = rng.normal(size=(1, 6, 2, 16, 16))
    full = net.rollout(Tensor(frames), "causal", prm_mode="fused").poses
    first = net.rollout(Tensor(frames[:, :2]), "causal", prm_mode="fused")
    second = net.rollout(Tensor(frames[:, 2:]), "causal", prm_mode="fused",
                         carry=first.state)
    joined = np.concatenate([first.poses.data, second.poses.data], axis=1)
    assert np.allclose(joined, full.data, atol=1e-9)


def test_rollout_rejects_unknown_mode(rng):
    net, _ = tiny_net()
    frames = Tensor(rng.normal(size=(1, 2, 2, 16, 16)))
    with pytest.raises(ValueError):
        net.rollout(frames, "causal", prm_mode="blend")


# --- drift ----------------------------------------------------------------------


def test_drift_smoke_fused_beats_naive():
    out = run_drift(num_seeds=10, t_final=100, t_early=20, joints=4, seed=1)
    assert out["fused_final"] < out["naive_final"]
    assert out["growth_ratio"] > 1.5
    # the curve should actually grow, not plateau
    assert out["naive_curve"][-1] > out["naive_curve"][20]
