"""State-space layer: pinned-down recurrence semantics and scan duality."""

import numpy as np
import pytest

from evpose.nn import ParameterStore, Tensor, grad_check
from evpose.model.ssm import SSMBlock, SSMCore, scan_states, ssm_apply


def unit_system(abar_value, n):
    """Scalar system: P = D = 1, Bbar = C = 1, no feedthrough."""
    one = np.ones((1, 1))
    abar = (Tensor(np.array([abar_value])), Tensor(np.array([0.0])))
    bbar = (Tensor(one), Tensor(np.zeros((1, 1))))
    c = (Tensor(one * 0.5), Tensor(np.zeros((1, 1))))  # 2*Re halves back to 1
    skip = Tensor(np.array([0.0]))
    return abar, bbar, c, skip


def run_unit(abar_value, xs, sequential=False):
    abar, bbar, c, skip = unit_system(abar_value, len(xs))
    x = Tensor(np.asarray(xs, dtype=np.float64).reshape(1, -1, 1))
    y, _ = ssm_apply(abar, bbar, c, skip, x, sequential=sequential)
    return y.data.reshape(-1)


def test_output_reads_state_before_update():
    # A=0, B=C=1: the layer is a pure one-step delay
    assert np.allclose(run_unit(0.0, [1.0, 2.0, 3.0]), [0.0, 1.0, 2.0])


def test_scalar_decay_example():
    assert np.allclose(run_unit(0.5, [1.0, 0.0, 0.0]), [0.0, 1.0, 0.5])


def test_sequential_route_matches_examples():
    assert np.allclose(run_unit(0.0, [1.0, 2.0, 3.0], sequential=True),
                       [0.0, 1.0, 2.0])
    assert np.allclose(run_unit(0.5, [1.0, 0.0, 0.0], sequential=True),
                       [0.0, 1.0, 0.5])


def test_feedthrough_adds_instantaneous_term():
    abar, bbar, c, _ = unit_system(0.0, 3)
    skip = Tensor(np.array([10.0]))
    x = Tensor(np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1))
    y, _ = ssm_apply(abar, bbar, c, skip, x)
    assert np.allclose(y.data.reshape(-1), [10.0, 21.0, 32.0])


def test_scan_matches_bruteforce_recurrence(rng):
    b, n, p = 2, 9, 5
    ar = Tensor(rng.uniform(-0.9, 0.9, (b, n, p)))
    ai = Tensor(rng.uniform(-0.5, 0.5, (b, n, p)))
    br = Tensor(rng.normal(size=(b, n, p)))
    bi = Tensor(rng.normal(size=(b, n, p)))
    z0r = Tensor(rng.normal(size=(b, p)))
    z0i = Tensor(rng.normal(size=(b, p)))
    sr, si = scan_states(ar, ai, br, bi, z0r, z0i)
    z = z0r.data + 1j * z0i.data
    a = ar.data + 1j * ai.data
    bc = br.data + 1j * bi.data
    for t in range(n):
        z = a[:, t] * z + bc[:, t]
        got = sr.data[:, t] + 1j * si.data[:, t]
        assert np.allclose(got, z, atol=1e-12)


def make_core(p=6, d=4, seed=0, **kw):
    store = ParameterStore(dtype=np.float64)
    core = SSMCore(store, "core", d, p, seed=seed, **kw)
    return store, core


def test_parallel_sequential_duality_random_cores(rng):
    worst = 0.0
    for trial in range(20):
        store, core = make_core(seed=trial, bandlimit=1.0)
        # scatter the parameters away from their init
        for t in store.parameters().values():
            t.data += rng.normal(size=t.shape) * 0.3
        x = Tensor(rng.normal(size=(2, 11, 4)))
        z0 = (Tensor(rng.normal(size=(2, 6))), Tensor(rng.normal(size=(2, 6))))
        y_par, (zr_p, zi_p) = core.forward(x, z0=z0)
        y_seq, (zr_s, zi_s) = core.forward(x, z0=z0, sequential=True)
        worst = max(worst,
                    np.abs(y_par.data - y_seq.data).max(),
                    np.abs(zr_p.data - zr_s.data).max(),
                    np.abs(zi_p.data - zi_s.data).max())
    assert worst < 1e-10


def test_discretization_closed_form():
    store, core = make_core(p=1, d=1)
    core.log_neg_real.data[:] = 0.0          # Re(lambda) = -1
    core.lam_imag.data[:] = 0.0
    core.log_dt.data[:] = np.log(np.log(2.0))  # dt = ln 2
    (ar, ai), (br, bi), _ = core.discretize()
    assert np.allclose(ar.data, 0.5, atol=1e-12)   # exp(-ln 2)
    assert np.allclose(ai.data, 0.0)
    # Bbar = (Abar - 1)/lambda * B = 0.5 * B
    assert np.allclose(br.data, 0.5 * core.b_real.data, atol=1e-12)


def test_decay_magnitude_below_one_for_any_parameters(rng):
    store, core = make_core(p=8, d=3)
    for _ in range(50):
        core.log_neg_real.data[:] = rng.normal(size=8) * 3
        core.log_dt.data[:] = rng.normal(size=8) * 3
        core.lam_imag.data[:] = rng.normal(size=8) * 20
        (ar, ai), _, _ = core.discretize()
        mag = np.hypot(ar.data, ai.data)
        assert np.all(mag < 1.0)


def test_dt_scale_rescales_decay():
    store, core = make_core(p=4, d=2)
    (a1r, a1i), _, _ = core.discretize(dt_scale=1.0)
    (a2r, a2i), _, _ = core.discretize(dt_scale=2.0)
    # doubling dt squares the complex decay factor
    sq_r, sq_i = (a1r.data ** 2 - a1i.data ** 2,
                  2 * a1r.data * a1i.data)
    assert np.allclose(a2r.data, sq_r, atol=1e-12)
    assert np.allclose(a2i.data, sq_i, atol=1e-12)


def test_band_mask_silences_fast_modes():
    store, core = make_core(p=8, d=3, bandlimit=0.5)
    assert core.band_mask.sum() == 4
    assert core.band_mask[:4].all() and not core.band_mask[4:].any()
    _, _, (cr, ci) = core.discretize()
    assert not cr.data[4:].any() and not ci.data[4:].any()
    # masked modes cannot influence the output
    x = Tensor(np.random.default_rng(0).normal(size=(1, 6, 3)))
    y, _ = core.forward(x)
    core.c_real.data[4:] = 99.0
    y2, _ = core.forward(x)
    assert np.array_equal(y.data, y2.data)


def test_full_bandlimit_keeps_all_modes():
    store, core = make_core(p=8, d=3, bandlimit=1.0)
    assert core.band_mask.sum() == 8


def test_step_route_matches_batch(rng):
    store, core = make_core(p=5, d=3, seed=2)
    x = Tensor(rng.normal(size=(2, 7, 3)))
    y_batch, (zr_b, zi_b) = core.forward(x)
    z = core.init_state(2, np.float64)
    ys = []
    for t in range(7):
        y_t, z = core.step(x[:, t], z)
        ys.append(y_t.data)
    assert np.allclose(np.stack(ys, axis=1), y_batch.data, atol=1e-12)
    assert np.allclose(z[0].data, zr_b.data, atol=1e-12)


def test_block_bidirectional_sees_the_future(rng):
    store = ParameterStore(dtype=np.float64)
    block = SSMBlock(store, "blk", dim=3, state_size=4, bandlimit=1.0)
    x = rng.normal(size=(1, 8, 3))
    xa, xb = x.copy(), x.copy()
    # single channel: a uniform shift would vanish in the prenorm layernorm
    xb[0, -1, 0] += 5.0
    ya, _ = block.forward(Tensor(xa), mode="bidirectional")
    yb, _ = block.forward(Tensor(xb), mode="bidirectional")
    yc, _ = block.forward(Tensor(xa), mode="causal")
    yd, _ = block.forward(Tensor(xb), mode="causal")
    assert np.abs(ya.data[0, 0] - yb.data[0, 0]).max() > 1e-8
    assert np.allclose(yc.data[0, :-1], yd.data[0, :-1], atol=1e-12)


def test_block_zeroed_backward_equals_causal(rng):
    store = ParameterStore(dtype=np.float64)
    block = SSMBlock(store, "blk", dim=3, state_size=4, bandlimit=1.0)
    block.bwd.c_real.data[:] = 0.0
    block.bwd.c_imag.data[:] = 0.0
    block.bwd.skip.data[:] = 0.0
    x = Tensor(rng.normal(size=(2, 6, 3)))
    y_bi, _ = block.forward(x, mode="bidirectional")
    y_ca, _ = block.forward(x, mode="causal")
    assert np.allclose(y_bi.data, y_ca.data, atol=1e-14)


def test_block_step_matches_causal_sequential(rng):
    store = ParameterStore(dtype=np.float64)
    block = SSMBlock(store, "blk", dim=3, state_size=4, bandlimit=0.5)
    x = Tensor(rng.normal(size=(2, 5, 3)))
    y_batch, z_end = block.forward(x, mode="causal")
    z = block.fwd.init_state(2, np.float64)
    ys = []
    for t in range(5):
        y_t, z = block.step(x[:, t], z)
        ys.append(y_t.data)
    assert np.allclose(np.stack(ys, axis=1), y_batch.data, atol=1e-12)
    assert np.allclose(z[0].data, z_end[0].data, atol=1e-12)


def test_ssm_gradcheck_through_scan(rng):
    store = ParameterStore(dtype=np.float64)
    core = SSMCore(store, "core", dim=2, state_size=3, seed=5)
    x = Tensor(rng.normal(size=(1, 4, 2)), requires_grad=True)
    w = Tensor(rng.normal(size=(1, 4, 2)))
    params = [x] + list(store.parameters().values())

    def fn():
        y, (zr, zi) = core.forward(x)
        return (y * w).sum() + (zr * zr).sum() + zi.sum()

    assert grad_check(fn, params, max_coords=6) < 1e-6


def test_ssm_gradcheck_sequential_route(rng):
    store = ParameterStore(dtype=np.float64)
    core = SSMCore(store, "core", dim=2, state_size=3, seed=6)
    x = Tensor(rng.normal(size=(1, 3, 2)), requires_grad=True)
    w = Tensor(rng.normal(size=(1, 3, 2)))

    def fn():
        y, _ = core.forward(x, sequential=True)
        return (y * w).sum()

    assert grad_check(fn, [x, core.c_real, core.log_dt], max_coords=6) < 1e-6
