"""Deformable attention, query decoder, and full encoder behaviour."""

import numpy as np
import pytest

from evpose.errors import ShapeMismatchError
from evpose.model.attention import DeformableAttention, _grid_refs
from evpose.model.decoder import QueryDecoder
from evpose.model.encoder import SpatiotemporalEncoder
from evpose.nn import ParameterStore, Tensor
from evpose.nn.gradcheck import grad_check

from conftest import make_cfg


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# --- deformable attention -----------------------------------------------------


def test_grid_refs_cover_unit_square():
    refs = _grid_refs(3, 4)
    assert refs.shape == (12, 2)
    assert refs[0].tolist() == [0.0, 0.0]
    assert refs[-1].tolist() == [1.0, 1.0]
    # row-major: second entry moves along x
    assert refs[1].tolist() == [0.0, 1.0 / 3.0]


def test_attention_preserves_shape(rng):
    store = ParameterStore(dtype=np.float64)
    attn = DeformableAttention(store, "a", dim=8, grid_hw=(6, 8),
                               heads=4, points=4)
    x = Tensor(rng.normal(size=(3, 8, 6, 8)))
    y = attn.forward(x)
    assert y.shape == (3, 8, 6, 8)


def test_attention_is_identity_up_to_projection_at_init(rng):
    """Zero offsets and uniform weights read the value map at the token's
    own reference point, so the layer reduces to a per-token linear map."""
    store = ParameterStore(dtype=np.float64)
    attn = DeformableAttention(store, "a", dim=6, grid_hw=(4, 5),
                               heads=2, points=3)
    x = rng.normal(size=(2, 6, 4, 5))
    y = attn.forward(Tensor(x))

    tokens = x.reshape(2, 6, 20).transpose(0, 2, 1)
    vals = tokens @ attn.w_val.data + attn.b_val.data
    expect = tokens + (vals @ attn.w_out.data + attn.b_out.data)
    got = y.data.reshape(2, 6, 20).transpose(0, 2, 1)
    assert np.allclose(got, expect, atol=1e-9)


def test_attention_clamps_samples_at_border(rng):
    store = ParameterStore(dtype=np.float64)
    attn = DeformableAttention(store, "a", dim=4, grid_hw=(3, 4),
                               heads=2, points=2)
    attn.b_off.data[:] = 1000.0  # push every sample far past the corner
    x = rng.normal(size=(1, 4, 3, 4))
    y = attn.forward(Tensor(x))
    assert np.all(np.isfinite(y.data))

    tokens = x.reshape(1, 4, 12).transpose(0, 2, 1)
    vals = tokens @ attn.w_val.data + attn.b_val.data
    corner = vals[:, -1:, :]  # value at (H-1, W-1), same for every token
    expect = tokens + (corner @ attn.w_out.data + attn.b_out.data)
    got = y.data.reshape(1, 4, 12).transpose(0, 2, 1)
    assert np.allclose(got, expect, atol=1e-9)


def test_attention_gradcheck(rng):
    store = ParameterStore(dtype=np.float64)
    attn = DeformableAttention(store, "a", dim=4, grid_hw=(2, 3),
                               heads=2, points=2)
    # move samples off the bilinear kinks and make weights non-uniform
    attn.b_off.data[:] = rng.uniform(-0.4, 0.4, attn.b_off.shape)
    attn.w_off.data[:] = rng.normal(size=attn.w_off.shape) * 0.05
    attn.w_att.data[:] = rng.normal(size=attn.w_att.shape) * 0.1
    x = Tensor(rng.normal(size=(2, 4, 2, 3)), requires_grad=True)
    params = list(store.parameters().values())

    def fn():
        return (attn.forward(x) * attn.forward(x)).sum() * 0.01

    worst = grad_check(fn, [x] + params, max_coords=6)
    assert worst < 1e-6


# --- query decoder --------------------------------------------------------------


def test_decoder_output_shape(rng):
    store = ParameterStore(dtype=np.float64)
    dec = QueryDecoder(store, "d", mem_dim=6, queries=5, dim=8, heads=2)
    memory = Tensor(rng.normal(size=(3, 12, 6)))
    out = dec.forward(memory)
    assert out.shape == (3, 5, 8)


def test_decoder_ignores_memory_order(rng):
    store = ParameterStore(dtype=np.float64)
    dec = QueryDecoder(store, "d", mem_dim=6, queries=4, dim=8, heads=4)
    mem = rng.normal(size=(2, 10, 6))
    perm = rng.permutation(10)
    a = dec.forward(Tensor(mem))
    b = dec.forward(Tensor(mem[:, perm]))
    assert np.allclose(a.data, b.data, atol=1e-10)


def test_decoder_query_permutation_permutes_rows(rng):
    store = ParameterStore(dtype=np.float64)
    dec = QueryDecoder(store, "d", mem_dim=5, queries=6, dim=8, heads=2)
    mem = Tensor(rng.normal(size=(1, 7, 5)))
    base = dec.forward(mem).data.copy()
    perm = rng.permutation(6)
    dec.queries.data[:] = dec.queries.data[perm]
    permuted = dec.forward(mem).data
    assert np.allclose(permuted, base[:, perm], atol=1e-10)


def test_decoder_is_stateless(rng):
    store = ParameterStore(dtype=np.float64)
    dec = QueryDecoder(store, "d", mem_dim=4, queries=3, dim=4, heads=2)
    mem = Tensor(rng.normal(size=(2, 5, 4)))
    a = dec.forward(mem)
    b = dec.forward(mem)
    assert np.array_equal(a.data, b.data)


# --- encoder ---------------------------------------------------------------------


def tiny_encoder(store, img=(16, 16), ssm_stages=(2, 4), seed=0):
    return SpatiotemporalEncoder(
        store, img, widths=(4, 4, 4, 4, 4), stem_stride=1,
        ssm_stages=ssm_stages, ssm_state=4, bandlimit=1.0, heads=2,
        points=2, queries=3, query_dim=4, decoder_heads=2, ffn_mult=2,
        seed=seed)


def test_encoder_desk_shape_oracle(rng):
    store = ParameterStore(dtype=np.float32)
    cfg = make_cfg()
    enc = SpatiotemporalEncoder.from_config(store, cfg)
    assert enc.grids == {1: (24, 32), 2: (12, 16), 3: (6, 8), 4: (3, 4)}
    frames = Tensor(rng.normal(size=(1, 2, 2, 48, 64)).astype(np.float32))
    feats, state = enc.forward(frames, mode="bidirectional")
    assert feats.shape == (1, 2, 16, 64)
    assert np.all(np.isfinite(feats.data))
    assert set(state.stages) == {2, 4}


def test_encoder_zero_input_is_constant_in_time():
    store = ParameterStore(dtype=np.float64)
    enc = tiny_encoder(store)
    frames = Tensor(np.zeros((1, 3, 2, 16, 16)))
    for mode in ("bidirectional", "causal"):
        feats, _ = enc.forward(frames, mode=mode)
        assert np.allclose(feats.data[:, 1], feats.data[:, 0], atol=1e-12)
        assert np.allclose(feats.data[:, 2], feats.data[:, 0], atol=1e-12)


def test_encoder_streaming_matches_batch_causal(rng):
    store = ParameterStore(dtype=np.float64)
    enc = tiny_encoder(store)
    frames = rng.normal(size=(2, 5, 2, 16, 16))
    batch, z_end = enc.forward(Tensor(frames), mode="causal")

    state = enc.init_state(2, np.float64)
    outs = []
    for t in range(5):
        f_t, state = enc.step(Tensor(frames[:, t]), state)
        outs.append(f_t.data)
    stream = np.stack(outs, axis=1)
    assert np.allclose(stream, batch.data, atol=1e-10)
    for s in z_end.stages:
        assert np.allclose(state.stages[s][0].data, z_end.stages[s][0].data,
                           atol=1e-10)


def test_encoder_sequential_mode_matches_parallel(rng):
    store = ParameterStore(dtype=np.float64)
    enc = tiny_encoder(store)
    frames = Tensor(rng.normal(size=(1, 4, 2, 16, 16)))
    a, _ = enc.forward(frames, mode="causal")
    b, _ = enc.forward(frames, mode="causal-sequential")
    assert np.allclose(a.data, b.data, atol=1e-10)


def test_encoder_chunked_causal_equals_full(rng):
    store = ParameterStore(dtype=np.float64)
    enc = tiny_encoder(store)
    frames = rng.normal(size=(1, 6, 2, 16, 16))
    full, _ = enc.forward(Tensor(frames), mode="causal")
    a, st = enc.forward(Tensor(frames[:, :3]), mode="causal")
    b, _ = enc.forward(Tensor(frames[:, 3:]), mode="causal", state=st)
    joined = np.concatenate([a.data, b.data], axis=1)
    assert np.allclose(joined, full.data, atol=1e-10)


def test_encoder_rejects_mismatched_state(rng):
    store = ParameterStore(dtype=np.float64)
    enc = tiny_encoder(store)
    state = enc.init_state(2, np.float64)
    frames = Tensor(rng.normal(size=(1, 2, 2, 16, 16)))
    with pytest.raises(ShapeMismatchError):
        enc.forward(frames, mode="causal", state=state)


def test_encoder_rejects_unknown_mode(rng):
    store = ParameterStore(dtype=np.float64)
    enc = tiny_encoder(store)
    frames = Tensor(rng.normal(size=(1, 2, 2, 16, 16)))
    with pytest.raises(ValueError):
        enc.forward(frames, mode="acausal")


def test_encoder_dt_scale_changes_output(rng):
    store = ParameterStore(dtype=np.float64)
    enc = tiny_encoder(store)
    frames = Tensor(rng.normal(size=(1, 4, 2, 16, 16)))
    a, _ = enc.forward(frames, mode="causal", dt_scale=1.0)
    b, _ = enc.forward(frames, mode="causal", dt_scale=2.0)
    assert not np.allclose(a.data, b.data, atol=1e-8)
