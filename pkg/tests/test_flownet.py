import numpy as np
import pytest

from lfsynth.flownet import (CheckpointError, NetworkSpec, forward, init_network, load_checkpoint,
                             receptive_field, save_checkpoint)
from lfsynth.numerics import Tensor

from gradcheck import max_rel_error

SMALL = NetworkSpec(angular=(2, 3), pre_channels=4, growth=3, dilations=((1, 2), (2, 4)))


def test_default_architecture():
    spec = NetworkSpec()
    shapes = spec.layer_shapes()
    assert len(shapes) == 14
    assert shapes[-1][3] == "none" and all(s[3] == "relu" for s in shapes[:-1])
    assert all(s[1][2:] == (3, 3) for s in shapes)
    assert spec.head_in_ch == 16 + 12 * 16 == 208
    assert shapes[-1][1] == (128, 208, 3, 3)
    assert [s[2] for s in shapes[1:-1]] == [1, 2, 4, 2, 4, 8, 4, 8, 16, 8, 16, 32]


def test_receptive_field():
    # pre-conv and head add 2 px each, dilated layers add 2*d
    assert receptive_field(NetworkSpec()) == 1 + 2 * (1 + 105 + 1) == 215
    assert receptive_field(NetworkSpec()) > 2 * 64  # any pixel sees the whole 64x48 desk frame


def test_zero_head_gives_zero_flow(rng):
    params = init_network(SMALL, seed=1)
    flow = forward(params, rng.random((1, 7, 9))).data
    assert flow.shape == (3, 2, 2, 7, 9)
    assert not flow.any()


def test_init_determinism():
    a, b, c = init_network(SMALL, 4), init_network(SMALL, 4), init_network(SMALL, 5)
    for ta, tb in zip(a.tensors(), b.tensors()):
        assert ta.data.tobytes() == tb.data.tobytes()
    assert any(not np.array_equal(ta.data, tc.data) for ta, tc in zip(a.tensors()[:-2], c.tensors()[:-2]))


def test_head_bias_moves_one_channel(rng):
    params = init_network(SMALL, seed=1)
    params.layers[-1].bias.data[7] += 1.0
    flow = forward(params, rng.random((1, 5, 6))).data.reshape(12, 5, 6)
    np.testing.assert_array_equal(flow[7], 1.0)
    assert not np.delete(flow, 7, axis=0).any()
    # channel 7 = view (v=1, u=1), dy
    assert forward(params, rng.random((1, 5, 6))).data[1, 1, 1].min() == 1.0


def test_channel_mismatch(rng):
    with pytest.raises(ValueError, match="expects"):
        forward(init_network(SMALL), rng.random((3, 5, 5)))


def test_forward_gradient_float64(rng):
    params = init_network(SMALL, seed=2, dtype=np.float64)
    params.layers[-1].weights.data[:] = rng.normal(0, 0.1, params.layers[-1].weights.shape)
    x = rng.random((1, 8, 9))
    w = rng.standard_normal((3, 2, 2, 8, 9))
    f = lambda: (forward(params, x) * w).sum()
    assert max_rel_error(f, params.tensors(), 10, seed=3) < 1e-4
    assert max_rel_error(lambda: forward(params, x).sum(), params.tensors(), 10, seed=4) < 1e-4


def test_checkpoint_roundtrip(tmp_path, rng):
    params = init_network(SMALL, seed=9)
    params.layers[-1].weights.data[:] = rng.standard_normal(params.layers[-1].weights.shape)
    save_checkpoint(params, tmp_path / "a.lfaf")
    back = load_checkpoint(tmp_path / "a.lfaf", SMALL)
    for ta, tb in zip(params.tensors(), back.tensors()):
        np.testing.assert_array_equal(ta.data, tb.data)
    save_checkpoint(back, tmp_path / "b.lfaf")
    assert (tmp_path / "a.lfaf").read_bytes() == (tmp_path / "b.lfaf").read_bytes()
    raw = (tmp_path / "a.lfaf").read_bytes()
    assert raw[:4] == b"LFAF" and int.from_bytes(raw[4:8], "little") == 1


def test_checkpoint_validation(tmp_path):
    params = init_network(SMALL)
    save_checkpoint(params, tmp_path / "a.lfaf")
    other = NetworkSpec(angular=(3, 3), pre_channels=4, growth=3, dilations=((1, 2), (2, 4)))
    with pytest.raises(CheckpointError, match="digest"):
        load_checkpoint(tmp_path / "a.lfaf", other)
    raw = (tmp_path / "a.lfaf").read_bytes()
    (tmp_path / "bad.lfaf").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "bad.lfaf", SMALL)
    (tmp_path / "short.lfaf").write_bytes(raw[:-10])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(tmp_path / "short.lfaf", SMALL)
