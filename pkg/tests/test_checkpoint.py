import numpy as np
import pytest

from deepkpm.checkpoint import (CheckpointMeta, decode_checkpoint, encode_checkpoint, load_checkpoint,
                                save_checkpoint)
from deepkpm.errors import CheckpointError, CheckpointMagicError, CheckpointShapeError, CheckpointTruncatedError
from deepkpm.network import N_PARAMS, NetParams, forward


def test_round_trip_forward_identical(tmp_path, rng):
    p = NetParams.he_uniform(9).map(lambda a: a + rng.normal(size=a.shape))
    save_checkpoint(p, CheckpointMeta(k=50, seed=9, head="direct"), tmp_path / "c.dpmk")
    q, meta = load_checkpoint(tmp_path / "c.dpmk", expected_k=50)
    assert q == p and meta == CheckpointMeta(k=50, seed=9, head="direct")
    x, c, m = rng.normal(size=(3, 50, 12)), rng.random((3, 50, 3)), np.ones((3, 50))
    assert np.array_equal(forward(p, x, c, m)[0], forward(q, x, c, m)[0])


def test_size_and_header():
    data = encode_checkpoint(NetParams.zeros(), CheckpointMeta(k=500))
    assert data[:4] == b"DPMK"
    assert int.from_bytes(data[8:12], "little") == 500
    assert len(data) > 8 * N_PARAMS


def test_wrong_k_is_shape_error():
    data = encode_checkpoint(NetParams.zeros(), CheckpointMeta(k=500))
    with pytest.raises(CheckpointShapeError):
        decode_checkpoint(data, expected_k=50)


def test_truncated_and_magic():
    data = encode_checkpoint(NetParams.zeros(), CheckpointMeta(k=50))
    for cut in (2, 20, 100, len(data) - 1):
        with pytest.raises(CheckpointTruncatedError):
            decode_checkpoint(data[:cut])
    with pytest.raises(CheckpointMagicError):
        decode_checkpoint(b"NOPE" + data[4:])


def test_corruption_detected():
    data = bytearray(encode_checkpoint(NetParams.he_uniform(1), CheckpointMeta(k=50)))
    data[200] ^= 0xFF
    with pytest.raises(CheckpointError, match="CRC"):
        decode_checkpoint(bytes(data))


def test_shape_table_mismatch():
    data = bytearray(encode_checkpoint(NetParams.zeros(), CheckpointMeta(k=50)))
    # first tensor dims follow the fixed header and its ndim word
    off = 4 + 4 + 4 + 4 + 8 + 1 + 4 + 4
    data[off:off + 4] = (13).to_bytes(4, "little")
    with pytest.raises(CheckpointShapeError):
        decode_checkpoint(bytes(data))
