import struct

import numpy as np
import pytest

from ampgrad.checkpoint import (CheckpointError, decode_arrays, encode_arrays, load_checkpoint,
                                read_checkpoint, save_checkpoint)
from ampgrad.nn.archs import build_model, get_preset


def test_layout_of_single_entry():
    buf = encode_arrays([("w", np.array([[1.0, 2.0]], np.float32))])
    assert buf[:4] == b"AMPG"
    version, count, name_len = struct.unpack_from("<III", buf, 4)
    assert (version, count, name_len) == (1, 1, 1)
    assert buf[16:17] == b"w"
    assert struct.unpack_from("<III", buf, 17) == (2, 1, 2)
    assert struct.unpack_from("<2f", buf, 29) == (1.0, 2.0)
    assert len(buf) == 37


def test_model_round_trip(tmp_path):
    src = build_model(get_preset("cnn-small"), seed=0)
    src.items[1].running_mean[...] = 0.25
    path = tmp_path / "c.ampg"
    save_checkpoint(src, path)
    dst = build_model(get_preset("cnn-small"), seed=9)
    load_checkpoint(dst, path)
    for (n, a), (_, b) in zip(src.state_arrays(), dst.state_arrays()):
        np.testing.assert_array_equal(a, b, err_msg=n)
    assert set(read_checkpoint(path)) == {n for n, _ in src.state_arrays()}


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + struct.pack("<I", 2) + b[8:],
    lambda b: b[:-1],
    lambda b: b + b"\0",
])
def test_corrupt_checkpoints_rejected(mutate):
    buf = encode_arrays([("a", np.zeros(3, np.float32)), ("b", np.ones((2, 2), np.float32))])
    with pytest.raises(CheckpointError):
        decode_arrays(mutate(buf))
