import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from rnntrack.association import AssocNet
from rnntrack.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from rnntrack.errors import InvalidArgument, ParseError
from rnntrack.motion import MotionNet


def test_motion_round_trip(tmp_path):
    net = MotionNet(7, 3, np.random.default_rng(0))
    for p in net.params().values():
        p.value[...] = np.random.default_rng(1).normal(size=p.shape)
    path = tmp_path / "m.ckpt"
    net.save(path, iteration=123)
    back = MotionNet.load(path)
    assert back.iteration == 123
    assert back.sizes == net.sizes
    for k, p in net.params().items():
        assert_array_equal(back.params()[k].value, p.value)


def test_assoc_round_trip(tmp_path):
    net = AssocNet(3, 4, 5, 2, 6, np.random.default_rng(0))
    path = tmp_path / "a.ckpt"
    net.save(path, 7)
    back = AssocNet.load(path)
    assert back.sizes == net.sizes
    for k, p in net.params().items():
        assert_array_equal(back.params()[k].value, p.value)


def test_byte_stable(tmp_path):
    net = MotionNet(5, 2, np.random.default_rng(3))
    net.save(tmp_path / "a", 9)
    net.save(tmp_path / "b", 9)
    MotionNet.load(tmp_path / "a").save(tmp_path / "c", 9)
    a = (tmp_path / "a").read_bytes()
    assert a == (tmp_path / "b").read_bytes() == (tmp_path / "c").read_bytes()


def test_layout(tmp_path):
    path = tmp_path / "x"
    save_checkpoint(path, "demo", {"n": 2}, {"w": np.array([[1.0, 2.0]])}, 5)
    data = path.read_bytes()
    assert data[:8] == MAGIC
    version, hlen = struct.unpack("<II", data[8:16])
    assert version == 1
    assert data[16:16 + hlen] == (b'{"iteration":5,"kind":"demo","params":[{"name":"w","shape":[1,2]}],'
                                  b'"sizes":{"n":2}}')
    assert data[16 + hlen:] == struct.pack("<2d", 1.0, 2.0)
    kind, sizes, arrays, it = load_checkpoint(path)
    assert (kind, sizes, it) == ("demo", {"n": 2}, 5)
    assert_array_equal(arrays["w"], [[1.0, 2.0]])


def test_corrupt_files(tmp_path):
    path = tmp_path / "x"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ParseError):
        load_checkpoint(path)
    save_checkpoint(path, "demo", {}, {"w": np.zeros(3)})
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ParseError):
        load_checkpoint(path)
    path.write_bytes(data + b"\0")
    with pytest.raises(ParseError):
        load_checkpoint(path)


def test_kind_mismatch(tmp_path):
    AssocNet(2, 2, 3, 1, 3).save(tmp_path / "a")
    with pytest.raises(InvalidArgument):
        MotionNet.load(tmp_path / "a")
