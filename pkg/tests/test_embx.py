import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tokenbind.embx import F32, F64, decode_embx, encode_embx, load_embx, read_embx, save_embx, write_embx
from tokenbind.errors import BadDtype, BadMagic, BadVersion, NonFiniteError, TruncatedPayload


def test_header_layout():
    data = encode_embx(np.arange(6.0).reshape(2, 3), F32)
    assert data[:4] == b"EMBX"
    assert struct.unpack("<III", data[4:16]) == (1, 2, 3)
    assert data[16] == 0
    assert len(data) == 17 + 6 * 4
    np.testing.assert_array_equal(np.frombuffer(data[17:], "<f4"), np.arange(6.0))


def test_f64_round_trip(rng, tmp_path):
    m = rng.normal(size=(5, 7))
    data = write_embx(m, F64)
    np.testing.assert_array_equal(read_embx(data), m)
    assert write_embx(read_embx(data), F64) == data
    save_embx(tmp_path / "m.embx", m)
    assert (tmp_path / "m.embx").read_bytes() == data
    assert load_embx(tmp_path / "m.embx").dtype == F64


def test_f32_round_trip_is_byte_identical(rng):
    data = encode_embx(rng.normal(size=(4, 3)), F32)
    f = decode_embx(data)
    assert f.dtype == F32 and f.matrix.dtype == np.float64
    assert encode_embx(f.matrix, f.dtype) == data


def test_bad_magic():
    data = bytearray(encode_embx(np.eye(2)))
    data[:4] = b"XBME"
    with pytest.raises(BadMagic):
        decode_embx(bytes(data))
    with pytest.raises(BadMagic):
        decode_embx(b"EM")


def test_bad_version():
    data = bytearray(encode_embx(np.eye(2)))
    data[4:8] = struct.pack("<I", 2)
    with pytest.raises(BadVersion):
        decode_embx(bytes(data))


def test_bad_dtype():
    data = bytearray(encode_embx(np.eye(2)))
    data[16] = 7
    with pytest.raises(BadDtype):
        decode_embx(bytes(data))
    with pytest.raises(BadDtype):
        encode_embx(np.eye(2), 2)


@pytest.mark.parametrize("cut", [1, 8, 31])
def test_truncated(cut):
    data = encode_embx(np.eye(2))
    with pytest.raises(TruncatedPayload):
        decode_embx(data[:-cut])


def test_short_header():
    with pytest.raises(TruncatedPayload):
        decode_embx(encode_embx(np.eye(2))[:10])


def test_trailing_bytes():
    with pytest.raises(TruncatedPayload):
        decode_embx(encode_embx(np.eye(2)) + b"\0")


def test_non_finite_payload():
    data = struct.pack("<4sIIIB", b"EMBX", 1, 1, 1, 1) + struct.pack("<d", float("inf"))
    with pytest.raises(NonFiniteError):
        decode_embx(data)


def test_empty_matrix():
    f = decode_embx(encode_embx(np.zeros((0, 3))))
    assert f.matrix.shape == (0, 3)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 6).flatmap(
        lambda r: st.integers(1, 6).flatmap(
            lambda c: arrays(np.float64, (r, c), elements=st.floats(-1e300, 1e300, allow_nan=False))
        )
    )
)
def test_f64_round_trip_property(m):
    data = encode_embx(m, F64)
    back = decode_embx(data)
    np.testing.assert_array_equal(back.matrix, m)
    assert encode_embx(back.matrix, F64) == data


@settings(max_examples=60, deadline=None)
@given(arrays(np.float32, (3, 2), elements=st.floats(-65504.0, 65504.0, width=32)))
def test_f32_round_trip_property(m):
    data = encode_embx(m, F32)
    assert encode_embx(decode_embx(data).matrix, F32) == data
