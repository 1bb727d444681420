import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from periscope.errors import AtdFormatError, AtdTruncationError, CatalogError, TensorDataError
from periscope.tensors import (
    ActivationTensor,
    CatalogLayer,
    NetworkCatalogEntry,
    TensorKind,
    learnables_up_to,
    load_catalog,
    read_activation_dump,
    save_catalog,
    write_activation_dump,
)

finite_f32 = st.floats(min_value=-1e6, max_value=1e6, width=32, allow_nan=False)


def cnn_arrays():
    return st.integers(1, 6).flatmap(
        lambda s: hnp.arrays(np.float32, st.tuples(st.just(s), st.just(s), st.integers(1, 5)), elements=finite_f32)
    )


def token_arrays():
    return hnp.arrays(np.float32, st.tuples(st.integers(1, 12), st.integers(1, 8)), elements=finite_f32)


@settings(max_examples=60, deadline=None)
@given(data=cnn_arrays())
def test_roundtrip_cnn_bit_exact(data, tmp_path_factory):
    path = tmp_path_factory.mktemp("atd") / "t.atd"
    write_activation_dump(ActivationTensor(TensorKind.CNN_VOLUME, data), path)
    back = read_activation_dump(path)
    assert back.kind == TensorKind.CNN_VOLUME
    assert back.data.dtype == np.float32
    assert back.data.shape == data.shape
    assert np.array_equal(back.data, data)


@settings(max_examples=60, deadline=None)
@given(data=token_arrays())
def test_roundtrip_tokens_bit_exact(data, tmp_path_factory):
    path = tmp_path_factory.mktemp("atd") / "t.atd"
    write_activation_dump(ActivationTensor(TensorKind.VIT_TOKENS, data), path)
    back = read_activation_dump(path)
    assert back.kind == TensorKind.VIT_TOKENS
    assert np.array_equal(back.data, data)


def test_header_layout_is_fixed(tmp_path):
    """First bytes: magic, kind, reserved zero, uint16 ndim, uint32 dims, then payload."""
    data = np.arange(2 * 2 * 3, dtype=np.float32).reshape(2, 2, 3)
    path = tmp_path / "t.atd"
    write_activation_dump(ActivationTensor(TensorKind.CNN_VOLUME, data), path)
    raw = path.read_bytes()
    assert raw[:4] == b"ATD1"
    assert raw[4] == 0 and raw[5] == 0
    assert struct.unpack("<H", raw[6:8])[0] == 3
    assert struct.unpack("<3I", raw[8:20]) == (2, 2, 3)
    assert raw[20:] == data.tobytes()
    assert len(raw) == 20 + 4 * data.size


def test_payload_is_patch_major(tmp_path):
    """Channels of one spatial position sit contiguously in the payload."""
    data = np.zeros((2, 2, 3), dtype=np.float32)
    data[0, 1] = [7.0, 8.0, 9.0]
    path = tmp_path / "t.atd"
    write_activation_dump(ActivationTensor(TensorKind.CNN_VOLUME, data), path)
    floats = np.frombuffer(path.read_bytes()[20:], dtype="<f4")
    assert floats[3:6].tolist() == [7.0, 8.0, 9.0]


def test_tokens_header_ndim_two(tmp_path):
    path = tmp_path / "t.atd"
    write_activation_dump(ActivationTensor(TensorKind.VIT_TOKENS, np.ones((5, 4), np.float32)), path)
    raw = path.read_bytes()
    assert raw[4] == 1
    assert struct.unpack("<H", raw[6:8])[0] == 2
    assert struct.unpack("<2I", raw[8:16]) == (5, 4)


@pytest.mark.parametrize(
    "mutate, error",
    [
        (lambda b: b"XTD1" + b[4:], AtdFormatError),  # wrong magic
        (lambda b: b[:4] + b"\x02" + b[5:], AtdFormatError),  # unknown kind
        (lambda b: b[:5] + b"\x01" + b[6:], AtdFormatError),  # reserved byte set
        (lambda b: b[:6] + struct.pack("<H", 2) + b[8:], AtdFormatError),  # ndim/kind mismatch
        (lambda b: b[:-4], AtdTruncationError),  # short payload
        (lambda b: b + b"\x00" * 4, AtdFormatError),  # trailing bytes
        (lambda b: b[:8] + struct.pack("<I", 0) + b[12:], AtdFormatError),  # zero dim
    ],
)
def test_malformed_headers_rejected(tmp_path, mutate, error):
    good = tmp_path / "good.atd"
    write_activation_dump(ActivationTensor(TensorKind.CNN_VOLUME, np.ones((2, 2, 2), np.float32)), good)
    bad = tmp_path / "bad.atd"
    bad.write_bytes(mutate(good.read_bytes()))
    with pytest.raises(error):
        read_activation_dump(bad)


def test_truncated_header_rejected(tmp_path):
    # a short HEADER is a format error; AtdTruncationError is reserved
    # for a well-formed header whose payload falls short
    bad = tmp_path / "bad.atd"
    bad.write_bytes(b"ATD1\x00\x00")
    with pytest.raises(AtdFormatError):
        read_activation_dump(bad)


def test_non_finite_payload_rejected(tmp_path):
    good = tmp_path / "good.atd"
    write_activation_dump(ActivationTensor(TensorKind.VIT_TOKENS, np.ones((2, 2), np.float32)), good)
    raw = bytearray(good.read_bytes())
    raw[-4:] = struct.pack("<f", float("nan"))
    bad = tmp_path / "bad.atd"
    bad.write_bytes(bytes(raw))
    with pytest.raises(TensorDataError):
        read_activation_dump(bad)


def test_tensor_shape_validation():
    with pytest.raises(TensorDataError):
        ActivationTensor(TensorKind.CNN_VOLUME, np.ones((2, 3, 4), np.float32))
    with pytest.raises(TensorDataError):
        ActivationTensor(TensorKind.CNN_VOLUME, np.ones((2, 2), np.float32))
    with pytest.raises(TensorDataError):
        ActivationTensor(TensorKind.VIT_TOKENS, np.ones((2, 2, 2), np.float32))
    with pytest.raises(TensorDataError):
        ActivationTensor(TensorKind.VIT_TOKENS, np.full((2, 2), np.inf, np.float32))


def test_as_matrix_row_order():
    """Row p of the matrix view is spatial position (p // S, p % S)."""
    data = np.arange(3 * 3 * 2, dtype=np.float32).reshape(3, 3, 2)
    t = ActivationTensor(TensorKind.CNN_VOLUME, data)
    m = t.as_matrix()
    assert m.shape == (9, 2)
    for p in range(9):
        assert np.array_equal(m[p], data[p // 3, p % 3])


def make_catalog():
    return NetworkCatalogEntry(
        name="toynet",
        total_params=100,
        input_side=32,
        layers=(
            CatalogLayer("conv1", 10, (16, 16, 4)),
            CatalogLayer("conv2", 60, (8, 8, 8)),
            CatalogLayer("fc", 100, (1, 1, 16)),
        ),
    )


def test_catalog_roundtrip(tmp_path):
    entry = make_catalog()
    path = tmp_path / "catalog.json"
    save_catalog(entry, path)
    back = load_catalog(path)
    assert back == entry


def test_learnables_up_to():
    entry = make_catalog()
    assert learnables_up_to(entry, "conv1") == 10
    assert learnables_up_to(entry, "conv2") == 60
    assert learnables_up_to(entry, "fc") == 100
    with pytest.raises(CatalogError):
        learnables_up_to(entry, "missing")


def test_catalog_rejects_decreasing_cumulative():
    with pytest.raises(CatalogError):
        NetworkCatalogEntry(
            name="bad",
            total_params=50,
            input_side=32,
            layers=(CatalogLayer("a", 40, (2, 2, 2)), CatalogLayer("b", 30, (2, 2, 2))),
        )


def test_catalog_rejects_final_mismatch():
    with pytest.raises(CatalogError):
        NetworkCatalogEntry(
            name="bad",
            total_params=50,
            input_side=32,
            layers=(CatalogLayer("a", 40, (2, 2, 2)),),
        )
