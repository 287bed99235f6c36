import struct

import numpy as np
import pytest

from privsketch.hashing import make_hash_family
from privsketch.ldp import PrivacyParams
from privsketch.protocol import FullReports, SampledReports, simulate_full, simulate_sampled
from privsketch.wire import WireFormatError, decode_reports, encode_reports, read_reports, write_reports

from conftest import random_users


def _tiny_sampled():
    ranks = np.array([[[2, 1, 3], [4, 6, 5]]])
    return SampledReports(np.array([1]), np.array([2]), np.array([-1], np.int8), ranks)


def test_sampled_bytes_by_hand():
    blob = encode_reports(_tiny_sampled())
    expected = b"PSKW" + struct.pack("<BHHQB", 1, 2, 3, 1, 0)
    expected += struct.pack("<HHB", 1, 2, 0) + struct.pack("<6I", 2, 1, 3, 4, 6, 5)
    assert blob == expected


def test_full_bytes_by_hand():
    # 2x5 sketch -> 10 bits -> 2 bytes, row-major, LSB first
    cells = np.array([[[1, -1, -1, 1, 1], [-1, -1, -1, -1, 1]]], np.int8)
    ranks = np.arange(1, 11).reshape(1, 2, 5)
    blob = encode_reports(FullReports(cells, ranks))
    bits = [1, 0, 0, 1, 1, 0, 0, 0, 0, 1]
    b0 = sum(b << i for i, b in enumerate(bits[:8]))
    b1 = sum(b << i for i, b in enumerate(bits[8:]))
    expected = b"PSKW" + struct.pack("<BHHQB", 1, 2, 5, 1, 1) + bytes([b0, b1]) + struct.pack("<10I", *range(1, 11))
    assert blob == expected


@pytest.mark.parametrize("mode", ["sampled", "full"])
def test_round_trip(tmp_path, mode):
    rng = np.random.default_rng(3)
    fam = make_hash_family(3, 7, 1)
    params = PrivacyParams(2.0, 3, 7)
    users = random_users(rng, 300, 50, 9)
    sim = simulate_sampled if mode == "sampled" else simulate_full
    reps = sim(users, params, fam, rng)
    path = tmp_path / "r.pskw"
    write_reports(path, reps)
    back = read_reports(path)
    assert type(back) is type(reps) and len(back) == 300
    assert np.array_equal(back.ranks, reps.ranks)
    if mode == "sampled":
        assert np.array_equal(back.rows, reps.rows)
        assert np.array_equal(back.cols, reps.cols)
        assert np.array_equal(back.values, reps.values)
    else:
        assert np.array_equal(back.cells, reps.cells)
    assert encode_reports(back) == path.read_bytes()


def test_round_trip_from_report_list():
    reps = _tiny_sampled()
    assert encode_reports(list(reps)) == encode_reports(reps)


def test_zero_reports():
    empty = SampledReports(np.zeros(0, int), np.zeros(0, int), np.zeros(0, np.int8), np.zeros((0, 2, 3), int))
    back = decode_reports(encode_reports(empty))
    assert len(back) == 0 and back.shape == (2, 3)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b[:10],  # truncated header
        lambda b: b"PSKX" + b[4:],  # magic
        lambda b: b[:4] + bytes([2]) + b[5:],  # version
        lambda b: b[:17] + bytes([7]) + b[18:],  # mode
        lambda b: b[:-1],  # truncated record
        lambda b: b + b"\0",  # trailing byte
    ],
)
def test_malformed_input_rejected(mutate):
    blob = encode_reports(_tiny_sampled())
    with pytest.raises(WireFormatError):
        decode_reports(mutate(blob))


def test_bad_value_byte_rejected():
    blob = bytearray(encode_reports(_tiny_sampled()))
    blob[18 + 4] = 2  # value byte of the first record
    with pytest.raises(WireFormatError):
        decode_reports(bytes(blob))


def test_encode_rejects_non_sign_values():
    bad = SampledReports(np.array([0]), np.array([0]), np.array([0], np.int8), np.arange(1, 5).reshape(1, 2, 2))
    with pytest.raises(WireFormatError):
        encode_reports(bad)
    with pytest.raises(ValueError):
        encode_reports([])
