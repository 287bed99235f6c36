"""PSKW binary report files.

Layout (all integers little-endian)::

    header  "PSKW" | version u8 (=1) | K u16 | M u16 | n u64 | mode u8
    sampled record   row u16 | col u16 | value u8 (0 -> -1, 1 -> +1) | K*M ranks u32
    full record      ceil(K*M/8) bytes of value bits, row-major, LSB first,
                     bit 1 -> +1 | K*M ranks u32
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .protocol import FullReport, FullReports, SampledReports, UserReport

MAGIC = b"PSKW"
VERSION = 1
MODE_SAMPLED = 0
MODE_FULL = 1
_HEADER = struct.Struct("<4sBHHQB")

Reports = Union[SampledReports, FullReports]


class WireFormatError(ValueError):
    pass


def _record_dtype(mode: int, k: int, m: int) -> np.dtype:
    cells = k * m
    if mode == MODE_SAMPLED:
        return np.dtype([("row", "<u2"), ("col", "<u2"), ("value", "u1"), ("ranks", "<u4", (cells,))])
    if mode == MODE_FULL:
        return np.dtype([("bits", "u1", ((cells + 7) // 8,)), ("ranks", "<u4", (cells,))])
    raise WireFormatError(f"unknown mode byte {mode}")


def _as_batch(reports) -> Reports:
    if isinstance(reports, (SampledReports, FullReports)):
        return reports
    reports = list(reports)
    if not reports:
        raise ValueError("cannot infer mode of an empty report list; pass a batch")
    if all(isinstance(r, UserReport) for r in reports):
        return SampledReports.from_reports(reports)
    if all(isinstance(r, FullReport) for r in reports):
        return FullReports.from_reports(reports)
    raise TypeError("reports must all be UserReport or all FullReport")


def encode_reports(reports: Union[Reports, Sequence[UserReport], Sequence[FullReport]]) -> bytes:
    batch = _as_batch(reports)
    k, m = batch.shape
    if k > 0xFFFF or m > 0xFFFF:
        raise WireFormatError(f"K and M must fit in u16, got {k}x{m}")
    n = len(batch)
    ranks = batch.ranks.reshape(n, k * m)
    if ranks.size and (ranks.min() < 0 or ranks.max() > 0xFFFFFFFF):
        raise WireFormatError("ranks must fit in u32")
    if isinstance(batch, SampledReports):
        mode = MODE_SAMPLED
        if np.any(np.abs(batch.values) != 1):
            raise WireFormatError("perturbed values must be -1 or +1")
        records = np.zeros(n, dtype=_record_dtype(mode, k, m))
        records["row"] = batch.rows
        records["col"] = batch.cols
        records["value"] = batch.values > 0
    else:
        mode = MODE_FULL
        cells = batch.cells.reshape(n, k * m)
        if np.any(np.abs(cells) != 1):
            raise WireFormatError("perturbed cells must be -1 or +1")
        records = np.zeros(n, dtype=_record_dtype(mode, k, m))
        records["bits"] = np.packbits(cells > 0, axis=1, bitorder="little")
    records["ranks"] = ranks
    return _HEADER.pack(MAGIC, VERSION, k, m, n, mode) + records.tobytes()


def decode_reports(data: bytes) -> Reports:
    if len(data) < _HEADER.size:
        raise WireFormatError("truncated header")
    magic, version, k, m, n, mode = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise WireFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise WireFormatError(f"unsupported version {version}")
    dtype = _record_dtype(mode, k, m)
    expected = _HEADER.size + n * dtype.itemsize
    if len(data) != expected:
        raise WireFormatError(f"expected {expected} bytes for {n} records, got {len(data)}")
    records = np.frombuffer(data, dtype=dtype, offset=_HEADER.size, count=n)
    ranks = records["ranks"].astype(np.int64).reshape(n, k, m)
    if mode == MODE_SAMPLED:
        if np.any(records["value"] > 1):
            raise WireFormatError("value byte must be 0 or 1")
        values = np.where(records["value"] == 1, 1, -1).astype(np.int8)
        return SampledReports(records["row"].astype(np.int64), records["col"].astype(np.int64), values, ranks)
    bits = np.unpackbits(records["bits"], axis=1, count=k * m, bitorder="little")
    cells = (2 * bits.astype(np.int8) - 1).reshape(n, k, m)
    return FullReports(cells, ranks)


def write_reports(path, reports) -> None:
    Path(path).write_bytes(encode_reports(reports))


def read_reports(path) -> Reports:
    return decode_reports(Path(path).read_bytes())
