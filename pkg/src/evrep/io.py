"""Readers and writers for every on-disk format the toolkit uses.

All multi-byte integers are little-endian. Read/write pairs are exact
inverses on valid inputs (bitwise for the binary formats); readers never
hand back values that violate the data-model invariants; they raise.

Event stream binary (.evs)
    header   magic b"EVST" | version u32 = 1 | W u16 | H u16 | T_max u64
    records  t u64 | x u16 | y u16 | p u8 | reserved u8 (= 0)   [14 bytes each]

Tensor file (.evtn)
    header   magic b"EVTN" | version u32 = 1 | C u32 | H u32 | W u32
             | dtype_code u8 (0 = float32 LE)
    payload  C*H*W float32, channel-major (c, then y, then x)

Flow field (.flow)
    header   magic b"FLOW" | t u64 | H u32 | W u32
    payload  H*W float32 u-plane (row-major), then the v-plane

Event CSV        lines "t,x,y,p"; one optional header line
Annotation CSV   lines "t,x,y,w,h,class_id[,extra...]"; extras ignored
Detection CSV    lines "t,x,y,w,h,class_id,score[,extra...]"
"""

from __future__ import annotations

import io as _stdio
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadMagicError,
    CoordOutOfBoundsError,
    DimMismatchError,
    NonMonotonicTimestampError,
    NonPositiveSizeError,
    ParseError,
    TruncatedPlaneError,
    TruncatedRecordError,
    UnsupportedDtypeError,
)
from .model import Annotation, Detection, EventStream, FlowField, FrameGeometry, ensure_tensor_chw

EVENT_MAGIC = b"EVST"
TENSOR_MAGIC = b"EVTN"
FLOW_MAGIC = b"FLOW"

_EVENT_HEADER = struct.Struct("<4sIHHQ")
_TENSOR_HEADER = struct.Struct("<4sIIIIB")
_FLOW_HEADER = struct.Struct("<4sQII")

_EVENT_RECORD_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("reserved", "u1")]
)


def _check_event_columns(t, x, y, p, geometry: FrameGeometry) -> None:
    """Semantic validation shared by the binary and CSV event readers."""
    bad = np.nonzero(np.diff(t) < 0)[0]
    if bad.size:
        raise NonMonotonicTimestampError(int(bad[0]) + 1)
    bad = np.nonzero((t >= geometry.t_max_us) | (t < 0))[0]
    if bad.size:
        raise CoordOutOfBoundsError(int(bad[0]), f"timestamp outside [0, t_max) at record {int(bad[0])}")
    bad = np.nonzero((x >= geometry.width) | (y >= geometry.height))[0]
    if bad.size:
        raise CoordOutOfBoundsError(int(bad[0]))
    bad = np.nonzero(p > 1)[0]
    if bad.size:
        raise CoordOutOfBoundsError(int(bad[0]), f"polarity not in {{0, 1}} at record {int(bad[0])}")


def read_events_binary(data: bytes) -> EventStream:
    """Decode an event stream from the binary format described above."""
    if len(data) < _EVENT_HEADER.size:
        raise TruncatedRecordError("input shorter than the stream header")
    magic, version, width, height, t_max = _EVENT_HEADER.unpack_from(data, 0)
    if magic != EVENT_MAGIC:
        raise BadMagicError(f"expected {EVENT_MAGIC!r}, found {magic!r}")
    if version != 1:
        raise BadMagicError(f"unsupported event stream version {version}")
    body = len(data) - _EVENT_HEADER.size
    if body % _EVENT_RECORD_DTYPE.itemsize != 0:
        raise TruncatedRecordError(
            f"{body} payload bytes is not a multiple of {_EVENT_RECORD_DTYPE.itemsize}"
        )

    geometry = FrameGeometry(width, height, t_max)
    records = np.frombuffer(data, dtype=_EVENT_RECORD_DTYPE, offset=_EVENT_HEADER.size)
    t = records["t"].astype(np.int64)
    x = records["x"].astype(np.int32)
    y = records["y"].astype(np.int32)
    p = records["p"].astype(np.uint8)
    _check_event_columns(t, x, y, p, geometry)
    return EventStream.from_arrays(geometry, t, x, y, p)


def write_events_binary(stream: EventStream) -> bytes:
    """Encode a stream to the binary format; inverse of read_events_binary."""
    geo = stream.geometry
    header = _EVENT_HEADER.pack(EVENT_MAGIC, 1, geo.width, geo.height, geo.t_max_us)
    records = np.zeros(len(stream), dtype=_EVENT_RECORD_DTYPE)
    records["t"] = stream.t
    records["x"] = stream.x
    records["y"] = stream.y
    records["p"] = stream.p
    return header + records.tobytes()


def _split_csv_lines(text: str) -> list[tuple[int, str]]:
    """Non-empty lines with their 1-based line numbers."""
    out = []
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if line:
            out.append((no, line))
    return out


def _parse_int(field: str, lineno: int, what: str) -> int:
    try:
        return int(field)
    except ValueError:
        raise ParseError(lineno, f"bad {what} {field!r}") from None


def _parse_float(field: str, lineno: int, what: str) -> float:
    try:
        v = float(field)
    except ValueError:
        raise ParseError(lineno, f"bad {what} {field!r}") from None
    if not np.isfinite(v):
        raise ParseError(lineno, f"non-finite {what} {field!r}")
    return v


def _looks_like_header(line: str) -> bool:
    first = line.split(",")[0].strip()
    try:
        float(first)
        return False
    except ValueError:
        return True


def read_events_csv(text: str, geometry: FrameGeometry) -> EventStream:
    """Parse "t,x,y,p" lines (optional header) into a validated stream."""
    lines = _split_csv_lines(text)
    if lines and _looks_like_header(lines[0][1]):
        lines = lines[1:]
    t = np.empty(len(lines), dtype=np.int64)
    x = np.empty(len(lines), dtype=np.int32)
    y = np.empty(len(lines), dtype=np.int32)
    p = np.empty(len(lines), dtype=np.uint8)
    for i, (no, line) in enumerate(lines):
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 4:
            raise ParseError(no, f"expected 4 fields, found {len(fields)}")
        t[i] = _parse_int(fields[0], no, "timestamp")
        x[i] = _parse_int(fields[1], no, "x")
        y[i] = _parse_int(fields[2], no, "y")
        pol = _parse_int(fields[3], no, "polarity")
        if pol not in (0, 1):
            raise ParseError(no, f"polarity must be 0 or 1, found {pol}")
        if t[i] < 0:
            raise ParseError(no, "negative timestamp")
        if x[i] < 0 or y[i] < 0:
            raise ParseError(no, "negative coordinate")
        p[i] = pol
    _check_event_columns(t, x, y, p, geometry)
    return EventStream.from_arrays(geometry, t, x, y, p)


def write_events_csv(stream: EventStream) -> str:
    """Emit "t,x,y,p" lines with a header; inverse of read_events_csv."""
    buf = _stdio.StringIO()
    buf.write("t,x,y,p\n")
    for i in range(len(stream)):
        buf.write(f"{stream.t[i]},{stream.x[i]},{stream.y[i]},{stream.p[i]}\n")
    return buf.getvalue()


def write_tensor(t: np.ndarray, path: str | Path) -> None:
    """Write a float32 (C, H, W) tensor to the .evtn container."""
    a = ensure_tensor_chw(t)
    c, h, w = a.shape
    header = _TENSOR_HEADER.pack(TENSOR_MAGIC, 1, c, h, w, 0)
    payload = np.ascontiguousarray(a, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a .evtn tensor file back into a float32 (C, H, W) array."""
    data = Path(path).read_bytes()
    if len(data) < _TENSOR_HEADER.size:
        raise BadMagicError("input shorter than the tensor header")
    magic, version, c, h, w, dtype_code = _TENSOR_HEADER.unpack_from(data, 0)
    if magic != TENSOR_MAGIC:
        raise BadMagicError(f"expected {TENSOR_MAGIC!r}, found {magic!r}")
    if version != 1:
        raise BadMagicError(f"unsupported tensor version {version}")
    if dtype_code != 0:
        raise UnsupportedDtypeError(f"dtype code {dtype_code}")
    expected = c * h * w * 4
    actual = len(data) - _TENSOR_HEADER.size
    if actual != expected:
        raise DimMismatchError(f"payload holds {actual} bytes, header implies {expected}")
    flat = np.frombuffer(data, dtype="<f4", offset=_TENSOR_HEADER.size)
    return flat.reshape(c, h, w).astype(np.float32, copy=True)


def _format_float(v: float) -> str:
    """Shortest decimal that round-trips to the same float."""
    return repr(float(v))


def read_annotations_csv(text: str) -> list[Annotation]:
    """Parse "t,x,y,w,h,class_id[,extra...]" lines; extras are discarded."""
    lines = _split_csv_lines(text)
    if lines and _looks_like_header(lines[0][1]):
        lines = lines[1:]
    out: list[Annotation] = []
    for no, line in lines:
        fields = [f.strip() for f in line.split(",")]
        if len(fields) < 6:
            raise ParseError(no, f"expected at least 6 fields, found {len(fields)}")
        t = _parse_int(fields[0], no, "timestamp")
        x = _parse_float(fields[1], no, "x")
        y = _parse_float(fields[2], no, "y")
        w = _parse_float(fields[3], no, "w")
        h = _parse_float(fields[4], no, "h")
        class_id = _parse_int(fields[5], no, "class_id")
        if w <= 0 or h <= 0:
            raise NonPositiveSizeError(no)
        out.append(Annotation(t, x, y, w, h, class_id))
    return out


def write_annotations_csv(annotations: Sequence[Annotation]) -> str:
    buf = _stdio.StringIO()
    buf.write("t,x,y,w,h,class_id\n")
    for a in annotations:
        buf.write(
            f"{a.t},{_format_float(a.x)},{_format_float(a.y)},"
            f"{_format_float(a.w)},{_format_float(a.h)},{a.class_id}\n"
        )
    return buf.getvalue()


def read_detections_csv(text: str) -> list[Detection]:
    """As read_annotations_csv with a seventh "score" column."""
    lines = _split_csv_lines(text)
    if lines and _looks_like_header(lines[0][1]):
        lines = lines[1:]
    out: list[Detection] = []
    for no, line in lines:
        fields = [f.strip() for f in line.split(",")]
        if len(fields) < 7:
            raise ParseError(no, f"expected at least 7 fields, found {len(fields)}")
        t = _parse_int(fields[0], no, "timestamp")
        x = _parse_float(fields[1], no, "x")
        y = _parse_float(fields[2], no, "y")
        w = _parse_float(fields[3], no, "w")
        h = _parse_float(fields[4], no, "h")
        class_id = _parse_int(fields[5], no, "class_id")
        score = _parse_float(fields[6], no, "score")
        if w <= 0 or h <= 0:
            raise NonPositiveSizeError(no)
        if not 0.0 <= score <= 1.0:
            raise ParseError(no, f"score {score} outside [0, 1]")
        out.append(Detection(t, x, y, w, h, class_id, score))
    return out


def write_detections_csv(detections: Sequence[Detection]) -> str:
    buf = _stdio.StringIO()
    buf.write("t,x,y,w,h,class_id,score\n")
    for d in detections:
        buf.write(
            f"{d.t},{_format_float(d.x)},{_format_float(d.y)},"
            f"{_format_float(d.w)},{_format_float(d.h)},{d.class_id},{_format_float(d.score)}\n"
        )
    return buf.getvalue()


def write_flow(flow: FlowField, path: str | Path) -> None:
    """Write a flow field to the .flow container."""
    header = _FLOW_HEADER.pack(FLOW_MAGIC, flow.t, flow.height, flow.width)
    u = np.ascontiguousarray(flow.u, dtype="<f4").tobytes()
    v = np.ascontiguousarray(flow.v, dtype="<f4").tobytes()
    Path(path).write_bytes(header + u + v)


def read_flow(path: str | Path) -> FlowField:
    """Read a .flow file back into a FlowField; inverse of write_flow."""
    data = Path(path).read_bytes()
    if len(data) < _FLOW_HEADER.size:
        raise BadMagicError("input shorter than the flow header")
    magic, t, h, w = _FLOW_HEADER.unpack_from(data, 0)
    if magic != FLOW_MAGIC:
        raise BadMagicError(f"expected {FLOW_MAGIC!r}, found {magic!r}")
    plane = h * w * 4
    if len(data) - _FLOW_HEADER.size != 2 * plane:
        raise TruncatedPlaneError(
            f"payload holds {len(data) - _FLOW_HEADER.size} bytes, expected {2 * plane}"
        )
    u = np.frombuffer(data, dtype="<f4", count=h * w, offset=_FLOW_HEADER.size).reshape(h, w)
    v = np.frombuffer(data, dtype="<f4", count=h * w, offset=_FLOW_HEADER.size + plane).reshape(h, w)
    return FlowField.from_planes(t, u, v)
