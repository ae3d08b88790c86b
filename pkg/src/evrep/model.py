"""Shared data model: events, streams, tensors, boxes, flow fields, configs.

Conventions used throughout the toolkit:

* Timestamps are integer microseconds everywhere. Unit conversions happen
  only inside formulas whose constants demand another unit.
* Polarity is stored as {0, 1}, never as {-1, +1}.
* Dense tensors are numpy float32 arrays of shape (C, H, W), channel-major.
* Box coordinates are continuous; rasterization to pixel indices happens
  only where a metric needs pixels (truncation toward zero).

All types are immutable after construction (array payloads are marked
read-only), so values can be shared freely between concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import GeometryMismatchError, InvalidParamError

# A dense channel-major float tensor: np.float32, shape (C, H, W).
TensorCHW = np.ndarray


def ensure_tensor_chw(t: np.ndarray) -> TensorCHW:
    """Validate that ``t`` is a finite float32 (C, H, W) tensor and return it."""
    a = np.asarray(t)
    if a.ndim != 3:
        raise InvalidParamError(f"expected a (C, H, W) tensor, got shape {a.shape}")
    if a.dtype != np.float32:
        raise InvalidParamError(f"expected float32 data, got {a.dtype}")
    if not np.all(np.isfinite(a)):
        raise InvalidParamError("tensor contains non-finite values")
    return a


@dataclass(frozen=True)
class FrameGeometry:
    """Sensor picture size plus the maximum record duration in microseconds."""

    width: int
    height: int
    t_max_us: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidParamError("frame dimensions must be positive")
        if self.t_max_us <= 0:
            raise InvalidParamError("t_max_us must be positive")


@dataclass(frozen=True)
class Event:
    """A single sensor measurement: (t, x, y, p) with t in microseconds."""

    t: int
    x: int
    y: int
    p: int


@dataclass(frozen=True)
class StreamViolation:
    """One invariant violation found by validate_stream."""

    index: int
    reason: str


@dataclass(frozen=True)
class EventStream:
    """An ordered event sequence bound to a frame geometry.

    Events are stored column-wise as read-only numpy arrays so encoders can
    vectorize over them; ``t`` is int64, ``x``/``y`` int32, ``p`` uint8.
    Use :meth:`from_arrays` or :meth:`from_events` to construct; arrays that
    already have the right dtype are adopted (and frozen) without a copy.
    """

    geometry: FrameGeometry
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    @classmethod
    def from_arrays(cls, geometry: FrameGeometry, t, x, y, p) -> "EventStream":
        t = np.ascontiguousarray(t, dtype=np.int64)
        x = np.ascontiguousarray(x, dtype=np.int32)
        y = np.ascontiguousarray(y, dtype=np.int32)
        p = np.ascontiguousarray(p, dtype=np.uint8)
        if not (t.shape == x.shape == y.shape == p.shape) or t.ndim != 1:
            raise InvalidParamError("event columns must be 1-D and equally long")
        for a in (t, x, y, p):
            a.flags.writeable = False
        return cls(geometry, t, x, y, p)

    @classmethod
    def from_events(cls, geometry: FrameGeometry, events: Sequence[Event]) -> "EventStream":
        return cls.from_arrays(
            geometry,
            [e.t for e in events],
            [e.x for e in events],
            [e.y for e in events],
            [e.p for e in events],
        )

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def slice_range(self, t_lo: int, t_hi: int) -> tuple[int, int]:
        """Index range [i, j) of events with t in [t_lo, t_hi)."""
        i = int(np.searchsorted(self.t, t_lo, side="left"))
        j = int(np.searchsorted(self.t, t_hi, side="left"))
        return i, j


@dataclass(frozen=True)
class WindowView:
    """A contiguous slice of a stream restricted to [t_lo, t_hi), t_hi <= t_n.

    Holds column views into the parent stream (no copies); ``t_n`` is the
    detection timestamp the window feeds.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    t_lo: int
    t_hi: int
    t_n: int

    @classmethod
    def from_stream(cls, stream: EventStream, t_lo: int, t_hi: int, t_n: int) -> "WindowView":
        if t_hi > t_n:
            raise InvalidParamError("window must end at or before the detection timestamp")
        i, j = stream.slice_range(t_lo, t_hi)
        return cls(stream.t[i:j], stream.x[i:j], stream.y[i:j], stream.p[i:j], t_lo, t_hi, t_n)

    def __len__(self) -> int:
        return int(self.t.shape[0])


@dataclass(frozen=True)
class Annotation:
    """A timestamped ground-truth box: upper-left corner, size, class label.

    Coordinates and sizes are real-valued pixels; class_id is a small
    non-negative integer.
    """

    t: int
    x: float
    y: float
    w: float
    h: float
    class_id: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise InvalidParamError("box width and height must be positive")


@dataclass(frozen=True)
class Detection:
    """A scored predicted box; same layout as Annotation plus score in [0, 1]."""

    t: int
    x: float
    y: float
    w: float
    h: float
    class_id: int
    score: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise InvalidParamError("box width and height must be positive")
        if not 0.0 <= self.score <= 1.0:
            raise InvalidParamError("score must lie in [0, 1]")


@dataclass(frozen=True)
class FlowField:
    """Dense per-pixel optical flow (u, v) at one timestamp.

    ``u`` and ``v`` are float32 (H, W) planes in pixels per flow frame.
    """

    t: int
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def from_planes(cls, t: int, u, v) -> "FlowField":
        u = np.ascontiguousarray(u, dtype=np.float32)
        v = np.ascontiguousarray(v, dtype=np.float32)
        if u.ndim != 2 or u.shape != v.shape:
            raise InvalidParamError("u and v must be equal-shape 2-D planes")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise InvalidParamError("flow planes must be finite")
        u.flags.writeable = False
        v.flags.writeable = False
        return cls(t, u, v)

    @property
    def height(self) -> int:
        return int(self.u.shape[0])

    @property
    def width(self) -> int:
        return int(self.u.shape[1])


@dataclass(frozen=True)
class EncoderParams:
    """Hyper-parameters shared by the encoders.

    delta_tau_us:      sampling/detection period (default 10 ms)
    bins:              temporal bin count for the event volume
    recent_events:     event count for the count image
    sae_decay_per_us:  exponential decay rate for the active-event surface
    queue_depth:       per-position FIFO depth for the focus encoder
    kernel_support_us: sampling-kernel support; defaults to delta_tau_us
    """

    delta_tau_us: int = 10_000
    bins: int = 5
    recent_events: int = 50_000
    sae_decay_per_us: float = 1e-5
    queue_depth: int = 4
    kernel_support_us: int | None = None

    def __post_init__(self):
        if self.delta_tau_us <= 0:
            raise InvalidParamError("delta_tau_us must be positive")
        if self.bins < 1:
            raise InvalidParamError("bins must be >= 1")
        if self.recent_events < 1:
            raise InvalidParamError("recent_events must be >= 1")
        if self.sae_decay_per_us <= 0:
            raise InvalidParamError("sae_decay_per_us must be positive")
        if self.queue_depth < 1:
            raise InvalidParamError("queue_depth must be >= 1")
        support = self.kernel_support_us
        if support is not None and not 0 < support <= self.delta_tau_us:
            raise InvalidParamError("kernel_support_us must lie in (0, delta_tau_us]")

    @property
    def support_us(self) -> int:
        return self.delta_tau_us if self.kernel_support_us is None else self.kernel_support_us


def validate_stream(stream: EventStream) -> list[StreamViolation]:
    """Check every stream invariant; return one entry per violation.

    An empty report means the stream is valid. Violations carry the index of
    the offending event and a human-readable reason.
    """
    geo = stream.geometry
    out: list[StreamViolation] = []
    t, x, y, p = stream.t, stream.x, stream.y, stream.p
    if len(stream) == 0:
        return out

    for i in np.nonzero(np.diff(t) < 0)[0]:
        out.append(StreamViolation(int(i) + 1, "non-monotonic timestamp"))
    for i in np.nonzero(t < 0)[0]:
        out.append(StreamViolation(int(i), "negative timestamp"))
    for i in np.nonzero(t >= geo.t_max_us)[0]:
        out.append(StreamViolation(int(i), "timestamp at or past t_max"))
    for i in np.nonzero((x < 0) | (x >= geo.width))[0]:
        out.append(StreamViolation(int(i), "x out of bounds"))
    for i in np.nonzero((y < 0) | (y >= geo.height))[0]:
        out.append(StreamViolation(int(i), "y out of bounds"))
    for i in np.nonzero(p > 1)[0]:
        out.append(StreamViolation(int(i), "polarity not in {0, 1}"))

    out.sort(key=lambda v: v.index)
    return out


def require_valid_detection_time(stream: EventStream, t_n: int) -> None:
    """Raise GeometryMismatchError unless 0 < t_n <= t_max for this stream."""
    if not 0 < t_n <= stream.geometry.t_max_us:
        raise GeometryMismatchError(
            f"detection timestamp {t_n} outside (0, {stream.geometry.t_max_us}]"
        )
