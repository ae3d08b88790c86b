"""Dense baseline representations of an event stream at a detection time.

Three encoders, all pure functions returning float32 (C, H, W) tensors:

* event_volume:          2B channels; events binned over [t_n - B*dt, t_n)
* event_count_image:     2 channels; per-pixel counts of the most recent N events
* surface_active_events: 2 channels; exp-decayed latest-event timestamps

Channel layout is polarity-separated everywhere: volume channel c = 2b + p
(bin 0 oldest), the two-channel encoders use channel index = polarity.
"""

from __future__ import annotations

import numpy as np

from .errors import GeometryMismatchError, InvalidParamError
from .model import EventStream, TensorCHW


def _check_detection_time(stream: EventStream, t_n: int) -> None:
    if not 0 <= t_n <= stream.geometry.t_max_us:
        raise GeometryMismatchError(
            f"detection timestamp {t_n} outside [0, {stream.geometry.t_max_us}]"
        )


def event_volume(
    stream: EventStream,
    t_n: int,
    delta_tau_us: int,
    bins: int,
    kernel: str = "rect",
) -> TensorCHW:
    """Accumulate events of the window [t_n - bins*delta_tau, t_n) into 2*bins channels.

    The rect kernel adds 1 to the bin containing each event, so total tensor
    mass equals the in-window event count. The triangular kernel splits each
    event linearly between the two nearest bin centers; mass falling outside
    the first/last bin center is clipped.
    """
    if delta_tau_us <= 0 or bins < 1:
        raise InvalidParamError("delta_tau_us must be positive and bins >= 1")
    if kernel not in ("rect", "triangular"):
        raise InvalidParamError(f"unknown kernel {kernel!r}")
    _check_detection_time(stream, t_n)

    geo = stream.geometry
    h, w = geo.height, geo.width
    t_lo = t_n - bins * delta_tau_us
    i, j = stream.slice_range(t_lo, t_n)
    t = stream.t[i:j]
    x = stream.x[i:j].astype(np.int64)
    y = stream.y[i:j].astype(np.int64)
    p = stream.p[i:j].astype(np.int64)

    out = np.zeros((2 * bins, h, w), dtype=np.float64)
    flat = out.reshape(-1)
    if len(t):
        if kernel == "rect":
            b = (t - t_lo) // delta_tau_us
            np.add.at(flat, ((2 * b + p) * h + y) * w + x, 1.0)
        else:
            # continuous bin coordinate, 0 at the first bin center
            u = (t - t_lo) / float(delta_tau_us) - 0.5
            left = np.floor(u).astype(np.int64)
            frac = u - left
            for b, mass in ((left, 1.0 - frac), (left + 1, frac)):
                ok = (b >= 0) & (b < bins)
                np.add.at(
                    flat,
                    ((2 * b[ok] + p[ok]) * h + y[ok]) * w + x[ok],
                    mass[ok],
                )
    return out.astype(np.float32)


def event_count_image(stream: EventStream, t_n: int, recent_events: int) -> TensorCHW:
    """Per-pixel, per-polarity counts of the last min(N, available) events before t_n."""
    if recent_events < 1:
        raise InvalidParamError("recent_events must be >= 1")
    _check_detection_time(stream, t_n)

    geo = stream.geometry
    h, w = geo.height, geo.width
    j = int(np.searchsorted(stream.t, t_n, side="left"))
    i = max(0, j - recent_events)
    x = stream.x[i:j].astype(np.int64)
    y = stream.y[i:j].astype(np.int64)
    p = stream.p[i:j].astype(np.int64)

    flat = (p * h + y) * w + x
    counts = np.bincount(flat, minlength=2 * h * w)
    return counts.reshape(2, h, w).astype(np.float32)


def surface_active_events(stream: EventStream, t_n: int, decay_per_us: float) -> TensorCHW:
    """Exponentially decayed snapshot of the latest event time per (x, y, p).

    Cells with at least one event before t_n hold exp(decay * (t_latest - t_n));
    cells without history hold 0, the limit of the decay as the latest event
    recedes to the infinite past. All values lie in [0, 1].
    """
    if decay_per_us <= 0:
        raise InvalidParamError("decay_per_us must be positive")
    _check_detection_time(stream, t_n)

    geo = stream.geometry
    h, w = geo.height, geo.width
    j = int(np.searchsorted(stream.t, t_n, side="left"))
    t = stream.t[:j]
    x = stream.x[:j].astype(np.int64)
    y = stream.y[:j].astype(np.int64)
    p = stream.p[:j].astype(np.int64)

    latest = np.full(2 * h * w, -1, dtype=np.int64)
    # unbuffered reduction: well-defined under repeated pixel indices
    np.maximum.at(latest, (p * h + y) * w + x, t)

    out = np.zeros(2 * h * w, dtype=np.float64)
    seen = latest >= 0
    out[seen] = np.exp(decay_per_us * (latest[seen] - float(t_n)))
    return out.reshape(2, h, w).astype(np.float32)
