"""Temporal Active Focus: an incrementally updated, per-position FIFO encoding.

Each (x, y, polarity) cell keeps a FIFO of up to K entries, one per recent
period in which the cell fired. An entry summarizes one period's events by
their mean elapse to the detection time; entries age as detections advance
and are evicted when K newer periods have fired.

The trick that makes stepping cheap: instead of storing elapses (which
would need a +delta_tau rewrite of every entry per step), each entry stores
the mean event *timestamp* of its period. The elapse of an entry at
detection time t is then just t - stored_mean, so aging is implicit and one
step touches only the cells that fired in the step's window.

Rendering maps elapses through a logarithmic transform onto [0, 1]
(1 = just now, 0 = t_max or older) and lays slots out as channel
c = 2*slot + polarity, slot 0 newest. Empty slots render as 0, i.e.
"infinitely old" (the transform's far limit), not its value at elapse 0.

taf_batch_oracle recomputes the same tensor non-incrementally from the full
stream; it exists as an independent cross-check for the incremental path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import InvalidParamError, WindowOutOfOrderError
from .model import EventStream, FrameGeometry, TensorCHW, WindowView


def transform_elapse(delta_t_us, t_max_us: int):
    """Map a non-negative elapse (µs) into [0, 1], newest -> 1, t_max -> 0.

    value = clamp(1 - ln(1 + dt*1e-4) / ln(1 + t_max*1e-4), 0, 1)

    Strictly decreasing on [0, t_max]; elapses beyond t_max clamp to 0.
    Accepts scalars or arrays.
    """
    if t_max_us <= 0:
        raise InvalidParamError("t_max_us must be positive")
    dt = np.asarray(delta_t_us, dtype=np.float64)
    if np.any(dt < 0):
        raise InvalidParamError("elapse must be non-negative")
    val = 1.0 - np.log1p(dt * 1e-4) / np.log1p(t_max_us * 1e-4)
    out = np.clip(val, 0.0, 1.0)
    return float(out) if np.isscalar(delta_t_us) else out


@dataclass(frozen=True)
class KernelSpec:
    """The sampling kernel: rectangular, positive on [0, support_us], zero
    elsewhere. The incremental encoder fixes the support to one period so a
    step's window is exactly one kernel application per cell."""

    support_us: int
    shape: str = "rect"

    def __post_init__(self):
        if self.support_us <= 0:
            raise InvalidParamError("kernel support must be positive")
        if self.shape != "rect":
            raise InvalidParamError(f"unsupported kernel shape {self.shape!r}")

    def weight(self, dt_us) -> np.ndarray | float:
        """Kernel value at elapse dt_us (scalar or array)."""
        dt = np.asarray(dt_us)
        out = np.where((dt >= 0) & (dt <= self.support_us), 1.0, 0.0)
        return float(out) if np.isscalar(dt_us) else out


@dataclass
class TafState:
    """Mutable per-position FIFO state; one writer, strictly sequential steps.

    mean_ts[p, y, x, slot] holds the mean event timestamp of one stored
    period, slot 0 newest; ``count`` says how many slots are filled. A push
    shifts a cell's slots toward the back (the eldest falls off), so only
    cells that fired in a step are ever touched.
    """

    geometry: FrameGeometry
    queue_depth: int
    delta_tau_us: int
    step_index: int
    mean_ts: np.ndarray
    count: np.ndarray

    @property
    def detection_time_us(self) -> int:
        return self.step_index * self.delta_tau_us


def taf_init(geometry: FrameGeometry, queue_depth: int, delta_tau_us: int) -> TafState:
    """Fresh state with every queue empty and the step counter at zero."""
    if queue_depth < 1:
        raise InvalidParamError("queue_depth must be >= 1")
    if delta_tau_us <= 0:
        raise InvalidParamError("delta_tau_us must be positive")
    h, w = geometry.height, geometry.width
    return TafState(
        geometry=geometry,
        queue_depth=queue_depth,
        delta_tau_us=delta_tau_us,
        step_index=0,
        mean_ts=np.zeros((2, h, w, queue_depth), dtype=np.float64),
        count=np.zeros((2, h, w), dtype=np.int32),
    )


def _window_mean_timestamps(window: WindowView, h: int, w: int):
    """Flat cell index and mean timestamp for every cell that fired."""
    n = len(window)
    x = window.x.astype(np.int64)
    y = window.y.astype(np.int64)
    p = window.p.astype(np.int64)
    flat = (p * h + y) * w + x
    t = window.t.astype(np.float64)

    n_cells = 2 * h * w
    if 8 * n < n_cells:
        # sparse window: group by sorting, cost independent of the frame size
        order = np.argsort(flat, kind="stable")
        sf = flat[order]
        st = t[order]
        starts = np.r_[0, np.nonzero(np.diff(sf))[0] + 1]
        sums = np.add.reduceat(st, starts)
        counts = np.diff(np.r_[starts, n])
        return sf[starts], sums / counts

    sums = np.bincount(flat, weights=t, minlength=n_cells)
    counts = np.bincount(flat, minlength=n_cells)
    active = np.nonzero(counts)[0]
    return active, sums[active] / counts[active]


def taf_step(state: TafState, window: WindowView) -> TafState:
    """Advance the state by one period using the window's events.

    The window must cover exactly [n*dt, (n+1)*dt) for the state's next step
    n and end at its detection timestamp. Cells that fired get the period's
    mean elapse pushed as their newest entry (evicting the oldest when
    full); all other cells only age, which costs nothing here. Returns the
    same state object, updated in place.
    """
    dt = state.delta_tau_us
    t_lo = state.step_index * dt
    t_hi = t_lo + dt
    if window.t_lo != t_lo or window.t_hi != t_hi or window.t_n != t_hi:
        raise WindowOutOfOrderError(
            f"expected window [{t_lo}, {t_hi}) at detection {t_hi}, "
            f"got [{window.t_lo}, {window.t_hi}) at {window.t_n}"
        )
    if len(window) and (int(window.t[0]) < t_lo or int(window.t[-1]) >= t_hi):
        raise WindowOutOfOrderError("window holds events outside its bounds")

    geo = state.geometry
    if len(window):
        active, mu = _window_mean_timestamps(window, geo.height, geo.width)
        k = state.queue_depth
        count = state.count.reshape(-1)
        mean_ts = state.mean_ts.reshape(-1, k)
        if k > 1:
            block = mean_ts[active]
            block[:, 1:] = block[:, :-1]
            block[:, 0] = mu
            mean_ts[active] = block
        else:
            mean_ts[active, 0] = mu
        count[active] = np.minimum(count[active] + 1, k)

    state.step_index += 1
    return state


def taf_render(state: TafState, t_max_us: int) -> TensorCHW:
    """Render the state into a float32 (2K, H, W) tensor.

    Channel c holds polarity c % 2 at slot c // 2 (slot 0 newest). Filled
    slots hold transform_elapse of their entry's elapse; empty slots hold 0.
    """
    if t_max_us <= 0:
        raise InvalidParamError("t_max_us must be positive")
    k = state.queue_depth
    t_now = float(state.detection_time_us)
    valid = np.arange(k, dtype=np.int32) < state.count[..., None]
    # elapses stay float64 (timestamps need it); once scaled by 1e-4 the
    # argument is small enough that float32 log1p costs < 1e-7 of accuracy
    scaled = ((t_now - state.mean_ts) * 1e-4).astype(np.float32)
    np.clip(scaled, 0.0, None, out=scaled)
    np.log1p(scaled, out=scaled)
    rendered = 1.0 - scaled / np.float32(np.log1p(t_max_us * 1e-4))
    np.clip(rendered, 0.0, 1.0, out=rendered)
    rendered[~valid] = 0.0
    # (2, H, W, K) -> (K, 2, H, W) -> (2K, H, W): channel 2*slot + polarity
    h, w = state.geometry.height, state.geometry.width
    return np.ascontiguousarray(rendered.transpose(3, 0, 1, 2)).reshape(2 * k, h, w)


def taf_sequence(
    stream: EventStream,
    queue_depth: int,
    delta_tau_us: int,
    n_steps: int,
    t_max_us: int | None = None,
) -> Iterator[tuple[int, TensorCHW]]:
    """Run the incremental encoder over a stream, yielding (t_n, tensor) per step."""
    t_max = stream.geometry.t_max_us if t_max_us is None else t_max_us
    state = taf_init(stream.geometry, queue_depth, delta_tau_us)
    for n in range(n_steps):
        window = WindowView.from_stream(
            stream, n * delta_tau_us, (n + 1) * delta_tau_us, (n + 1) * delta_tau_us
        )
        taf_step(state, window)
        yield state.detection_time_us, taf_render(state, t_max)


def taf_batch_oracle(
    stream: EventStream,
    n_steps: int,
    delta_tau_us: int,
    queue_depth: int,
    t_max_us: int,
) -> TensorCHW:
    """Recompute the step-n tensor directly from the stream, no incremental state.

    For every (x, y, p): split [0, n*dt) into dt-aligned periods, keep the K
    most recent non-empty ones, store each period's mean elapse to n*dt, and
    render exactly like taf_render. Deliberately simple and independent of
    the incremental code path.
    """
    if queue_depth < 1 or delta_tau_us <= 0 or n_steps < 0:
        raise InvalidParamError("need queue_depth >= 1, delta_tau_us > 0, n_steps >= 0")

    geo = stream.geometry
    h, w = geo.height, geo.width
    t_end = n_steps * delta_tau_us
    j = int(np.searchsorted(stream.t, t_end, side="left"))

    per_cell: dict[tuple[int, int, int], dict[int, list[float]]] = {}
    ts = stream.t[:j].tolist()
    xs = stream.x[:j].tolist()
    ys = stream.y[:j].tolist()
    ps = stream.p[:j].tolist()
    for t, x, y, p in zip(ts, xs, ys, ps):
        period = t // delta_tau_us
        cell = per_cell.setdefault((p, y, x), {})
        acc = cell.setdefault(period, [0.0, 0])
        acc[0] += t
        acc[1] += 1

    out = np.zeros((2 * queue_depth, h, w), dtype=np.float32)
    for (p, y, x), periods in per_cell.items():
        recent = sorted(periods)[-queue_depth:]
        for slot, period in enumerate(reversed(recent)):
            total, n = periods[period]
            elapse = t_end - total / n
            out[2 * slot + p, y, x] = transform_elapse(elapse, t_max_us)
    return out
