import math

import numpy as np
import pytest

from evrep.errors import InvalidParamError, WindowOutOfOrderError
from evrep.model import EventStream, FrameGeometry, WindowView
from evrep.taf import (
    KernelSpec,
    taf_batch_oracle,
    taf_init,
    taf_render,
    taf_sequence,
    taf_step,
    transform_elapse,
)

from conftest import make_random_stream

T_MAX = 60_000_000
DT = 10_000


def _run_incremental(stream, n_steps, queue_depth, dt=DT):
    state = taf_init(stream.geometry, queue_depth, dt)
    for n in range(n_steps):
        window = WindowView.from_stream(stream, n * dt, (n + 1) * dt, (n + 1) * dt)
        taf_step(state, window)
    return state


def _slot_elapses(state, p, y, x):
    """Newest-first elapse list for one cell."""
    count = int(state.count[p, y, x])
    t_now = state.detection_time_us
    return [t_now - state.mean_ts[p, y, x, i] for i in range(count)]


class TestTransform:
    def test_zero_elapse_maps_to_one(self):
        assert transform_elapse(0, T_MAX) == 1.0

    def test_t_max_elapse_maps_to_zero(self):
        assert abs(transform_elapse(T_MAX, T_MAX)) < 1e-12

    def test_known_value_one_period(self):
        assert math.isclose(transform_elapse(10_000, T_MAX), 0.9203249925358065, rel_tol=1e-9)

    def test_strictly_decreasing(self):
        grid = np.linspace(0, T_MAX, 10_000)
        vals = transform_elapse(grid, T_MAX)
        assert np.all(np.diff(vals) < 0)

    def test_domain_errors(self):
        with pytest.raises(InvalidParamError):
            transform_elapse(10, 0)
        with pytest.raises(InvalidParamError):
            transform_elapse(-1, T_MAX)

    def test_beyond_t_max_clamps_to_zero(self):
        assert transform_elapse(2 * T_MAX, T_MAX) == 0.0


class TestKernelSpec:
    def test_positive_on_support_zero_elsewhere(self):
        kernel = KernelSpec(support_us=10_000)
        assert kernel.weight(0) == 1.0
        assert kernel.weight(10_000) == 1.0
        assert kernel.weight(5_000) > 0.0
        assert kernel.weight(10_001) == 0.0
        assert kernel.weight(-1) == 0.0

    def test_domain_validation(self):
        with pytest.raises(InvalidParamError):
            KernelSpec(support_us=0)
        with pytest.raises(InvalidParamError):
            KernelSpec(support_us=100, shape="triangular")


class TestInitAndRender:
    def test_init_creates_empty_queues(self, sensor_geometry):
        state = taf_init(sensor_geometry, 4, DT)
        assert state.count.shape == (2, 240, 304)
        assert not state.count.any()
        assert state.step_index == 0

    def test_fresh_state_renders_zero(self, sensor_geometry):
        state = taf_init(sensor_geometry, 4, DT)
        tensor = taf_render(state, T_MAX)
        assert tensor.shape == (8, 240, 304)
        assert not tensor.any()

    def test_zero_queue_depth_rejected(self, sensor_geometry):
        with pytest.raises(InvalidParamError):
            taf_init(sensor_geometry, 0, DT)

    def test_channel_layout(self):
        # single entry with elapse 10^4 at p=1 lands in channel 1 (slot 0)
        geo = FrameGeometry(8, 8, T_MAX)
        stream = EventStream.from_arrays(geo, [0], [3], [5], [1])
        state = _run_incremental(stream, 2, queue_depth=4)
        # entry pushed at step 1; after step 2 its elapse is 2*DT - 0 = 20 000
        tensor = taf_render(state, T_MAX)
        assert tensor[1, 5, 3] > 0
        assert np.count_nonzero(tensor) == 1

    def test_rendered_value_matches_transform(self):
        geo = FrameGeometry(4, 4, T_MAX)
        stream = EventStream.from_arrays(geo, [0], [1], [1], [1])
        state = _run_incremental(stream, 1, queue_depth=4)
        tensor = taf_render(state, T_MAX)
        assert math.isclose(
            float(tensor[1, 1, 1]), transform_elapse(10_000, T_MAX), rel_tol=1e-6
        )

    def test_render_idempotent(self, rng, small_geometry):
        stream = make_random_stream(rng, small_geometry, 2000)
        state = _run_incremental(stream, 40, queue_depth=4)
        a = taf_render(state, T_MAX)
        b = taf_render(state, T_MAX)
        assert np.array_equal(a, b)


class TestStep:
    def test_mean_elapse_of_window_events(self):
        geo = FrameGeometry(4, 4, T_MAX)
        stream = EventStream.from_arrays(geo, [9_990, 9_995], [2, 2], [1, 1], [0, 0])
        state = _run_incremental(stream, 1, queue_depth=4)
        (elapse,) = _slot_elapses(state, 0, 1, 2)
        assert elapse == 7.5

    def test_aging_only_on_empty_window(self):
        geo = FrameGeometry(4, 4, T_MAX)
        stream = EventStream.from_arrays(geo, [9_996], [0], [0], [0])
        state = _run_incremental(stream, 1, queue_depth=4)
        assert _slot_elapses(state, 0, 0, 0) == [4.0]
        state = _run_incremental(stream, 2, queue_depth=4)
        assert _slot_elapses(state, 0, 0, 0) == [10_004.0]

    def test_three_step_trace_newest_first(self):
        # push elapse 4, age through an empty step, push elapse 3
        geo = FrameGeometry(4, 4, T_MAX)
        stream = EventStream.from_arrays(geo, [9_996, 29_997], [0, 0], [0, 0], [1, 1])
        state = _run_incremental(stream, 3, queue_depth=2)
        assert _slot_elapses(state, 1, 0, 0) == [3.0, 20_004.0]

    def test_eviction_at_depth(self):
        geo = FrameGeometry(2, 2, T_MAX)
        # one event per period at the same cell, four periods, K=2
        t = [5_000, 15_000, 25_000, 35_000]
        stream = EventStream.from_arrays(geo, t, [0] * 4, [0] * 4, [0] * 4)
        state = _run_incremental(stream, 4, queue_depth=2)
        assert state.count[0, 0, 0] == 2
        assert _slot_elapses(state, 0, 0, 0) == [5_000.0, 15_000.0]

    def test_window_out_of_order(self, small_geometry):
        state = taf_init(small_geometry, 4, DT)
        stream = EventStream.from_arrays(small_geometry, [], [], [], [])
        bad = WindowView.from_stream(stream, DT, 2 * DT, 2 * DT)  # state expects [0, DT)
        with pytest.raises(WindowOutOfOrderError):
            taf_step(state, bad)

    def test_window_lying_about_bounds_rejected(self, small_geometry):
        state = taf_init(small_geometry, 4, DT)
        lying = WindowView(
            t=np.array([3 * DT], dtype=np.int64),
            x=np.array([0], dtype=np.int32),
            y=np.array([0], dtype=np.int32),
            p=np.array([0], dtype=np.uint8),
            t_lo=0, t_hi=DT, t_n=DT,
        )
        with pytest.raises(WindowOutOfOrderError):
            taf_step(state, lying)

    def test_queue_monotonicity_after_random_steps(self, rng, small_geometry):
        stream = make_random_stream(rng, small_geometry, 5000)
        state = _run_incremental(stream, 50, queue_depth=4)
        filled = np.argwhere(state.count > 0)
        for p, y, x in filled[:200]:
            elapses = _slot_elapses(state, p, y, x)
            assert all(a < b for a, b in zip(elapses, elapses[1:]))
            assert all(e > 0 for e in elapses)

    def test_per_position_independence(self, rng):
        geo = FrameGeometry(8, 8, T_MAX)
        stream = make_random_stream(rng, geo, 400, t_hi=300_000)
        base = taf_render(_run_incremental(stream, 30, 4), T_MAX)

        # drop every event at one busy cell and re-encode
        cells, counts = np.unique(
            np.stack([stream.p, stream.y, stream.x]), axis=1, return_counts=True
        )
        p0, y0, x0 = cells[:, int(np.argmax(counts))]
        keep = ~((stream.p == p0) & (stream.y == y0) & (stream.x == x0))
        trimmed = EventStream.from_arrays(
            geo, stream.t[keep], stream.x[keep], stream.y[keep], stream.p[keep]
        )
        other = taf_render(_run_incremental(trimmed, 30, 4), T_MAX)

        diff = base != other
        changed = np.argwhere(diff)
        assert len(changed)
        for c, y, x in changed:
            assert (y, x) == (y0, x0)
            assert c % 2 == p0


class TestBatchOracle:
    def test_empty_stream(self, small_geometry):
        stream = EventStream.from_arrays(small_geometry, [], [], [], [])
        assert not taf_batch_oracle(stream, 10, DT, 4, T_MAX).any()

    def test_single_event_elapse(self):
        geo = FrameGeometry(4, 4, T_MAX)
        stream = EventStream.from_arrays(geo, [4], [1], [2], [0])
        tensor = taf_batch_oracle(stream, 1, DT, 4, T_MAX)
        assert np.count_nonzero(tensor) == 1
        assert math.isclose(
            float(tensor[0, 2, 1]), transform_elapse(9_996, T_MAX), rel_tol=1e-6
        )

    def test_matches_incremental_on_random_streams(self, rng, small_geometry):
        for _ in range(10):
            n_events = int(rng.integers(0, 3000))
            n_steps = int(rng.integers(1, 60))
            k = int(rng.choice([2, 4, 8]))
            stream = make_random_stream(rng, small_geometry, n_events)
            inc = taf_render(_run_incremental(stream, n_steps, k), T_MAX)
            oracle = taf_batch_oracle(stream, n_steps, DT, k, T_MAX)
            assert np.max(np.abs(inc - oracle)) <= 1e-6


def test_taf_sequence_yields_periodic_detections(rng, small_geometry):
    stream = make_random_stream(rng, small_geometry, 1000)
    out = list(taf_sequence(stream, 4, DT, 5))
    assert [t for t, _ in out] == [DT, 2 * DT, 3 * DT, 4 * DT, 5 * DT]
    assert all(tensor.shape == (8, small_geometry.height, small_geometry.width) for _, tensor in out)
