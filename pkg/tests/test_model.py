import numpy as np
import pytest

from evrep.errors import InvalidParamError
from evrep.model import (
    Annotation,
    Detection,
    EncoderParams,
    EventStream,
    FrameGeometry,
    WindowView,
    validate_stream,
)

from conftest import make_random_stream


class TestValidateStream:
    def test_non_monotonic_reported_with_index(self, small_geometry):
        stream = EventStream.from_arrays(small_geometry, [5, 3], [0, 0], [0, 0], [0, 0])
        report = validate_stream(stream)
        assert any(v.index == 1 and "non-monotonic" in v.reason for v in report)

    def test_empty_stream_is_valid(self, small_geometry):
        stream = EventStream.from_arrays(small_geometry, [], [], [], [])
        assert validate_stream(stream) == []

    def test_random_generated_streams_are_valid(self, rng, small_geometry):
        stream = make_random_stream(rng, small_geometry, 10_000)
        assert validate_stream(stream) == []

    def test_out_of_bounds_coordinates(self, small_geometry):
        stream = EventStream.from_arrays(
            small_geometry, [1, 2], [small_geometry.width, 0], [0, small_geometry.height], [0, 0]
        )
        reasons = {v.reason for v in validate_stream(stream)}
        assert "x out of bounds" in reasons
        assert "y out of bounds" in reasons

    def test_timestamp_past_t_max(self, small_geometry):
        stream = EventStream.from_arrays(
            small_geometry, [small_geometry.t_max_us], [0], [0], [0]
        )
        assert any("t_max" in v.reason for v in validate_stream(stream))


def test_tensor_offset_map_is_bijective():
    c, h, w = 3, 4, 5
    offsets = {
        ci * h * w + yi * w + xi for ci in range(c) for yi in range(h) for xi in range(w)
    }
    assert len(offsets) == c * h * w
    assert min(offsets) == 0 and max(offsets) == c * h * w - 1
    # numpy C-order agrees with the offset formula
    a = np.arange(c * h * w).reshape(c, h, w)
    assert a[2, 3, 1] == 2 * h * w + 3 * w + 1


class TestInvariants:
    def test_geometry_must_be_positive(self):
        with pytest.raises(InvalidParamError):
            FrameGeometry(0, 10, 100)
        with pytest.raises(InvalidParamError):
            FrameGeometry(10, 10, 0)

    def test_annotation_needs_positive_size(self):
        with pytest.raises(InvalidParamError):
            Annotation(0, 1.0, 1.0, 0.0, 5.0, 0)

    def test_detection_score_domain(self):
        with pytest.raises(InvalidParamError):
            Detection(0, 1.0, 1.0, 5.0, 5.0, 0, 1.5)
        Detection(0, 1.0, 1.0, 5.0, 5.0, 0, 1.0)

    def test_encoder_params_domains(self):
        with pytest.raises(InvalidParamError):
            EncoderParams(delta_tau_us=0)
        with pytest.raises(InvalidParamError):
            EncoderParams(queue_depth=0)
        with pytest.raises(InvalidParamError):
            EncoderParams(kernel_support_us=20_000)  # exceeds delta_tau
        assert EncoderParams().support_us == 10_000

    def test_stream_arrays_are_read_only(self, rng, small_geometry):
        stream = make_random_stream(rng, small_geometry, 10)
        with pytest.raises(ValueError):
            stream.t[0] = 5


class TestWindowView:
    def test_from_stream_restricts_to_bounds(self, rng, small_geometry):
        stream = make_random_stream(rng, small_geometry, 500)
        window = WindowView.from_stream(stream, 100_000, 200_000, 200_000)
        assert np.all(window.t >= 100_000)
        assert np.all(window.t < 200_000)

    def test_window_cannot_end_after_detection(self, rng, small_geometry):
        stream = make_random_stream(rng, small_geometry, 10)
        with pytest.raises(InvalidParamError):
            WindowView.from_stream(stream, 0, 1000, 999)
