import math

import numpy as np
import pytest

from evrep.errors import DegenerateBoxError, EmptyInputError
from evrep.model import Annotation, FlowField, FrameGeometry
from evrep.motion import (
    bbofd,
    flow_intensity,
    motion_levels,
    sanitize_boxes,
    sanitize_report,
)

GEO = FrameGeometry(100, 80, 1_000_000)


def _field(u, v, t=0):
    return FlowField.from_planes(t, u, v)


class TestFlowIntensity:
    def test_three_four_five(self):
        f = _field(np.full((4, 5), 3.0), np.full((4, 5), 4.0))
        assert np.allclose(flow_intensity(f), 5.0)

    def test_zero_field(self):
        f = _field(np.zeros((3, 3)), np.zeros((3, 3)))
        assert not flow_intensity(f).any()

    def test_matches_scalar_oracle(self, rng):
        u = rng.normal(size=(6, 7)).astype(np.float32)
        v = rng.normal(size=(6, 7)).astype(np.float32)
        plane = flow_intensity(_field(u, v))
        for y in range(6):
            for x in range(7):
                want = math.hypot(float(u[y, x]), float(v[y, x]))
                assert math.isclose(float(plane[y, x]), want, rel_tol=1e-6)


class TestBbofd:
    def test_constant_plane(self):
        plane = np.full((20, 20), 5.0, dtype=np.float32)
        assert bbofd(plane, Annotation(0, 2.0, 3.0, 7.5, 4.2, 0)) == 5.0

    def test_two_pixel_mean(self):
        plane = np.zeros((4, 4), dtype=np.float32)
        plane[1, 1] = 2.0
        plane[1, 2] = 4.0
        assert bbofd(plane, Annotation(0, 1.0, 1.0, 2.0, 1.0, 0)) == 3.0

    def test_translation_invariance(self, rng):
        plane = rng.random((30, 30)).astype(np.float32)
        box = Annotation(0, 4.0, 6.0, 5.0, 3.0, 0)
        shifted_plane = np.roll(np.roll(plane, 2, axis=0), 3, axis=1)
        shifted_box = Annotation(0, box.x + 3, box.y + 2, box.w, box.h, 0)
        assert math.isclose(bbofd(plane, box), bbofd(shifted_plane, shifted_box), rel_tol=1e-12)

    def test_outside_values_irrelevant(self, rng):
        plane = rng.random((10, 10)).astype(np.float32)
        box = Annotation(0, 2.0, 2.0, 3.0, 3.0, 0)
        base = bbofd(plane, box)
        noisy = plane.copy()
        noisy[0, :] = 99.0
        noisy[:, 9] = -7.0
        assert bbofd(noisy, box) == base

    def test_degenerate_box(self):
        plane = np.ones((10, 10), dtype=np.float32)
        with pytest.raises(DegenerateBoxError):
            bbofd(plane, Annotation(0, 1.0, 1.0, 0.5, 5.0, 0))  # floor(w) = 0

    def test_truncation_toward_zero(self):
        plane = np.zeros((4, 4), dtype=np.float32)
        plane[2, 2] = 8.0
        # corner (2.9, 2.9) truncates to pixel (2, 2)
        assert bbofd(plane, Annotation(0, 2.9, 2.9, 1.0, 1.0, 0)) == 8.0


class TestSanitize:
    def test_disjoint_boxes_kept(self):
        boxes = [
            Annotation(0, 0.0, 0.0, 10.0, 10.0, 0),
            Annotation(0, 50.0, 50.0, 10.0, 10.0, 1),
        ]
        assert sanitize_boxes(boxes, GEO) == boxes

    def test_identical_boxes_both_removed(self):
        boxes = [
            Annotation(0, 5.0, 5.0, 10.0, 10.0, 0),
            Annotation(0, 5.0, 5.0, 10.0, 10.0, 1),
        ]
        assert sanitize_boxes(boxes, GEO) == []

    def test_overlap_requires_same_timestamp(self):
        boxes = [
            Annotation(0, 5.0, 5.0, 10.0, 10.0, 0),
            Annotation(1000, 5.0, 5.0, 10.0, 10.0, 1),
        ]
        assert sanitize_boxes(boxes, GEO) == boxes

    def test_edge_touching_is_not_overlap(self):
        boxes = [
            Annotation(0, 0.0, 0.0, 10.0, 10.0, 0),
            Annotation(0, 10.0, 0.0, 10.0, 10.0, 1),
        ]
        assert sanitize_boxes(boxes, GEO) == boxes

    def test_clip_to_right_edge(self):
        boxes = [Annotation(0, 95.0, 10.0, 20.0, 5.0, 0)]
        (kept,) = sanitize_boxes(boxes, GEO)
        assert kept.x == 95.0
        assert kept.w == GEO.width - 95.0

    def test_fully_outside_dropped(self):
        boxes = [Annotation(0, 200.0, 10.0, 5.0, 5.0, 0)]
        assert sanitize_boxes(boxes, GEO) == []

    def test_idempotent(self, rng):
        boxes = [
            Annotation(
                int(rng.integers(0, 3)) * 1000,
                float(rng.uniform(-10, 95)),
                float(rng.uniform(-10, 75)),
                float(rng.uniform(1, 30)),
                float(rng.uniform(1, 30)),
                int(rng.integers(0, 3)),
            )
            for _ in range(40)
        ]
        once = sanitize_boxes(boxes, GEO)
        assert sanitize_boxes(once, GEO) == once

    def test_report_tracks_indices_and_removals(self):
        boxes = [
            Annotation(0, 0.0, 0.0, 10.0, 10.0, 0),
            Annotation(0, 5.0, 5.0, 10.0, 10.0, 1),   # overlaps 0
            Annotation(0, 50.0, 50.0, 10.0, 10.0, 2),
        ]
        report = sanitize_report(boxes, GEO)
        assert report.kept_indices == (2,)
        assert len(report.removed_overlapping) == 2


class TestMotionLevels:
    def test_decile_boundaries(self):
        levels = motion_levels([10, 20, 30, 40, 50, 60, 70, 80, 90, 100])
        assert levels.boundaries == (20, 40, 60, 80)

    def test_constant_values_all_level_one(self):
        levels = motion_levels([7.0] * 25)
        assert set(levels.levels) == {1}

    def test_uniform_values_split_evenly(self, rng):
        values = rng.random(1000)
        levels = motion_levels(values)
        counts = np.bincount(levels.levels, minlength=6)[1:]
        assert all(190 <= c <= 210 for c in counts)

    def test_assignment_monotone(self, rng):
        values = rng.random(500)
        levels = motion_levels(values)
        order = np.argsort(values)
        ranked = np.asarray(levels.levels)[order]
        assert np.all(np.diff(ranked) >= 0)

    def test_level_of_matches_assignment(self, rng):
        values = list(rng.random(100))
        levels = motion_levels(values)
        assert tuple(levels.level_of(v) for v in values) == levels.levels

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            motion_levels([])
