"""Motion-speed stratification of annotations via optical-flow density.

Pipeline: flow fields -> per-pixel intensity -> per-box mean intensity
(BBOFD) -> dataset-wide 20% quantile boundaries -> motion level 1 (slowest)
to 5 (fastest) per annotation. Boxes are sanitized first: clipped to the
frame, and any two boxes that still overlap at the same timestamp are both
dropped so an ambiguous flow region never contributes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateBoxError, EmptyInputError
from .model import Annotation, FlowField, FrameGeometry


def flow_intensity(flow: FlowField) -> np.ndarray:
    """Element-wise Euclidean norm of (u, v); float32 (H, W) plane."""
    return np.hypot(flow.u, flow.v)


def bbofd(intensity: np.ndarray, box: Annotation) -> float:
    """Mean flow intensity over the box's rasterized pixel region.

    The region is floor(w) x floor(h) pixels anchored at the truncated
    upper-left corner; for boxes already clipped to the frame that region
    lies fully inside the plane. Rasterizing to zero area raises.
    """
    plane_h, plane_w = intensity.shape
    x0 = int(box.x)
    y0 = int(box.y)
    w = int(box.w)
    h = int(box.h)
    xs, ys = max(x0, 0), max(y0, 0)
    xe, ye = min(x0 + w, plane_w), min(y0 + h, plane_h)
    if xe <= xs or ye <= ys:
        raise DegenerateBoxError(f"box at ({box.x}, {box.y}) size ({box.w}, {box.h})")
    region = intensity[ys:ye, xs:xe]
    return float(np.mean(region, dtype=np.float64))


@dataclass(frozen=True)
class SanitizeReport:
    """Outcome of sanitize: surviving boxes (clipped), their original indices,
    and the clipped boxes dropped for overlapping."""

    kept: tuple[Annotation, ...]
    kept_indices: tuple[int, ...]
    removed_overlapping: tuple[Annotation, ...]


def _boxes_overlap(a: Annotation, b: Annotation) -> bool:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    return iw > 0 and ih > 0


def sanitize_report(boxes: Sequence[Annotation], geometry: FrameGeometry) -> SanitizeReport:
    """Clip boxes to the frame, then drop both members of every same-timestamp
    pair whose clipped regions intersect with positive area."""
    clipped: list[tuple[int, Annotation]] = []
    for i, b in enumerate(boxes):
        x0 = max(b.x, 0.0)
        y0 = max(b.y, 0.0)
        x1 = min(b.x + b.w, float(geometry.width))
        y1 = min(b.y + b.h, float(geometry.height))
        if x1 - x0 <= 0 or y1 - y0 <= 0:
            continue
        clipped.append((i, Annotation(b.t, x0, y0, x1 - x0, y1 - y0, b.class_id)))

    by_time: dict[int, list[int]] = {}
    for pos, (_, b) in enumerate(clipped):
        by_time.setdefault(b.t, []).append(pos)

    drop = set()
    for positions in by_time.values():
        for a_i in range(len(positions)):
            for b_i in range(a_i + 1, len(positions)):
                pa, pb = positions[a_i], positions[b_i]
                if _boxes_overlap(clipped[pa][1], clipped[pb][1]):
                    drop.add(pa)
                    drop.add(pb)

    kept = tuple(b for pos, (_, b) in enumerate(clipped) if pos not in drop)
    kept_idx = tuple(i for pos, (i, _) in enumerate(clipped) if pos not in drop)
    removed = tuple(b for pos, (_, b) in enumerate(clipped) if pos in drop)
    return SanitizeReport(kept, kept_idx, removed)


def sanitize_boxes(boxes: Sequence[Annotation], geometry: FrameGeometry) -> list[Annotation]:
    """Clipped, overlap-filtered boxes in their original order."""
    return list(sanitize_report(boxes, geometry).kept)


@dataclass(frozen=True)
class MotionLevels:
    """Quantile boundaries plus the level (1..5) assigned to each input value."""

    boundaries: tuple[float, float, float, float]
    levels: tuple[int, ...]

    def level_of(self, value: float) -> int:
        """1 + number of boundaries strictly below the value (so 1..5)."""
        return 1 + sum(b < value for b in self.boundaries)


def motion_levels(bbofds: Sequence[float]) -> MotionLevels:
    """Stratify values at the 20/40/60/80% nearest-rank quantiles.

    The q-quantile is the ceil(q*n)-th order statistic; levels are monotone
    in the value, and a constant input lands entirely in level 1.
    """
    n = len(bbofds)
    if n == 0:
        raise EmptyInputError("need at least one value")
    ordered = sorted(float(v) for v in bbofds)
    # ceil(k*n/5) via integers; k/5 are the exact quantile fractions
    boundaries = tuple(ordered[(k * n + 4) // 5 - 1] for k in (1, 2, 3, 4))
    levels = MotionLevels(boundaries, ())
    return MotionLevels(boundaries, tuple(levels.level_of(float(v)) for v in bbofds))
