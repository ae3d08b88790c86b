"""evrep: event-camera streams to detector-ready tensors, plus the metrics
to compare representations: augmentation, motion-level stratification, and
COCO-style mAP with timestamp-tolerance matching."""

from .augment import AugmentConfig, augment, flip_h, resize_crop
from .bench import BenchReport, bench_encoder
from .bfm import BfmWeights, FoldStage, bfm_forward, load_weights, random_weights, save_weights
from .encoders import event_count_image, event_volume, surface_active_events
from .evalmap import (
    EvalConfig,
    EvalResult,
    LevelEvalResult,
    average_precision,
    iou,
    map_by_level,
    map_metric,
    match_timestamps,
)
from .model import (
    Annotation,
    Detection,
    EncoderParams,
    Event,
    EventStream,
    FlowField,
    FrameGeometry,
    StreamViolation,
    TensorCHW,
    WindowView,
    validate_stream,
)
from .motion import (
    MotionLevels,
    SanitizeReport,
    bbofd,
    flow_intensity,
    motion_levels,
    sanitize_boxes,
    sanitize_report,
)
from .taf import (
    KernelSpec,
    TafState,
    taf_batch_oracle,
    taf_init,
    taf_render,
    taf_sequence,
    taf_step,
    transform_elapse,
)

__version__ = "0.1.0"
