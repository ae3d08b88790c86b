"""Command-line front end: encode | bench | levels | eval | augment.

Exit codes: 0 success, 1 usage error, 2 data error. Flags are the single
configuration surface; ``--config FILE`` may supply the same keys as a JSON
object (key = long flag name with underscores) and explicit flags override
it. All randomness is seeded via ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .augment import AugmentConfig, augment
from .bench import REPRESENTATIONS, bench_encoder
from .encoders import event_count_image, event_volume, surface_active_events
from .errors import EvrepError, MissingLevelError, ParseError
from .evalmap import EvalConfig, map_by_level, map_metric
from .io import (
    read_annotations_csv,
    read_detections_csv,
    read_events_binary,
    read_flow,
    read_tensor,
    write_tensor,
)
from .model import EncoderParams, EventStream, FrameGeometry
from .motion import bbofd, flow_intensity, motion_levels, sanitize_report
from .taf import taf_sequence

_DEFAULTS = {
    "delta_tau_us": 10_000,
    "bins": 5,
    "queue_depth": 4,
    "recent_events": 50_000,
    "sae_decay": 1e-5,
    "warmup": 10,
    "jobs": 1,
    "tolerance_us": 0,
    "p1": 0.5,
    "p2": 0.5,
    "alpha": 1.5,
    "seed": 0,
}


class _Parser(argparse.ArgumentParser):
    """argparse terminates usage errors with status 2; this tool reserves 2
    for data errors, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _resolve(args: argparse.Namespace, key: str):
    """Flag value if given, else config-file value, else the builtin default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    config = getattr(args, "_config", {})
    if key in config:
        return config[key]
    return _DEFAULTS.get(key)


def _load_config(args: argparse.Namespace) -> None:
    config = {}
    if getattr(args, "config", None):
        config = json.loads(Path(args.config).read_text())
        if not isinstance(config, dict):
            raise EvrepError("--config must hold a JSON object")
    args._config = config


def _load_stream(path: str) -> EventStream:
    return read_events_binary(Path(path).read_bytes())


def _encoder_params(args: argparse.Namespace) -> EncoderParams:
    return EncoderParams(
        delta_tau_us=int(_resolve(args, "delta_tau_us")),
        bins=int(_resolve(args, "bins")),
        recent_events=int(_resolve(args, "recent_events")),
        sae_decay_per_us=float(_resolve(args, "sae_decay")),
        queue_depth=int(_resolve(args, "queue_depth")),
    )


def _detection_times(stream: EventStream, delta_tau_us: int) -> list[int]:
    n = math.ceil(stream.geometry.t_max_us / delta_tau_us)
    return [(i + 1) * delta_tau_us for i in range(n)]


def _encode_one(path: str, args: argparse.Namespace, params: EncoderParams, out_dir: Path) -> int:
    stream = _load_stream(path)
    stem = Path(path).stem
    written = 0

    if args.rep == "taf":
        n_steps = math.ceil(stream.geometry.t_max_us / params.delta_tau_us)
        for t_n, tensor in taf_sequence(
            stream, params.queue_depth, params.delta_tau_us, n_steps
        ):
            write_tensor(tensor, out_dir / f"{stem}_{t_n}.evtn")
            written += 1
        return written

    if args.at_annotations:
        annotations = read_annotations_csv(Path(args.at_annotations).read_text())
        times = sorted({a.t for a in annotations})
    else:
        times = _detection_times(stream, params.delta_tau_us)
    for t_n in times:
        if args.rep == "volume":
            tensor = event_volume(stream, t_n, params.delta_tau_us, params.bins, kernel=args.kernel)
        elif args.rep == "count":
            tensor = event_count_image(stream, t_n, params.recent_events)
        else:
            tensor = surface_active_events(stream, t_n, params.sae_decay_per_us)
        write_tensor(tensor, out_dir / f"{stem}_{t_n}.evtn")
        written += 1
    return written


def _cmd_encode(args: argparse.Namespace) -> int:
    if args.rep == "taf" and args.at_annotations:
        raise _UsageError("taf is periodic; --at-annotations does not apply")
    stems = [Path(p).stem for p in args.events]
    if len(set(stems)) != len(stems):
        raise _UsageError("input files must have distinct stems (outputs would collide)")
    params = _encoder_params(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = int(_resolve(args, "jobs"))

    total = 0
    if jobs > 1 and len(args.events) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_encode_one, p, args, params, out_dir) for p in args.events]
            total = sum(f.result() for f in futures)
    else:
        for path in args.events:
            total += _encode_one(path, args, params, out_dir)
    print(f"wrote {total} tensor file(s) to {out_dir}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    params = _encoder_params(args)
    stream = _load_stream(args.events)
    at_times = None
    if args.at_annotations:
        annotations = read_annotations_csv(Path(args.at_annotations).read_text())
        at_times = sorted({a.t for a in annotations})
    report = bench_encoder(
        stream,
        args.rep,
        params,
        n_steps=args.steps,
        warmup=int(_resolve(args, "warmup")),
        at_times=at_times,
    )
    print(report.to_text())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return 0


def _format_value(v: float) -> str:
    return repr(float(v))


def _cmd_levels(args: argparse.Namespace) -> int:
    annotations = read_annotations_csv(Path(args.annotations).read_text())
    flows = {}
    for path in sorted(Path(args.flows).glob("*.flow")):
        flow = read_flow(path)
        flows[flow.t] = flow
    if not flows:
        raise EvrepError(f"no .flow files under {args.flows}")
    geometry_flow = next(iter(flows.values()))
    geometry = FrameGeometry(
        geometry_flow.width,
        geometry_flow.height,
        max(max((a.t for a in annotations), default=0), max(flows)) + 1,
    )
    report = sanitize_report(annotations, geometry)

    intensities: dict[int, object] = {}
    rows = []
    values = []
    for box, index in zip(report.kept, report.kept_indices):
        if box.t not in flows:
            raise EvrepError(f"no flow field at timestamp {box.t}")
        if box.t not in intensities:
            intensities[box.t] = flow_intensity(flows[box.t])
        value = bbofd(intensities[box.t], box)
        values.append(value)
        rows.append((box.t, index, value))

    if not values:
        raise EvrepError("no annotations survived sanitization")
    levels = motion_levels(values)

    out = Path(args.out)
    with out.open("w") as fh:
        fh.write("t,box_index,bbofd,level\n")
        for (t, index, value), level in zip(rows, levels.levels):
            fh.write(f"{t},{index},{_format_value(value)},{level}\n")

    boundaries_path = Path(args.boundaries) if args.boundaries else out.with_suffix(".boundaries.csv")
    with boundaries_path.open("w") as fh:
        fh.write("q20,q40,q60,q80\n")
        fh.write(",".join(_format_value(b) for b in levels.boundaries) + "\n")
    print(f"wrote {len(rows)} rows to {out} (boundaries: {boundaries_path})")
    return 0


def _read_levels_csv(path: str) -> dict[tuple[int, int], int]:
    mapping = {}
    lines = Path(path).read_text().splitlines()
    for no, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        try:
            t, index, _, level = line.split(",")
            mapping[(int(t), int(index))] = int(level)
        except ValueError:
            raise ParseError(no, f"bad levels row {line!r}") from None
    return mapping


def _cmd_eval(args: argparse.Namespace) -> int:
    detections = read_detections_csv(Path(args.detections).read_text())
    annotations = read_annotations_csv(Path(args.annotations).read_text())
    cfg = EvalConfig(timestamp_tolerance_us=int(_resolve(args, "tolerance_us")))

    lines: list[str] = []
    csv_rows: list[str] = ["section,key,value"]

    if args.levels:
        if args.width is None or args.height is None:
            raise _UsageError("--levels needs --width and --height for sanitization")
        t_hi = max((a.t for a in annotations), default=0) + 1
        geometry = FrameGeometry(args.width, args.height, t_hi)
        report = sanitize_report(annotations, geometry)
        level_map = _read_levels_csv(args.levels)
        try:
            levels = [level_map[(b.t, i)] for b, i in zip(report.kept, report.kept_indices)]
        except KeyError as missing:
            raise MissingLevelError(f"no level for annotation {missing}") from None
        result = map_by_level(
            detections, list(report.kept), levels, cfg, removed_boxes=report.removed_overlapping
        )
        overall = result.overall
        for lv in range(1, 6):
            v = result.per_level[lv]
            text = "n/a" if v is None else f"{v:.4f}"
            lines.append(f"level {lv} mAP: {text}")
            csv_rows.append(f"level,{lv},{'' if v is None else _format_value(v)}")
    else:
        overall = map_metric(detections, annotations, cfg)

    lines.insert(0, f"overall mAP: {overall.overall_map:.4f}")
    csv_rows.insert(1, f"overall,,{_format_value(overall.overall_map)}")
    for class_id, value in sorted(overall.per_class.items()):
        lines.append(f"class {class_id} AP: {value:.4f}")
        csv_rows.append(f"class,{class_id},{_format_value(value)}")
    for thr, value in overall.per_threshold.items():
        lines.append(f"IoU {thr:.2f} AP: {value:.4f}")
        csv_rows.append(f"threshold,{thr},{_format_value(value)}")
    if overall.warning:
        lines.append(f"warning: {overall.warning}")
        csv_rows.append(f"warning,,{overall.warning}")

    print("\n".join(lines))
    if args.csv:
        Path(args.csv).write_text("\n".join(csv_rows) + "\n")
    return 0


def _cmd_augment(args: argparse.Namespace) -> int:
    tensor = read_tensor(args.input)
    cfg = AugmentConfig(
        flip_prob=float(_resolve(args, "p1")),
        crop_prob=float(_resolve(args, "p2")),
        scale=float(_resolve(args, "alpha")),
        seed=int(_resolve(args, "seed")),
    )
    write_tensor(augment(tensor, cfg), args.output)
    print(f"wrote {args.output}")
    return 0


class _UsageError(Exception):
    pass


def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rep", required=True, choices=REPRESENTATIONS, help="representation to build")
    p.add_argument("--delta-tau-us", type=int, dest="delta_tau_us", help="sampling period in µs")
    p.add_argument("--bins", "--b", type=int, dest="bins", help="temporal bins for --rep volume")
    p.add_argument("--queue-depth", "--k", type=int, dest="queue_depth",
                   help="FIFO depth for --rep taf")
    p.add_argument("--recent-events", "--n", type=int, dest="recent_events",
                   help="event count for --rep count")
    p.add_argument("--sae-decay", type=float, dest="sae_decay", help="decay per µs for --rep sae")
    p.add_argument("--kernel", choices=("rect", "triangular"), default="rect",
                   help="volume accumulation kernel")
    p.add_argument("--at-annotations", dest="at_annotations",
                   help="encode at the timestamps of this annotation CSV")
    p.add_argument("--config", help="JSON file supplying flag defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evrep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", parents=[], help="write one tensor file per detection")
    _add_encoder_flags(p)
    p.add_argument("--events", nargs="+", required=True, help="binary event stream file(s)")
    p.add_argument("--out-dir", required=True, dest="out_dir", help="output directory")
    p.add_argument("--jobs", type=int, help="worker threads for multiple inputs")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("bench", help="time a representation, no tensor output")
    _add_encoder_flags(p)
    p.add_argument("--events", required=True, help="binary event stream file")
    p.add_argument("--steps", type=int, help="detection steps (default: full stream)")
    p.add_argument("--warmup", type=int, help="warm-up steps excluded from stats")
    p.add_argument("--csv", help="write per-step samples to this CSV")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("levels", help="BBOFD and motion level per annotation")
    p.add_argument("--flows", required=True, help="directory of .flow files")
    p.add_argument("--annotations", required=True, help="annotation CSV")
    p.add_argument("--out", required=True, help="output CSV (t,box_index,bbofd,level)")
    p.add_argument("--boundaries", help="boundary sidecar CSV path")
    p.add_argument("--config", help="JSON file supplying flag defaults")
    p.set_defaults(func=_cmd_levels)

    p = sub.add_parser("eval", help="mAP over IoU 0.50:0.05:0.95")
    p.add_argument("--detections", required=True, help="detection CSV")
    p.add_argument("--annotations", required=True, help="annotation CSV")
    p.add_argument("--levels", help="levels CSV from the levels command")
    p.add_argument("--tolerance-us", type=int, dest="tolerance_us",
                   help="timestamp matching tolerance in µs")
    p.add_argument("--width", type=int, help="frame width (needed with --levels)")
    p.add_argument("--height", type=int, help="frame height (needed with --levels)")
    p.add_argument("--csv", help="write the result table to this CSV")
    p.add_argument("--config", help="JSON file supplying flag defaults")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("augment", help="flip/crop one tensor file")
    p.add_argument("--input", required=True, help="input .evtn tensor")
    p.add_argument("--output", required=True, help="output .evtn tensor")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--p1", type=float, help="flip probability")
    p.add_argument("--p2", type=float, help="crop probability")
    p.add_argument("--alpha", type=float, help="resize factor >= 1")
    p.add_argument("--config", help="JSON file supplying flag defaults")
    p.set_defaults(func=_cmd_augment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _load_config(args)
        return args.func(args)
    except _UsageError as exc:
        print(f"evrep: error: {exc}", file=sys.stderr)
        return 1
    except (EvrepError, OSError, json.JSONDecodeError) as exc:
        print(f"evrep: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
