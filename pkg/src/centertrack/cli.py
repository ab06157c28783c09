"""Command-line pipeline driver.

    centertrack {simulate|encode|decode|refine|track|eval|losses-check}
        --config <path> [--set key=value]...

One JSON config document is shared by all subcommands; scalar fields can
be overridden with --set. Exit codes: 0 ok, 1 config error, 2 I/O error,
3 parse error in an input file, 4 frame sequencing error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .decode import decode_detections, detections_frame_from_obj, detections_frame_to_obj, select_top
from .grid import FeatureMap, FeatureMapFormatError, load_feature_map, save_feature_map
from .io import JsonlParseError, SequencingError, align_frames, read_frames, write_jsonl
from .losses import focal_loss, l1_regression_loss, score_bce
from .metrics import clear_mot, evaluate_detections
from .refine import OracleIouScorer, RandomProjectionScorer, refine_detections, refined_frame_to_obj
from .sim import OccupancyEncoder, generate_scenario, perturb_detections, sample_points_and_encode
from .targets import TargetMaps, gt_frame_from_obj, gt_frame_to_obj, render_targets
from .tracker import Tracker, active_tracks, tracks_frame_from_obj, tracks_frame_to_obj

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_PARSE = 3
EXIT_SEQUENCING = 4

# Channel layout of encoded target-map files, in stacking order after the
# heatmap block.
_REGRESSION_LAYOUT = [["offset", 2], ["height", 1], ["log_size", 3], ["rot", 2], ["vel", 2]]


def _frame_path(directory: Path, frame_index: int) -> Path:
    return directory / f"frame_{frame_index:06d}.fm"


def cmd_simulate(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt_frames = generate_scenario(cfg.scenario)
    det_frames = perturb_detections(
        gt_frames, cfg.scenario.noise, cfg.grid, cfg.num_classes, cfg.noise_seed
    )

    write_jsonl(out_dir / "gt.jsonl", (gt_frame_to_obj(i, objs) for i, objs in enumerate(gt_frames)))
    write_jsonl(
        out_dir / "detections.jsonl",
        (detections_frame_to_obj(i, dets) for i, dets in enumerate(det_frames)),
    )

    if args.features:
        feat_dir = out_dir / "features"
        feat_dir.mkdir(exist_ok=True)
        encoder = OccupancyEncoder(cfg.grid)
        for i, objs in enumerate(gt_frames):
            rng = np.random.default_rng((cfg.feature_seed, i))
            fmap = encoder.encode(objs, cfg.points_per_object, rng, cfg.clutter_points)
            save_feature_map(_frame_path(feat_dir, i), fmap, extra={"frame_index": i})

    total_objects = sum(len(objs) for objs in gt_frames)
    print(
        f"simulate: {len(gt_frames)} frames, {total_objects} object instances, "
        f"seed {cfg.scenario.seed} -> {out_dir}"
    )
    return EXIT_OK


def cmd_encode(cfg: RunConfig, args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt_frames = read_frames(args.gt, gt_frame_from_obj)
    for frame_index, objects in gt_frames:
        maps = render_targets(objects, cfg.grid, cfg.num_classes, cfg.min_overlap)
        stacked = np.concatenate([maps.heatmap, maps.regression_stack()], axis=2)
        fmap = FeatureMap(cfg.grid, stacked)
        save_feature_map(
            _frame_path(out_dir, frame_index),
            fmap,
            extra={
                "frame_index": frame_index,
                "num_classes": cfg.num_classes,
                "channel_layout": _REGRESSION_LAYOUT,
            },
        )
    print(f"encode: wrote {len(gt_frames)} target map(s) -> {out_dir}")
    return EXIT_OK


def _split_target_maps(values: np.ndarray, num_classes: int) -> TargetMaps:
    heatmap = values[:, :, :num_classes]
    cursor = num_classes
    channels = {}
    for name, width in _REGRESSION_LAYOUT:
        channels[name] = values[:, :, cursor : cursor + width]
        cursor += width
    return TargetMaps(
        offset=channels["offset"],
        height=channels["height"],
        log_size=channels["log_size"],
        rot=channels["rot"],
        vel=channels["vel"],
        valid_mask=np.zeros(values.shape[:2], dtype=bool),
        heatmap=heatmap,
    )


def cmd_decode(cfg: RunConfig, args) -> int:
    in_dir = Path(args.input)
    paths = sorted(in_dir.glob("frame_*.fm"))
    if not paths:
        print(f"error: no frame_*.fm files in {in_dir}", file=sys.stderr)
        return EXIT_IO
    lines = []
    for path in paths:
        fmap, header = load_feature_map(path)
        frame_index = int(header.get("frame_index", len(lines)))
        num_classes = int(header.get("num_classes", cfg.num_classes))
        maps = _split_target_maps(fmap.values, num_classes)
        dets = decode_detections(maps, cfg.grid, cfg.max_peaks, cfg.score_floor)
        dets = select_top(dets, cfg.nms_iou, cfg.top_k)
        lines.append(detections_frame_to_obj(frame_index, dets))
    write_jsonl(args.out, lines)
    print(f"decode: wrote {len(lines)} frame(s) -> {args.out}")
    return EXIT_OK


def cmd_refine(cfg: RunConfig, args) -> int:
    det_frames = read_frames(args.input, detections_frame_from_obj)
    feat_dir = Path(args.features)

    gt_by_index = None
    if cfg.refine_scorer == "oracle":
        if not args.gt:
            raise ConfigError("refine.scorer is 'oracle'; pass --gt with the ground-truth file")
        gt_frames = read_frames(args.gt, gt_frame_from_obj)
        align_frames([(str(args.gt), gt_frames), (str(args.input), det_frames)])
        gt_by_index = {idx: objs for idx, objs in gt_frames}

    lines = []
    for frame_index, dets in det_frames:
        path = _frame_path(feat_dir, frame_index)
        if not path.exists():
            raise SequencingError(f"missing feature map for frame {frame_index}: {path}")
        fmap, _ = load_feature_map(path)
        if cfg.refine_scorer == "oracle":
            scorer = OracleIouScorer([o.box for o in gt_by_index[frame_index]])
        else:
            scorer = RandomProjectionScorer(
                num_features=5 * fmap.channels,
                seed=cfg.refine_seed,
                refinement_scale=cfg.refinement_scale,
            )
        refined = refine_detections(dets, fmap, scorer)
        lines.append(refined_frame_to_obj(frame_index, refined))
    write_jsonl(args.out, lines)
    print(f"refine: wrote {len(lines)} frame(s) -> {args.out}")
    return EXIT_OK


def cmd_track(cfg: RunConfig, args) -> int:
    det_frames = read_frames(args.input, lambda obj: detections_frame_from_obj(obj, prefer_fused=True))
    tracker = Tracker(cfg.tracker_config())
    lines = []
    latencies = []
    for frame_index, dets in det_frames:
        start = time.perf_counter()
        tracks = tracker.step(dets)
        latencies.append((time.perf_counter() - start) * 1000.0)
        lines.append(tracks_frame_to_obj(frame_index, tracks))
    write_jsonl(args.out, lines)
    if latencies:
        p50, p99 = np.percentile(latencies, [50, 99])
        print(
            json.dumps(
                {"frames": len(latencies), "latency_ms": {"p50": round(float(p50), 4), "p99": round(float(p99), 4)}}
            )
        )
    else:
        print(json.dumps({"frames": 0, "latency_ms": {"p50": None, "p99": None}}))
    return EXIT_OK


def _mot_result_to_obj(res) -> dict:
    return {
        "mota": res.mota,
        "motp": res.motp,
        "fp": res.fp,
        "fn": res.fn,
        "ids": res.ids,
        "num_gt": res.num_gt,
    }


def cmd_eval(cfg: RunConfig, args) -> int:
    if not args.dets and not args.tracks:
        raise ConfigError("eval needs --dets and/or --tracks")
    gt_frames = read_frames(args.gt, gt_frame_from_obj)
    report: dict = {"map": None, "per_class": {}, "mota": None, "motp": None, "fp": None, "fn": None, "ids": None}

    if args.dets:
        det_frames = read_frames(args.dets, lambda obj: detections_frame_from_obj(obj, prefer_fused=True))
        align_frames([(str(args.gt), gt_frames), (str(args.dets), det_frames)])
        det_result = evaluate_detections(
            [dets for _, dets in det_frames],
            [objs for _, objs in gt_frames],
            cfg.num_classes,
            cfg.metric_thresholds,
        )
        report["map"] = det_result.mean_ap
        for (class_id, thr), ap in sorted(det_result.ap.items()):
            report["per_class"].setdefault(cfg.classes[class_id].name, {})[f"ap@{thr:g}m"] = ap
        if args.pr_csv:
            pr_dir = Path(args.pr_csv)
            pr_dir.mkdir(parents=True, exist_ok=True)
            for (class_id, thr), curve in det_result.pr_curves.items():
                path = pr_dir / f"pr_{cfg.classes[class_id].name}_{thr:g}m.csv"
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write("score,recall,precision\n")
                    for s, r, p in zip(curve.scores, curve.recalls, curve.precisions):
                        fh.write(f"{s!r},{r!r},{p!r}\n")

    if args.tracks:
        track_frames = read_frames(args.tracks, tracks_frame_from_obj)
        align_frames([(str(args.gt), gt_frames), (str(args.tracks), track_frames)])
        # Coasted tracks exist only for re-association and are not predictions.
        mot = clear_mot(
            [active_tracks(tracks) for _, tracks in track_frames],
            [objs for _, objs in gt_frames],
            cfg.mot_threshold,
        )
        report.update(_mot_result_to_obj(mot))
        report["mot_per_class"] = {
            cfg.classes[cls].name: _mot_result_to_obj(res)
            for cls, res in mot.per_class.items()
            if cls < cfg.num_classes
        }

    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_losses_check(cfg: RunConfig, args) -> int:
    rng = np.random.default_rng(args.seed)
    step = 1e-5
    report = {}

    def fd_rel_error(fn, x0) -> float:
        value_grad = fn(x0)
        grad = np.asarray(value_grad.gradient, dtype=np.float64)
        fd = np.zeros_like(grad)
        flat = fd.reshape(-1)
        x_flat = x0.reshape(-1)
        for i in range(x_flat.size):
            orig = x_flat[i]
            x_flat[i] = orig + step
            up = fn(x0).value
            x_flat[i] = orig - step
            down = fn(x0).value
            x_flat[i] = orig
            flat[i] = (up - down) / (2.0 * step)
        denom = max(float(np.linalg.norm(fd)), 1e-12)
        return float(np.linalg.norm(grad - fd) / denom)

    errs = []
    for _ in range(args.trials):
        pred = rng.uniform(0.05, 0.95, size=(4, 4, 2))
        target = rng.uniform(0.0, 0.95, size=(4, 4, 2))
        target.reshape(-1)[rng.integers(0, target.size)] = 1.0
        errs.append(fd_rel_error(lambda p: focal_loss(p, target), pred))
    report["focal"] = {"max_rel_err": max(errs), "pass": max(errs) < 1e-4}

    errs = []
    for _ in range(args.trials):
        pred = rng.uniform(-2.0, 2.0, size=(4, 4, 3))
        target = pred + rng.choice([-1.0, 1.0], size=pred.shape) * rng.uniform(0.01, 1.0, size=pred.shape)
        mask = rng.random((4, 4)) < 0.4
        errs.append(fd_rel_error(lambda p: l1_regression_loss(p, target, mask), pred))
    report["l1"] = {"max_rel_err": max(errs), "pass": max(errs) < 1e-4}

    errs = []
    for _ in range(args.trials):
        pred = np.array([rng.uniform(0.05, 0.95)])
        target = float(rng.uniform(0.0, 1.0))
        errs.append(fd_rel_error(lambda p: score_bce(float(p[0]), target), pred))
    report["bce"] = {"max_rel_err": max(errs), "pass": max(errs) < 1e-4}

    print(json.dumps(report, indent=2))
    return EXIT_OK if all(entry["pass"] for entry in report.values()) else EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="centertrack", description=__doc__)
    parser.add_argument("--version", action="version", version=f"centertrack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="run config JSON path")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (dotted path, JSON value)")

    p = sub.add_parser("simulate", help="generate ground truth and noisy detections")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--features", action="store_true", help="also write occupancy feature maps")

    p = sub.add_parser("encode", help="render target maps from ground truth")
    add_common(p)
    p.add_argument("--gt", required=True, help="ground-truth JSONL")
    p.add_argument("--out", required=True, help="output directory for target maps")

    p = sub.add_parser("decode", help="decode detections from target maps")
    add_common(p)
    p.add_argument("--in", dest="input", required=True, help="directory of target maps")
    p.add_argument("--out", required=True, help="detections JSONL")

    p = sub.add_parser("refine", help="second-stage rescoring and refinement")
    add_common(p)
    p.add_argument("--in", dest="input", required=True, help="detections JSONL")
    p.add_argument("--features", required=True, help="directory of feature maps")
    p.add_argument("--gt", help="ground-truth JSONL (required by the oracle scorer)")
    p.add_argument("--out", required=True, help="refined detections JSONL")

    p = sub.add_parser("track", help="run the tracker over a detection stream")
    add_common(p)
    p.add_argument("--in", dest="input", required=True, help="detections JSONL")
    p.add_argument("--out", required=True, help="tracks JSONL")

    p = sub.add_parser("eval", help="detection and tracking metrics")
    add_common(p)
    p.add_argument("--gt", required=True, help="ground-truth JSONL")
    p.add_argument("--dets", help="detections JSONL")
    p.add_argument("--tracks", help="tracks JSONL")
    p.add_argument("--out", help="write the JSON report here as well")
    p.add_argument("--pr-csv", dest="pr_csv", help="directory for per-class PR-curve CSVs")

    p = sub.add_parser("losses-check", help="gradient self-check for the loss functions")
    add_common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=25)

    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "refine": cmd_refine,
    "track": cmd_track,
    "eval": cmd_eval,
    "losses-check": cmd_losses_check,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (JsonlParseError, FeatureMapFormatError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SequencingError as exc:
        print(f"sequencing error: {exc}", file=sys.stderr)
        return EXIT_SEQUENCING
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
