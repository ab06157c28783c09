"""Run configuration: one JSON document shared by every CLI subcommand,
validated strictly (unknown keys are rejected everywhere) so an invalid
config fails identically no matter which stage reads it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

from .grid import GridSpec
from .sim import ClassSpec, NoiseModel, ObjectSpec, ScenarioConfig
from .tracker import TrackerConfig


class ConfigError(Exception):
    """The run configuration is invalid."""


def _require_keys(obj: dict, allowed: set[str], required: set[str], ctx: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{ctx}: expected a JSON object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{ctx}: unknown key(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"{ctx}: missing required key(s) {sorted(missing)}")


def _number(obj: dict, key: str, ctx: str, default: float | None = None) -> float:
    value = obj.get(key, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{ctx}.{key}: expected a number, got {value!r}")
    return float(value)


def _integer(obj: dict, key: str, ctx: str, default: int | None = None) -> int:
    value = obj.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{ctx}.{key}: expected an integer, got {value!r}")
    return value


def _triple(obj: dict, key: str, ctx: str, default=None) -> tuple[float, float, float]:
    value = obj.get(key, default)
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{ctx}.{key}: expected three numbers, got {value!r}")
    return tuple(float(v) for v in value)


def _pair(obj: dict, key: str, ctx: str, default=None) -> tuple[float, float]:
    value = obj.get(key, default)
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{ctx}.{key}: expected two numbers, got {value!r}")
    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class ClassEntry:
    name: str
    track_threshold: float
    size_mean: tuple[float, float, float]
    size_sigma_log: tuple[float, float, float]


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    classes: tuple[ClassEntry, ...]
    min_overlap: float
    min_radius: float
    score_floor: float
    nms_iou: float
    top_k: int
    max_peaks: int
    refine_scorer: str
    refinement_scale: float
    refine_seed: int
    tracker_max_age: int
    metric_thresholds: tuple[float, ...]
    mot_threshold: float
    scenario: ScenarioConfig
    noise_seed: int
    feature_seed: int
    points_per_object: int
    clutter_points: int

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(
            class_thresholds={i: c.track_threshold for i, c in enumerate(self.classes)},
            max_age=self.tracker_max_age,
        )


_TOP_KEYS = {"grid", "classes", "targets", "decode", "refine", "tracker", "metrics", "scenario", "seeds", "sim"}


def _parse_grid(obj: dict) -> GridSpec:
    _require_keys(obj, {"x_min", "x_max", "y_min", "y_max", "cell"}, {"x_min", "x_max", "y_min", "y_max", "cell"}, "grid")
    try:
        return GridSpec.from_range(
            _number(obj, "x_min", "grid"),
            _number(obj, "x_max", "grid"),
            _number(obj, "y_min", "grid"),
            _number(obj, "y_max", "grid"),
            _number(obj, "cell", "grid"),
        )
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def _parse_classes(entries: Any) -> tuple[ClassEntry, ...]:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("classes: expected a non-empty list")
    classes = []
    for i, obj in enumerate(entries):
        ctx = f"classes[{i}]"
        _require_keys(obj, {"name", "track_threshold", "size_mean", "size_sigma_log"}, {"name", "size_mean"}, ctx)
        name = obj["name"]
        if not isinstance(name, str) or not name:
            raise ConfigError(f"{ctx}.name: expected a non-empty string")
        threshold = _number(obj, "track_threshold", ctx, default=4.0)
        if threshold <= 0:
            raise ConfigError(f"{ctx}.track_threshold: must be positive")
        classes.append(
            ClassEntry(
                name=name,
                track_threshold=threshold,
                size_mean=_triple(obj, "size_mean", ctx),
                size_sigma_log=_triple(obj, "size_sigma_log", ctx, default=[0.0, 0.0, 0.0]),
            )
        )
    return tuple(classes)


def _parse_noise(obj: dict) -> NoiseModel:
    allowed = {
        "center_sigma",
        "size_sigma_log",
        "yaw_sigma",
        "miss_prob",
        "fp_rate",
        "tp_score_range",
        "fp_score_range",
        "fp_size_base",
        "fp_size_sigma_log",
    }
    _require_keys(obj, allowed, set(), "scenario.noise")
    try:
        return NoiseModel(
            center_sigma=_number(obj, "center_sigma", "scenario.noise", 0.0),
            size_sigma_log=_number(obj, "size_sigma_log", "scenario.noise", 0.0),
            yaw_sigma=_number(obj, "yaw_sigma", "scenario.noise", 0.0),
            miss_prob=_number(obj, "miss_prob", "scenario.noise", 0.0),
            fp_rate=_number(obj, "fp_rate", "scenario.noise", 0.0),
            tp_score_range=_pair(obj, "tp_score_range", "scenario.noise", [1.0, 1.0]),
            fp_score_range=_pair(obj, "fp_score_range", "scenario.noise", [0.05, 0.3]),
            fp_size_base=_triple(obj, "fp_size_base", "scenario.noise", [2.0, 4.0, 1.8]),
            fp_size_sigma_log=_number(obj, "fp_size_sigma_log", "scenario.noise", 0.2),
        )
    except ValueError as exc:
        raise ConfigError(f"scenario.noise: {exc}") from exc


def _parse_object(obj: dict, i: int, num_classes: int) -> ObjectSpec:
    ctx = f"scenario.objects[{i}]"
    allowed = {"class_id", "start", "yaw", "speed", "turn_rate", "cz", "spawn_frame", "despawn_frame", "size"}
    _require_keys(obj, allowed, {"class_id", "start"}, ctx)
    class_id = _integer(obj, "class_id", ctx)
    if not 0 <= class_id < num_classes:
        raise ConfigError(f"{ctx}.class_id: {class_id} out of range for {num_classes} classes")
    despawn = obj.get("despawn_frame")
    if despawn is not None and (not isinstance(despawn, int) or isinstance(despawn, bool)):
        raise ConfigError(f"{ctx}.despawn_frame: expected an integer or null")
    size = _triple(obj, "size", ctx) if "size" in obj else None
    try:
        return ObjectSpec(
            class_id=class_id,
            start=_pair(obj, "start", ctx),
            yaw=_number(obj, "yaw", ctx, 0.0),
            speed=_number(obj, "speed", ctx, 0.0),
            turn_rate=_number(obj, "turn_rate", ctx, 0.0),
            cz=_number(obj, "cz", ctx, 1.0),
            spawn_frame=_integer(obj, "spawn_frame", ctx, 0),
            despawn_frame=despawn,
            size=size,
        )
    except ValueError as exc:
        raise ConfigError(f"{ctx}: {exc}") from exc


def parse_config(raw: dict) -> RunConfig:
    """Validate a raw config dict and build the typed RunConfig."""
    _require_keys(raw, _TOP_KEYS, {"grid", "classes", "scenario"}, "config")

    grid = _parse_grid(raw["grid"])
    classes = _parse_classes(raw["classes"])

    targets_obj = raw.get("targets", {})
    _require_keys(targets_obj, {"min_overlap", "min_radius"}, set(), "targets")
    min_overlap = _number(targets_obj, "min_overlap", "targets", 0.1)
    min_radius = _number(targets_obj, "min_radius", "targets", 2.0)
    if not 0.0 < min_overlap < 1.0:
        raise ConfigError("targets.min_overlap: must be in (0, 1)")

    decode_obj = raw.get("decode", {})
    _require_keys(decode_obj, {"score_floor", "nms_iou", "top_k", "max_peaks"}, set(), "decode")
    score_floor = _number(decode_obj, "score_floor", "decode", 0.1)
    nms_iou = _number(decode_obj, "nms_iou", "decode", 0.2)
    top_k = _integer(decode_obj, "top_k", "decode", 500)
    max_peaks = _integer(decode_obj, "max_peaks", "decode", 500)
    if not 0.0 < nms_iou < 1.0:
        raise ConfigError("decode.nms_iou: must be in (0, 1)")
    if top_k < 1 or max_peaks < 1:
        raise ConfigError("decode.top_k and decode.max_peaks must be >= 1")

    refine_obj = raw.get("refine", {})
    _require_keys(refine_obj, {"scorer", "refinement_scale", "seed"}, set(), "refine")
    refine_scorer = refine_obj.get("scorer", "oracle")
    if refine_scorer not in ("oracle", "random_projection"):
        raise ConfigError(f"refine.scorer: unknown scorer {refine_scorer!r}")
    refinement_scale = _number(refine_obj, "refinement_scale", "refine", 0.0)
    refine_seed = _integer(refine_obj, "seed", "refine", 0)

    tracker_obj = raw.get("tracker", {})
    _require_keys(tracker_obj, {"max_age"}, set(), "tracker")
    tracker_max_age = _integer(tracker_obj, "max_age", "tracker", 3)
    if tracker_max_age < 0:
        raise ConfigError("tracker.max_age: must be >= 0")

    metrics_obj = raw.get("metrics", {})
    _require_keys(metrics_obj, {"distance_thresholds", "mot_threshold"}, set(), "metrics")
    thresholds = metrics_obj.get("distance_thresholds", [0.5, 1.0, 2.0, 4.0])
    if not isinstance(thresholds, list) or not thresholds or any(
        not isinstance(t, (int, float)) or isinstance(t, bool) or t <= 0 for t in thresholds
    ):
        raise ConfigError("metrics.distance_thresholds: expected a list of positive numbers")
    mot_threshold = _number(metrics_obj, "mot_threshold", "metrics", 2.0)
    if mot_threshold <= 0:
        raise ConfigError("metrics.mot_threshold: must be positive")

    scenario_obj = raw["scenario"]
    _require_keys(scenario_obj, {"seed", "num_frames", "objects", "noise"}, {"seed", "num_frames", "objects"}, "scenario")
    objects = scenario_obj["objects"]
    if not isinstance(objects, list):
        raise ConfigError("scenario.objects: expected a list")
    object_specs = tuple(_parse_object(o, i, len(classes)) for i, o in enumerate(objects))
    class_specs = tuple(
        ClassSpec(name=c.name, size_mean=c.size_mean, size_sigma_log=c.size_sigma_log) for c in classes
    )
    try:
        scenario = ScenarioConfig(
            seed=_integer(scenario_obj, "seed", "scenario"),
            num_frames=_integer(scenario_obj, "num_frames", "scenario"),
            classes=class_specs,
            objects=object_specs,
            noise=_parse_noise(scenario_obj.get("noise", {})),
        )
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc

    seeds_obj = raw.get("seeds", {})
    _require_keys(seeds_obj, {"noise", "features"}, set(), "seeds")
    noise_seed = _integer(seeds_obj, "noise", "seeds", 1)
    feature_seed = _integer(seeds_obj, "features", "seeds", 2)

    sim_obj = raw.get("sim", {})
    _require_keys(sim_obj, {"points_per_object", "clutter_points"}, set(), "sim")
    points_per_object = _integer(sim_obj, "points_per_object", "sim", 64)
    clutter_points = _integer(sim_obj, "clutter_points", "sim", 0)
    if points_per_object < 0 or clutter_points < 0:
        raise ConfigError("sim point counts must be >= 0")

    return RunConfig(
        grid=grid,
        classes=classes,
        min_overlap=min_overlap,
        min_radius=min_radius,
        score_floor=score_floor,
        nms_iou=nms_iou,
        top_k=top_k,
        max_peaks=max_peaks,
        refine_scorer=refine_scorer,
        refinement_scale=refinement_scale,
        refine_seed=refine_seed,
        tracker_max_age=tracker_max_age,
        metric_thresholds=tuple(float(t) for t in thresholds),
        mot_threshold=mot_threshold,
        scenario=scenario,
        noise_seed=noise_seed,
        feature_seed=feature_seed,
        points_per_object=points_per_object,
        clutter_points=clutter_points,
    )


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply --set key.path=value overrides to the raw config dict.

    Values parse as JSON when possible, else as strings. Intermediate
    objects are created as needed; list indices are not supported.
    """
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, text = item.partition("=")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"--set {key}: {part} is not an object")
            node = nxt
        node[parts[-1]] = value
    return raw


def load_config(path, overrides: list[str] | None = None) -> RunConfig:
    """Read, override, and validate a config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if overrides:
        raw = apply_overrides(raw, overrides)
    return parse_config(raw)
