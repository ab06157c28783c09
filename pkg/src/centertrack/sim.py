"""Synthetic scene generation: ground-truth sequences with constant
velocity or constant turn-rate motion, a noisy-detector model, and a
point-sampling occupancy encoder producing stand-in map-view features.

All randomness flows through numpy's PCG64 generator seeded from the
config, so identical seeds give bit-identical output. The seeded
generator algorithm is part of the file-format contract: re-running a
scenario must reproduce its JSONL artifacts byte for byte.

Velocities are per-frame displacements in meters, the same unit consumed
by the velocity targets and the tracker. Stored velocities are computed
as the floating-point difference of consecutive centers, so
center(t) - center(t-1) == velocity(t) holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decode import Detection
from .geometry import Box3D, wrap_angle
from .grid import FeatureMap, GridSpec, cell_of, in_bounds, world_to_grid
from .targets import AnnotatedObject

OCCUPANCY_CHANNELS = 4  # point count, mean height, max height, mean reflectance

MOTION_KINDS = ("cv", "ct")  # constant velocity, constant turn rate


@dataclass(frozen=True)
class ClassSpec:
    """Object class with log-normal size priors (w, l, h)."""

    name: str
    size_mean: tuple[float, float, float]
    size_sigma_log: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if any(m <= 0.0 for m in self.size_mean):
            raise ValueError(f"class {self.name!r}: size means must be positive")
        if any(s < 0.0 for s in self.size_sigma_log):
            raise ValueError(f"class {self.name!r}: size sigmas must be >= 0")


@dataclass(frozen=True)
class ObjectSpec:
    """One simulated object: class, start pose, speed, motion model, and
    spawn/despawn frames (despawn exclusive; None runs to the end).

    A turn rate of zero is plain constant velocity. An explicit size
    overrides the class prior sample.
    """

    class_id: int
    start: tuple[float, float]
    yaw: float = 0.0
    speed: float = 0.0
    turn_rate: float = 0.0
    cz: float = 1.0
    spawn_frame: int = 0
    despawn_frame: int | None = None
    size: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError("class_id must be non-negative")
        if self.speed < 0.0:
            raise ValueError("speed must be >= 0")
        if self.spawn_frame < 0:
            raise ValueError("spawn_frame must be >= 0")
        if self.despawn_frame is not None and self.despawn_frame <= self.spawn_frame:
            raise ValueError("despawn_frame must exceed spawn_frame")


@dataclass(frozen=True)
class NoiseModel:
    """Detector noise: Gaussian center/size(log)/yaw perturbation, misses,
    uniform-in-range false positives, and score sampling ranges."""

    center_sigma: float = 0.0
    size_sigma_log: float = 0.0
    yaw_sigma: float = 0.0
    miss_prob: float = 0.0
    fp_rate: float = 0.0
    tp_score_range: tuple[float, float] = (1.0, 1.0)
    fp_score_range: tuple[float, float] = (0.05, 0.3)
    fp_size_base: tuple[float, float, float] = (2.0, 4.0, 1.8)
    fp_size_sigma_log: float = 0.2

    def __post_init__(self) -> None:
        if not 0.0 <= self.miss_prob <= 1.0:
            raise ValueError("miss_prob must be in [0, 1]")
        for name in ("center_sigma", "size_sigma_log", "yaw_sigma", "fp_rate", "fp_size_sigma_log"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("tp_score_range", "fp_score_range"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi <= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    num_frames: int
    classes: tuple[ClassSpec, ...]
    objects: tuple[ObjectSpec, ...]
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self) -> None:
        if self.num_frames < 0:
            raise ValueError("num_frames must be >= 0")
        if not self.classes:
            raise ValueError("at least one class is required")
        for i, obj in enumerate(self.objects):
            if obj.class_id >= len(self.classes):
                raise ValueError(f"object {i}: class_id {obj.class_id} out of range")


def _object_size(spec: ObjectSpec, cls: ClassSpec, rng: np.random.Generator) -> tuple[float, float, float]:
    if spec.size is not None:
        return spec.size
    z = rng.standard_normal(3)
    return tuple(m * math.exp(s * zi) for m, s, zi in zip(cls.size_mean, cls.size_sigma_log, z))


def generate_scenario(cfg: ScenarioConfig) -> list[list[AnnotatedObject]]:
    """Roll the scenario forward and return per-frame object lists.

    Object ids are the indices into cfg.objects and are stable across
    frames. Heading follows yaw(t) = yaw0 + turn_rate * (t - spawn); each
    frame's displacement is speed * (cos yaw, sin yaw); yaw targets track
    the heading. Sizes are sampled once per object from the class prior.
    """
    rng = np.random.default_rng(cfg.seed)
    frames: list[list[AnnotatedObject]] = [[] for _ in range(cfg.num_frames)]

    for object_id, spec in enumerate(cfg.objects):
        size = _object_size(spec, cfg.classes[spec.class_id], rng)
        last = min(spec.despawn_frame if spec.despawn_frame is not None else cfg.num_frames, cfg.num_frames)
        if spec.spawn_frame >= last:
            continue
        cx, cy = spec.start
        for t in range(spec.spawn_frame, last):
            yaw_t = spec.yaw + spec.turn_rate * (t - spec.spawn_frame)
            if t == spec.spawn_frame:
                # No previous frame; the velocity is the model's own step.
                velocity = (spec.speed * math.cos(yaw_t), spec.speed * math.sin(yaw_t))
            else:
                nx = cx + spec.speed * math.cos(yaw_t)
                ny = cy + spec.speed * math.sin(yaw_t)
                # Store the realized float difference so that
                # center(t) - center(t-1) == velocity(t) holds exactly.
                velocity = (nx - cx, ny - cy)
                cx, cy = nx, ny
            frames[t].append(
                AnnotatedObject(
                    box=Box3D(cx=cx, cy=cy, cz=spec.cz, w=size[0], l=size[1], h=size[2], yaw=wrap_angle(yaw_t)),
                    class_id=spec.class_id,
                    velocity=velocity,
                    object_id=object_id,
                )
            )
    return frames


def perturb_detections(
    gt_frames: list[list[AnnotatedObject]],
    noise: NoiseModel,
    grid_spec: GridSpec,
    num_classes: int,
    seed: int,
) -> list[list[Detection]]:
    """Turn ground truth into noisy detections.

    Each object is dropped independently with miss_prob; survivors get
    Gaussian center noise, log-space size noise (so boxes stay valid), yaw
    noise, and a score drawn uniformly from tp_score_range. False-positive
    counts are Poisson(fp_rate) per frame, placed uniformly in the
    detection range with low scores and zero velocity.
    """
    rng = np.random.default_rng(seed)
    det_frames: list[list[Detection]] = []
    for objects in gt_frames:
        dets: list[Detection] = []
        for obj in objects:
            if rng.random() < noise.miss_prob:
                continue
            box = obj.box
            dx, dy = rng.normal(0.0, 1.0, size=2) * noise.center_sigma
            sw, sl, sh = np.exp(rng.normal(0.0, 1.0, size=3) * noise.size_sigma_log)
            dyaw = rng.normal(0.0, 1.0) * noise.yaw_sigma
            score = rng.uniform(noise.tp_score_range[0], noise.tp_score_range[1])
            dets.append(
                Detection(
                    box=Box3D(
                        cx=box.cx + dx,
                        cy=box.cy + dy,
                        cz=box.cz,
                        w=box.w * sw,
                        l=box.l * sl,
                        h=box.h * sh,
                        yaw=box.yaw + dyaw,
                    ),
                    class_id=obj.class_id,
                    score=float(score),
                    velocity=obj.velocity,
                )
            )
        for _ in range(int(rng.poisson(noise.fp_rate))):
            cx = rng.uniform(grid_spec.x_min, grid_spec.x_max)
            cy = rng.uniform(grid_spec.y_min, grid_spec.y_max)
            w, l, h = np.array(noise.fp_size_base) * np.exp(
                rng.normal(0.0, 1.0, size=3) * noise.fp_size_sigma_log
            )
            yaw = rng.uniform(-math.pi, math.pi)
            class_id = int(rng.integers(0, num_classes))
            score = rng.uniform(noise.fp_score_range[0], noise.fp_score_range[1])
            dets.append(
                Detection(
                    box=Box3D(cx=cx, cy=cy, cz=float(h) / 2.0, w=float(w), l=float(l), h=float(h), yaw=yaw),
                    class_id=class_id,
                    score=float(score),
                    velocity=(0.0, 0.0),
                )
            )
        det_frames.append(dets)
    return det_frames


class OccupancyEncoder:
    """Point-sampling stand-in for a learned backbone.

    Samples points uniformly inside each object box, bins them into grid
    cells, and emits 4 channels per cell: point count, mean height, max
    height, mean reflectance. Empty cells are all zero.
    """

    CHANNELS = OCCUPANCY_CHANNELS

    def __init__(self, spec: GridSpec):
        self.spec = spec

    def encode(
        self,
        objects: list[AnnotatedObject],
        points_per_object: int,
        rng: np.random.Generator,
        clutter_points: int = 0,
    ) -> FeatureMap:
        if points_per_object < 0 or clutter_points < 0:
            raise ValueError("point counts must be >= 0")
        spec = self.spec
        shape = (spec.num_cells_x, spec.num_cells_y)
        count = np.zeros(shape)
        z_sum = np.zeros(shape)
        z_max = np.full(shape, -np.inf)
        refl_sum = np.zeros(shape)

        def add_points(xs: np.ndarray, ys: np.ndarray, zs: np.ndarray, refl: np.ndarray) -> None:
            for x, y, z, r in zip(xs, ys, zs, refl):
                gx, gy = world_to_grid(spec, float(x), float(y))
                if not in_bounds(spec, gx, gy):
                    continue
                ix, iy = cell_of(spec, gx, gy)
                count[ix, iy] += 1.0
                z_sum[ix, iy] += z
                z_max[ix, iy] = max(z_max[ix, iy], z)
                refl_sum[ix, iy] += r

        for obj in objects:
            if points_per_object == 0:
                break
            box = obj.box
            local = rng.uniform(-0.5, 0.5, size=(points_per_object, 3)) * (box.l, box.w, box.h)
            c, s = math.cos(box.yaw), math.sin(box.yaw)
            xs = box.cx + local[:, 0] * c - local[:, 1] * s
            ys = box.cy + local[:, 0] * s + local[:, 1] * c
            zs = box.cz + local[:, 2]
            add_points(xs, ys, zs, rng.uniform(0.0, 1.0, size=points_per_object))

        if clutter_points:
            xs = rng.uniform(spec.x_min, spec.x_max, size=clutter_points)
            ys = rng.uniform(spec.y_min, spec.y_max, size=clutter_points)
            zs = np.zeros(clutter_points)
            add_points(xs, ys, zs, rng.uniform(0.0, 1.0, size=clutter_points))

        occupied = count > 0.0
        values = np.zeros(shape + (OCCUPANCY_CHANNELS,))
        values[:, :, 0] = count
        values[:, :, 1] = np.where(occupied, z_sum / np.maximum(count, 1.0), 0.0)
        values[:, :, 2] = np.where(occupied, z_max, 0.0)
        values[:, :, 3] = np.where(occupied, refl_sum / np.maximum(count, 1.0), 0.0)
        return FeatureMap(spec, values)


def sample_points_and_encode(
    objects: list[AnnotatedObject],
    points_per_object: int,
    spec: GridSpec,
    seed: int,
    clutter_points: int = 0,
) -> FeatureMap:
    """Seeded convenience wrapper around OccupancyEncoder.encode."""
    rng = np.random.default_rng(seed)
    return OccupancyEncoder(spec).encode(objects, points_per_object, rng, clutter_points)
