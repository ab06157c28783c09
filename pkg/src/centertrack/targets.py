"""First-stage training targets: per-class heatmaps with size-adaptive
Gaussian peaks and dense regression channels supervised only at object
centers, plus the second-stage proposal sampler.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Box3D, iou_3d
from .grid import GridSpec, cell_of, in_bounds, world_to_grid

logger = logging.getLogger(__name__)

# Smallest allowed Gaussian radius, in cells.
MIN_GAUSSIAN_RADIUS = 2.0

# Splat support is truncated at 3 sigma; kernel values below this are not
# written, keeping rendering O(objects * sigma^2).
GAUSSIAN_CUTOFF = math.exp(-4.5)

# Regression channel groups, in stacking order.
REGRESSION_CHANNELS = (("offset", 2), ("height", 1), ("log_size", 3), ("rot", 2), ("vel", 2))


@dataclass(frozen=True)
class AnnotatedObject:
    """Ground-truth object: box, class, per-frame velocity, stable id."""

    box: Box3D
    class_id: int
    velocity: tuple[float, float] = (0.0, 0.0)
    object_id: int = 0

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")

    def to_json_obj(self) -> dict:
        return {
            "box": self.box.to_json_obj(),
            "class_id": self.class_id,
            "velocity": [float(self.velocity[0]), float(self.velocity[1])],
            "object_id": self.object_id,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "AnnotatedObject":
        return cls(
            box=Box3D.from_json_obj(obj["box"]),
            class_id=int(obj["class_id"]),
            velocity=(float(obj["velocity"][0]), float(obj["velocity"][1])),
            object_id=int(obj["object_id"]),
        )


@dataclass
class TargetMaps:
    """Dense target grids: heatmap (W, L, K) plus regression channels and
    the center-cell supervision mask. Regression cells outside the mask
    stay zero."""

    offset: np.ndarray
    height: np.ndarray
    log_size: np.ndarray
    rot: np.ndarray
    vel: np.ndarray
    valid_mask: np.ndarray
    heatmap: np.ndarray | None = None

    def regression_stack(self) -> np.ndarray:
        """Concatenate the regression channel groups into one (W, L, 10) array."""
        return np.concatenate([getattr(self, name) for name, _ in REGRESSION_CHANNELS], axis=2)


def empty_target_maps(spec: GridSpec, num_classes: int | None = None) -> TargetMaps:
    shape = (spec.num_cells_x, spec.num_cells_y)
    return TargetMaps(
        offset=np.zeros(shape + (2,)),
        height=np.zeros(shape + (1,)),
        log_size=np.zeros(shape + (3,)),
        rot=np.zeros(shape + (2,)),
        vel=np.zeros(shape + (2,)),
        valid_mask=np.zeros(shape, dtype=bool),
        heatmap=None if num_classes is None else np.zeros(shape + (num_classes,)),
    )


def gaussian_radius(
    l_cells: float,
    w_cells: float,
    min_overlap: float,
    min_radius: float = MIN_GAUSSIAN_RADIUS,
) -> float:
    """Size-adaptive Gaussian radius for a BEV footprint of l x w cells.

    Returns the largest corner displacement r such that an axis-aligned
    l x w box whose corners move by at most r in each axis still overlaps
    the original with IoU >= min_overlap, considering the three extreme
    displacement modes (diagonal shift, symmetric shrink, symmetric grow).
    Each mode reduces to a quadratic in r; the binding mode is the minimum
    root. The result is clamped below by min_radius.
    """
    if not (l_cells > 0.0 and w_cells > 0.0):
        raise ValueError(f"footprint must be positive, got ({l_cells!r}, {w_cells!r})")
    if not 0.0 < min_overlap < 1.0:
        raise ValueError(f"min_overlap must be in (0, 1), got {min_overlap!r}")
    a, b = l_cells, w_cells

    # Shifted box, same size: IoU = (a-r)(b-r) / (2ab - (a-r)(b-r)).
    b1 = a + b
    c1 = a * b * (1.0 - min_overlap) / (1.0 + min_overlap)
    r1 = (b1 - math.sqrt(b1 * b1 - 4.0 * c1)) / 2.0

    # Shrunk box: IoU = (a-2r)(b-2r) / (ab).
    a2 = 4.0
    b2 = 2.0 * (a + b)
    c2 = (1.0 - min_overlap) * a * b
    r2 = (b2 - math.sqrt(b2 * b2 - 4.0 * a2 * c2)) / (2.0 * a2)

    # Grown box: IoU = ab / ((a+2r)(b+2r)); positive root of
    # 4o r^2 + 2o(a+b) r + (o-1)ab = 0.
    a3 = 4.0 * min_overlap
    b3 = 2.0 * min_overlap * (a + b)
    c3 = (min_overlap - 1.0) * a * b
    r3 = (-b3 + math.sqrt(b3 * b3 - 4.0 * a3 * c3)) / (2.0 * a3)

    return max(min(r1, r2, r3), min_radius)


def _splat_gaussian(channel: np.ndarray, ix: int, iy: int, sigma: float) -> None:
    """Max-combine exp(-(dx^2+dy^2) / (2 sigma^2)) into a heatmap channel
    around center cell (ix, iy), truncated at 3 sigma."""
    w, l = channel.shape
    reach = int(math.ceil(3.0 * sigma))
    x0, x1 = max(ix - reach, 0), min(ix + reach, w - 1)
    y0, y1 = max(iy - reach, 0), min(iy + reach, l - 1)
    dx = np.arange(x0, x1 + 1) - ix
    dy = np.arange(y0, y1 + 1) - iy
    d2 = dx[:, None] ** 2 + dy[None, :] ** 2
    kernel = np.exp(-d2 / (2.0 * sigma * sigma))
    kernel[kernel < GAUSSIAN_CUTOFF] = 0.0
    patch = channel[x0 : x1 + 1, y0 : y1 + 1]
    np.maximum(patch, kernel, out=patch)


def render_heatmap(
    objects: list[AnnotatedObject],
    spec: GridSpec,
    num_classes: int,
    min_overlap: float = 0.1,
) -> np.ndarray:
    """Render the (W, L, K) class heatmap for a frame.

    Each in-range object splats a Gaussian in its class channel, centered
    on its center cell with sigma = gaussian_radius of the footprint in
    cells; overlapping splats combine by element-wise max, so each center
    cell is exactly 1.0. Out-of-range objects are skipped and counted in a
    log message.
    """
    heatmap = np.zeros((spec.num_cells_x, spec.num_cells_y, num_classes))
    skipped = 0
    for obj in objects:
        if obj.class_id >= num_classes:
            raise ValueError(f"object class {obj.class_id} >= num_classes {num_classes}")
        gx, gy = world_to_grid(spec, obj.box.cx, obj.box.cy)
        if not in_bounds(spec, gx, gy):
            skipped += 1
            continue
        ix, iy = cell_of(spec, gx, gy)
        sigma = gaussian_radius(obj.box.l / spec.cell, obj.box.w / spec.cell, min_overlap)
        _splat_gaussian(heatmap[:, :, obj.class_id], ix, iy, sigma)
    if skipped:
        logger.warning("render_heatmap: skipped %d out-of-range object(s)", skipped)
    return heatmap


def render_regression(objects: list[AnnotatedObject], spec: GridSpec) -> TargetMaps:
    """Render the dense regression channels, supervised only at center cells.

    At each object's center cell: offset is the sub-cell residual of the
    continuous center, height is cz, log_size is (ln w, ln l, ln h), rot is
    (sin yaw, cos yaw), vel is the per-frame velocity, and the valid mask
    is set. When two objects land in the same cell the later one wins and
    the collision is logged with both object ids.
    """
    maps = empty_target_maps(spec)
    occupant: dict[tuple[int, int], int] = {}
    skipped = 0
    for obj in objects:
        gx, gy = world_to_grid(spec, obj.box.cx, obj.box.cy)
        if not in_bounds(spec, gx, gy):
            skipped += 1
            continue
        ix, iy = cell_of(spec, gx, gy)
        if (ix, iy) in occupant:
            logger.warning(
                "center-cell collision at (%d, %d): object %d replaces object %d",
                ix,
                iy,
                obj.object_id,
                occupant[(ix, iy)],
            )
        occupant[(ix, iy)] = obj.object_id
        box = obj.box
        maps.offset[ix, iy] = (gx - ix, gy - iy)
        maps.height[ix, iy] = box.cz
        maps.log_size[ix, iy] = (math.log(box.w), math.log(box.l), math.log(box.h))
        maps.rot[ix, iy] = (math.sin(box.yaw), math.cos(box.yaw))
        maps.vel[ix, iy] = obj.velocity
        maps.valid_mask[ix, iy] = True
    if skipped:
        logger.warning("render_regression: skipped %d out-of-range object(s)", skipped)
    return maps


def render_targets(
    objects: list[AnnotatedObject],
    spec: GridSpec,
    num_classes: int,
    min_overlap: float = 0.1,
) -> TargetMaps:
    """Render heatmap and regression channels together for one frame."""
    maps = render_regression(objects, spec)
    maps.heatmap = render_heatmap(objects, spec, num_classes, min_overlap)
    return maps


def sample_proposals(
    proposals: list[Box3D],
    gts: list[AnnotatedObject],
    n: int = 128,
    pos_iou: float = 0.55,
    *,
    rng: np.random.Generator | int,
) -> list[tuple[Box3D, bool, AnnotatedObject | None]]:
    """Sample up to n proposals targeting a 1:1 positive/negative ratio.

    A proposal is positive iff its best 3D IoU over the ground truths is at
    least pos_iou; positives carry their argmax ground truth. Each side is
    drawn uniformly without replacement; if one side runs short the other
    fills, keeping the total at most n.
    """
    if not proposals:
        raise ValueError("proposal list must be non-empty")
    if n < 1 or n % 2 != 0:
        raise ValueError(f"n must be a positive even count, got {n}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)

    best_iou = np.zeros(len(proposals))
    best_gt = np.full(len(proposals), -1, dtype=int)
    for i, prop in enumerate(proposals):
        for j, gt in enumerate(gts):
            iou = iou_3d(prop, gt.box)
            if iou > best_iou[i]:
                best_iou[i] = iou
                best_gt[i] = j

    pos_idx = [i for i in range(len(proposals)) if best_iou[i] >= pos_iou]
    neg_idx = [i for i in range(len(proposals)) if best_iou[i] < pos_iou]

    n_pos = min(len(pos_idx), n // 2)
    n_neg = min(len(neg_idx), n - n_pos)
    n_pos = min(len(pos_idx), n - n_neg)

    chosen_pos = rng.choice(len(pos_idx), size=n_pos, replace=False) if n_pos else []
    chosen_neg = rng.choice(len(neg_idx), size=n_neg, replace=False) if n_neg else []

    samples: list[tuple[Box3D, bool, AnnotatedObject | None]] = []
    for k in chosen_pos:
        i = pos_idx[int(k)]
        samples.append((proposals[i], True, gts[best_gt[i]]))
    for k in chosen_neg:
        i = neg_idx[int(k)]
        samples.append((proposals[i], False, None))
    return samples


# Ground-truth frame file: JSON Lines, one frame per line.


def gt_frame_to_obj(frame_index: int, objects: list[AnnotatedObject]) -> dict:
    return {"frame_index": frame_index, "objects": [o.to_json_obj() for o in objects]}


def gt_frame_from_obj(obj: dict) -> tuple[int, list[AnnotatedObject]]:
    return int(obj["frame_index"]), [AnnotatedObject.from_json_obj(o) for o in obj["objects"]]
