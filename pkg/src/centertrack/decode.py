"""First-stage inference: strict 8-neighbor peak extraction on class
heatmaps, regression gather at the peaks, box assembly in world
coordinates, and top-k selection after rotated NMS.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Box3D, nms_keep_indices
from .grid import GridSpec, grid_to_world
from .targets import TargetMaps

logger = logging.getLogger(__name__)

DEFAULT_SCORE_FLOOR = 0.1
DEFAULT_NMS_IOU = 0.2
DEFAULT_TOP_K = 500


@dataclass(frozen=True)
class Detection:
    """Decoded object: box, class, confidence, per-frame velocity."""

    box: Box3D
    class_id: int
    score: float
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score!r}")

    def to_json_obj(self) -> dict:
        return {
            "box": self.box.to_json_obj(),
            "class_id": self.class_id,
            "score": float(self.score),
            "velocity": [float(self.velocity[0]), float(self.velocity[1])],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Detection":
        return cls(
            box=Box3D.from_json_obj(obj["box"]),
            class_id=int(obj["class_id"]),
            score=float(obj["score"]),
            velocity=(float(obj["velocity"][0]), float(obj["velocity"][1])),
        )


@dataclass(frozen=True)
class Peak:
    ix: int
    iy: int
    class_id: int
    value: float


def extract_peaks(
    heatmap: np.ndarray,
    max_peaks: int = DEFAULT_TOP_K,
    score_floor: float = DEFAULT_SCORE_FLOOR,
) -> list[Peak]:
    """Find strict local maxima over the 8-neighborhood, per class channel.

    Border cells compare only their in-grid neighbors. Plateaus produce no
    peaks (strict comparison). Results are sorted by descending value with
    ties broken by (class_id, ix, iy) ascending, then truncated to
    max_peaks and filtered by score_floor.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if heatmap.ndim != 3:
        raise ValueError(f"heatmap must be (W, L, K), got shape {heatmap.shape}")

    peaks: list[Peak] = []
    for k in range(heatmap.shape[2]):
        channel = heatmap[:, :, k]
        padded = np.pad(channel, 1, constant_values=-np.inf)
        is_peak = np.ones_like(channel, dtype=bool)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                shifted = padded[1 + dx : 1 + dx + channel.shape[0], 1 + dy : 1 + dy + channel.shape[1]]
                is_peak &= channel > shifted
        is_peak &= channel >= score_floor
        for ix, iy in zip(*np.nonzero(is_peak)):
            peaks.append(Peak(int(ix), int(iy), k, float(channel[ix, iy])))

    peaks.sort(key=lambda p: (-p.value, p.class_id, p.ix, p.iy))
    return peaks[:max_peaks]


def decode_detections(
    maps: TargetMaps,
    spec: GridSpec,
    max_peaks: int = DEFAULT_TOP_K,
    score_floor: float = DEFAULT_SCORE_FLOOR,
) -> list[Detection]:
    """Assemble detections from predicted target maps.

    For each heatmap peak the continuous center is cell + offset (grid
    coordinates, mapped to world), cz comes from the height channel, sizes
    from exp(log_size), yaw from atan2 of the rotation channels (which
    need not be normalized), and velocity from the velocity channels.
    Peaks whose gathered channels contain non-finite values are dropped
    and counted.
    """
    if maps.heatmap is None:
        raise ValueError("maps.heatmap is required for decoding")
    detections: list[Detection] = []
    dropped = 0
    for peak in extract_peaks(maps.heatmap, max_peaks, score_floor):
        ix, iy = peak.ix, peak.iy
        channels = np.concatenate(
            [maps.offset[ix, iy], maps.height[ix, iy], maps.log_size[ix, iy], maps.rot[ix, iy], maps.vel[ix, iy]]
        )
        if not np.all(np.isfinite(channels)):
            dropped += 1
            continue
        gx = ix + maps.offset[ix, iy, 0]
        gy = iy + maps.offset[ix, iy, 1]
        cx, cy = grid_to_world(spec, gx, gy)
        w, l, h = np.exp(maps.log_size[ix, iy])
        yaw = math.atan2(maps.rot[ix, iy, 0], maps.rot[ix, iy, 1])
        detections.append(
            Detection(
                box=Box3D(cx=cx, cy=cy, cz=float(maps.height[ix, iy, 0]), w=float(w), l=float(l), h=float(h), yaw=yaw),
                class_id=peak.class_id,
                score=peak.value,
                velocity=(float(maps.vel[ix, iy, 0]), float(maps.vel[ix, iy, 1])),
            )
        )
    if dropped:
        logger.warning("decode_detections: dropped %d peak(s) with non-finite channels", dropped)
    return detections


def select_top(
    dets: list[Detection],
    nms_iou: float = DEFAULT_NMS_IOU,
    k: int = DEFAULT_TOP_K,
) -> list[Detection]:
    """Class-wise rotated NMS, then truncate to the k highest scores."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not dets:
        return []
    keep = nms_keep_indices(
        [d.box for d in dets],
        [d.score for d in dets],
        nms_iou,
        [d.class_id for d in dets],
    )
    return [dets[i] for i in keep[:k]]


# Detections file: JSON Lines, one frame per line.


def detections_frame_to_obj(frame_index: int, dets: list[Detection]) -> dict:
    return {"frame_index": frame_index, "detections": [d.to_json_obj() for d in dets]}


def detections_frame_from_obj(obj: dict, prefer_fused: bool = False) -> tuple[int, list[Detection]]:
    """Parse one detections line; with prefer_fused, refined lines are read
    using their fused score as the detection confidence."""
    dets = []
    for entry in obj["detections"]:
        det = Detection.from_json_obj(entry)
        if prefer_fused and "fused_score" in entry:
            det = replace(det, score=float(entry["fused_score"]))
        dets.append(det)
    return int(obj["frame_index"]), dets
