"""Second stage: sample bilinear features at the box center and the four
outward face centers, rescore each detection, apply a box refinement, and
fuse the two confidences by geometric mean.

The learned MLP is out of scope here; scoring is a pluggable callable.
Two scorers ship with the package: an oracle that maps the true 3D IoU
against ground truth through the piecewise-linear score target (used by
the acceptance suite), and a fixed random-projection scorer for plumbing
tests. Everything around the scorer follows the stage contract exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .decode import Detection
from .geometry import Box3D, iou_3d
from .grid import FeatureMap, bilinear, world_to_grid

# (dcx, dcy, dcz, dlog_w, dlog_l, dlog_h, dyaw)
Refinement = tuple[float, float, float, float, float, float, float]

ZERO_REFINEMENT: Refinement = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

# A scorer maps (detection, gathered 5F feature vector) to a confidence in
# [0, 1] and a box refinement.
Stage2Scorer = Callable[[Detection, np.ndarray], tuple[float, Refinement]]


@dataclass(frozen=True)
class RefinedDetection:
    """Second-stage output: refined detection (still carrying the first-stage
    score), the stage-two confidence, and the fused score."""

    base: Detection
    stage2_score: float
    fused_score: float
    refinement: Refinement

    def to_json_obj(self) -> dict:
        obj = self.base.to_json_obj()
        obj["stage2_score"] = float(self.stage2_score)
        obj["fused_score"] = float(self.fused_score)
        return obj


def surface_center_points(box: Box3D) -> np.ndarray:
    """BEV projections of the box center and its 4 side-face centers.

    Row order is fixed: [center, +l face, -l face, +w face, -w face].
    The top and bottom faces project onto the center and are not repeated.
    """
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = 0.5 * box.l, 0.5 * box.w
    return np.array(
        [
            (box.cx, box.cy),
            (box.cx + hl * c, box.cy + hl * s),
            (box.cx - hl * c, box.cy - hl * s),
            (box.cx - hw * s, box.cy + hw * c),
            (box.cx + hw * s, box.cy - hw * c),
        ]
    )


def gather_features(fmap: FeatureMap, box: Box3D) -> np.ndarray:
    """Bilinear samples at the 5 surface points, concatenated to 5*F values.

    Points outside the grid clamp to the border, so boxes at the range
    edge still produce a full feature vector.
    """
    parts = []
    for x, y in surface_center_points(box):
        gx, gy = world_to_grid(fmap.spec, x, y)
        parts.append(bilinear(fmap, gx, gy))
    return np.concatenate(parts)


def score_target(iou3d: float) -> float:
    """IoU-guided soft score label: min(1, max(0, 2*IoU - 0.5)).

    Zero at or below IoU 0.25, one at or above 0.75, linear between.
    """
    if not 0.0 <= iou3d <= 1.0:
        raise ValueError(f"iou must be in [0, 1], got {iou3d!r}")
    return min(1.0, max(0.0, 2.0 * iou3d - 0.5))


def fuse_score(first: float, second: float) -> float:
    """Geometric mean of the two stage confidences."""
    if not (0.0 <= first <= 1.0 and 0.0 <= second <= 1.0):
        raise ValueError("scores must be in [0, 1]")
    return math.sqrt(first * second)


def apply_refinement(det: Detection, refinement: Refinement) -> Detection:
    """Apply a box refinement: additive center and yaw deltas, multiplicative
    exp() size deltas. Class, score, and velocity are preserved."""
    dcx, dcy, dcz, dlw, dll, dlh, dyaw = refinement
    box = det.box
    new_box = Box3D(
        cx=box.cx + dcx,
        cy=box.cy + dcy,
        cz=box.cz + dcz,
        w=box.w * math.exp(dlw),
        l=box.l * math.exp(dll),
        h=box.h * math.exp(dlh),
        yaw=box.yaw + dyaw,
    )
    return replace(det, box=new_box)


class OracleIouScorer:
    """Scores a detection by its best 3D IoU against the ground-truth boxes,
    mapped through the soft score target. Ignores the feature vector and
    emits no refinement. Used to validate the surrounding stage logic."""

    def __init__(self, gt_boxes: Sequence[Box3D]):
        self.gt_boxes = list(gt_boxes)

    def __call__(self, det: Detection, features: np.ndarray) -> tuple[float, Refinement]:
        best = 0.0
        for gt in self.gt_boxes:
            best = max(best, iou_3d(det.box, gt))
        return score_target(best), ZERO_REFINEMENT


class RandomProjectionScorer:
    """Fixed random projection of the gathered features: a sigmoid score and
    a small tanh-squashed refinement. Deterministic for a given seed and
    feature size; exists to exercise the plumbing, not to be accurate."""

    def __init__(self, num_features: int, seed: int = 0, refinement_scale: float = 0.0):
        rng = np.random.default_rng(seed)
        self.score_weights = rng.normal(size=num_features) / math.sqrt(num_features)
        self.refine_weights = rng.normal(size=(7, num_features)) / math.sqrt(num_features)
        self.refinement_scale = refinement_scale

    def __call__(self, det: Detection, features: np.ndarray) -> tuple[float, Refinement]:
        if features.shape != self.score_weights.shape:
            raise ValueError(
                f"expected {self.score_weights.shape[0]} features, got {features.shape}"
            )
        score = 1.0 / (1.0 + math.exp(-float(self.score_weights @ features)))
        deltas = np.tanh(self.refine_weights @ features) * self.refinement_scale
        return score, tuple(float(d) for d in deltas)


def refine_detections(
    dets: Sequence[Detection],
    fmap: FeatureMap,
    scorer: Stage2Scorer,
) -> list[RefinedDetection]:
    """Run the second stage over a frame of detections.

    For each detection: gather the 5-point features, score and refine via
    the scorer, and fuse first- and second-stage confidences by geometric
    mean. Input order is preserved.
    """
    refined: list[RefinedDetection] = []
    for det in dets:
        features = gather_features(fmap, det.box)
        stage2, refinement = scorer(det, features)
        if not 0.0 <= stage2 <= 1.0:
            raise ValueError(f"scorer returned confidence outside [0, 1]: {stage2!r}")
        refined.append(
            RefinedDetection(
                base=apply_refinement(det, refinement),
                stage2_score=stage2,
                fused_score=fuse_score(det.score, stage2),
                refinement=tuple(refinement),
            )
        )
    return refined


def refined_frame_to_obj(frame_index: int, refined: Sequence[RefinedDetection]) -> dict:
    return {"frame_index": frame_index, "detections": [r.to_json_obj() for r in refined]}
