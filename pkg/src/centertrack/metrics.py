"""Detection and tracking evaluation: center-distance average precision
and CLEAR-MOT (MOTA, MOTP, FP, FN, identity switches).

Detections match ground truth by BEV center distance under a set of
distance thresholds rather than box overlap. AP integrates the
interpolated precision envelope over recall. CLEAR-MOT carries matched
correspondences across frames and resolves the remainder by optimal
minimum-distance assignment, implemented twice (exhaustive for small
frames, Hungarian above) so the two paths can cross-check each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .decode import Detection
from .targets import AnnotatedObject
from .tracker import Track

DEFAULT_DIST_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)

# Largest frame size handled by the exhaustive assignment path.
EXHAUSTIVE_LIMIT = 8

_BIG_COST = 1e9


@dataclass
class PrCurve:
    """Precision/recall samples in descending score order, one per detection."""

    recalls: np.ndarray
    precisions: np.ndarray
    scores: np.ndarray


@dataclass
class DetectionEvalResult:
    """Per-(class, threshold) APs and their arithmetic mean. Classes with no
    ground truth are excluded from the mean and listed separately."""

    ap: dict[tuple[int, float], float]
    mean_ap: float | None
    pr_curves: dict[tuple[int, float], PrCurve]
    classes_without_gt: list[int] = field(default_factory=list)


@dataclass
class MotResult:
    mota: float | None
    motp: float | None
    fp: int
    fn: int
    ids: int
    num_gt: int
    num_matches: int
    per_class: dict[int, "MotResult"] = field(default_factory=dict)


def _match_frame_dets(
    det_entries: list[tuple[float, int, float, float]],
    gt_centers: dict[int, list[tuple[float, float]]],
    dist_threshold: float,
) -> np.ndarray:
    """Greedy TP/FP flags for one class, detections in descending score order.

    Each detection matches the closest still-unmatched ground truth of its
    frame within the threshold.
    """
    matched: dict[int, set[int]] = {f: set() for f in gt_centers}
    tp = np.zeros(len(det_entries), dtype=bool)
    for idx, (_, frame, x, y) in enumerate(det_entries):
        candidates = gt_centers.get(frame, [])
        best_j = -1
        best_d = dist_threshold
        for j, (gx, gy) in enumerate(candidates):
            if j in matched[frame]:
                continue
            d = math.hypot(x - gx, y - gy)
            if d <= best_d:
                # Strict improvement keeps the first (lowest-index) GT on ties.
                if best_j < 0 or d < best_d:
                    best_j, best_d = j, d
        if best_j >= 0:
            matched[frame].add(best_j)
            tp[idx] = True
    return tp


def detection_ap(
    det_frames: Sequence[Sequence[Detection]],
    gt_frames: Sequence[Sequence[AnnotatedObject]],
    class_id: int,
    dist_threshold: float,
    pr_out: dict | None = None,
) -> float | None:
    """Average precision for one class at one center-distance threshold.

    Detections are ranked by score globally across frames; matching is
    greedy, closest unmatched ground truth first. AP is the integral of the
    precision envelope (max precision at recall >= r) over recall. Returns
    None when the class has no ground truth.
    """
    if len(det_frames) != len(gt_frames):
        raise ValueError("detection and ground-truth frame counts differ")
    gt_centers = {
        f: [(o.box.cx, o.box.cy) for o in objs if o.class_id == class_id]
        for f, objs in enumerate(gt_frames)
    }
    num_gt = sum(len(v) for v in gt_centers.values())
    if num_gt == 0:
        return None

    entries: list[tuple[float, int, float, float]] = []
    for f, dets in enumerate(det_frames):
        for d in dets:
            if d.class_id == class_id:
                entries.append((d.score, f, d.box.cx, d.box.cy))
    # Descending score; ties resolved by frame then insertion order (stable).
    entries.sort(key=lambda e: -e[0])

    if not entries:
        if pr_out is not None:
            pr_out["curve"] = PrCurve(np.zeros(0), np.zeros(0), np.zeros(0))
        return 0.0

    tp = _match_frame_dets(entries, gt_centers, dist_threshold)
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(~tp)
    precision = cum_tp / (cum_tp + cum_fp)
    recall = cum_tp / num_gt

    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_recall = 0.0
    for i in range(len(entries)):
        if tp[i]:
            ap += (recall[i] - prev_recall) * envelope[i]
            prev_recall = recall[i]

    if pr_out is not None:
        pr_out["curve"] = PrCurve(recall, precision, np.array([e[0] for e in entries]))
    return float(ap)


def evaluate_detections(
    det_frames: Sequence[Sequence[Detection]],
    gt_frames: Sequence[Sequence[AnnotatedObject]],
    num_classes: int,
    dist_thresholds: Sequence[float] = DEFAULT_DIST_THRESHOLDS,
) -> DetectionEvalResult:
    """AP per (class, threshold) and the mean over all defined pairs."""
    ap: dict[tuple[int, float], float] = {}
    curves: dict[tuple[int, float], PrCurve] = {}
    missing: list[int] = []
    for class_id in range(num_classes):
        class_missing = False
        for thr in dist_thresholds:
            out: dict = {}
            value = detection_ap(det_frames, gt_frames, class_id, thr, pr_out=out)
            if value is None:
                class_missing = True
                continue
            ap[(class_id, thr)] = value
            if "curve" in out:
                curves[(class_id, thr)] = out["curve"]
        if class_missing:
            missing.append(class_id)
    mean_ap = float(np.mean(list(ap.values()))) if ap else None
    return DetectionEvalResult(ap=ap, mean_ap=mean_ap, pr_curves=curves, classes_without_gt=missing)


def _assign_exhaustive(dists: np.ndarray, dist_threshold: float) -> list[tuple[int, int]]:
    """Maximum-cardinality minimum-distance matching by enumeration.

    Feasible pairs are those within the threshold. Ties between equal-cost
    maximal matchings resolve to the lexicographically smallest pair list.
    """
    n, m = dists.shape
    feasible = [[j for j in range(m) if dists[i, j] <= dist_threshold] for i in range(n)]

    best: tuple[int, float, list[tuple[int, int]]] | None = None

    def recurse(i: int, used: set[int], pairs: list[tuple[int, int]], cost: float) -> None:
        nonlocal best
        # Bound: matching every remaining row still cannot reach best cardinality.
        if best is not None and len(pairs) + (n - i) < best[0]:
            return
        if i == n:
            key = (-len(pairs), cost, pairs)
            if best is None or key < (-best[0], best[1], best[2]):
                best = (len(pairs), cost, list(pairs))
            return
        for j in feasible[i]:
            if j in used:
                continue
            used.add(j)
            pairs.append((i, j))
            recurse(i + 1, used, pairs, cost + dists[i, j])
            pairs.pop()
            used.remove(j)
        recurse(i + 1, used, pairs, cost)  # leave row i unmatched

    recurse(0, set(), [], 0.0)
    assert best is not None
    return best[2]


def _assign_hungarian(dists: np.ndarray, dist_threshold: float) -> list[tuple[int, int]]:
    """Maximum-cardinality minimum-distance matching via the Hungarian
    algorithm with big-cost padding for infeasible pairs."""
    cost = np.where(dists <= dist_threshold, dists, _BIG_COST)
    rows, cols = linear_sum_assignment(cost)
    return sorted((int(i), int(j)) for i, j in zip(rows, cols) if dists[i, j] <= dist_threshold)


def min_distance_assignment(
    dists: np.ndarray, dist_threshold: float, method: str = "auto"
) -> list[tuple[int, int]]:
    """Optimal assignment on the within-threshold bipartite graph.

    method: "auto" uses enumeration for small frames and Hungarian above;
    "exhaustive" and "hungarian" force one path (both are exposed so tests
    can check them against each other).
    """
    if dists.size == 0:
        return []
    if method == "auto":
        small = max(dists.shape) <= EXHAUSTIVE_LIMIT
        method = "exhaustive" if small else "hungarian"
    if method == "exhaustive":
        return _assign_exhaustive(dists, dist_threshold)
    if method == "hungarian":
        return _assign_hungarian(dists, dist_threshold)
    raise ValueError(f"unknown assignment method {method!r}")


def _clear_mot_single(
    pred_frames: Sequence[Sequence[Track]],
    gt_frames: Sequence[Sequence[AnnotatedObject]],
    dist_threshold: float,
    method: str,
) -> MotResult:
    fp = fn = ids = 0
    num_gt = 0
    dist_sum = 0.0
    num_matches = 0
    prev_pair: dict[int, int] = {}  # gt id -> pred id matched in previous frame
    last_pair: dict[int, int] = {}  # gt id -> last matched pred id, across gaps

    for preds, gts in zip(pred_frames, gt_frames):
        num_gt += len(gts)
        gt_ids = [g.object_id for g in gts]
        pred_ids = [p.track_id for p in preds]
        gt_pos = {g.object_id: (g.box.cx, g.box.cy) for g in gts}
        pred_pos = {p.track_id: (p.center[0], p.center[1]) for p in preds}
        gt_cls = {g.object_id: g.class_id for g in gts}
        pred_cls = {p.track_id: p.class_id for p in preds}

        matches: dict[int, int] = {}
        # Keep still-valid correspondences from the previous frame.
        for gid, pid in prev_pair.items():
            if gid not in gt_pos or pid not in pred_pos:
                continue
            if gt_cls[gid] != pred_cls[pid]:
                continue
            d = math.dist(gt_pos[gid], pred_pos[pid])
            if d <= dist_threshold:
                matches[gid] = pid
                dist_sum += d
                num_matches += 1

        taken_preds = set(matches.values())
        free_gts = [gid for gid in gt_ids if gid not in matches]
        free_preds = [pid for pid in pred_ids if pid not in taken_preds]

        # Class-wise optimal assignment of the remainder.
        for cls in sorted({gt_cls[g] for g in free_gts} | {pred_cls[p] for p in free_preds}):
            cls_gts = [g for g in free_gts if gt_cls[g] == cls]
            cls_preds = [p for p in free_preds if pred_cls[p] == cls]
            if not cls_gts or not cls_preds:
                continue
            dists = np.array(
                [[math.dist(gt_pos[g], pred_pos[p]) for p in cls_preds] for g in cls_gts]
            )
            for gi, pj in min_distance_assignment(dists, dist_threshold, method):
                gid, pid = cls_gts[gi], cls_preds[pj]
                matches[gid] = pid
                dist_sum += float(dists[gi, pj])
                num_matches += 1

        for gid, pid in matches.items():
            if gid in last_pair and last_pair[gid] != pid:
                ids += 1
            last_pair[gid] = pid

        fp += len(preds) - len(matches)
        fn += len(gts) - len(matches)
        prev_pair = matches

    mota = 1.0 - (fp + fn + ids) / num_gt if num_gt > 0 else None
    motp = dist_sum / num_matches if num_matches > 0 else None
    return MotResult(
        mota=mota, motp=motp, fp=fp, fn=fn, ids=ids, num_gt=num_gt, num_matches=num_matches
    )


def clear_mot(
    pred_frames: Sequence[Sequence[Track]],
    gt_frames: Sequence[Sequence[AnnotatedObject]],
    dist_threshold: float,
    method: str = "auto",
    with_per_class: bool = True,
) -> MotResult:
    """CLEAR-MOT over aligned frames of predictions and ground truth.

    Correspondences matched in the previous frame persist while both ends
    exist within the threshold; the remainder is matched class-wise by
    optimal minimum-distance assignment. An identity switch is a ground
    truth whose matched prediction id differs from the last one it was
    matched to (gaps included). MOTA = 1 - (FP + FN + IDS) / GT and is
    None when there is no ground truth at all; MOTP is the mean matched
    distance.
    """
    if len(pred_frames) != len(gt_frames):
        raise ValueError("prediction and ground-truth frame counts differ")
    result = _clear_mot_single(pred_frames, gt_frames, dist_threshold, method)
    if with_per_class:
        classes = sorted(
            {g.class_id for gts in gt_frames for g in gts}
            | {p.class_id for preds in pred_frames for p in preds}
        )
        for cls in classes:
            cls_preds = [[p for p in preds if p.class_id == cls] for preds in pred_frames]
            cls_gts = [[g for g in gts if g.class_id == cls] for gts in gt_frames]
            result.per_class[cls] = _clear_mot_single(cls_preds, cls_gts, dist_threshold, method)
    return result
