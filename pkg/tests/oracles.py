"""Independent reference implementations used to check the package.

Everything here deliberately avoids the code paths under test: IoU by
stratified point sampling instead of polygon clipping, peak finding by
nested loops instead of vectorized shifts, the Gaussian radius by
bisection on the overlap constraints instead of quadratic roots, and
tracking evaluation by exhaustive per-frame enumeration.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def box_corners(cx, cy, w, l, yaw):
    """Footprint corners computed from scratch (not via the package)."""
    c, s = math.cos(yaw), math.sin(yaw)
    pts = []
    for lx, ly in ((l / 2, w / 2), (-l / 2, w / 2), (-l / 2, -w / 2), (l / 2, -w / 2)):
        pts.append((cx + lx * c - ly * s, cy + lx * s + ly * c))
    return pts


def points_in_box(xs, ys, cx, cy, w, l, yaw):
    """Boolean mask of points inside a rotated footprint (boundary counts)."""
    c, s = math.cos(yaw), math.sin(yaw)
    dx = xs - cx
    dy = ys - cy
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    return (np.abs(lx) <= l / 2) & (np.abs(ly) <= w / 2)


def monte_carlo_bev_iou(box_a, box_b, grid_side: int, rng: np.random.Generator) -> float:
    """BEV IoU by jittered stratified sampling over the union's bounding box.

    grid_side**2 points, one per jittered grid cell. Stratification keeps
    the estimator error well below 1e-3 at grid_side >= 300 because only
    boundary-crossing cells contribute variance.
    """
    corners = np.array(
        box_corners(box_a.cx, box_a.cy, box_a.w, box_a.l, box_a.yaw)
        + box_corners(box_b.cx, box_b.cy, box_b.w, box_b.l, box_b.yaw)
    )
    x_min, y_min = corners.min(axis=0)
    x_max, y_max = corners.max(axis=0)

    m = grid_side
    jitter_x = rng.random((m, m))
    jitter_y = rng.random((m, m))
    gx = (np.arange(m)[:, None] + jitter_x) / m
    gy = (np.arange(m)[None, :] + jitter_y) / m
    xs = (x_min + gx * (x_max - x_min)).ravel()
    ys = (y_min + gy * (y_max - y_min)).ravel()

    in_a = points_in_box(xs, ys, box_a.cx, box_a.cy, box_a.w, box_a.l, box_a.yaw)
    in_b = points_in_box(xs, ys, box_b.cx, box_b.cy, box_b.w, box_b.l, box_b.yaw)
    union = int(np.count_nonzero(in_a | in_b))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(in_a & in_b)) / union


def shoelace_area(points) -> float:
    total = 0.0
    n = len(points)
    for i in range(n):
        x0, y0 = points[i]
        x1, y1 = points[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return abs(total) / 2.0


def _bisect_max_radius(iou_fn, min_overlap: float, hi: float) -> float:
    """Largest r with iou_fn(r) >= min_overlap; iou_fn decreases from 1."""
    assert iou_fn(0.0) >= min_overlap
    while iou_fn(hi) >= min_overlap:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if iou_fn(mid) >= min_overlap:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bisection_gaussian_radius(l_cells: float, w_cells: float, min_overlap: float) -> float:
    """Gaussian radius by bisection on the three overlap constraints:
    same-size diagonal shift, symmetric shrink, symmetric grow. The
    binding constraint is the minimum; the result clamps below at 2."""
    a, b = l_cells, w_cells

    def iou_shift(r):
        if r >= min(a, b):
            return 0.0
        inter = (a - r) * (b - r)
        return inter / (2.0 * a * b - inter)

    def iou_shrink(r):
        if 2.0 * r >= min(a, b):
            return 0.0
        return (a - 2.0 * r) * (b - 2.0 * r) / (a * b)

    def iou_grow(r):
        return a * b / ((a + 2.0 * r) * (b + 2.0 * r))

    radius = min(
        _bisect_max_radius(iou_shift, min_overlap, min(a, b)),
        _bisect_max_radius(iou_shrink, min_overlap, min(a, b) / 2.0),
        _bisect_max_radius(iou_grow, min_overlap, max(a, b)),
    )
    return max(radius, 2.0)


def brute_force_peaks(heatmap: np.ndarray, score_floor: float):
    """All strict 8-neighbor local maxima, by direct nested loops."""
    w, l, k = heatmap.shape
    peaks = []
    for ch in range(k):
        for ix in range(w):
            for iy in range(l):
                v = heatmap[ix, iy, ch]
                if v < score_floor:
                    continue
                is_max = True
                for dx in (-1, 0, 1):
                    for dy in (-1, 0, 1):
                        if dx == 0 and dy == 0:
                            continue
                        nx, ny = ix + dx, iy + dy
                        if 0 <= nx < w and 0 <= ny < l and heatmap[nx, ny, ch] >= v:
                            is_max = False
                            break
                    if not is_max:
                        break
                if is_max:
                    peaks.append((ix, iy, ch, v))
    return peaks


def _best_frame_assignment(gts, preds, threshold):
    """Exhaustive max-cardinality min-distance matching for one frame.

    gts and preds are lists of (id, class_id, x, y). Returns a dict
    gt_id -> pred_id. Enumerates gt subsets and pred permutations, so only
    suitable for small frames.
    """
    n, m = len(gts), len(preds)

    def dist(g, p):
        return math.hypot(g[2] - p[2], g[3] - p[3])

    best_pairs: dict = {}
    best_cost = math.inf
    for k in range(min(n, m), -1, -1):
        found = False
        for gt_idx in itertools.combinations(range(n), k):
            for pred_idx in itertools.permutations(range(m), k):
                ok = True
                cost = 0.0
                for gi, pj in zip(gt_idx, pred_idx):
                    if gts[gi][1] != preds[pj][1]:
                        ok = False
                        break
                    d = dist(gts[gi], preds[pj])
                    if d > threshold:
                        ok = False
                        break
                    cost += d
                if not ok:
                    continue
                found = True
                if cost < best_cost:
                    best_cost = cost
                    best_pairs = {gts[gi][0]: preds[pj][0] for gi, pj in zip(gt_idx, pred_idx)}
        if found:
            break
    return best_pairs


def brute_force_clear_mot(pred_frames, gt_frames, threshold):
    """Independent CLEAR-MOT: frames of (id, class_id, x, y) tuples.

    Returns (mota, motp, fp, fn, ids). Carries previous-frame pairs
    forward when both ends persist within the threshold, matches the rest
    exhaustively, and counts an identity switch whenever a ground truth's
    matched prediction id differs from the last one it had.
    """
    fp = fn = ids = 0
    num_gt = 0
    dist_sum = 0.0
    matches_n = 0
    prev: dict = {}
    last: dict = {}
    for preds, gts in zip(pred_frames, gt_frames):
        num_gt += len(gts)
        gt_by_id = {g[0]: g for g in gts}
        pred_by_id = {p[0]: p for p in preds}

        kept = {}
        for gid, pid in prev.items():
            if gid in gt_by_id and pid in pred_by_id:
                g, p = gt_by_id[gid], pred_by_id[pid]
                d = math.hypot(g[2] - p[2], g[3] - p[3])
                if g[1] == p[1] and d <= threshold:
                    kept[gid] = pid
                    dist_sum += d
                    matches_n += 1

        rest_gts = [g for g in gts if g[0] not in kept]
        taken = set(kept.values())
        rest_preds = [p for p in preds if p[0] not in taken]
        extra = _best_frame_assignment(rest_gts, rest_preds, threshold)
        for gid, pid in extra.items():
            g, p = gt_by_id[gid], pred_by_id[pid]
            dist_sum += math.hypot(g[2] - p[2], g[3] - p[3])
            matches_n += 1
        kept.update(extra)

        for gid, pid in kept.items():
            if gid in last and last[gid] != pid:
                ids += 1
            last[gid] = pid

        fp += len(preds) - len(kept)
        fn += len(gts) - len(kept)
        prev = kept

    mota = 1.0 - (fp + fn + ids) / num_gt if num_gt else None
    motp = dist_sum / matches_n if matches_n else None
    return mota, motp, fp, fn, ids


def finite_difference_gradient(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + step
        up = fn(x)
        flat_x[i] = orig - step
        down = fn(x)
        flat_x[i] = orig
        flat_g[i] = (up - down) / (2.0 * step)
    return grad
