"""Rotated 3D boxes in bird's-eye view: footprints, IoU, NMS.

Boxes are yaw-rotated cuboids over the ground plane. The BEV footprint is
the l x w rectangle rotated by yaw about the box center, with l along the
heading axis and w across it. Overlap areas come from Sutherland-Hodgman
convex clipping plus the shoelace formula, so every IoU here is exact up
to floating point (no rasterization).

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

TWO_PI = 2.0 * math.pi

# Intersection areas at or below this count as measure-zero contact
# (shared edge or vertex) and clamp to zero overlap.
DEGENERATE_AREA = 1e-12

BOX_JSON_FIELDS = ("cx", "cy", "cz", "w", "l", "h", "yaw")


def wrap_angle(angle: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    wrapped = (angle + math.pi) % TWO_PI - math.pi
    # The modulo can land exactly on pi for inputs like -pi - eps.
    return -math.pi if wrapped == math.pi else wrapped


@dataclass(frozen=True)
class Box3D:
    """Yaw-rotated 3D box: BEV center (cx, cy), center height cz above the
    object's ground plane, size (w, l, h), heading yaw in radians.

    Sizes must be strictly positive; yaw is wrapped to [-pi, pi) at
    construction so equal orientations compare equal.
    """

    cx: float
    cy: float
    cz: float
    w: float
    l: float
    h: float
    yaw: float

    def __post_init__(self) -> None:
        for name in ("w", "l", "h"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"box {name} must be positive and finite, got {value!r}")
        for name in ("cx", "cy", "cz", "yaw"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"box {name} must be finite")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def bottom(self) -> float:
        return self.cz - 0.5 * self.h

    @property
    def top(self) -> float:
        return self.cz + 0.5 * self.h

    @property
    def volume(self) -> float:
        return self.w * self.l * self.h

    def to_json_obj(self) -> dict:
        return {name: float(getattr(self, name)) for name in BOX_JSON_FIELDS}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Box3D":
        return cls(**{name: float(obj[name]) for name in BOX_JSON_FIELDS})


@dataclass(frozen=True)
class BevPolygon:
    """Convex BEV footprint: 4 (x, y) vertices in counter-clockwise order."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.vertices) != 4:
            raise ValueError("footprint polygon must have exactly 4 vertices")
        if signed_area(self.vertices) <= 0.0:
            raise ValueError("footprint vertices must be counter-clockwise")

    @property
    def area(self) -> float:
        return signed_area(self.vertices)


def signed_area(vertices: Sequence[tuple[float, float]]) -> float:
    """Shoelace signed area; positive for counter-clockwise vertex order."""
    total = 0.0
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        total += x0 * y1 - x1 * y0
    return 0.5 * total


def box_to_bev_polygon(box: Box3D) -> BevPolygon:
    """Project a box footprint to its 4 BEV corners (counter-clockwise)."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = 0.5 * box.l, 0.5 * box.w
    # Local CCW corners, length axis first.
    local = ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    return BevPolygon(
        tuple((box.cx + x * c - y * s, box.cy + x * s + y * c) for x, y in local)
    )


def _clip_halfplane(
    polygon: list[tuple[float, float]],
    p1: tuple[float, float],
    p2: tuple[float, float],
) -> list[tuple[float, float]]:
    """Keep the part of a convex CCW polygon left of the directed line p1->p2.

    Boundary points (cross product 0) count as inside, so tangent contact
    survives clipping and is removed later by the degenerate-area clamp.
    """
    ex, ey = p2[0] - p1[0], p2[1] - p1[1]
    result: list[tuple[float, float]] = []
    n = len(polygon)
    for i in range(n):
        s = polygon[i]
        t = polygon[(i + 1) % n]
        ds = ex * (s[1] - p1[1]) - ey * (s[0] - p1[0])
        dt = ex * (t[1] - p1[1]) - ey * (t[0] - p1[0])
        if ds >= 0.0:
            result.append(s)
        if (ds > 0.0 > dt) or (dt > 0.0 > ds):
            frac = ds / (ds - dt)
            result.append((s[0] + frac * (t[0] - s[0]), s[1] + frac * (t[1] - s[1])))
    return result


def intersection_area(a: BevPolygon, b: BevPolygon) -> float:
    """Exact overlap area of two convex CCW polygons via sequential clipping."""
    poly = list(a.vertices)
    verts = b.vertices
    for i in range(len(verts)):
        poly = _clip_halfplane(poly, verts[i], verts[(i + 1) % len(verts)])
        if len(poly) < 3:
            return 0.0
    return max(signed_area(poly), 0.0)


def bev_iou(a: Box3D, b: Box3D) -> float:
    """Intersection-over-union of the rotated BEV footprints, in [0, 1]."""
    # Cheap reject: footprints cannot overlap beyond their circumcircles.
    r_sum = 0.5 * (math.hypot(a.l, a.w) + math.hypot(b.l, b.w))
    if math.hypot(a.cx - b.cx, a.cy - b.cy) > r_sum:
        return 0.0
    inter = intersection_area(box_to_bev_polygon(a), box_to_bev_polygon(b))
    if inter <= DEGENERATE_AREA:
        return 0.0
    union = a.w * a.l + b.w * b.l - inter
    return min(inter / union, 1.0)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """3D IoU for yaw-only boxes: BEV overlap area times vertical overlap,
    over the union of volumes. In [0, 1] and symmetric."""
    dz = min(a.top, b.top) - max(a.bottom, b.bottom)
    if dz <= 0.0:
        return 0.0
    inter_area = intersection_area(box_to_bev_polygon(a), box_to_bev_polygon(b))
    if inter_area <= DEGENERATE_AREA:
        return 0.0
    inter_vol = inter_area * dz
    union = a.volume + b.volume - inter_vol
    return min(inter_vol / union, 1.0)


def center_distance_bev(a: Box3D, b: Box3D) -> float:
    """Euclidean distance between the BEV centers, meters."""
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


def nms_keep_indices(
    boxes: Sequence[Box3D],
    scores: Sequence[float],
    iou_threshold: float,
    class_ids: Sequence[int] | None = None,
) -> list[int]:
    """Greedy rotated NMS; returns kept indices in descending score order.

    A box survives iff its BEV IoU with every previously kept box of the
    same class is strictly below the threshold. Boxes of different classes
    never suppress each other. Score ties keep input order.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold!r}")
    if len(boxes) != len(scores):
        raise ValueError("boxes and scores must have equal length")
    for s in scores:
        if not math.isfinite(s):
            raise ValueError("scores must be finite")
    if class_ids is not None and len(class_ids) != len(boxes):
        raise ValueError("class_ids must match boxes length")

    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    kept: list[int] = []
    for i in order:
        suppressed = False
        for j in kept:
            if class_ids is not None and class_ids[i] != class_ids[j]:
                continue
            if bev_iou(boxes[i], boxes[j]) >= iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
    return kept


def rotated_nms(
    dets: Sequence[tuple[Box3D, float]],
    iou_threshold: float,
    class_ids: Sequence[int] | None = None,
) -> list[tuple[Box3D, float]]:
    """Greedy rotated NMS over (box, score) pairs; see nms_keep_indices."""
    boxes = [box for box, _ in dets]
    scores = [score for _, score in dets]
    return [dets[i] for i in nms_keep_indices(boxes, scores, iou_threshold, class_ids)]
