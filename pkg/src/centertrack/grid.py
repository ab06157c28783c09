"""Map-view discretization: world/grid coordinate mapping, dense feature
maps, and bilinear sampling.

One convention everywhere: world_to_grid is the affine map
gx = (x - x_min) / cell, the value of cell (i, j) lives at integer grid
coordinate (i, j), and a continuous coordinate g falls into cell
floor(g). Target rendering and detection decoding share this convention,
which is what makes the encode/decode round trip exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


class FeatureMapFormatError(Exception):
    """Raised when a feature-map container file is malformed."""


@dataclass(frozen=True)
class GridSpec:
    """Detection range and BEV cell size.

    num_cells_x (W) spans the x range and num_cells_y (L) the y range;
    both must equal round(range / cell).
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    cell: float
    num_cells_x: int
    num_cells_y: int

    def __post_init__(self) -> None:
        if not (self.cell > 0.0 and math.isfinite(self.cell)):
            raise ValueError(f"cell size must be positive, got {self.cell!r}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("grid range must be non-empty")
        if self.num_cells_x < 1 or self.num_cells_y < 1:
            raise ValueError("grid must have at least one cell per axis")
        if self.num_cells_x != round((self.x_max - self.x_min) / self.cell):
            raise ValueError("num_cells_x inconsistent with range and cell size")
        if self.num_cells_y != round((self.y_max - self.y_min) / self.cell):
            raise ValueError("num_cells_y inconsistent with range and cell size")

    @classmethod
    def from_range(
        cls, x_min: float, x_max: float, y_min: float, y_max: float, cell: float
    ) -> "GridSpec":
        return cls(
            x_min=x_min,
            x_max=x_max,
            y_min=y_min,
            y_max=y_max,
            cell=cell,
            num_cells_x=round((x_max - x_min) / cell),
            num_cells_y=round((y_max - y_min) / cell),
        )

    def to_json_obj(self) -> dict:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "y_min": self.y_min,
            "y_max": self.y_max,
            "cell": self.cell,
            "num_cells_x": self.num_cells_x,
            "num_cells_y": self.num_cells_y,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "GridSpec":
        return cls(
            x_min=float(obj["x_min"]),
            x_max=float(obj["x_max"]),
            y_min=float(obj["y_min"]),
            y_max=float(obj["y_max"]),
            cell=float(obj["cell"]),
            num_cells_x=int(obj["num_cells_x"]),
            num_cells_y=int(obj["num_cells_y"]),
        )


class FeatureMap:
    """Dense W x L x F map of finite float64 values over a GridSpec.

    Immutable after construction; reads are freely concurrent.
    """

    def __init__(self, spec: GridSpec, values: np.ndarray):
        arr = np.ascontiguousarray(values, dtype=np.float64)
        expected = (spec.num_cells_x, spec.num_cells_y)
        if arr.ndim != 3 or arr.shape[:2] != expected:
            raise ValueError(f"values must have shape {expected} + (F,), got {arr.shape}")
        if arr.shape[2] < 1:
            raise ValueError("feature map needs at least one channel")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature map values must be finite")
        arr.setflags(write=False)
        self.spec = spec
        self.values = arr

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def world_to_grid(spec: GridSpec, x: float, y: float) -> tuple[float, float]:
    """Continuous grid coordinates of a world point (may be out of range)."""
    return (x - spec.x_min) / spec.cell, (y - spec.y_min) / spec.cell


def grid_to_world(spec: GridSpec, gx: float, gy: float) -> tuple[float, float]:
    """World position of a continuous grid coordinate."""
    return spec.x_min + gx * spec.cell, spec.y_min + gy * spec.cell


def in_bounds(spec: GridSpec, gx: float, gy: float) -> bool:
    """True iff 0 <= gx < W and 0 <= gy < L."""
    return 0.0 <= gx < spec.num_cells_x and 0.0 <= gy < spec.num_cells_y


def cell_of(spec: GridSpec, gx: float, gy: float) -> tuple[int, int]:
    """Integer cell holding a continuous grid coordinate (floor binning)."""
    return int(math.floor(gx)), int(math.floor(gy))


def bilinear(fmap: FeatureMap, gx: float, gy: float) -> np.ndarray:
    """Bilinear blend of the 4 cell values around (gx, gy), per channel.

    Coordinates are clamped into [0, W-1] x [0, L-1] first, so queries just
    outside the range return the nearest border value. Integer coordinates
    return the cell value exactly.
    """
    if not (math.isfinite(gx) and math.isfinite(gy)):
        raise ValueError(f"bilinear coordinates must be finite, got ({gx!r}, {gy!r})")
    w, l = fmap.spec.num_cells_x, fmap.spec.num_cells_y
    gx = min(max(gx, 0.0), float(w - 1))
    gy = min(max(gy, 0.0), float(l - 1))

    x0 = min(int(math.floor(gx)), w - 2) if w > 1 else 0
    y0 = min(int(math.floor(gy)), l - 2) if l > 1 else 0
    tx = gx - x0
    ty = gy - y0

    v = fmap.values
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, l - 1)
    return (
        v[x0, y0] * (1.0 - tx) * (1.0 - ty)
        + v[x1, y0] * tx * (1.0 - ty)
        + v[x0, y1] * (1.0 - tx) * ty
        + v[x1, y1] * tx * ty
    )


# Feature-map container: one JSON header line, then raw little-endian
# float32 values in row-major (W, L, F) order.

_FILE_DTYPE = "<f4"


def save_feature_map(path, fmap: FeatureMap, extra: dict | None = None) -> None:
    """Write a feature map to the binary container format.

    Extra header fields (e.g. a channel layout) are merged into the JSON
    header; they must not collide with the geometry keys.
    """
    header = fmap.spec.to_json_obj()
    header["channels"] = fmap.channels
    header["layout"] = "row-major"
    header["dtype"] = _FILE_DTYPE
    if extra:
        collisions = set(extra) & set(header)
        if collisions:
            raise ValueError(f"extra header keys collide with base keys: {sorted(collisions)}")
        header.update(extra)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(fmap.values.astype(_FILE_DTYPE).tobytes(order="C"))


def load_feature_map(path) -> tuple[FeatureMap, dict]:
    """Read a feature map container; returns (map, full header dict)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FeatureMapFormatError(f"{path}: bad header line: {exc}") from exc
    try:
        spec = GridSpec.from_json_obj(header)
        channels = int(header["channels"])
        if header.get("layout") != "row-major" or header.get("dtype") != _FILE_DTYPE:
            raise FeatureMapFormatError(f"{path}: unsupported layout or dtype")
    except (KeyError, TypeError, ValueError) as exc:
        raise FeatureMapFormatError(f"{path}: bad header: {exc}") from exc
    expected_bytes = spec.num_cells_x * spec.num_cells_y * channels * 4
    if len(payload) != expected_bytes:
        raise FeatureMapFormatError(
            f"{path}: expected {expected_bytes} payload bytes, got {len(payload)}"
        )
    values = np.frombuffer(payload, dtype=_FILE_DTYPE).astype(np.float64)
    values = values.reshape(spec.num_cells_x, spec.num_cells_y, channels)
    return FeatureMap(spec, values), header
