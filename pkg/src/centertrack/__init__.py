"""Center-based BEV detection and tracking: target rendering, decoding,
second-stage rescoring, greedy velocity tracking, and evaluation, with a
synthetic scene simulator standing in for real sensor data.
"""

__version__ = "0.1.0"

from .decode import Detection
from .geometry import Box3D, BevPolygon, bev_iou, center_distance_bev, iou_3d, rotated_nms
from .grid import FeatureMap, GridSpec, bilinear, grid_to_world, in_bounds, world_to_grid
from .refine import RefinedDetection
from .targets import AnnotatedObject, TargetMaps, gaussian_radius, render_targets
from .tracker import Track, Tracker, TrackerConfig

__all__ = [
    "__version__",
    "AnnotatedObject",
    "BevPolygon",
    "Box3D",
    "Detection",
    "FeatureMap",
    "GridSpec",
    "RefinedDetection",
    "TargetMaps",
    "Track",
    "Tracker",
    "TrackerConfig",
    "bev_iou",
    "bilinear",
    "center_distance_bev",
    "gaussian_radius",
    "grid_to_world",
    "in_bounds",
    "iou_3d",
    "render_targets",
    "rotated_nms",
    "world_to_grid",
]
