"""Shared fixtures and scene builders for the test suite."""

from __future__ import annotations

import math

import numpy as np
import pytest

from centertrack.geometry import Box3D
from centertrack.grid import GridSpec
from centertrack.targets import AnnotatedObject


@pytest.fixture
def spec() -> GridSpec:
    # 128 x 128 cells at 0.8 m: big enough to be realistic, small enough
    # to keep rendering fast.
    return GridSpec.from_range(-51.2, 51.2, -51.2, 51.2, 0.8)


def random_box(rng: np.random.Generator, center_range: float = 40.0) -> Box3D:
    return Box3D(
        cx=float(rng.uniform(-center_range, center_range)),
        cy=float(rng.uniform(-center_range, center_range)),
        cz=float(rng.uniform(0.2, 2.0)),
        w=float(rng.uniform(0.5, 4.0)),
        l=float(rng.uniform(0.5, 10.0)),
        h=float(rng.uniform(0.5, 3.0)),
        yaw=float(rng.uniform(-math.pi, math.pi)),
    )


def random_scene(
    rng: np.random.Generator,
    spec: GridSpec,
    num_objects: int,
    num_classes: int,
    min_separation_cells: float = 3.0,
    margin: float = 4.0,
) -> list[AnnotatedObject]:
    """Random in-range objects with pairwise center distance of at least
    min_separation_cells grid cells (rejection sampling)."""
    min_dist = min_separation_cells * spec.cell
    centers: list[tuple[float, float]] = []
    objects: list[AnnotatedObject] = []
    attempts = 0
    while len(objects) < num_objects:
        attempts += 1
        if attempts > 10000:
            raise RuntimeError("could not place objects with the requested separation")
        cx = float(rng.uniform(spec.x_min + margin, spec.x_max - margin))
        cy = float(rng.uniform(spec.y_min + margin, spec.y_max - margin))
        if any(math.hypot(cx - px, cy - py) < min_dist for px, py in centers):
            continue
        centers.append((cx, cy))
        objects.append(
            AnnotatedObject(
                box=Box3D(
                    cx=cx,
                    cy=cy,
                    cz=float(rng.uniform(0.2, 2.0)),
                    w=float(rng.uniform(0.6, 3.0)),
                    l=float(rng.uniform(0.8, 8.0)),
                    h=float(rng.uniform(0.8, 3.0)),
                    yaw=float(rng.uniform(-math.pi, math.pi)),
                ),
                class_id=int(rng.integers(0, num_classes)),
                velocity=(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))),
                object_id=len(objects),
            )
        )
    return objects
