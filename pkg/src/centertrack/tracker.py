"""Greedy velocity-compensated center tracking.

Each detection is projected back to the previous frame by subtracting its
predicted per-frame velocity and matched, in descending confidence order,
to the nearest unmatched track of the same class within a class-wise
distance threshold. Matched detections inherit the track id; unmatched
detections mint fresh ids. Unmatched tracks coast along their last
velocity for up to max_age frames before being dropped.

A tracker instance owns one stream of frames and must be stepped
sequentially; distinct instances are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .decode import Detection
from .geometry import Box3D

DEFAULT_MAX_AGE = 3
DEFAULT_MATCH_THRESHOLD = 4.0


@dataclass(frozen=True)
class Track:
    """Tracked object state: BEV center, per-frame velocity, class, the
    latest box-and-score payload, a session-unique id, and the number of
    consecutive frames without a matched detection (0 = active)."""

    center: tuple[float, float]
    velocity: tuple[float, float]
    class_id: int
    box: Box3D
    score: float
    track_id: int
    age: int

    def to_json_obj(self) -> dict:
        return {
            "id": self.track_id,
            "class_id": self.class_id,
            "box": self.box.to_json_obj(),
            "velocity": [float(self.velocity[0]), float(self.velocity[1])],
            "score": float(self.score),
            "age": self.age,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Track":
        box = Box3D.from_json_obj(obj["box"])
        return cls(
            center=(box.cx, box.cy),
            velocity=(float(obj["velocity"][0]), float(obj["velocity"][1])),
            class_id=int(obj["class_id"]),
            box=box,
            score=float(obj["score"]),
            track_id=int(obj["id"]),
            age=int(obj["age"]),
        )


@dataclass(frozen=True)
class TrackerConfig:
    """Per-class matching distance thresholds (meters) and the maximum
    number of frames a track may coast unmatched."""

    class_thresholds: Mapping[int, float] | None = None
    default_threshold: float = DEFAULT_MATCH_THRESHOLD
    max_age: int = DEFAULT_MAX_AGE

    def __post_init__(self) -> None:
        if self.max_age < 0:
            raise ValueError(f"max_age must be >= 0, got {self.max_age}")
        if self.default_threshold <= 0.0:
            raise ValueError("default_threshold must be positive")
        if self.class_thresholds is not None:
            for cid, tau in self.class_thresholds.items():
                if tau <= 0.0:
                    raise ValueError(f"threshold for class {cid} must be positive")

    def threshold_for(self, class_id: int) -> float:
        if self.class_thresholds is not None and class_id in self.class_thresholds:
            return self.class_thresholds[class_id]
        return self.default_threshold


def cost_matrix(dets: Sequence[Detection], tracks: Sequence[Track]) -> np.ndarray:
    """Back-projected distances: entry (i, j) is the distance between
    detection i's center minus its velocity and track j's center.
    Class-mismatched pairs are +inf so they can never match."""
    costs = np.full((len(dets), len(tracks)), np.inf)
    if not dets or not tracks:
        return costs
    back = np.array(
        [
            (d.box.cx - d.velocity[0], d.box.cy - d.velocity[1])
            for d in dets
        ]
    )
    centers = np.array([t.center for t in tracks])
    diff = back[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    det_cls = np.array([d.class_id for d in dets])
    trk_cls = np.array([t.class_id for t in tracks])
    same = det_cls[:, None] == trk_cls[None, :]
    costs[same] = dist[same]
    return costs


class Tracker:
    """Single-stream tracking session. Ids start at 1, increase
    monotonically, and are never reused."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg if cfg is not None else TrackerConfig()
        self.tracks: list[Track] = []
        self._next_id = 1

    def step(self, dets: Sequence[Detection]) -> list[Track]:
        """Advance one frame and return the full new track set.

        Detections are processed in descending confidence (re-sorted
        defensively, ties keeping input order). Each takes the nearest
        unmatched previous track; argmin ties go to the lowest track
        index. Matched and new tracks come first in detection order,
        then surviving coasted tracks.
        """
        order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
        costs = cost_matrix([dets[i] for i in order], self.tracks)

        new_tracks: list[Track] = []
        matched: set[int] = set()
        for row, i in enumerate(order):
            det = dets[i]
            track_id = None
            if self.tracks:
                cost_row = costs[row].copy()
                if matched:
                    cost_row[list(matched)] = np.inf
                j = int(np.argmin(cost_row))
                if cost_row[j] <= self.cfg.threshold_for(det.class_id):
                    track_id = self.tracks[j].track_id
                    matched.add(j)
            if track_id is None:
                track_id = self._next_id
                self._next_id += 1
            new_tracks.append(
                Track(
                    center=(det.box.cx, det.box.cy),
                    velocity=det.velocity,
                    class_id=det.class_id,
                    box=det.box,
                    score=det.score,
                    track_id=track_id,
                    age=0,
                )
            )

        for j, track in enumerate(self.tracks):
            if j in matched:
                continue
            if track.age < self.cfg.max_age:
                # Coast: advance the center by the last known velocity.
                new_tracks.append(
                    Track(
                        center=(
                            track.center[0] + track.velocity[0],
                            track.center[1] + track.velocity[1],
                        ),
                        velocity=track.velocity,
                        class_id=track.class_id,
                        box=track.box,
                        score=track.score,
                        track_id=track.track_id,
                        age=track.age + 1,
                    )
                )

        self.tracks = new_tracks
        return list(new_tracks)


def active_tracks(tracks: Sequence[Track]) -> list[Track]:
    """Tracks that matched a detection this frame (age 0). Coasted tracks
    exist only for re-association and are not emitted as predictions."""
    return [t for t in tracks if t.age == 0]


# Tracks file: JSON Lines, one frame per line.


def tracks_frame_to_obj(frame_index: int, tracks: Sequence[Track]) -> dict:
    return {"frame_index": frame_index, "tracks": [t.to_json_obj() for t in tracks]}


def tracks_frame_from_obj(obj: dict) -> tuple[int, list[Track]]:
    return int(obj["frame_index"]), [Track.from_json_obj(t) for t in obj["tracks"]]
