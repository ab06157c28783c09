"""JSON Lines plumbing shared by the frame file formats.

Readers report malformed lines with their 1-based line number; frame
ordering checks raise SequencingError so the CLI can map them to its
exit-code contract.
"""

from __future__ import annotations

import json
from typing import Callable, Iterable, Sequence


class JsonlParseError(Exception):
    """A line of a JSONL file failed to parse or validate."""

    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


class SequencingError(Exception):
    """Frame indices are out of order or misaligned between files."""


def read_jsonl(path) -> list[dict]:
    """Parse a JSONL file into one dict per non-empty line."""
    records: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JsonlParseError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise JsonlParseError(path, line_no, "expected a JSON object")
            records.append(obj)
    return records


def write_jsonl(path, objs: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj))
            fh.write("\n")


def read_frames(path, parse_frame: Callable[[dict], tuple[int, list]]) -> list[tuple[int, list]]:
    """Read a frame-per-line file, checking ascending frame indices."""
    frames: list[tuple[int, list]] = []
    for line_no, obj in enumerate(read_jsonl(path), start=1):
        try:
            frame = parse_frame(obj)
        except (KeyError, TypeError, ValueError) as exc:
            raise JsonlParseError(path, line_no, f"bad frame record: {exc}") from exc
        frames.append(frame)
    indices = [idx for idx, _ in frames]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise SequencingError(f"{path}: frame indices are not strictly ascending")
    return frames


def align_frames(
    named_frame_lists: Sequence[tuple[str, list[tuple[int, list]]]],
) -> list[int]:
    """Check that all files cover the identical frame-index sequence.

    Returns the common index list; raises SequencingError on mismatch.
    """
    reference_name, reference = named_frame_lists[0]
    ref_indices = [idx for idx, _ in reference]
    for name, frames in named_frame_lists[1:]:
        indices = [idx for idx, _ in frames]
        if indices != ref_indices:
            raise SequencingError(
                f"frame indices in {name} do not match {reference_name}"
            )
    return ref_indices
