"""Pose keypoint sidecars: newline-delimited records, one per video frame.

Each record carries frame_index plus named groups (body, face, left_hand,
right_hand) of [x, y, confidence] triples. Estimation itself happens
offline; this module only parses and checks alignment against the trimmed
video duration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import FrameMismatchError, SidecarSyntaxError

GROUPS = ("body", "face", "left_hand", "right_hand")

FRAME_TOLERANCE = 1


@dataclass(frozen=True)
class KeypointFrame:
    frame_index: int
    groups: dict[str, tuple[tuple[float, float, float], ...]]


def parse_sidecar(data: bytes) -> list[KeypointFrame]:
    """Parse and structurally validate one sidecar file.

    Frame indices must run 0, 1, 2, ... and every group must keep the same
    arity across all frames of the file.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SidecarSyntaxError(f"not UTF-8: {exc}") from None

    frames: list[KeypointFrame] = []
    arity: dict[str, int] = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SidecarSyntaxError(f"line {line_no}: {exc}") from None
        if not isinstance(record, dict) or "frame_index" not in record:
            raise SidecarSyntaxError(f"line {line_no}: missing frame_index")
        index = record["frame_index"]
        if index != len(frames):
            raise SidecarSyntaxError(
                f"line {line_no}: frame_index {index}, expected {len(frames)}"
            )
        groups = {}
        for name in GROUPS:
            points = record.get(name)
            if points is None:
                raise SidecarSyntaxError(f"line {line_no}: missing group {name!r}")
            parsed = []
            for p in points:
                if not isinstance(p, (list, tuple)) or len(p) != 3:
                    raise SidecarSyntaxError(
                        f"line {line_no}: {name} entries must be [x, y, confidence]"
                    )
                x, y, c = (float(v) for v in p)
                if not (0.0 <= c <= 1.0):
                    raise SidecarSyntaxError(
                        f"line {line_no}: confidence {c} outside [0, 1]"
                    )
                parsed.append((x, y, c))
            if name in arity and arity[name] != len(parsed):
                raise SidecarSyntaxError(
                    f"line {line_no}: group {name!r} has {len(parsed)} points, "
                    f"earlier frames have {arity[name]}"
                )
            arity.setdefault(name, len(parsed))
            groups[name] = tuple(parsed)
        frames.append(KeypointFrame(index, groups))
    return frames


def expected_frame_count(trimmed_duration_ms: int, fps: float) -> int:
    return math.floor(trimmed_duration_ms * fps / 1000)


def check_alignment(
    frame_count: int,
    trimmed_duration_ms: int,
    fps: float,
    tolerance: int = FRAME_TOLERANCE,
) -> int:
    """Frame count must match the trimmed duration within the tolerance."""
    expected = expected_frame_count(trimmed_duration_ms, fps)
    if frame_count <= 0 or abs(frame_count - expected) > tolerance:
        raise FrameMismatchError(expected, frame_count, tolerance)
    return expected
