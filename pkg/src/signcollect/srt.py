"""SubRip rendering and parsing.

Rendered timestamps are relative to the trim start, since exported videos
are trimmed. Parsing inverts rendering up to index renumbering; callers
re-add the trim offset when they need absolute times.
"""

from __future__ import annotations

import re

from .annotation import AnnotationTrack, Segment, check_structure
from .domain import TrimWindow
from .errors import InvalidTrackError, SrtSyntaxError

_TIME_RE = re.compile(r"^(\d{2,}):([0-5]\d):([0-5]\d),(\d{3})$")
_ARROW = " --> "


def format_timestamp(ms: int) -> str:
    if ms < 0:
        raise InvalidTrackError(f"negative timestamp: {ms}")
    seconds, millis = divmod(ms, 1000)
    minutes, secs = divmod(seconds, 60)
    hours, mins = divmod(minutes, 60)
    return f"{hours:02d}:{mins:02d}:{secs:02d},{millis:03d}"


def parse_timestamp(text: str) -> int:
    m = _TIME_RE.match(text)
    if not m:
        raise ValueError(f"bad timestamp: {text!r}")
    hours, mins, secs, millis = (int(g) for g in m.groups())
    return ((hours * 60 + mins) * 60 + secs) * 1000 + millis


def render_srt(track: AnnotationTrack, trim: TrimWindow) -> str:
    """Render to SubRip text: LF endings, 1-based indices, trailing blank line."""
    if not track.segments:
        raise InvalidTrackError("track has no segments")
    issues = check_structure(track.segments, trim)
    if issues:
        raise InvalidTrackError("; ".join(str(i) for i in issues))

    blocks = []
    for i, seg in enumerate(track.segments, 1):
        start = format_timestamp(seg.start_ms - trim.start_ms)
        end = format_timestamp(seg.end_ms - trim.start_ms)
        blocks.append(f"{i}\n{start}{_ARROW}{end}\n{seg.text}\n\n")
    return "".join(blocks)


def parse_srt(text: str) -> list[Segment]:
    """Parse SubRip text into segments (times as written, i.e. trim-relative)."""
    segments = []
    lines = text.split("\n")
    pos = 0

    def syntax(msg, line_no):
        raise SrtSyntaxError(msg, line=line_no)

    while pos < len(lines):
        # skip blank separators
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            break

        index_line = lines[pos].strip()
        if not index_line.isdigit():
            syntax(f"expected block index, got {index_line!r}", pos + 1)
        pos += 1

        if pos >= len(lines):
            syntax("missing timestamp line", pos + 1)
        time_line = lines[pos].strip()
        if _ARROW.strip() not in time_line:
            syntax(f"missing '-->' in {time_line!r}", pos + 1)
        left, _, right = time_line.partition("-->")
        try:
            start = parse_timestamp(left.strip())
            end = parse_timestamp(right.strip())
        except ValueError as exc:
            syntax(str(exc), pos + 1)
        pos += 1

        text_lines = []
        while pos < len(lines) and lines[pos].strip():
            text_lines.append(lines[pos])
            pos += 1
        if not text_lines:
            syntax("block has no text", pos + 1)

        try:
            segments.append(Segment(start, end, "\n".join(text_lines)))
        except Exception as exc:
            syntax(str(exc), pos)

    return segments


def shift_segments(segments, offset_ms: int) -> list[Segment]:
    """Translate segment times, e.g. to restore absolute times after parsing."""
    return [Segment(s.start_ms + offset_ms, s.end_ms + offset_ms, s.text) for s in segments]
