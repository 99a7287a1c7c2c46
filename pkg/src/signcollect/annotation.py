"""Segment tracks and their validation against trim window and reference text.

Sentence tracks must cover the reference sentences in order; gloss tracks
must carry exactly one token per segment matching the reference token
sequence. Gaps between segments are fine (signers pause); overlaps never are.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .domain import TrimWindow
from .errors import BadSegmentError, TrackValidationError
from .textutils import nfc, normalize_sentence, split_sentences, tokenize_words


class TrackKind(str, Enum):
    SENTENCE = "sentence"
    GLOSS = "gloss"


@dataclass(frozen=True)
class Segment:
    start_ms: int
    end_ms: int
    text: str

    def __post_init__(self):
        if self.start_ms >= self.end_ms:
            raise BadSegmentError(f"start {self.start_ms} >= end {self.end_ms}")
        if not self.text.strip():
            raise BadSegmentError("segment text is empty")


@dataclass(frozen=True)
class AnnotationTrack:
    kind: TrackKind
    segments: tuple[Segment, ...]
    recording_id: str | None = None
    annotator_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))


@dataclass(frozen=True)
class TrackIssue:
    code: str
    index: int | None = None
    detail: str = ""

    def __str__(self) -> str:
        where = f" at segment {self.index}" if self.index is not None else ""
        tail = f" ({self.detail})" if self.detail else ""
        return f"{self.code}{where}{tail}"


def check_structure(segments, trim: TrimWindow) -> list[TrackIssue]:
    """Ordering, overlap, and trim-window containment checks."""
    issues = []
    for i in range(1, len(segments)):
        if segments[i].start_ms < segments[i - 1].start_ms:
            issues.append(TrackIssue("E_UNSORTED", i))
        elif segments[i].start_ms < segments[i - 1].end_ms:
            issues.append(TrackIssue("E_OVERLAP", i))
    for i, seg in enumerate(segments):
        if seg.start_ms < trim.start_ms or seg.end_ms > trim.end_ms:
            issues.append(TrackIssue(
                "E_OUT_OF_TRIM", i,
                f"[{seg.start_ms}, {seg.end_ms}] outside trim [{trim.start_ms}, {trim.end_ms}]",
            ))
    return issues


def _compare_texts(actual: list[str], expected: list[str]) -> list[TrackIssue]:
    for i, (a, b) in enumerate(zip(actual, expected)):
        if a != b:
            return [TrackIssue("E_TEXT_MISMATCH", i, f"{a!r} != {b!r}")]
    if len(actual) != len(expected):
        i = min(len(actual), len(expected))
        return [TrackIssue(
            "E_TEXT_MISMATCH", i,
            f"{len(actual)} segments vs {len(expected)} reference units",
        )]
    return []


def validate_track(
    track: AnnotationTrack,
    trim: TrimWindow,
    reference_text: str,
    *,
    language: str | None = None,
    free_gloss_labels: bool = False,
) -> list[TrackIssue]:
    """Return all issues found; an empty list means the track is valid.

    reference_text is the prompt content for text prompts and the typed
    script for topic prompts. With free_gloss_labels, gloss labels may
    diverge from the transcript tokens (the one-token rule still applies).
    """
    issues = check_structure(track.segments, trim)

    if track.kind is TrackKind.SENTENCE:
        actual = [normalize_sentence(s.text) for s in track.segments]
        expected = [normalize_sentence(s) for s in split_sentences(reference_text, language)]
        issues.extend(_compare_texts(actual, expected))
    else:
        tokens = []
        for i, seg in enumerate(track.segments):
            seg_tokens = tokenize_words(seg.text)
            if len(seg_tokens) != 1:
                issues.append(TrackIssue(
                    "E_MULTIWORD_GLOSS", i, f"{len(seg_tokens)} tokens in {seg.text!r}"
                ))
                tokens.append(nfc(seg.text.strip()))
            else:
                tokens.append(nfc(seg_tokens[0]))
        if not free_gloss_labels:
            expected = [nfc(t) for t in tokenize_words(reference_text)]
            issues.extend(_compare_texts(tokens, expected))

    return issues


def require_valid(track, trim, reference_text, **kwargs) -> AnnotationTrack:
    """validate_track, raising TrackValidationError on the first problem set."""
    issues = validate_track(track, trim, reference_text, **kwargs)
    if issues:
        raise TrackValidationError(issues)
    return track
