"""Core value types and the recording lifecycle state machine.

Everything here is an immutable value; ``transition`` is a pure function,
so these types are safe to share across threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

from .errors import (
    IllegalTransition,
    TrimBoundsError,
    TrimOrderError,
)

LANGUAGE_CODE_RE = re.compile(r"^[a-z]{2,3}-[A-Za-z]{2,8}$")


class ContentType(str, Enum):
    TEXT = "text"
    TOPIC = "topic"


class Gender(str, Enum):
    FEMALE = "female"
    MALE = "male"
    OTHER = "other"
    UNDISCLOSED = "undisclosed"


class Lighting(str, Enum):
    INDOOR = "indoor"
    OUTDOOR = "outdoor"
    LOW_LIGHT = "low_light"
    STUDIO = "studio"
    OTHER = "other"


class CameraView(str, Enum):
    FRONT = "front"
    LEFT = "left"
    RIGHT = "right"
    TOP = "top"
    OTHER = "other"


class Role(str, Enum):
    CONTRIBUTOR = "contributor"
    VALIDATOR = "validator"
    ANNOTATOR = "annotator"
    ADMIN = "admin"


class LifecycleState(str, Enum):
    PENDING_VIDEO_VALIDATION = "PendingVideoValidation"
    VIDEO_REJECTED = "VideoRejected"
    PENDING_ANNOTATION = "PendingAnnotation"
    PENDING_ANNOTATION_VALIDATION = "PendingAnnotationValidation"
    ANNOTATION_VALIDATED = "AnnotationValidated"


class LifecycleEvent(str, Enum):
    VIDEO_SUBMITTED = "VideoSubmitted"
    VIDEO_VERDICT_CORRECT = "VideoVerdictCorrect"
    VIDEO_VERDICT_INCORRECT = "VideoVerdictIncorrect"
    ANNOTATION_SUBMITTED = "AnnotationSubmitted"
    ANNOTATION_VERDICT_ACCEPTED = "AnnotationVerdictAccepted"
    ANNOTATION_VERDICT_CORRECTED = "AnnotationVerdictCorrected"
    REQUEUE = "Requeue"


# VideoSubmitted is the entry event: it creates a recording in
# PENDING_VIDEO_VALIDATION and is never a legal argument to transition().
INITIAL_STATE = LifecycleState.PENDING_VIDEO_VALIDATION

TRANSITIONS: dict[tuple[LifecycleState, LifecycleEvent], LifecycleState] = {
    (LifecycleState.PENDING_VIDEO_VALIDATION, LifecycleEvent.VIDEO_VERDICT_CORRECT):
        LifecycleState.PENDING_ANNOTATION,
    (LifecycleState.PENDING_VIDEO_VALIDATION, LifecycleEvent.VIDEO_VERDICT_INCORRECT):
        LifecycleState.VIDEO_REJECTED,
    (LifecycleState.PENDING_ANNOTATION, LifecycleEvent.ANNOTATION_SUBMITTED):
        LifecycleState.PENDING_ANNOTATION_VALIDATION,
    (LifecycleState.PENDING_ANNOTATION_VALIDATION, LifecycleEvent.ANNOTATION_VERDICT_ACCEPTED):
        LifecycleState.ANNOTATION_VALIDATED,
    (LifecycleState.PENDING_ANNOTATION_VALIDATION, LifecycleEvent.ANNOTATION_VERDICT_CORRECTED):
        LifecycleState.ANNOTATION_VALIDATED,
    (LifecycleState.VIDEO_REJECTED, LifecycleEvent.REQUEUE):
        LifecycleState.PENDING_VIDEO_VALIDATION,
}


def initial_state() -> LifecycleState:
    """State a recording enters when its video is submitted."""
    return INITIAL_STATE


def transition(state: LifecycleState, event: LifecycleEvent) -> LifecycleState:
    """Return the unique successor state, or raise for any pair not in the table."""
    state = LifecycleState(state)
    event = LifecycleEvent(event)
    try:
        return TRANSITIONS[(state, event)]
    except KeyError:
        raise IllegalTransition(f"{state.value} + {event.value}") from None


def replay(events, start: LifecycleState | None = None) -> LifecycleState:
    """Fold an event sequence through the transition table.

    A leading VideoSubmitted is accepted as the entry event when no start
    state is given. Raises IllegalTransition if the sequence is not a path.
    """
    events = [LifecycleEvent(e) for e in events]
    state = start
    for ev in events:
        if state is None:
            if ev is not LifecycleEvent.VIDEO_SUBMITTED:
                raise IllegalTransition(f"log must open with VideoSubmitted, got {ev.value}")
            state = initial_state()
            continue
        state = transition(state, ev)
    if state is None:
        raise IllegalTransition("empty event log")
    return state


@dataclass(frozen=True)
class LanguagePair:
    """A spoken/sign language coupling such as bn-BdSL or en-ASL."""

    code: str
    display_name: str

    def __post_init__(self):
        if not LANGUAGE_CODE_RE.match(self.code):
            raise ValueError(f"bad language pair code: {self.code!r}")


@dataclass(frozen=True)
class Prompt:
    id: str
    content: str
    content_type: ContentType
    language: str

    def __post_init__(self):
        if not self.content.strip():
            raise ValueError("prompt content is empty")


@dataclass(frozen=True)
class UserProfile:
    id: str
    selected_language: str
    gender: Gender | None = None
    age: int | None = None
    locality: str | None = None
    role_flags: frozenset[Role] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.age is not None and not (5 <= self.age <= 120):
            raise ValueError(f"age out of range: {self.age}")

    def has_role(self, role: Role) -> bool:
        return role in self.role_flags


@dataclass(frozen=True)
class VideoMeta:
    """Shooting metadata supplied by the uploader.

    lighting/camera_view/resolution stay optional here so the workflow
    engine can reject incomplete submissions with E_MISSING_META instead
    of failing at construction.
    """

    duration_ms: int
    fps: float
    container: str = "video/webm"
    lighting: Lighting | None = None
    camera_view: CameraView | None = None
    resolution: tuple[int, int] | None = None

    def __post_init__(self):
        if self.resolution is not None:
            w, h = self.resolution
            if w <= 0 or h <= 0:
                raise ValueError(f"bad resolution: {self.resolution}")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive: {self.fps}")


@dataclass(frozen=True)
class TrimWindow:
    start_ms: int
    end_ms: int


@dataclass(frozen=True)
class Recording:
    id: str
    prompt_id: str
    signer_id: str
    video_key: str
    meta: VideoMeta
    trim: TrimWindow
    state: LifecycleState
    script: str | None = None
    keypoint_key: str | None = None
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


def validate_trim(trim: TrimWindow, duration_ms: int) -> TrimWindow:
    """Check 0 <= start < end <= duration_ms; return the window unchanged."""
    if duration_ms <= 0:
        raise ValueError(f"duration must be positive: {duration_ms}")
    if trim.start_ms >= trim.end_ms:
        raise TrimOrderError(f"start {trim.start_ms} >= end {trim.end_ms}")
    if trim.start_ms < 0 or trim.end_ms > duration_ms:
        raise TrimBoundsError(
            f"[{trim.start_ms}, {trim.end_ms}] outside [0, {duration_ms}]"
        )
    return trim
