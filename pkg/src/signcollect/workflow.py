"""Submission execution: recordings, validations, annotations.

Per-recording linearizability comes from SQLite's single-writer
transactions plus a compare-and-set on the lifecycle state; a validator
whose lease raced and lost gets E_STALE. Every submission accepts an
idempotency key whose replay returns the original result without
re-applying effects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Mapping, Sequence

from . import db as dbq
from .annotation import AnnotationTrack, Segment, TrackKind, require_valid
from .blobstore import check_key
from .config import Config
from .db import Database, new_id
from .domain import (
    CameraView,
    ContentType,
    LifecycleEvent,
    LifecycleState,
    Lighting,
    Prompt,
    Recording,
    Role,
    TrimWindow,
    UserProfile,
    VideoMeta,
    initial_state,
    transition,
    validate_trim,
)
from .errors import (
    AlreadyVotedError,
    LangMismatchError,
    MissingMetaError,
    MissingScriptError,
    NoBlobError,
    NoPromptError,
    NotFoundError,
    NoTracksError,
    RoleError,
    ScriptTooShortError,
    SelfValidationError,
    StaleError,
    WrongStateError,
)
from .textutils import split_sentences


class VideoVerdict(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"


class AnnotationVerdict(str, Enum):
    ACCEPTED = "accepted"
    CORRECTED = "corrected"


@dataclass(frozen=True)
class Corrections:
    """Partial overlay a video validator may apply to the recording."""

    start_ms: int | None = None
    end_ms: int | None = None
    camera_view: CameraView | None = None
    lighting: Lighting | None = None

    def is_empty(self) -> bool:
        return all(v is None for v in (self.start_ms, self.end_ms, self.camera_view, self.lighting))

    def to_json(self) -> str:
        return json.dumps({
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
            "camera_view": self.camera_view.value if self.camera_view else None,
            "lighting": self.lighting.value if self.lighting else None,
        })


@dataclass(frozen=True)
class VideoValidation:
    recording_id: str
    validator_id: str
    verdict: VideoVerdict
    corrections: Corrections | None = None
    submitted_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


@dataclass(frozen=True)
class AnnotationValidation:
    recording_id: str
    validator_id: str
    verdict: AnnotationVerdict
    corrected_tracks: Mapping[TrackKind, Sequence[Segment]] | None = None
    submitted_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


@dataclass(frozen=True)
class AnnotationPayload:
    """One or both tracks plus, for topic prompts, the typed script."""

    tracks: Mapping[TrackKind, Sequence[Segment]]
    script: str | None = None

    def to_json(self) -> str:
        return json.dumps({
            "script": self.script,
            "tracks": {
                TrackKind(kind).value: [[s.start_ms, s.end_ms, s.text] for s in segs]
                for kind, segs in self.tracks.items()
            },
        }, ensure_ascii=False)

    @classmethod
    def from_json(cls, payload: str) -> "AnnotationPayload":
        raw = json.loads(payload)
        return cls(
            tracks={
                TrackKind(kind): tuple(Segment(a, b, t) for a, b, t in segs)
                for kind, segs in raw["tracks"].items()
            },
            script=raw.get("script"),
        )


def _coerce_tracks(tracks) -> dict[TrackKind, tuple[Segment, ...]]:
    out = {}
    for kind, segs in tracks.items():
        out[TrackKind(kind)] = tuple(
            s if isinstance(s, Segment) else Segment(*s) for s in segs
        )
    return out


class WorkflowEngine:
    def __init__(self, database: Database, store, config: Config | None = None):
        self.db = database
        self.store = store
        self.config = config or Config()

    # -- helpers ------------------------------------------------------

    def _user(self, conn, user_id: str) -> UserProfile:
        user = dbq.get_user(conn, user_id)
        if user is None:
            raise NotFoundError(f"user {user_id}")
        return user

    def _require_role(self, conn, user_id: str, role: Role) -> UserProfile:
        user = self._user(conn, user_id)
        if not user.has_role(role):
            raise RoleError(f"user {user_id} lacks role {role.value}")
        return user

    def _recording(self, conn, recording_id: str) -> Recording:
        rec = dbq.get_recording(conn, recording_id)
        if rec is None:
            raise NotFoundError(f"recording {recording_id}")
        return rec

    @staticmethod
    def _expect_state(rec: Recording, expected: LifecycleState, stale_states) -> None:
        if rec.state is expected:
            return
        if rec.state in stale_states:
            raise StaleError(f"recording {rec.id} already moved to {rec.state.value}")
        raise WrongStateError(f"recording {rec.id} is in {rec.state.value}, expected {expected.value}")

    def _reference_text(self, prompt: Prompt, script: str | None) -> str:
        if prompt.content_type is ContentType.TOPIC:
            if not script or not script.strip():
                raise MissingScriptError("topic recordings need the typed script first")
            return script
        return prompt.content

    def _check_script_length(self, script: str, language: str) -> None:
        need = self.config.topic_sentence_count
        have = len(split_sentences(script, language))
        if have < need:
            raise ScriptTooShortError(f"script has {have} sentences, deployment requires {need}")

    def _validate_payload_tracks(self, tracks, trim, reference, language, recording_id, annotator_id):
        if not tracks:
            raise NoTracksError("at least one of sentence/gloss track is required")
        validated = []
        for kind, segments in tracks.items():
            track = AnnotationTrack(
                kind=kind, segments=segments,
                recording_id=recording_id, annotator_id=annotator_id,
            )
            require_valid(track, trim, reference, language=language,
                          free_gloss_labels=self.config.free_gloss_labels)
            validated.append(track)
        return validated

    # -- operations ---------------------------------------------------

    def submit_recording(
        self,
        user_id: str,
        prompt_id: str,
        video_key: str,
        meta: VideoMeta,
        trim: TrimWindow,
        idem: str | None = None,
        annotation: AnnotationPayload | None = None,
    ) -> Recording:
        with self.db.write() as conn:
            if idem:
                stored = dbq.idempotent_response(conn, "recording", idem)
                if stored is not None:
                    return self._recording(conn, stored["recording_id"])

            user = self._require_role(conn, user_id, Role.CONTRIBUTOR)
            prompt = dbq.get_prompt(conn, prompt_id)
            if prompt is None:
                raise NoPromptError(prompt_id)
            if prompt.language != user.selected_language:
                raise LangMismatchError(
                    f"prompt is {prompt.language}, user selected {user.selected_language}"
                )
            missing = [name for name, value in (
                ("lighting", meta.lighting),
                ("camera_view", meta.camera_view),
                ("resolution", meta.resolution),
            ) if value is None]
            if missing:
                raise MissingMetaError(f"missing required fields: {', '.join(missing)}")
            if meta.duration_ms <= 0:
                raise MissingMetaError(f"duration_ms must be positive, got {meta.duration_ms}")
            check_key(video_key)
            if not self.store.exists(video_key):
                raise NoBlobError(video_key)
            validate_trim(trim, meta.duration_ms)

            deferred = None
            if annotation is not None:
                # eager validation; revalidated at apply time in case the
                # validator corrects the trim window
                reference = self._reference_text(prompt, annotation.script)
                if prompt.content_type is ContentType.TOPIC:
                    self._check_script_length(annotation.script, prompt.language)
                self._validate_payload_tracks(
                    _coerce_tracks(annotation.tracks), trim, reference,
                    prompt.language, None, user_id,
                )
                deferred = annotation.to_json()

            rec = Recording(
                id=new_id(),
                prompt_id=prompt_id,
                signer_id=user_id,
                video_key=video_key,
                meta=meta,
                trim=trim,
                state=initial_state(),
            )
            dbq.insert_recording(conn, rec, deferred_annotation=deferred)
            dbq.append_event(conn, rec.id, LifecycleEvent.VIDEO_SUBMITTED, user_id)
            dbq.mark_completed(conn, user_id, "record", prompt_id)
            if idem:
                dbq.store_idempotent(conn, "recording", idem, {"recording_id": rec.id})
            return rec

    def submit_video_validation(self, v: VideoValidation, idem: str | None = None) -> LifecycleState:
        with self.db.write() as conn:
            if idem:
                stored = dbq.idempotent_response(conn, "video_validation", idem)
                if stored is not None:
                    return LifecycleState(stored["state"])

            self._require_role(conn, v.validator_id, Role.VALIDATOR)
            rec = self._recording(conn, v.recording_id)
            if v.validator_id == rec.signer_id:
                raise SelfValidationError("signers cannot validate their own recording")
            self._expect_state(
                rec, LifecycleState.PENDING_VIDEO_VALIDATION,
                stale_states=(LifecycleState.PENDING_ANNOTATION, LifecycleState.VIDEO_REJECTED),
            )

            # one vote per validator per validation round; requeues open a new round
            current_round = self._current_round(conn, rec.id)
            dup = conn.execute(
                "SELECT 1 FROM video_verdicts WHERE recording_id=? AND validator_id=? AND round=?",
                (rec.id, v.validator_id, current_round),
            ).fetchone()
            if dup:
                raise AlreadyVotedError(f"validator {v.validator_id} already voted")

            corrections = v.corrections
            corrected_trim = rec.trim
            if corrections is not None and not corrections.is_empty():
                corrected_trim = TrimWindow(
                    corrections.start_ms if corrections.start_ms is not None else rec.trim.start_ms,
                    corrections.end_ms if corrections.end_ms is not None else rec.trim.end_ms,
                )
                validate_trim(corrected_trim, rec.meta.duration_ms)

            conn.execute(
                "INSERT INTO video_verdicts(id, recording_id, validator_id, verdict, corrections, "
                "applied, round, submitted_at) VALUES (?, ?, ?, ?, ?, 0, ?, ?)",
                (
                    new_id(), rec.id, v.validator_id, v.verdict.value,
                    corrections.to_json() if corrections else None,
                    current_round, v.submitted_at.isoformat(),
                ),
            )
            agreeing = conn.execute(
                "SELECT COUNT(*) AS n FROM video_verdicts "
                "WHERE recording_id=? AND round=? AND verdict=?",
                (rec.id, current_round, v.verdict.value),
            ).fetchone()["n"]
            dbq.mark_completed(conn, v.validator_id, "validate_video", rec.id)
            if agreeing < self.config.validation_quorum:
                if idem:
                    dbq.store_idempotent(conn, "video_validation", idem, {"state": rec.state.value})
                return rec.state

            # quorum reached: this verdict decides the stage
            if corrections is not None and not corrections.is_empty():
                conn.execute(
                    "UPDATE recordings SET trim_start=?, trim_end=?, camera_view=?, lighting=? WHERE id=?",
                    (
                        corrected_trim.start_ms,
                        corrected_trim.end_ms,
                        (corrections.camera_view or rec.meta.camera_view).value,
                        (corrections.lighting or rec.meta.lighting).value,
                        rec.id,
                    ),
                )
            event = (
                LifecycleEvent.VIDEO_VERDICT_CORRECT
                if v.verdict is VideoVerdict.CORRECT
                else LifecycleEvent.VIDEO_VERDICT_INCORRECT
            )
            new_state = transition(rec.state, event)
            if not dbq.cas_state(conn, rec.id, rec.state, new_state):
                raise StaleError(f"recording {rec.id} changed state concurrently")
            conn.execute(
                "UPDATE video_verdicts SET applied=1 WHERE recording_id=? AND round=? AND validator_id=?",
                (rec.id, current_round, v.validator_id),
            )
            dbq.append_event(conn, rec.id, event, v.validator_id)

            final_state = new_state
            if new_state is LifecycleState.PENDING_ANNOTATION:
                final_state = self._apply_deferred_annotation(conn, rec.id, corrected_trim)
            if idem:
                dbq.store_idempotent(conn, "video_validation", idem, {"state": final_state.value})
            return final_state

    def _current_round(self, conn, recording_id: str) -> int:
        row = conn.execute(
            "SELECT COUNT(*) AS n FROM lifecycle_events WHERE recording_id=? AND event=?",
            (recording_id, LifecycleEvent.REQUEUE.value),
        ).fetchone()
        return row["n"]

    def _apply_deferred_annotation(self, conn, recording_id: str, trim: TrimWindow) -> LifecycleState:
        """Attach the uploader-supplied annotation once the video clears validation.

        The payload was validated at submission; the validator may have
        corrected the trim since, so it is revalidated and silently dropped
        if it no longer fits.
        """
        row = conn.execute(
            "SELECT deferred_annotation, prompt_id, signer_id FROM recordings WHERE id=?",
            (recording_id,),
        ).fetchone()
        if not row or not row["deferred_annotation"]:
            return LifecycleState.PENDING_ANNOTATION
        payload = AnnotationPayload.from_json(row["deferred_annotation"])
        prompt = dbq.get_prompt(conn, row["prompt_id"])
        signer = row["signer_id"]
        conn.execute("UPDATE recordings SET deferred_annotation=NULL WHERE id=?", (recording_id,))
        try:
            reference = self._reference_text(prompt, payload.script)
            tracks = self._validate_payload_tracks(
                _coerce_tracks(payload.tracks), trim, reference,
                prompt.language, recording_id, signer,
            )
        except Exception:
            return LifecycleState.PENDING_ANNOTATION
        for track in tracks:
            dbq.insert_track(conn, track)
        if prompt.content_type is ContentType.TOPIC:
            conn.execute("UPDATE recordings SET script=? WHERE id=?", (payload.script, recording_id))
        dbq.cas_state(
            conn, recording_id,
            LifecycleState.PENDING_ANNOTATION, LifecycleState.PENDING_ANNOTATION_VALIDATION,
        )
        dbq.append_event(conn, recording_id, LifecycleEvent.ANNOTATION_SUBMITTED, signer)
        dbq.mark_completed(conn, signer, "annotate", recording_id)
        return LifecycleState.PENDING_ANNOTATION_VALIDATION

    def submit_annotation(
        self,
        user_id: str,
        recording_id: str,
        tracks: Mapping,
        script: str | None = None,
        idem: str | None = None,
    ) -> LifecycleState:
        with self.db.write() as conn:
            if idem:
                stored = dbq.idempotent_response(conn, "annotation", idem)
                if stored is not None:
                    return LifecycleState(stored["state"])

            self._require_role(conn, user_id, Role.ANNOTATOR)
            rec = self._recording(conn, recording_id)
            self._expect_state(
                rec, LifecycleState.PENDING_ANNOTATION,
                stale_states=(LifecycleState.PENDING_ANNOTATION_VALIDATION,),
            )
            prompt = dbq.get_prompt(conn, rec.prompt_id)
            if prompt.content_type is ContentType.TOPIC:
                reference = self._reference_text(prompt, script)
                self._check_script_length(script, prompt.language)
            else:
                reference = prompt.content
                script = None

            validated = self._validate_payload_tracks(
                _coerce_tracks(tracks), rec.trim, reference,
                prompt.language, recording_id, user_id,
            )
            for track in validated:
                dbq.insert_track(conn, track)
            if script is not None:
                conn.execute("UPDATE recordings SET script=? WHERE id=?", (script, recording_id))

            new_state = transition(rec.state, LifecycleEvent.ANNOTATION_SUBMITTED)
            if not dbq.cas_state(conn, rec.id, rec.state, new_state):
                raise StaleError(f"recording {rec.id} changed state concurrently")
            dbq.append_event(conn, rec.id, LifecycleEvent.ANNOTATION_SUBMITTED, user_id)
            dbq.mark_completed(conn, user_id, "annotate", rec.id)
            if idem:
                dbq.store_idempotent(conn, "annotation", idem, {"state": new_state.value})
            return new_state

    def submit_annotation_validation(
        self, av: AnnotationValidation, idem: str | None = None
    ) -> LifecycleState:
        with self.db.write() as conn:
            if idem:
                stored = dbq.idempotent_response(conn, "annotation_validation", idem)
                if stored is not None:
                    return LifecycleState(stored["state"])

            self._require_role(conn, av.validator_id, Role.VALIDATOR)
            rec = self._recording(conn, av.recording_id)
            annotators = {t.annotator_id for t in dbq.active_tracks(conn, rec.id)}
            if av.validator_id == rec.signer_id or av.validator_id in annotators:
                raise SelfValidationError(
                    "annotation validators must be neither signer nor annotator"
                )
            self._expect_state(
                rec, LifecycleState.PENDING_ANNOTATION_VALIDATION,
                stale_states=(LifecycleState.ANNOTATION_VALIDATED,),
            )
            dup = conn.execute(
                "SELECT 1 FROM annotation_verdicts WHERE recording_id=? AND validator_id=?",
                (rec.id, av.validator_id),
            ).fetchone()
            if dup:
                raise AlreadyVotedError(f"validator {av.validator_id} already voted")

            corrected = None
            if av.verdict is AnnotationVerdict.CORRECTED:
                if not av.corrected_tracks:
                    raise NoTracksError("corrected verdict requires corrected tracks")
                prompt = dbq.get_prompt(conn, rec.prompt_id)
                reference = self._reference_text(prompt, rec.script)
                corrected = self._validate_payload_tracks(
                    _coerce_tracks(av.corrected_tracks), rec.trim, reference,
                    prompt.language, rec.id, av.validator_id,
                )

            conn.execute(
                "INSERT INTO annotation_verdicts(id, recording_id, validator_id, verdict, applied, "
                "submitted_at) VALUES (?, ?, ?, ?, 0, ?)",
                (new_id(), rec.id, av.validator_id, av.verdict.value, av.submitted_at.isoformat()),
            )
            agreeing = conn.execute(
                "SELECT COUNT(*) AS n FROM annotation_verdicts WHERE recording_id=? AND verdict=?",
                (rec.id, av.verdict.value),
            ).fetchone()["n"]
            dbq.mark_completed(conn, av.validator_id, "validate_annotation", rec.id)
            if agreeing < self.config.validation_quorum:
                if idem:
                    dbq.store_idempotent(conn, "annotation_validation", idem, {"state": rec.state.value})
                return rec.state

            if corrected is not None:
                dbq.supersede_tracks(conn, rec.id)  # originals retained for audit
                for track in corrected:
                    dbq.insert_track(conn, track)
            event = (
                LifecycleEvent.ANNOTATION_VERDICT_ACCEPTED
                if av.verdict is AnnotationVerdict.ACCEPTED
                else LifecycleEvent.ANNOTATION_VERDICT_CORRECTED
            )
            new_state = transition(rec.state, event)
            if not dbq.cas_state(conn, rec.id, rec.state, new_state):
                raise StaleError(f"recording {rec.id} changed state concurrently")
            conn.execute(
                "UPDATE annotation_verdicts SET applied=1 WHERE recording_id=? AND validator_id=?",
                (rec.id, av.validator_id),
            )
            dbq.append_event(conn, rec.id, event, av.validator_id)
            if idem:
                dbq.store_idempotent(conn, "annotation_validation", idem, {"state": new_state.value})
            return new_state

    def requeue(self, recording_id: str, actor_id: str) -> LifecycleState:
        """Admin action returning a rejected recording to the validation queue."""
        with self.db.write() as conn:
            self._require_role(conn, actor_id, Role.ADMIN)
            rec = self._recording(conn, recording_id)
            new_state = transition(rec.state, LifecycleEvent.REQUEUE)
            if not dbq.cas_state(conn, rec.id, rec.state, new_state):
                raise StaleError(f"recording {rec.id} changed state concurrently")
            dbq.append_event(conn, rec.id, LifecycleEvent.REQUEUE, actor_id)
            return new_state
