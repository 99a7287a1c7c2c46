"""HTTP front door.

All endpoints live under /api/v1 behind bearer auth (user and session
creation excepted). State-changing endpoints take an Idempotency-Key
header; replays return the original result. Uploads stream through a
spooled temp file into the object store, so request bodies never sit
whole in memory.

No postponed annotation evaluation here: the route signatures use
function-local Annotated aliases that FastAPI must see as real objects.
"""

import threading
import time
from typing import Annotated

from fastapi import Depends, FastAPI, Header, Request, Response, UploadFile
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from . import auth as authn
from . import db as dbq
from .annotation import Segment, TrackKind
from .assignment import TaskKind
from .config import Config
from .domain import (
    CameraView,
    Gender,
    Lighting,
    Role,
    TrimWindow,
    UserProfile,
    VideoMeta,
)
from .errors import (
    STATUS_BY_CODE,
    BadMediaTypeError,
    NotFoundError,
    RateLimitedError,
    RoleError,
    SignCollectError,
    TooLargeError,
    UnauthenticatedError,
    UnknownLanguageError,
)
from .export import stats_for_world
from .prompts import ingest_csv
from .runtime import Runtime, build_runtime
from .srt import render_srt
from .workflow import (
    AnnotationPayload,
    AnnotationValidation,
    AnnotationVerdict,
    Corrections,
    VideoValidation,
    VideoVerdict,
)

MEDIA_TYPE_EXT = {"video/webm": ".webm", "video/mp4": ".mp4"}

TASK_PATHS = {
    "record": TaskKind.RECORD,
    "validate-video": TaskKind.VALIDATE_VIDEO,
    "annotate": TaskKind.ANNOTATE,
    "validate-annotation": TaskKind.VALIDATE_ANNOTATION,
}


# --- request/response models ---

class UserIn(BaseModel):
    handle: str = Field(min_length=1, max_length=64)
    password: str = Field(min_length=8, max_length=256)
    selected_language: str
    gender: Gender | None = None
    age: int | None = Field(default=None, ge=5, le=120)
    locality: str | None = None
    roles: list[Role] = Field(default_factory=lambda: [Role.CONTRIBUTOR])


class ProfilePatch(BaseModel):
    selected_language: str | None = None
    gender: Gender | None = None
    age: int | None = Field(default=None, ge=5, le=120)
    locality: str | None = None


class SessionIn(BaseModel):
    handle: str
    password: str


class TrimIn(BaseModel):
    start_ms: int
    end_ms: int


class MetaIn(BaseModel):
    duration_ms: int
    fps: float
    container: str = "video/webm"
    lighting: Lighting | None = None
    camera_view: CameraView | None = None
    width: int | None = None
    height: int | None = None

    def to_meta(self) -> VideoMeta:
        resolution = None
        if self.width is not None and self.height is not None:
            resolution = (self.width, self.height)
        return VideoMeta(
            duration_ms=self.duration_ms,
            fps=self.fps,
            container=self.container,
            lighting=self.lighting,
            camera_view=self.camera_view,
            resolution=resolution,
        )


class SegmentIn(BaseModel):
    start_ms: int
    end_ms: int
    text: str


class AnnotationIn(BaseModel):
    sentence: list[SegmentIn] | None = None
    gloss: list[SegmentIn] | None = None
    script: str | None = None

    def to_tracks(self) -> dict[TrackKind, list[Segment]]:
        tracks = {}
        if self.sentence is not None:
            tracks[TrackKind.SENTENCE] = [Segment(s.start_ms, s.end_ms, s.text) for s in self.sentence]
        if self.gloss is not None:
            tracks[TrackKind.GLOSS] = [Segment(s.start_ms, s.end_ms, s.text) for s in self.gloss]
        return tracks


class RecordingIn(BaseModel):
    prompt_id: str
    key: str
    meta: MetaIn
    trim: TrimIn
    annotation: AnnotationIn | None = None


class CorrectionsIn(BaseModel):
    start_ms: int | None = None
    end_ms: int | None = None
    camera_view: CameraView | None = None
    lighting: Lighting | None = None


class ValidationIn(BaseModel):
    verdict: VideoVerdict
    corrections: CorrectionsIn | None = None


class AnnotationValidationIn(BaseModel):
    verdict: AnnotationVerdict
    corrected: AnnotationIn | None = None


class RateLimiter:
    """Fixed one-minute window per token; the simple cap the API promises."""

    def __init__(self, per_minute: int):
        self.per_minute = per_minute
        self._lock = threading.Lock()
        self._windows: dict[str, tuple[int, int]] = {}

    def hit(self, token: str) -> None:
        minute = int(time.time() // 60)
        with self._lock:
            window, count = self._windows.get(token, (minute, 0))
            if window != minute:
                window, count = minute, 0
            count += 1
            self._windows[token] = (window, count)
            if count > self.per_minute:
                raise RateLimitedError("per-token request cap exceeded")


def serialize_user(user: UserProfile) -> dict:
    return {
        "id": user.id,
        "selected_language": user.selected_language,
        "gender": user.gender.value if user.gender else None,
        "age": user.age,
        "locality": user.locality,
        "roles": sorted(r.value for r in user.role_flags),
    }


def serialize_recording(rec) -> dict:
    return {
        "id": rec.id,
        "prompt_id": rec.prompt_id,
        "state": rec.state.value,
        "video_key": rec.video_key,
        "trim": {"start_ms": rec.trim.start_ms, "end_ms": rec.trim.end_ms},
        "meta": {
            "duration_ms": rec.meta.duration_ms,
            "fps": rec.meta.fps,
            "lighting": rec.meta.lighting.value if rec.meta.lighting else None,
            "camera_view": rec.meta.camera_view.value if rec.meta.camera_view else None,
            "resolution": list(rec.meta.resolution) if rec.meta.resolution else None,
        },
        "created_at": rec.created_at.isoformat(),
    }


def create_app(cfg: Config | None = None, runtime: Runtime | None = None) -> FastAPI:
    cfg = cfg or (runtime.config if runtime else Config())
    rt = runtime or build_runtime(cfg)
    app = FastAPI(title="signcollect", version="0.1.0")
    limiter = RateLimiter(cfg.requests_per_minute)

    @app.exception_handler(SignCollectError)
    async def domain_error_handler(request: Request, exc: SignCollectError):
        status = STATUS_BY_CODE.get(exc.code, 500)
        return JSONResponse(status_code=status, content={"error": exc.code, "detail": exc.detail})

    def bearer_user(authorization: Annotated[str | None, Header()] = None) -> UserProfile:
        if not authorization or not authorization.startswith("Bearer "):
            raise UnauthenticatedError("missing bearer token")
        token = authorization.removeprefix("Bearer ")
        user_id = authn.authenticate(rt.db, token)
        limiter.hit(token)
        return authn.get_profile(rt.db, user_id)

    Authed = Annotated[UserProfile, Depends(bearer_user)]
    IdemKey = Annotated[str | None, Header(alias="Idempotency-Key")]

    # --- accounts ---

    @app.post("/api/v1/users", status_code=201)
    def create_user(body: UserIn, authorization: Annotated[str | None, Header()] = None):
        roles = set(body.roles)
        if Role.ADMIN in roles:
            # only an existing admin may mint another admin
            caller = bearer_user(authorization)
            if not caller.has_role(Role.ADMIN):
                raise RoleError("admin flag requires an admin session")
        if body.selected_language not in cfg.language_codes():
            raise UnknownLanguageError(body.selected_language)
        user = authn.create_user(
            rt.db, body.handle, body.password, body.selected_language,
            gender=body.gender, age=body.age, locality=body.locality, roles=roles,
        )
        return serialize_user(user)

    @app.post("/api/v1/sessions")
    def open_session(body: SessionIn):
        session = authn.open_session(rt.db, body.handle, body.password,
                                     ttl_hours=cfg.session_ttl_hours)
        return {
            "token": session.token,
            "user_id": session.user_id,
            "expires_at": session.expires_at.isoformat(),
        }

    @app.get("/api/v1/users/me")
    def get_me(user: Authed):
        return serialize_user(user)

    @app.patch("/api/v1/users/me")
    def patch_me(body: ProfilePatch, user: Authed):
        if body.selected_language and body.selected_language not in cfg.language_codes():
            raise UnknownLanguageError(body.selected_language)
        updates = {k: v for k, v in body.model_dump().items() if v is not None}
        if updates:
            sets = ", ".join(f"{k}=?" for k in updates)
            values = [v.value if hasattr(v, "value") else v for v in updates.values()]
            with rt.db.write() as conn:
                conn.execute(f"UPDATE users SET {sets} WHERE id=?", (*values, user.id))
        return serialize_user(authn.get_profile(rt.db, user.id))

    # --- prompts (admin CSV upload) ---

    @app.post("/api/v1/prompts")
    async def upload_prompts(request: Request, user: Authed):
        if not user.has_role(Role.ADMIN):
            raise RoleError("prompt upload is admin-only")
        body = await request.body()
        report = ingest_csv(rt.db, body, max_bytes=cfg.max_csv_bytes)
        return {
            "accepted": report.accepted,
            "duplicates_skipped": report.duplicates_skipped,
            "errors": [
                {"row_number": e.row_number, "code": e.code.value, "detail": e.detail}
                for e in report.errors
            ],
        }

    # --- task assignment ---

    @app.get("/api/v1/tasks/{kind_path}")
    def next_task(kind_path: str, user: Authed, seed: int | None = None):
        kind = TASK_PATHS.get(kind_path)
        if kind is None:
            raise NotFoundError(f"unknown task kind {kind_path!r}")
        task = rt.assigner.next_task(user, kind, rng_seed=seed)
        if task is None:
            return Response(status_code=204)
        payload = {
            "kind": kind.value,
            "prompt": {
                "id": task.prompt.id,
                "content": task.prompt.content,
                "content_type": task.prompt.content_type.value,
                "language": task.prompt.language,
            },
            "recording_id": task.recording_id,
            "issued_at": task.issued_at.isoformat(),
            "lease_ttl_s": task.lease_ttl_s,
        }
        return payload

    # --- upload ---

    @app.post("/api/v1/videos")
    def upload_video(file: UploadFile, user: Authed):
        ext = MEDIA_TYPE_EXT.get(file.content_type or "")
        if ext is None:
            raise BadMediaTypeError(f"declared media type {file.content_type!r}")
        if file.size is not None and file.size > cfg.max_upload_bytes:
            raise TooLargeError(f"{file.size} bytes, cap {cfg.max_upload_bytes}")
        key = rt.store.put(file.file, ext)
        return {"key": key}

    # --- submissions ---

    @app.post("/api/v1/recordings", status_code=201)
    def submit_recording(body: RecordingIn, user: Authed, idempotency_key: IdemKey = None):
        annotation = None
        if body.annotation is not None:
            annotation = AnnotationPayload(
                tracks=body.annotation.to_tracks(), script=body.annotation.script
            )
        rec = rt.engine.submit_recording(
            user.id,
            body.prompt_id,
            body.key,
            body.meta.to_meta(),
            TrimWindow(body.trim.start_ms, body.trim.end_ms),
            idem=idempotency_key,
            annotation=annotation,
        )
        return serialize_recording(rec)

    @app.post("/api/v1/recordings/{recording_id}/validation")
    def submit_validation(recording_id: str, body: ValidationIn, user: Authed,
                          idempotency_key: IdemKey = None):
        corrections = None
        if body.corrections is not None:
            corrections = Corrections(
                start_ms=body.corrections.start_ms,
                end_ms=body.corrections.end_ms,
                camera_view=body.corrections.camera_view,
                lighting=body.corrections.lighting,
            )
        state = rt.engine.submit_video_validation(
            VideoValidation(recording_id, user.id, body.verdict, corrections),
            idem=idempotency_key,
        )
        return {"state": state.value}

    @app.post("/api/v1/recordings/{recording_id}/annotation")
    def submit_annotation(recording_id: str, body: AnnotationIn, user: Authed,
                          idempotency_key: IdemKey = None):
        state = rt.engine.submit_annotation(
            user.id, recording_id, body.to_tracks(), script=body.script,
            idem=idempotency_key,
        )
        return {"state": state.value}

    @app.post("/api/v1/recordings/{recording_id}/annotation-validation")
    def submit_annotation_validation(recording_id: str, body: AnnotationValidationIn,
                                     user: Authed, idempotency_key: IdemKey = None):
        corrected = body.corrected.to_tracks() if body.corrected is not None else None
        state = rt.engine.submit_annotation_validation(
            AnnotationValidation(recording_id, user.id, body.verdict, corrected),
            idem=idempotency_key,
        )
        return {"state": state.value}

    # --- recordings and blobs (read side for validators/annotators) ---

    @app.get("/api/v1/recordings/{recording_id}")
    def get_recording(recording_id: str, user: Authed):
        with rt.db.read() as conn:
            rec = dbq.get_recording(conn, recording_id)
        if rec is None:
            raise NotFoundError(f"recording {recording_id}")
        return serialize_recording(rec)

    @app.get("/api/v1/videos/{key:path}")
    def get_video(key: str, user: Authed):
        data = rt.store.get(key)
        media_type = "video/mp4" if key.endswith(".mp4") else "video/webm"
        return Response(content=data, media_type=media_type)

    # --- subtitles, stats ---

    @app.get("/api/v1/recordings/{recording_id}/subtitles.srt")
    def subtitles(recording_id: str, user: Authed, kind: str | None = None):
        with rt.db.read() as conn:
            rec = dbq.get_recording(conn, recording_id)
            if rec is None:
                raise NotFoundError(f"recording {recording_id}")
            tracks = dbq.active_tracks(conn, recording_id)
        if kind:
            tracks = [t for t in tracks if t.kind.value == kind]
        preferred = sorted(tracks, key=lambda t: 0 if t.kind is TrackKind.SENTENCE else 1)
        if not preferred:
            raise NotFoundError("no tracks stored for this recording")
        body = render_srt(preferred[0], rec.trim)
        return PlainTextResponse(body, media_type="application/x-subrip; charset=utf-8")

    @app.get("/api/v1/stats")
    def stats(user: Authed, language: str | None = None):
        return stats_for_world(rt.db, cfg, language).to_dict()

    app.state.runtime = rt
    return app
