"""SQLite persistence.

One cached connection per thread per database. Writers serialize through
BEGIN IMMEDIATE, which is what gives per-recording compare-and-set its
atomicity; readers run in autocommit and always see the latest committed
state under WAL.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import uuid
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

from .annotation import AnnotationTrack, Segment, TrackKind
from .domain import (
    CameraView,
    ContentType,
    Gender,
    LanguagePair,
    LifecycleState,
    Lighting,
    Prompt,
    Recording,
    Role,
    TrimWindow,
    UserProfile,
    VideoMeta,
)

_SCHEMA = """
CREATE TABLE IF NOT EXISTS language_pairs (
    code TEXT PRIMARY KEY,
    display_name TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS users (
    id TEXT PRIMARY KEY,
    selected_language TEXT NOT NULL,
    gender TEXT,
    age INTEGER,
    locality TEXT,
    roles TEXT NOT NULL DEFAULT '[]',
    pseudonym TEXT,
    age_band TEXT
);
CREATE TABLE IF NOT EXISTS credentials (
    user_id TEXT PRIMARY KEY REFERENCES users(id),
    handle TEXT NOT NULL UNIQUE,
    pw_hash BLOB NOT NULL,
    salt BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
    token_hash TEXT PRIMARY KEY,
    user_id TEXT NOT NULL REFERENCES users(id),
    expires_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS prompts (
    id TEXT PRIMARY KEY,
    content TEXT NOT NULL,
    content_type TEXT NOT NULL,
    language TEXT NOT NULL,
    dedupe_key TEXT NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS recordings (
    id TEXT PRIMARY KEY,
    prompt_id TEXT NOT NULL REFERENCES prompts(id),
    signer_id TEXT NOT NULL REFERENCES users(id),
    video_key TEXT NOT NULL,
    lighting TEXT NOT NULL,
    camera_view TEXT NOT NULL,
    width INTEGER NOT NULL,
    height INTEGER NOT NULL,
    duration_ms INTEGER NOT NULL,
    fps REAL NOT NULL,
    container TEXT NOT NULL,
    trim_start INTEGER NOT NULL,
    trim_end INTEGER NOT NULL,
    state TEXT NOT NULL,
    script TEXT,
    keypoint_key TEXT,
    deferred_annotation TEXT,
    created_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_recordings_state ON recordings(state);
CREATE TABLE IF NOT EXISTS tracks (
    id TEXT PRIMARY KEY,
    recording_id TEXT NOT NULL REFERENCES recordings(id),
    kind TEXT NOT NULL,
    annotator_id TEXT NOT NULL,
    segments TEXT NOT NULL,
    superseded INTEGER NOT NULL DEFAULT 0,
    created_at TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_tracks_recording ON tracks(recording_id);
CREATE TABLE IF NOT EXISTS video_verdicts (
    id TEXT PRIMARY KEY,
    recording_id TEXT NOT NULL,
    validator_id TEXT NOT NULL,
    verdict TEXT NOT NULL,
    corrections TEXT,
    applied INTEGER NOT NULL,
    round INTEGER NOT NULL DEFAULT 0,
    submitted_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS annotation_verdicts (
    id TEXT PRIMARY KEY,
    recording_id TEXT NOT NULL,
    validator_id TEXT NOT NULL,
    verdict TEXT NOT NULL,
    applied INTEGER NOT NULL,
    submitted_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS lifecycle_events (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    recording_id TEXT NOT NULL,
    event TEXT NOT NULL,
    actor_id TEXT,
    at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS completions (
    user_id TEXT NOT NULL,
    kind TEXT NOT NULL,
    item_id TEXT NOT NULL,
    PRIMARY KEY (user_id, kind, item_id)
);
CREATE TABLE IF NOT EXISTS idempotency (
    op TEXT NOT NULL,
    key TEXT NOT NULL,
    response TEXT NOT NULL,
    PRIMARY KEY (op, key)
);
"""


def new_id() -> str:
    return uuid.uuid4().hex


def utcnow_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


class Database:
    def __init__(self, path: str | Path):
        self.path = str(path)
        self._local = threading.local()
        conn = self._connect()
        conn.executescript(_SCHEMA)
        conn.execute("PRAGMA journal_mode=WAL")
        conn.commit()

    def _connect(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            return conn
        conn = sqlite3.connect(self.path, timeout=30.0, isolation_level=None)
        conn.row_factory = sqlite3.Row
        conn.execute("PRAGMA foreign_keys=ON")
        conn.execute("PRAGMA busy_timeout=30000")
        self._local.conn = conn
        return conn

    @contextmanager
    def read(self):
        yield self._connect()

    @contextmanager
    def write(self):
        conn = self._connect()
        conn.execute("BEGIN IMMEDIATE")
        try:
            yield conn
            conn.commit()
        except BaseException:
            conn.rollback()
            raise


# --- row mapping helpers ---

def language_from_row(row) -> LanguagePair:
    return LanguagePair(code=row["code"], display_name=row["display_name"])


def user_from_row(row) -> UserProfile:
    return UserProfile(
        id=row["id"],
        selected_language=row["selected_language"],
        gender=Gender(row["gender"]) if row["gender"] else None,
        age=row["age"],
        locality=row["locality"],
        role_flags=frozenset(Role(r) for r in json.loads(row["roles"])),
    )


def prompt_from_row(row) -> Prompt:
    return Prompt(
        id=row["id"],
        content=row["content"],
        content_type=ContentType(row["content_type"]),
        language=row["language"],
    )


def recording_from_row(row) -> Recording:
    meta = VideoMeta(
        duration_ms=row["duration_ms"],
        fps=row["fps"],
        container=row["container"],
        lighting=Lighting(row["lighting"]),
        camera_view=CameraView(row["camera_view"]),
        resolution=(row["width"], row["height"]),
    )
    return Recording(
        id=row["id"],
        prompt_id=row["prompt_id"],
        signer_id=row["signer_id"],
        video_key=row["video_key"],
        meta=meta,
        trim=TrimWindow(row["trim_start"], row["trim_end"]),
        state=LifecycleState(row["state"]),
        script=row["script"],
        keypoint_key=row["keypoint_key"],
        created_at=datetime.fromisoformat(row["created_at"]),
    )


def segments_to_json(segments) -> str:
    return json.dumps([[s.start_ms, s.end_ms, s.text] for s in segments], ensure_ascii=False)


def segments_from_json(payload: str) -> tuple[Segment, ...]:
    return tuple(Segment(a, b, t) for a, b, t in json.loads(payload))


def track_from_row(row) -> AnnotationTrack:
    return AnnotationTrack(
        kind=TrackKind(row["kind"]),
        segments=segments_from_json(row["segments"]),
        recording_id=row["recording_id"],
        annotator_id=row["annotator_id"],
    )


# --- query helpers ---

def upsert_language(conn, pair: LanguagePair) -> None:
    conn.execute(
        "INSERT INTO language_pairs(code, display_name) VALUES (?, ?) "
        "ON CONFLICT(code) DO UPDATE SET display_name=excluded.display_name",
        (pair.code, pair.display_name),
    )


def get_language(conn, code: str) -> LanguagePair | None:
    row = conn.execute("SELECT * FROM language_pairs WHERE code=?", (code,)).fetchone()
    return language_from_row(row) if row else None


def insert_user(conn, user: UserProfile, pseudonym: str | None = None,
                age_band: str | None = None) -> None:
    conn.execute(
        "INSERT INTO users(id, selected_language, gender, age, locality, roles, pseudonym, age_band) "
        "VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
        (
            user.id,
            user.selected_language,
            user.gender.value if user.gender else None,
            user.age,
            user.locality,
            json.dumps(sorted(r.value for r in user.role_flags)),
            pseudonym,
            age_band,
        ),
    )


def get_user(conn, user_id: str) -> UserProfile | None:
    row = conn.execute("SELECT * FROM users WHERE id=?", (user_id,)).fetchone()
    return user_from_row(row) if row else None


def get_prompt(conn, prompt_id: str) -> Prompt | None:
    row = conn.execute("SELECT * FROM prompts WHERE id=?", (prompt_id,)).fetchone()
    return prompt_from_row(row) if row else None


def get_recording(conn, recording_id: str) -> Recording | None:
    row = conn.execute("SELECT * FROM recordings WHERE id=?", (recording_id,)).fetchone()
    return recording_from_row(row) if row else None


def insert_recording(conn, rec: Recording, deferred_annotation: str | None = None) -> None:
    w, h = rec.meta.resolution
    conn.execute(
        "INSERT INTO recordings(id, prompt_id, signer_id, video_key, lighting, camera_view, "
        "width, height, duration_ms, fps, container, trim_start, trim_end, state, script, "
        "keypoint_key, deferred_annotation, created_at) "
        "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
        (
            rec.id, rec.prompt_id, rec.signer_id, rec.video_key,
            rec.meta.lighting.value, rec.meta.camera_view.value, w, h,
            rec.meta.duration_ms, rec.meta.fps, rec.meta.container,
            rec.trim.start_ms, rec.trim.end_ms, rec.state.value, rec.script,
            rec.keypoint_key, deferred_annotation, rec.created_at.isoformat(),
        ),
    )


def cas_state(conn, recording_id: str, expected: LifecycleState, new: LifecycleState) -> bool:
    """Atomic compare-and-set on the lifecycle state; True iff this call won."""
    cur = conn.execute(
        "UPDATE recordings SET state=? WHERE id=? AND state=?",
        (new.value, recording_id, expected.value),
    )
    return cur.rowcount == 1


def append_event(conn, recording_id: str, event, actor_id: str | None) -> None:
    conn.execute(
        "INSERT INTO lifecycle_events(recording_id, event, actor_id, at) VALUES (?, ?, ?, ?)",
        (recording_id, event.value, actor_id, utcnow_iso()),
    )


def events_for(conn, recording_id: str) -> list[str]:
    rows = conn.execute(
        "SELECT event FROM lifecycle_events WHERE recording_id=? ORDER BY seq",
        (recording_id,),
    ).fetchall()
    return [r["event"] for r in rows]


def active_tracks(conn, recording_id: str) -> list[AnnotationTrack]:
    rows = conn.execute(
        "SELECT * FROM tracks WHERE recording_id=? AND superseded=0 ORDER BY kind",
        (recording_id,),
    ).fetchall()
    return [track_from_row(r) for r in rows]


def insert_track(conn, track: AnnotationTrack) -> str:
    track_id = new_id()
    conn.execute(
        "INSERT INTO tracks(id, recording_id, kind, annotator_id, segments, superseded, created_at) "
        "VALUES (?, ?, ?, ?, ?, 0, ?)",
        (
            track_id, track.recording_id, track.kind.value, track.annotator_id,
            segments_to_json(track.segments), utcnow_iso(),
        ),
    )
    return track_id


def supersede_tracks(conn, recording_id: str) -> None:
    conn.execute("UPDATE tracks SET superseded=1 WHERE recording_id=? AND superseded=0", (recording_id,))


def mark_completed(conn, user_id: str, kind: str, item_id: str) -> None:
    conn.execute(
        "INSERT OR IGNORE INTO completions(user_id, kind, item_id) VALUES (?, ?, ?)",
        (user_id, kind, item_id),
    )


def idempotent_response(conn, op: str, key: str) -> dict | None:
    row = conn.execute(
        "SELECT response FROM idempotency WHERE op=? AND key=?", (op, key)
    ).fetchone()
    return json.loads(row["response"]) if row else None


def store_idempotent(conn, op: str, key: str, response: dict) -> None:
    conn.execute(
        "INSERT INTO idempotency(op, key, response) VALUES (?, ?, ?)",
        (op, key, json.dumps(response)),
    )
