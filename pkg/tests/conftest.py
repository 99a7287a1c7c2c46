"""Shared fixtures: a small deployment with two users per role bundle."""

import pytest

from signcollect.blobstore import LocalStore
from signcollect.config import Config
from signcollect.db import Database, insert_user, upsert_language
from signcollect.domain import (
    ContentType,
    Role,
    TrimWindow,
    UserProfile,
    VideoMeta,
    CameraView,
    Lighting,
)
from signcollect.prompts import PromptDraft, ingest_prompts
from signcollect.workflow import WorkflowEngine

ALL_ROLES = frozenset({Role.CONTRIBUTOR, Role.VALIDATOR, Role.ANNOTATOR})


def make_user(uid, language="bn-BdSL", roles=ALL_ROLES, **kwargs):
    return UserProfile(id=uid, selected_language=language, role_flags=frozenset(roles), **kwargs)


def make_meta(duration_ms=13374, fps=30.0, **kwargs):
    defaults = dict(
        lighting=Lighting.INDOOR,
        camera_view=CameraView.FRONT,
        resolution=(1280, 720),
        container="video/webm",
    )
    defaults.update(kwargs)
    return VideoMeta(duration_ms=duration_ms, fps=fps, **defaults)


class World:
    """A deployment in a tmp dir plus convenience handles for tests."""

    def __init__(self, tmp_path, config=None):
        tmp_path.mkdir(parents=True, exist_ok=True)
        self.config = config or Config()
        self.config.db_path = str(tmp_path / "world.db")
        self.config.store_root = str(tmp_path / "objects")
        self.db = Database(self.config.db_path)
        self.store = LocalStore(self.config.store_root)
        self.engine = WorkflowEngine(self.db, self.store, self.config)
        with self.db.write() as conn:
            for pair in self.config.language_pairs:
                upsert_language(conn, pair)

    def add_user(self, uid, **kwargs):
        user = make_user(uid, **kwargs)
        with self.db.write() as conn:
            insert_user(conn, user)
        return user

    def add_prompt(self, content, content_type=ContentType.TEXT, language="bn-BdSL"):
        draft = PromptDraft(content, content_type, language, 2)
        ingest_prompts(self.db, [draft])
        with self.db.read() as conn:
            row = conn.execute(
                "SELECT id FROM prompts WHERE dedupe_key=?", (draft.dedupe_key,)
            ).fetchone()
        return row["id"]

    def upload_blob(self, data=b"video bytes", ext=".webm"):
        return self.store.put(data, ext)

    def record(self, user_id, prompt_id, duration_ms=13374, trim=None, idem=None, annotation=None,
               blob=None):
        key = self.upload_blob(blob if blob is not None else f"video::{user_id}::{prompt_id}".encode())
        return self.engine.submit_recording(
            user_id, prompt_id, key,
            make_meta(duration_ms=duration_ms),
            trim or TrimWindow(0, duration_ms),
            idem=idem,
            annotation=annotation,
        )

    def count(self, table):
        with self.db.read() as conn:
            return conn.execute(f"SELECT COUNT(*) AS n FROM {table}").fetchone()["n"]

    def row_counts(self):
        tables = ("recordings", "tracks", "video_verdicts", "annotation_verdicts",
                  "lifecycle_events", "completions", "prompts")
        return {t: self.count(t) for t in tables}


@pytest.fixture
def world(tmp_path):
    return World(tmp_path)
