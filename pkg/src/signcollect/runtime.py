"""Wires a deployment together from its config: database, store, services."""

from __future__ import annotations

from dataclasses import dataclass

from .assignment import TaskAssigner
from .blobstore import DEFAULT_MAX_BYTES, LocalStore, S3Store
from .config import Config
from .db import Database, upsert_language
from .workflow import WorkflowEngine


def store_from_config(cfg: Config):
    max_bytes = cfg.max_upload_mb * 1024 * 1024 or DEFAULT_MAX_BYTES
    if cfg.store_backend == "s3":
        return S3Store(
            cfg.store_endpoint,
            cfg.store_bucket,
            key_id=cfg.store_key_id,
            secret=cfg.store_secret,
            max_bytes=max_bytes,
        )
    return LocalStore(cfg.store_root, max_bytes=max_bytes)


@dataclass
class Runtime:
    config: Config
    db: Database
    store: object
    engine: WorkflowEngine
    assigner: TaskAssigner


def build_runtime(cfg: Config) -> Runtime:
    db = Database(cfg.db_path)
    with db.write() as conn:
        for pair in cfg.language_pairs:
            upsert_language(conn, pair)
    store = store_from_config(cfg)
    return Runtime(
        config=cfg,
        db=db,
        store=store,
        engine=WorkflowEngine(db, store, cfg),
        assigner=TaskAssigner(db, cfg),
    )
