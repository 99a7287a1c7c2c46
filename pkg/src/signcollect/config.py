"""Deployment configuration.

Flat `key = value` file, `#` comments, unknown keys rejected by name.
STORE_* environment variables override the storage settings so the same
config file works across environments.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .domain import LanguagePair
from .errors import ConfigError

DEFAULT_LANGUAGES = (
    LanguagePair("bn-BdSL", "Bangla / Bangladeshi Sign Language"),
    LanguagePair("en-ASL", "English / American Sign Language"),
)


@dataclass
class Config:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    db_path: str = "signcollect.db"
    store_backend: str = "local"            # local | s3
    store_root: str = "objects"
    store_endpoint: str = ""
    store_bucket: str = ""
    store_key_id: str = ""
    store_secret: str = ""
    language_pairs: tuple[LanguagePair, ...] = DEFAULT_LANGUAGES
    topic_sentence_count: int = 5
    validation_quorum: int = 1
    allow_repeat_recordings: bool = False
    coverage_weighted: bool = False
    free_gloss_labels: bool = False
    max_upload_mb: int = 512
    max_csv_mb: int = 10
    lease_ttl_s: int = 600
    session_ttl_hours: int = 168
    requests_per_minute: int = 600
    export_hash_key: str = "signcollect-export"

    @property
    def max_upload_bytes(self) -> int:
        return self.max_upload_mb * 1024 * 1024

    @property
    def max_csv_bytes(self) -> int:
        return self.max_csv_mb * 1024 * 1024

    def language_codes(self) -> set[str]:
        return {p.code for p in self.language_pairs}


_INT_KEYS = {
    "listen_port", "topic_sentence_count", "validation_quorum", "max_upload_mb",
    "max_csv_mb", "lease_ttl_s", "session_ttl_hours", "requests_per_minute",
}
_BOOL_KEYS = {"allow_repeat_recordings", "coverage_weighted", "free_gloss_labels"}
_KNOWN_KEYS = {f.name for f in fields(Config)}


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"key {key!r}: expected boolean, got {raw!r}")


def _parse_languages(raw: str) -> tuple[LanguagePair, ...]:
    pairs = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        code, _, display = item.partition(":")
        try:
            pairs.append(LanguagePair(code.strip(), display.strip() or code.strip()))
        except ValueError as exc:
            raise ConfigError(f"key 'language_pairs': {exc}") from None
    if not pairs:
        raise ConfigError("key 'language_pairs': no pairs given")
    return tuple(pairs)


def load_config(path: str | Path | None = None, env=os.environ) -> Config:
    """Parse the config file (when given), apply env overrides, validate."""
    cfg = Config()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {line_no}: expected key = value, got {line!r}")
            key = key.strip()
            value = value.strip()
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"unknown key {key!r} (line {line_no})")
            if key == "language_pairs":
                setattr(cfg, key, _parse_languages(value))
            elif key in _INT_KEYS:
                try:
                    setattr(cfg, key, int(value))
                except ValueError:
                    raise ConfigError(f"key {key!r}: expected integer, got {value!r}") from None
            elif key in _BOOL_KEYS:
                setattr(cfg, key, _parse_bool(key, value))
            else:
                setattr(cfg, key, value)

    for env_key, attr in (
        ("STORE_ENDPOINT", "store_endpoint"),
        ("STORE_BUCKET", "store_bucket"),
        ("STORE_KEY_ID", "store_key_id"),
        ("STORE_SECRET", "store_secret"),
    ):
        if env.get(env_key):
            setattr(cfg, attr, env[env_key])

    validate_config(cfg)
    return cfg


def validate_config(cfg: Config) -> None:
    if cfg.store_backend not in ("local", "s3"):
        raise ConfigError(f"key 'store_backend': must be local or s3, got {cfg.store_backend!r}")
    if cfg.store_backend == "s3":
        if not cfg.store_endpoint:
            raise ConfigError("key 'store_endpoint': required for the s3 backend")
        if not cfg.store_bucket:
            raise ConfigError("key 'store_bucket': required for the s3 backend")
    if cfg.validation_quorum < 1:
        raise ConfigError("key 'validation_quorum': must be >= 1")
    if cfg.topic_sentence_count < 1:
        raise ConfigError("key 'topic_sentence_count': must be >= 1")
