"""Accounts and bearer-token sessions.

Passwords are pbkdf2-hashed; tokens carry 256 bits of entropy and only
their sha256 is stored, so a leaked database cannot replay sessions.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

from . import db as dbq
from .db import Database, new_id
from .domain import Gender, Role, UserProfile
from .errors import UnauthenticatedError

_PBKDF2_ITERATIONS = 120_000


def _hash_password(password: str, salt: bytes) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", password.encode(), salt, _PBKDF2_ITERATIONS)


def _token_hash(token: str) -> str:
    return hashlib.sha256(token.encode()).hexdigest()


@dataclass(frozen=True)
class Session:
    token: str
    user_id: str
    expires_at: datetime


def create_user(
    database: Database,
    handle: str,
    password: str,
    selected_language: str,
    gender: Gender | None = None,
    age: int | None = None,
    locality: str | None = None,
    roles=frozenset({Role.CONTRIBUTOR}),
) -> UserProfile:
    user = UserProfile(
        id=new_id(),
        selected_language=selected_language,
        gender=gender,
        age=age,
        locality=locality,
        role_flags=frozenset(roles),
    )
    salt = secrets.token_bytes(16)
    with database.write() as conn:
        dbq.insert_user(conn, user)
        conn.execute(
            "INSERT INTO credentials(user_id, handle, pw_hash, salt) VALUES (?, ?, ?, ?)",
            (user.id, handle, _hash_password(password, salt), salt),
        )
    return user


def open_session(database: Database, handle: str, password: str, ttl_hours: int = 168) -> Session:
    with database.write() as conn:
        row = conn.execute(
            "SELECT user_id, pw_hash, salt FROM credentials WHERE handle=?", (handle,)
        ).fetchone()
        if row is None:
            # burn comparable time so unknown handles are not distinguishable
            _hash_password(password, b"\x00" * 16)
            raise UnauthenticatedError("unknown handle or wrong password")
        if not hmac.compare_digest(row["pw_hash"], _hash_password(password, row["salt"])):
            raise UnauthenticatedError("unknown handle or wrong password")
        token = secrets.token_urlsafe(32)
        expires = datetime.now(timezone.utc) + timedelta(hours=ttl_hours)
        conn.execute(
            "INSERT INTO sessions(token_hash, user_id, expires_at) VALUES (?, ?, ?)",
            (_token_hash(token), row["user_id"], expires.isoformat()),
        )
    return Session(token=token, user_id=row["user_id"], expires_at=expires)


def authenticate(database: Database, bearer: str | None) -> str:
    """Resolve a bearer token to its user id or raise E_UNAUTHENTICATED."""
    if not bearer:
        raise UnauthenticatedError("missing bearer token")
    digest = _token_hash(bearer)
    with database.read() as conn:
        row = conn.execute(
            "SELECT token_hash, user_id, expires_at FROM sessions WHERE token_hash=?",
            (digest,),
        ).fetchone()
    if row is None or not hmac.compare_digest(row["token_hash"], digest):
        raise UnauthenticatedError("unknown token")
    if datetime.fromisoformat(row["expires_at"]) <= datetime.now(timezone.utc):
        raise UnauthenticatedError("token expired")
    return row["user_id"]


def get_profile(database: Database, user_id: str) -> UserProfile:
    with database.read() as conn:
        user = dbq.get_user(conn, user_id)
    if user is None:
        raise UnauthenticatedError(f"no such user {user_id}")
    return user
