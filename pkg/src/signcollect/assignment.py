"""Serving the next task to a user at random.

Tasks are leases, not locks: the same item may be offered to several users
and the workflow engine's compare-and-set decides who wins. Pools respect
language, self-exclusion (nobody reviews their own work), and per-user
completion history.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

from . import db as dbq
from .config import Config
from .db import Database
from .domain import LifecycleState, Prompt, Role, UserProfile
from .errors import RoleError


class TaskKind(str, Enum):
    RECORD = "record"
    VALIDATE_VIDEO = "validate_video"
    ANNOTATE = "annotate"
    VALIDATE_ANNOTATION = "validate_annotation"


ROLE_FOR_KIND = {
    TaskKind.RECORD: Role.CONTRIBUTOR,
    TaskKind.VALIDATE_VIDEO: Role.VALIDATOR,
    TaskKind.ANNOTATE: Role.ANNOTATOR,
    TaskKind.VALIDATE_ANNOTATION: Role.VALIDATOR,
}

STATE_FOR_KIND = {
    TaskKind.VALIDATE_VIDEO: LifecycleState.PENDING_VIDEO_VALIDATION,
    TaskKind.ANNOTATE: LifecycleState.PENDING_ANNOTATION,
    TaskKind.VALIDATE_ANNOTATION: LifecycleState.PENDING_ANNOTATION_VALIDATION,
}


@dataclass(frozen=True)
class Task:
    kind: TaskKind
    prompt: Prompt
    recording_id: str | None = None
    lease_ttl_s: int = 600
    issued_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))


class TaskAssigner:
    def __init__(self, database: Database, config: Config | None = None,
                 rng: random.Random | None = None):
        self.db = database
        self.config = config or Config()
        self.rng = rng or random.Random()

    # -- candidate pools ----------------------------------------------

    def _record_pool(self, conn, user: UserProfile) -> list[str]:
        if self.config.allow_repeat_recordings:
            rows = conn.execute(
                "SELECT id FROM prompts WHERE language=?", (user.selected_language,)
            ).fetchall()
        else:
            rows = conn.execute(
                "SELECT id FROM prompts WHERE language=? AND id NOT IN "
                "(SELECT item_id FROM completions WHERE user_id=? AND kind='record')",
                (user.selected_language, user.id),
            ).fetchall()
        return [r["id"] for r in rows]

    def _recording_pool(self, conn, user: UserProfile, kind: TaskKind) -> list[str]:
        state = STATE_FOR_KIND[kind]
        exclude_self = kind in (TaskKind.VALIDATE_VIDEO, TaskKind.VALIDATE_ANNOTATION)
        sql = (
            "SELECT r.id FROM recordings r JOIN prompts p ON p.id = r.prompt_id "
            "WHERE r.state=? AND p.language=? "
            "AND r.id NOT IN (SELECT item_id FROM completions WHERE user_id=? AND kind=?)"
        )
        params = [state.value, user.selected_language, user.id, kind.value]
        if exclude_self:
            sql += " AND r.signer_id != ?"
            params.append(user.id)
        if kind is TaskKind.VALIDATE_ANNOTATION:
            sql += (
                " AND NOT EXISTS (SELECT 1 FROM tracks t "
                "WHERE t.recording_id = r.id AND t.superseded=0 AND t.annotator_id=?)"
            )
            params.append(user.id)
        return [r["id"] for r in conn.execute(sql, params).fetchall()]

    def _pool(self, conn, user: UserProfile, kind: TaskKind) -> list[str]:
        if kind is TaskKind.RECORD:
            return self._record_pool(conn, user)
        return self._recording_pool(conn, user, kind)

    # -- public surface -----------------------------------------------

    def is_eligible(self, user: UserProfile, item_id: str, kind: TaskKind) -> bool:
        """True iff the item would be in next_task's candidate pool."""
        with self.db.read() as conn:
            return item_id in set(self._pool(conn, user, kind))

    def next_task(
        self,
        user: UserProfile,
        kind: TaskKind,
        rng_seed: int | None = None,
    ) -> Task | None:
        kind = TaskKind(kind)
        if not user.has_role(ROLE_FOR_KIND[kind]):
            raise RoleError(f"user {user.id} lacks role {ROLE_FOR_KIND[kind].value}")

        rng = random.Random(rng_seed) if rng_seed is not None else self.rng
        with self.db.read() as conn:
            pool = sorted(self._pool(conn, user, kind))
            if not pool:
                return None
            if kind is TaskKind.RECORD:
                prompt_id = self._pick_prompt(conn, pool, rng)
                prompt = dbq.get_prompt(conn, prompt_id)
                return Task(kind, prompt, lease_ttl_s=self.config.lease_ttl_s)
            recording_id = rng.choice(pool)
            rec = dbq.get_recording(conn, recording_id)
            prompt = dbq.get_prompt(conn, rec.prompt_id)
            return Task(kind, prompt, recording_id=recording_id,
                        lease_ttl_s=self.config.lease_ttl_s)

    def _pick_prompt(self, conn, pool: list[str], rng: random.Random) -> str:
        if not self.config.coverage_weighted:
            return rng.choice(pool)
        # fewest-recordings-first, random tie-break
        counts = {pid: 0 for pid in pool}
        placeholders = ",".join("?" * len(pool))
        rows = conn.execute(
            f"SELECT prompt_id, COUNT(*) AS n FROM recordings "
            f"WHERE prompt_id IN ({placeholders}) GROUP BY prompt_id",
            pool,
        ).fetchall()
        for row in rows:
            counts[row["prompt_id"]] = row["n"]
        fewest = min(counts.values())
        candidates = [pid for pid in pool if counts[pid] == fewest]
        return rng.choice(candidates)
