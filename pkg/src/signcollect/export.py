"""Dataset snapshots and corpus statistics over validated recordings.

A snapshot directory holds `manifest.jsonl` plus `subtitles/`, `videos/`
and `keypoints/`. Only recordings whose annotations passed validation are
released; entries are pseudonymized (keyed hash of the signer id, 5-year
age bands) and ordered by recording id so identical worlds export
identical bytes.
"""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from . import db as dbq
from .annotation import AnnotationTrack, TrackKind
from .config import Config
from .db import Database, new_id
from .domain import (
    CameraView,
    ContentType,
    LifecycleEvent,
    LifecycleState,
    Lighting,
    Recording,
    TrimWindow,
    VideoMeta,
)
from .errors import NotFoundError
from .keypoints import check_alignment, parse_sidecar
from .srt import parse_srt, render_srt, shift_segments
from .textutils import nfc, tokenize_words

LICENSE = "CC-BY-SA-4.0"

AGE_BAND_YEARS = 5


def pseudonymize(user_id: str, key: str) -> str:
    return hmac.new(key.encode(), user_id.encode(), hashlib.sha256).hexdigest()[:16]


def age_band(age: int | None) -> str | None:
    if age is None:
        return None
    low = (age // AGE_BAND_YEARS) * AGE_BAND_YEARS
    return f"{low}-{low + AGE_BAND_YEARS - 1}"


@dataclass(frozen=True)
class ManifestEntry:
    recording_id: str
    signer: str
    language: str
    prompt_content: str
    content_type: ContentType
    script: str | None
    gender: str | None
    age_band: str | None
    locality: str | None
    lighting: str
    camera_view: str
    width: int
    height: int
    fps: float
    duration_ms: int
    trim_start_ms: int
    trim_end_ms: int
    video_key: str
    subtitles: dict[str, str]
    keypoint_key: str | None
    license: str = LICENSE

    @property
    def trimmed_duration_ms(self) -> int:
        return self.trim_end_ms - self.trim_start_ms

    @property
    def transcript(self) -> str:
        return self.script if self.content_type is ContentType.TOPIC else self.prompt_content

    def to_json(self) -> str:
        payload = {
            "recording_id": self.recording_id,
            "signer": self.signer,
            "language": self.language,
            "prompt": {"content": self.prompt_content, "content_type": self.content_type.value},
            "script": self.script,
            "demographics": {
                "gender": self.gender,
                "age_band": self.age_band,
                "locality": self.locality,
            },
            "meta": {
                "lighting": self.lighting,
                "camera_view": self.camera_view,
                "resolution": {"width": self.width, "height": self.height},
                "fps": self.fps,
                "duration_ms": self.duration_ms,
            },
            "trim": {"start_ms": self.trim_start_ms, "end_ms": self.trim_end_ms},
            "video_key": self.video_key,
            "subtitles": self.subtitles,
            "keypoint_key": self.keypoint_key,
            "license": self.license,
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "ManifestEntry":
        d = json.loads(line)
        return cls(
            recording_id=d["recording_id"],
            signer=d["signer"],
            language=d["language"],
            prompt_content=d["prompt"]["content"],
            content_type=ContentType(d["prompt"]["content_type"]),
            script=d.get("script"),
            gender=d["demographics"].get("gender"),
            age_band=d["demographics"].get("age_band"),
            locality=d["demographics"].get("locality"),
            lighting=d["meta"]["lighting"],
            camera_view=d["meta"]["camera_view"],
            width=d["meta"]["resolution"]["width"],
            height=d["meta"]["resolution"]["height"],
            fps=d["meta"]["fps"],
            duration_ms=d["meta"]["duration_ms"],
            trim_start_ms=d["trim"]["start_ms"],
            trim_end_ms=d["trim"]["end_ms"],
            video_key=d["video_key"],
            subtitles=d.get("subtitles") or {},
            keypoint_key=d.get("keypoint_key"),
            license=d.get("license", LICENSE),
        )


@dataclass
class CorpusStats:
    recording_count: int = 0
    scripted_count: int = 0
    spontaneous_count: int = 0
    total_duration_hours: float = 0.0
    total_words: int = 0
    unique_words: int = 0
    avg_words_per_recording: float | None = None
    avg_duration_s: float | None = None

    FIELD_ORDER = (
        "recording_count", "scripted_count", "spontaneous_count",
        "total_duration_hours", "total_words", "unique_words",
        "avg_words_per_recording", "avg_duration_s",
    )

    REAL_FIELDS = ("total_duration_hours", "avg_words_per_recording", "avg_duration_s")

    def lines(self) -> list[str]:
        """`key: value` lines, reals with 3 decimals, None printed as null."""
        out = []
        for name in self.FIELD_ORDER:
            value = getattr(self, name)
            if value is None:
                out.append(f"{name}: null")
            elif name in self.REAL_FIELDS:
                out.append(f"{name}: {value:.3f}")
            else:
                out.append(f"{name}: {value}")
        return out

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELD_ORDER}


@dataclass
class SnapshotReport:
    out_dir: str = ""
    entries_written: int = 0
    rejected_excluded: int = 0
    state_counts: dict[str, int] = field(default_factory=dict)
    empty: bool = False
    figures: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"out_dir: {self.out_dir}", f"entries_written: {self.entries_written}",
               f"rejected_excluded: {self.rejected_excluded}"]
        for state in sorted(self.state_counts):
            out.append(f"state[{state}]: {self.state_counts[state]}")
        if self.empty:
            out.append("warning: no recordings matched the export filter (E_EMPTY)")
        for fig in self.figures:
            out.append(f"figure: {fig}")
        return out


def _subtitle_paths(recording_id: str, kinds) -> dict[str, str]:
    return {kind.value: f"subtitles/{recording_id}.{kind.value}.srt" for kind in sorted(kinds, key=lambda k: k.value)}


def build_manifest_entries(
    database: Database,
    config: Config,
    language: str | None = None,
    date_from: datetime | None = None,
    date_to: datetime | None = None,
) -> list[tuple[ManifestEntry, list[AnnotationTrack]]]:
    """Manifest entries (with their tracks) for validated recordings, ordered by id."""
    out = []
    with database.read() as conn:
        sql = (
            "SELECT r.*, p.content AS prompt_content, p.content_type AS prompt_type, "
            "p.language AS language, u.gender, u.age, u.locality, u.pseudonym, "
            "u.age_band AS stored_age_band "
            "FROM recordings r JOIN prompts p ON p.id = r.prompt_id "
            "JOIN users u ON u.id = r.signer_id WHERE r.state=?"
        )
        params: list = [LifecycleState.ANNOTATION_VALIDATED.value]
        if language:
            sql += " AND p.language=?"
            params.append(language)
        sql += " ORDER BY r.id"
        for row in conn.execute(sql, params).fetchall():
            created = datetime.fromisoformat(row["created_at"])
            if date_from and created < date_from:
                continue
            if date_to and created >= date_to:
                continue
            tracks = dbq.active_tracks(conn, row["id"])
            entry = ManifestEntry(
                recording_id=row["id"],
                signer=row["pseudonym"] or pseudonymize(row["signer_id"], config.export_hash_key),
                language=row["language"],
                prompt_content=row["prompt_content"],
                content_type=ContentType(row["prompt_type"]),
                script=row["script"],
                gender=row["gender"],
                age_band=row["stored_age_band"] or age_band(row["age"]),
                locality=row["locality"],
                lighting=row["lighting"],
                camera_view=row["camera_view"],
                width=row["width"],
                height=row["height"],
                fps=row["fps"],
                duration_ms=row["duration_ms"],
                trim_start_ms=row["trim_start"],
                trim_end_ms=row["trim_end"],
                video_key=row["video_key"],
                subtitles=_subtitle_paths(row["id"], [t.kind for t in tracks]),
                keypoint_key=row["keypoint_key"],
            )
            out.append((entry, tracks))
    return out


def _state_counts(database: Database, language: str | None) -> dict[str, int]:
    with database.read() as conn:
        sql = (
            "SELECT r.state AS state, COUNT(*) AS n FROM recordings r "
            "JOIN prompts p ON p.id = r.prompt_id"
        )
        params: list = []
        if language:
            sql += " WHERE p.language=?"
            params.append(language)
        sql += " GROUP BY r.state"
        rows = conn.execute(sql, params).fetchall()
    counts = {state.value: 0 for state in LifecycleState}
    for row in rows:
        counts[row["state"]] = row["n"]
    return counts


def export_snapshot(
    database: Database,
    store,
    config: Config,
    out_dir: str | Path,
    language: str | None = None,
    date_from: datetime | None = None,
    date_to: datetime | None = None,
    figures: bool = False,
) -> SnapshotReport:
    """Write manifest + subtitles + blobs for every validated recording."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries = build_manifest_entries(database, config, language, date_from, date_to)
    report = SnapshotReport(out_dir=str(out_dir))
    report.state_counts = _state_counts(database, language)
    report.rejected_excluded = report.state_counts.get(LifecycleState.VIDEO_REJECTED.value, 0)

    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        for entry, tracks in entries:
            fh.write(entry.to_json())
            fh.write("\n")

    for entry, tracks in entries:
        trim = TrimWindow(entry.trim_start_ms, entry.trim_end_ms)
        for track in tracks:
            srt_path = out_dir / entry.subtitles[track.kind.value]
            srt_path.parent.mkdir(parents=True, exist_ok=True)
            with open(srt_path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(render_srt(track, trim))
        store.copy_to(entry.video_key, out_dir / entry.video_key)
        if entry.keypoint_key:
            store.copy_to(entry.keypoint_key, out_dir / entry.keypoint_key)

    report.entries_written = len(entries)
    report.empty = not entries
    if figures:
        from .report import render_figures

        report.figures = [
            str(p.relative_to(out_dir))
            for p in render_figures([e for e, _ in entries], report.state_counts,
                                    out_dir / "figures")
        ]
    return report


def compute_stats(entries) -> CorpusStats:
    """Corpus statistics over manifest entries.

    Word counts come from the transcript (prompt content for text prompts,
    script for topics), so validated-but-sparsely-annotated recordings
    still count.
    """
    stats = CorpusStats(recording_count=len(entries))
    vocabulary: set[str] = set()
    total_ms = 0
    for entry in entries:
        if entry.content_type is ContentType.TOPIC:
            stats.spontaneous_count += 1
        else:
            stats.scripted_count += 1
        tokens = [nfc(t).casefold() for t in tokenize_words(entry.transcript or "")]
        stats.total_words += len(tokens)
        vocabulary.update(tokens)
        total_ms += entry.trimmed_duration_ms
    stats.unique_words = len(vocabulary)
    stats.total_duration_hours = total_ms / 3_600_000
    if entries:
        stats.avg_words_per_recording = stats.total_words / len(entries)
        stats.avg_duration_s = total_ms / 1000 / len(entries)
    return stats


def stats_for_world(database: Database, config: Config, language: str | None = None) -> CorpusStats:
    entries = [e for e, _ in build_manifest_entries(database, config, language)]
    return compute_stats(entries)


def attach_keypoints(database: Database, store, recording_id: str, sidecar: bytes) -> str:
    """Validate a sidecar against the recording and link it on success."""
    with database.write() as conn:
        rec = dbq.get_recording(conn, recording_id)
        if rec is None:
            raise NotFoundError(f"recording {recording_id}")
        frames = parse_sidecar(sidecar)
        trimmed = rec.trim.end_ms - rec.trim.start_ms
        check_alignment(len(frames), trimmed, rec.meta.fps)
        key = store.put(sidecar, ".jsonl")
        conn.execute("UPDATE recordings SET keypoint_key=? WHERE id=?", (key, recording_id))
    return key


def import_snapshot(database: Database, store, snapshot_dir: str | Path) -> int:
    """Rebuild a deployment from a released snapshot (for mirrors and round trips).

    Imported signers keep their pseudonyms and age bands verbatim, so a
    re-export reproduces the manifest byte for byte.
    """
    snapshot_dir = Path(snapshot_dir)
    manifest_path = snapshot_dir / "manifest.jsonl"
    if not manifest_path.is_file():
        raise NotFoundError(str(manifest_path))

    imported = 0
    with database.write() as conn:
        for line in manifest_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = ManifestEntry.from_json(line)
            conn.execute(
                "INSERT OR IGNORE INTO language_pairs(code, display_name) VALUES (?, ?)",
                (entry.language, entry.language),
            )
            signer_id = f"import-{entry.signer}"
            conn.execute(
                "INSERT OR IGNORE INTO users(id, selected_language, gender, age, locality, roles, "
                "pseudonym, age_band) VALUES (?, ?, ?, NULL, ?, '[\"contributor\"]', ?, ?)",
                (signer_id, entry.language, entry.gender, entry.locality,
                 entry.signer, entry.age_band),
            )
            dedupe = f"import\x1f{entry.prompt_content}\x1f{entry.content_type.value}\x1f{entry.language}"
            row = conn.execute("SELECT id FROM prompts WHERE dedupe_key=?", (dedupe,)).fetchone()
            if row:
                prompt_id = row["id"]
            else:
                prompt_id = new_id()
                conn.execute(
                    "INSERT INTO prompts(id, content, content_type, language, dedupe_key) "
                    "VALUES (?, ?, ?, ?, ?)",
                    (prompt_id, entry.prompt_content, entry.content_type.value,
                     entry.language, dedupe),
                )

            video_bytes = (snapshot_dir / entry.video_key).read_bytes()
            video_key = store.put(video_bytes, Path(entry.video_key).suffix)
            keypoint_key = None
            if entry.keypoint_key:
                sidecar = (snapshot_dir / entry.keypoint_key).read_bytes()
                keypoint_key = store.put(sidecar, ".jsonl")

            meta = VideoMeta(
                duration_ms=entry.duration_ms,
                fps=entry.fps,
                lighting=Lighting(entry.lighting),
                camera_view=CameraView(entry.camera_view),
                resolution=(entry.width, entry.height),
            )
            rec = Recording(
                id=entry.recording_id,
                prompt_id=prompt_id,
                signer_id=signer_id,
                video_key=video_key,
                meta=meta,
                trim=TrimWindow(entry.trim_start_ms, entry.trim_end_ms),
                state=LifecycleState.ANNOTATION_VALIDATED,
                script=entry.script,
                keypoint_key=keypoint_key,
            )
            dbq.insert_recording(conn, rec)
            dbq.append_event(conn, rec.id, LifecycleEvent.VIDEO_SUBMITTED, signer_id)

            for kind_name, rel_path in entry.subtitles.items():
                segments = parse_srt((snapshot_dir / rel_path).read_text(encoding="utf-8"))
                absolute = shift_segments(segments, entry.trim_start_ms)
                dbq.insert_track(conn, AnnotationTrack(
                    kind=TrackKind(kind_name),
                    segments=tuple(absolute),
                    recording_id=rec.id,
                    annotator_id=signer_id,
                ))
            imported += 1
    return imported
