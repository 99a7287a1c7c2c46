"""Admin CSV ingestion of recording prompts.

Expected file shape: a mandatory `content,content_type,language` header,
then one prompt per row. RFC-4180 quoting applies, so commas inside
content survive. Duplicates are detected on the NFC-normalized
(content, content_type, language) triple.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum

from .db import Database, new_id
from .domain import LANGUAGE_CODE_RE, ContentType
from .errors import BadHeaderError, TooLargeError
from .textutils import normalize_sentence

EXPECTED_HEADER = ["content", "content_type", "language"]

MAX_CSV_BYTES = 10 * 1024 * 1024


class RowErrorCode(str, Enum):
    BAD_TYPE = "E_BAD_TYPE"
    BAD_LANGUAGE = "E_BAD_LANGUAGE"
    EMPTY_CONTENT = "E_EMPTY_CONTENT"
    BAD_COLUMN_COUNT = "E_BAD_COLUMN_COUNT"
    UNKNOWN_LANGUAGE = "E_UNKNOWN_LANGUAGE"


@dataclass(frozen=True)
class RowError:
    row_number: int  # 1-based, header is row 1
    code: RowErrorCode
    detail: str = ""


@dataclass(frozen=True)
class PromptDraft:
    content: str
    content_type: ContentType
    language: str
    row_number: int = 0

    @property
    def dedupe_key(self) -> str:
        return "\x1f".join(
            (normalize_sentence(self.content), self.content_type.value, self.language)
        )


@dataclass
class IngestReport:
    accepted: int = 0
    duplicates_skipped: int = 0
    errors: list[RowError] = field(default_factory=list)


def parse_prompt_csv(data: bytes, max_bytes: int = MAX_CSV_BYTES) -> tuple[list[PromptDraft], list[RowError]]:
    """Decode and parse the upload; returns drafts plus per-row errors.

    Raises BadHeaderError when the header row is missing or wrong; every
    data row lands in exactly one of the two result lists.
    """
    if len(data) > max_bytes:
        raise TooLargeError(f"csv is {len(data)} bytes, cap is {max_bytes}")
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise BadHeaderError(f"not valid UTF-8: {exc}") from None

    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise BadHeaderError("empty file") from None
    if [h.strip().lower() for h in header] != EXPECTED_HEADER:
        raise BadHeaderError(f"expected {','.join(EXPECTED_HEADER)}, got {','.join(header)}")

    drafts: list[PromptDraft] = []
    errors: list[RowError] = []
    row_number = 1
    for row in reader:
        if not row:
            continue  # blank line, not a data row
        row_number += 1
        if len(row) != 3:
            errors.append(RowError(row_number, RowErrorCode.BAD_COLUMN_COUNT,
                                   f"{len(row)} columns"))
            continue
        content, type_raw, language = (c.strip() for c in row)
        if not normalize_sentence(content):
            errors.append(RowError(row_number, RowErrorCode.EMPTY_CONTENT))
            continue
        try:
            content_type = ContentType(type_raw.lower())
        except ValueError:
            errors.append(RowError(row_number, RowErrorCode.BAD_TYPE, repr(type_raw)))
            continue
        if not LANGUAGE_CODE_RE.match(language):
            errors.append(RowError(row_number, RowErrorCode.BAD_LANGUAGE, repr(language)))
            continue
        drafts.append(PromptDraft(content, content_type, language, row_number))
    return drafts, errors


def serialize_prompt_csv(drafts) -> bytes:
    """Inverse of parse for well-formed files; used for fixtures and round trips."""
    out = io.StringIO(newline="")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(EXPECTED_HEADER)
    for d in drafts:
        writer.writerow([d.content, d.content_type.value, d.language])
    return out.getvalue().encode("utf-8")


def ingest_prompts(database: Database, drafts, parse_errors=()) -> IngestReport:
    """Register drafts, skipping known triples; atomic over the whole batch.

    parse_errors, when given, are folded into the report so that
    accepted + duplicates_skipped + len(errors) equals the data-row count
    of the originating file.
    """
    report = IngestReport(errors=list(parse_errors))
    with database.write() as conn:
        known = {
            row["dedupe_key"]
            for row in conn.execute("SELECT dedupe_key FROM prompts").fetchall()
        }
        languages = {
            row["code"] for row in conn.execute("SELECT code FROM language_pairs").fetchall()
        }
        for draft in drafts:
            if draft.language not in languages:
                report.errors.append(RowError(
                    draft.row_number, RowErrorCode.UNKNOWN_LANGUAGE, draft.language
                ))
                continue
            key = draft.dedupe_key
            if key in known:
                report.duplicates_skipped += 1
                continue
            conn.execute(
                "INSERT INTO prompts(id, content, content_type, language, dedupe_key) "
                "VALUES (?, ?, ?, ?, ?)",
                (new_id(), draft.content, draft.content_type.value, draft.language, key),
            )
            known.add(key)
            report.accepted += 1
    report.errors.sort(key=lambda e: e.row_number)
    return report


def ingest_csv(database: Database, data: bytes, max_bytes: int = MAX_CSV_BYTES) -> IngestReport:
    """parse_prompt_csv + ingest_prompts in one step."""
    drafts, errors = parse_prompt_csv(data, max_bytes=max_bytes)
    return ingest_prompts(database, drafts, parse_errors=errors)
