"""Error taxonomy shared across the platform.

Every failure mode carries a stable machine-readable code (the ``code``
class attribute) so the HTTP layer and the CLI can map it without string
matching on messages.
"""

from __future__ import annotations


class SignCollectError(Exception):
    """Base class; ``code`` identifies the failure for API/CLI mapping."""

    code = "E_INTERNAL"

    def __init__(self, detail: str = ""):
        self.detail = detail
        super().__init__(detail or self.code)

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}" if self.detail else self.code


# --- domain-core ---

class IllegalTransition(SignCollectError):
    code = "E_ILLEGAL_TRANSITION"


class TrimOrderError(SignCollectError):
    code = "E_TRIM_ORDER"


class TrimBoundsError(SignCollectError):
    code = "E_TRIM_BOUNDS"


class BadSegmentError(SignCollectError):
    code = "E_BAD_SEGMENT"


# --- prompt ingest ---

class BadHeaderError(SignCollectError):
    code = "E_BAD_HEADER"


class UnknownLanguageError(SignCollectError):
    code = "E_UNKNOWN_LANGUAGE"


class StoreError(SignCollectError):
    code = "E_STORE"


# --- assignment / auth ---

class RoleError(SignCollectError):
    code = "E_ROLE"


class UnauthenticatedError(SignCollectError):
    code = "E_UNAUTHENTICATED"


class RateLimitedError(SignCollectError):
    code = "E_RATE_LIMITED"


# --- workflow engine ---

class NoPromptError(SignCollectError):
    code = "E_NO_PROMPT"


class LangMismatchError(SignCollectError):
    code = "E_LANG_MISMATCH"


class MissingMetaError(SignCollectError):
    code = "E_MISSING_META"


class NoBlobError(SignCollectError):
    code = "E_NO_BLOB"


class SelfValidationError(SignCollectError):
    code = "E_SELF_VALIDATION"


class WrongStateError(SignCollectError):
    code = "E_WRONG_STATE"


class StaleError(SignCollectError):
    code = "E_STALE"


class AlreadyVotedError(SignCollectError):
    code = "E_ALREADY_VOTED"


class MissingScriptError(SignCollectError):
    code = "E_MISSING_SCRIPT"


class ScriptTooShortError(SignCollectError):
    code = "E_SCRIPT_TOO_SHORT"


class NoTracksError(SignCollectError):
    code = "E_NO_TRACKS"


# --- annotation model ---

class TrackValidationError(SignCollectError):
    """Raised when validate_track reports issues; first issue names the code."""

    code = "E_INVALID_TRACK"

    def __init__(self, issues):
        self.issues = list(issues)
        if self.issues:
            self.code = self.issues[0].code
        detail = "; ".join(str(i) for i in self.issues)
        super().__init__(detail)


class InvalidTrackError(SignCollectError):
    code = "E_INVALID_TRACK"


class SrtSyntaxError(SignCollectError):
    code = "E_SRT_SYNTAX"

    def __init__(self, detail: str = "", line: int | None = None):
        self.line = line
        if line is not None:
            detail = f"line {line}: {detail}"
        super().__init__(detail)


# --- object store ---

class BadExtError(SignCollectError):
    code = "E_BAD_EXT"


class BadKeyError(SignCollectError):
    code = "E_BAD_KEY"


class TooLargeError(SignCollectError):
    code = "E_TOO_LARGE"


class NotFoundError(SignCollectError):
    code = "E_NOT_FOUND"


class BackendError(SignCollectError):
    """Transient backend failure; callers may retry the same operation."""

    code = "E_BACKEND"


class BadMediaTypeError(SignCollectError):
    code = "E_BAD_MEDIA_TYPE"


# --- export / keypoints ---

class ExportIoError(SignCollectError):
    code = "E_IO"


class FrameMismatchError(SignCollectError):
    code = "E_FRAME_MISMATCH"

    def __init__(self, expected: int, actual: int, tolerance: int = 1):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"expected {expected} frames (±{tolerance}), sidecar has {actual}"
        )


class SidecarSyntaxError(SignCollectError):
    code = "E_SIDECAR_SYNTAX"


class ConfigError(SignCollectError):
    code = "E_CONFIG"


# HTTP status per error code; anything unlisted is a 500.
STATUS_BY_CODE = {
    "E_UNAUTHENTICATED": 401,
    "E_ROLE": 403,
    "E_SELF_VALIDATION": 403,
    "E_NO_PROMPT": 404,
    "E_NOT_FOUND": 404,
    "E_WRONG_STATE": 409,
    "E_STALE": 409,
    "E_ALREADY_VOTED": 409,
    "E_TOO_LARGE": 413,
    "E_BAD_MEDIA_TYPE": 415,
    "E_RATE_LIMITED": 429,
    "E_ILLEGAL_TRANSITION": 422,
    "E_TRIM_ORDER": 422,
    "E_TRIM_BOUNDS": 422,
    "E_BAD_SEGMENT": 422,
    "E_BAD_HEADER": 422,
    "E_UNKNOWN_LANGUAGE": 422,
    "E_LANG_MISMATCH": 422,
    "E_MISSING_META": 422,
    "E_NO_BLOB": 422,
    "E_MISSING_SCRIPT": 422,
    "E_SCRIPT_TOO_SHORT": 422,
    "E_NO_TRACKS": 422,
    "E_OVERLAP": 422,
    "E_OUT_OF_TRIM": 422,
    "E_UNSORTED": 422,
    "E_TEXT_MISMATCH": 422,
    "E_MULTIWORD_GLOSS": 422,
    "E_INVALID_TRACK": 422,
    "E_SRT_SYNTAX": 422,
    "E_BAD_EXT": 422,
    "E_BAD_KEY": 422,
    "E_FRAME_MISMATCH": 422,
    "E_SIDECAR_SYNTAX": 422,
    "E_BACKEND": 503,
    "E_STORE": 503,
}
