"""Content-addressed blob storage for videos and keypoint sidecars.

Keys are `videos/<sha256><ext>` or `keypoints/<sha256>.jsonl`, so identical
content always converges to one object and a stored object can never change.
Two interchangeable backends: a local directory tree mirroring key paths,
and any S3-compatible endpoint (spoken to directly over HTTP with SigV4
request signing; credentials via STORE_* environment variables).
"""

from __future__ import annotations

import hashlib
import hmac
import os
import re
import shutil
import tempfile
import urllib.parse
from datetime import datetime, timezone
from pathlib import Path
from typing import BinaryIO

import httpx

from .errors import (
    BackendError,
    BadExtError,
    BadKeyError,
    NotFoundError,
    TooLargeError,
)

VIDEO_EXTS = (".webm", ".mp4")
SIDECAR_EXT = ".jsonl"

KEY_RE = re.compile(
    r"^(videos/[0-9a-f]{64}(\.webm|\.mp4)|keypoints/[0-9a-f]{64}\.jsonl)$"
)

DEFAULT_MAX_BYTES = 512 * 1024 * 1024
_CHUNK = 1024 * 1024


def _prefix_for(ext: str) -> str:
    if ext in VIDEO_EXTS:
        return "videos/"
    if ext == SIDECAR_EXT:
        return "keypoints/"
    raise BadExtError(f"unsupported extension {ext!r}")


def key_for(data: bytes, ext: str) -> str:
    """Deterministic content-addressed key for a finished byte sequence."""
    prefix = _prefix_for(ext)
    return f"{prefix}{hashlib.sha256(data).hexdigest()}{ext}"


def check_key(key: str) -> str:
    if not KEY_RE.match(key):
        raise BadKeyError(repr(key))
    return key


class _HashingReader:
    """Drains a source stream chunk-wise, hashing and size-capping as it goes."""

    def __init__(self, source: BinaryIO, max_bytes: int):
        self.source = source
        self.max_bytes = max_bytes
        self.digest = hashlib.sha256()
        self.size = 0

    def chunks(self):
        while True:
            chunk = self.source.read(_CHUNK)
            if not chunk:
                return
            self.size += len(chunk)
            if self.size > self.max_bytes:
                raise TooLargeError(f"object exceeds {self.max_bytes} bytes")
            self.digest.update(chunk)
            yield chunk


class LocalStore:
    """Objects as files under a root directory mirroring key paths.

    Uploads stream into a temp file and are renamed into place only after
    full receipt, so aborted uploads never leave a visible object.
    """

    def __init__(self, root: str | Path, max_bytes: int = DEFAULT_MAX_BYTES):
        self.root = Path(root)
        self.max_bytes = max_bytes
        (self.root / "tmp").mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key

    def put(self, data: bytes | BinaryIO, ext: str) -> str:
        if isinstance(data, bytes):
            import io
            data = io.BytesIO(data)
        prefix = _prefix_for(ext)
        reader = _HashingReader(data, self.max_bytes)
        fd, tmp_name = tempfile.mkstemp(dir=self.root / "tmp")
        try:
            with os.fdopen(fd, "wb") as tmp:
                for chunk in reader.chunks():
                    tmp.write(chunk)
            key = f"{prefix}{reader.digest.hexdigest()}{ext}"
            target = self._path(key)
            target.parent.mkdir(parents=True, exist_ok=True)
            if not target.exists():
                os.replace(tmp_name, target)
            return key
        finally:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)

    def get(self, key: str) -> bytes:
        check_key(key)
        path = self._path(key)
        if not path.is_file():
            raise NotFoundError(key)
        return path.read_bytes()

    def exists(self, key: str) -> bool:
        check_key(key)
        return self._path(key).is_file()

    def copy_to(self, key: str, dest: Path) -> None:
        check_key(key)
        path = self._path(key)
        if not path.is_file():
            raise NotFoundError(key)
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(path, dest)


def sigv4_sign(
    method: str,
    url: str,
    headers: dict[str, str],
    payload_hash: str,
    key_id: str,
    secret: str,
    amz_date: str,
    region: str = "us-east-1",
    service: str = "s3",
) -> str:
    """AWS signature v4 Authorization header value.

    ``headers`` is the exact set to sign; it must already contain host and
    x-amz-date. Verified against the published reference request vector.
    """
    parsed = urllib.parse.urlsplit(url)
    datestamp = amz_date[:8]

    canonical_uri = urllib.parse.quote(parsed.path or "/", safe="/")
    query_items = urllib.parse.parse_qsl(parsed.query, keep_blank_values=True)
    canonical_query = "&".join(
        f"{urllib.parse.quote(k, safe='-_.~')}={urllib.parse.quote(v, safe='-_.~')}"
        for k, v in sorted(query_items)
    )
    names = sorted(h.lower() for h in headers)
    lookup = {h.lower(): v for h, v in headers.items()}
    signed_headers = ";".join(names)
    canonical_headers = "".join(f"{n}:{lookup[n].strip()}\n" for n in names)
    canonical_request = "\n".join([
        method, canonical_uri, canonical_query,
        canonical_headers, signed_headers, payload_hash,
    ])

    scope = f"{datestamp}/{region}/{service}/aws4_request"
    string_to_sign = "\n".join([
        "AWS4-HMAC-SHA256", amz_date, scope,
        hashlib.sha256(canonical_request.encode()).hexdigest(),
    ])

    def hmac_sha256(key: bytes, msg: str) -> bytes:
        return hmac.new(key, msg.encode(), hashlib.sha256).digest()

    k_date = hmac_sha256(b"AWS4" + secret.encode(), datestamp)
    k_region = hmac_sha256(k_date, region)
    k_service = hmac_sha256(k_region, service)
    k_signing = hmac_sha256(k_service, "aws4_request")
    signature = hmac.new(k_signing, string_to_sign.encode(), hashlib.sha256).hexdigest()

    return (
        f"AWS4-HMAC-SHA256 Credential={key_id}/{scope}, "
        f"SignedHeaders={signed_headers}, Signature={signature}"
    )


def _sigv4_headers(
    method: str,
    url: str,
    payload_hash: str,
    key_id: str,
    secret: str,
    region: str = "us-east-1",
    now: datetime | None = None,
) -> dict[str, str]:
    """Request headers for one signed S3 call."""
    now = now or datetime.now(timezone.utc)
    amz_date = now.strftime("%Y%m%dT%H%M%SZ")
    headers = {
        "host": urllib.parse.urlsplit(url).netloc,
        "x-amz-content-sha256": payload_hash,
        "x-amz-date": amz_date,
    }
    auth = sigv4_sign(method, url, headers, payload_hash, key_id, secret,
                      amz_date, region=region, service="s3")
    return {
        "x-amz-content-sha256": payload_hash,
        "x-amz-date": amz_date,
        "Authorization": auth,
    }


class S3Store:
    """S3-compatible backend over plain HTTP(S).

    Signs requests with SigV4 when credentials are configured; anonymous
    otherwise (useful against local emulators).
    """

    def __init__(
        self,
        endpoint: str,
        bucket: str,
        key_id: str = "",
        secret: str = "",
        region: str = "us-east-1",
        max_bytes: int = DEFAULT_MAX_BYTES,
        timeout: float = 30.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.bucket = bucket
        self.key_id = key_id
        self.secret = secret
        self.region = region
        self.max_bytes = max_bytes
        self._client = httpx.Client(timeout=timeout)

    @classmethod
    def from_env(cls, env=os.environ, **kwargs) -> "S3Store":
        try:
            endpoint = env["STORE_ENDPOINT"]
            bucket = env["STORE_BUCKET"]
        except KeyError as exc:
            raise BackendError(f"missing environment variable {exc}") from None
        return cls(
            endpoint,
            bucket,
            key_id=env.get("STORE_KEY_ID", ""),
            secret=env.get("STORE_SECRET", ""),
            **kwargs,
        )

    def _url(self, key: str) -> str:
        return f"{self.endpoint}/{self.bucket}/{key}"

    def _headers(self, method: str, url: str, payload_hash: str) -> dict[str, str]:
        if not self.key_id:
            return {}
        return _sigv4_headers(method, url, payload_hash, self.key_id, self.secret,
                              region=self.region)

    def _request(self, method: str, key: str, content: bytes | None = None):
        url = self._url(key)
        payload_hash = hashlib.sha256(content or b"").hexdigest()
        headers = self._headers(method, url, payload_hash)
        try:
            return self._client.request(method, url, content=content, headers=headers)
        except httpx.HTTPError as exc:
            raise BackendError(str(exc)) from exc

    def put(self, data: bytes | BinaryIO, ext: str) -> str:
        if isinstance(data, bytes):
            import io
            data = io.BytesIO(data)
        prefix = _prefix_for(ext)
        # spool to disk while hashing: the key is only known at end of stream
        reader = _HashingReader(data, self.max_bytes)
        with tempfile.SpooledTemporaryFile(max_size=8 * 1024 * 1024) as spool:
            for chunk in reader.chunks():
                spool.write(chunk)
            key = f"{prefix}{reader.digest.hexdigest()}{ext}"
            if self.exists(key):
                return key
            spool.seek(0)
            url = self._url(key)
            headers = self._headers("PUT", url, reader.digest.hexdigest())
            try:
                resp = self._client.request("PUT", url, content=spool, headers=headers)
            except httpx.HTTPError as exc:
                raise BackendError(str(exc)) from exc
        if resp.status_code not in (200, 201, 204):
            raise BackendError(f"PUT {key} -> {resp.status_code}")
        return key

    def get(self, key: str) -> bytes:
        check_key(key)
        resp = self._request("GET", key)
        if resp.status_code == 404:
            raise NotFoundError(key)
        if resp.status_code != 200:
            raise BackendError(f"GET {key} -> {resp.status_code}")
        return resp.content

    def exists(self, key: str) -> bool:
        check_key(key)
        resp = self._request("HEAD", key)
        if resp.status_code == 200:
            return True
        if resp.status_code in (404, 403):
            return False
        raise BackendError(f"HEAD {key} -> {resp.status_code}")

    def copy_to(self, key: str, dest: Path) -> None:
        data = self.get(key)
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_bytes(data)
