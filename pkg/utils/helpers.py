import hashlib
import logging
import os
import platform as host_platform
import re
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

from models.version import Platform, parse_platform

logger = logging.getLogger(__name__)

_TOKEN_CLEAN_RE = re.compile(r"[^a-z0-9_]+")


def generate_hash(content: bytes) -> str:
    """sha256 hex digest of a byte string"""
    return hashlib.sha256(content).hexdigest()


def hash_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> None:
    """Write to a temp file in the same directory, then rename over ``path``.

    Readers see either the old content or the new one, never a partial file.
    """
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def format_file_size(size_bytes: int) -> str:
    """Format file size in human readable format"""
    if size_bytes == 0:
        return "0 B"

    size_names = ["B", "KB", "MB", "GB", "TB"]
    size = float(size_bytes)
    i = 0
    while size >= 1024 and i < len(size_names) - 1:
        size /= 1024.0
        i += 1

    return f"{size:.1f} {size_names[i]}"


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def format_timestamp(moment: datetime) -> str:
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return moment.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_timestamp(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    moment = datetime.fromisoformat(text)
    if moment.tzinfo is None:
        raise ValueError(f"timestamp without timezone: {text!r}")
    return moment.astimezone(timezone.utc)


def detect_platform(override: Optional[str] = None) -> Platform:
    """The concrete ``<os>-<arch>`` platform of this host."""
    if override:
        return parse_platform(override)
    os_name = _TOKEN_CLEAN_RE.sub("_", host_platform.system().lower()) or "unknown"
    arch = _TOKEN_CLEAN_RE.sub("_", host_platform.machine().lower()) or "unknown"
    return parse_platform(f"{os_name}-{arch}")
