"""The per-prefix install database.

One text file per installed package at ``<prefix>/.sds/db/<name>``::

    Name: gcc
    Version: 3.4.2
    Platform: linux-x86_64
    InstalledAt: 2024-05-01T10:00:00Z
    Origin: file:///srv/sds
    Depends: make=4.0, libc=2.3

Records are replaced by writing a temp file and renaming it, so a reader
always sees a complete record.
"""
import errno
import fcntl
import logging
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

from models.errors import (
    AlreadyRegistered,
    CorruptRecord,
    InvalidPlatform,
    InvalidVersion,
    LockHeld,
    LockNotHeld,
    NotADirectory,
    PermissionDenied,
    SdsIoError,
)
from models.pydantic_models import (
    NAME_RE,
    DependencyClause,
    InstallMode,
    InstallPrefix,
    InstallRecord,
    Satisfaction,
    SatisfactionStatus,
)
from models.version import parse_platform, parse_version
from services.dep_lang import version_satisfies
from utils.helpers import atomic_write_text, format_timestamp, parse_timestamp

logger = logging.getLogger(__name__)

KNOWN_FIELDS = ("Name", "Version", "Platform", "InstalledAt", "Origin", "Depends")
REQUIRED_FIELDS = ("Name", "Version", "Platform", "InstalledAt")


class PrefixLock:
    """Exclusive advisory lock on ``<prefix>/.sds/lock``.

    flock() is released by the kernel if the process dies, so a stale lock
    file never blocks later installations.
    """

    def __init__(self, path: Path):
        self.path = path
        self._fd: Optional[int] = None

    @property
    def held(self) -> bool:
        return self._fd is not None

    def acquire(self) -> None:
        if self._fd is not None:
            raise LockHeld(self.path)
        fd = os.open(self.path, os.O_CREAT | os.O_WRONLY, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as e:
            os.close(fd)
            if e.errno in (errno.EACCES, errno.EAGAIN):
                raise LockHeld(self.path) from e
            raise
        self._fd = fd
        logger.debug(f"acquired lock {self.path}")

    def release(self) -> None:
        if self._fd is None:
            raise LockNotHeld(f"lock not held: {self.path}")
        fcntl.flock(self._fd, fcntl.LOCK_UN)
        # the lock file stays; removing it would let two holders coexist
        os.close(self._fd)
        self._fd = None
        logger.debug(f"released lock {self.path}")

    def __enter__(self) -> "PrefixLock":
        self.acquire()
        return self

    def __exit__(self, exc_type, exc_value, traceback) -> None:
        self.release()


def render_record(record: InstallRecord) -> str:
    fields = {
        "Name": record.name,
        "Version": str(record.version),
        "Platform": str(record.platform),
        "InstalledAt": format_timestamp(record.installed_at),
        "Origin": record.origin,
        "Depends": ", ".join(record.resolved_deps),
    }
    lines = [f"{key}: {value}".rstrip() for key, value in fields.items()]
    lines.extend(f"{key}: {value}".rstrip() for key, value in record.extra_fields.items())
    return "\n".join(lines) + "\n"


def parse_record(text: str, path: Path) -> InstallRecord:
    fields: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        if not sep or not key or key != key.strip():
            raise CorruptRecord(path, f"line {number} is not a 'Field: value' line")
        if key in fields:
            raise CorruptRecord(path, f"field {key} repeated on line {number}")
        fields[key] = value.strip()

    missing = [key for key in REQUIRED_FIELDS if key not in fields]
    if missing:
        raise CorruptRecord(path, f"missing field(s) {', '.join(missing)}")

    try:
        version = parse_version(fields["Version"])
        platform = parse_platform(fields["Platform"])
        installed_at = parse_timestamp(fields["InstalledAt"])
    except (InvalidVersion, InvalidPlatform, ValueError) as e:
        raise CorruptRecord(path, str(e)) from e

    depends_text = fields.get("Depends", "")
    return InstallRecord(
        name=fields["Name"],
        version=version,
        platform=platform,
        installed_at=installed_at,
        origin=fields.get("Origin", ""),
        resolved_deps=[item.strip() for item in depends_text.split(",") if item.strip()],
        extra_fields={key: value for key, value in fields.items() if key not in KNOWN_FIELDS},
    )


class InstallDatabase:
    def __init__(self, prefix: InstallPrefix):
        self.prefix = prefix
        self.lock = PrefixLock(prefix.lock_file)

    @classmethod
    def init(cls, path: Union[str, Path]) -> "InstallDatabase":
        """Create ``.sds/db`` and the lock file under ``path`` if absent."""
        path = Path(path).expanduser().absolute()
        if path.exists() and not path.is_dir():
            raise NotADirectory(f"install prefix is not a directory: {path}")
        prefix = InstallPrefix(path=path)
        try:
            prefix.db_dir.mkdir(parents=True, exist_ok=True)
            prefix.lock_file.touch(exist_ok=True)
        except PermissionError as e:
            raise PermissionDenied(f"cannot create the install database under {path}: {e}") from e
        except FileExistsError as e:
            raise NotADirectory(f"{e.filename} exists and is not a directory") from e
        except NotADirectoryError as e:
            raise NotADirectory(f"a parent of {path} is not a directory") from e
        return cls(prefix)

    @classmethod
    def open(cls, path: Union[str, Path]) -> "InstallDatabase":
        """Open without creating anything; an uninitialized prefix reads as empty."""
        path = Path(path).expanduser().absolute()
        if path.exists() and not path.is_dir():
            raise NotADirectory(f"install prefix is not a directory: {path}")
        return cls(InstallPrefix(path=path))

    @contextmanager
    def locked(self) -> Iterator["InstallDatabase"]:
        with self.lock:
            yield self

    def _record_path(self, name: str) -> Path:
        if not NAME_RE.fullmatch(name):
            raise ValueError(f"invalid package name {name!r}")
        return self.prefix.db_dir / name

    def query(self, name: str) -> Optional[InstallRecord]:
        path = self._record_path(name)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None
        except UnicodeDecodeError as e:
            raise CorruptRecord(path, "not UTF-8") from e
        except OSError as e:
            raise SdsIoError(f"cannot read {path}: {e}") from e

        record = parse_record(text, path)
        if record.name != name:
            raise CorruptRecord(path, f"record names {record.name!r}")
        return record

    def register(self, record: InstallRecord, mode: InstallMode = InstallMode.FRESH) -> None:
        if not self.lock.held:
            raise LockNotHeld(f"registering {record.name} requires the prefix lock")
        path = self._record_path(record.name)
        if mode is InstallMode.FRESH and path.exists():
            existing = self.query(record.name)
            raise AlreadyRegistered(record.name, str(existing.version))
        if mode is InstallMode.REPLACE:
            previous = self.query(record.name)
            if previous is not None:
                # keep fields this tool does not know about
                record = record.model_copy(
                    update={"extra_fields": {**previous.extra_fields, **record.extra_fields}}
                )
        try:
            atomic_write_text(path, render_record(record))
        except OSError as e:
            raise SdsIoError(f"cannot write {path}: {e}") from e
        logger.info(f"Registered {record.name} {record.version} in {self.prefix.path} ({mode.value})")

    def satisfies(self, clause: DependencyClause) -> Satisfaction:
        record = self.query(clause.name)
        if record is None:
            return Satisfaction(status=SatisfactionStatus.ABSENT)
        if version_satisfies(clause, record.version):
            return Satisfaction(status=SatisfactionStatus.SATISFIED, version=record.version)
        return Satisfaction(status=SatisfactionStatus.VIOLATING, version=record.version)

    def list_records(self) -> List[InstallRecord]:
        if not self.prefix.db_dir.is_dir():
            return []
        records = []
        for path in sorted(self.prefix.db_dir.iterdir()):
            if not NAME_RE.fullmatch(path.name) or not path.is_file():
                continue
            records.append(self.query(path.name))
        return records

    def snapshot(self) -> Dict[str, InstallRecord]:
        return {record.name: record for record in self.list_records()}
