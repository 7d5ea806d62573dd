"""Repository index format, index builder and download client.

A repository is a base URL serving ``Index`` plus ``<name>_<version>.spkg``
archives. ``Index`` is a header stanza followed by one stanza per archive::

    SDS-Index: 1

    Name: gcc
    Version: 3.4.2
    Platform: linux-x86_64 sunos-sparc
    Filename: gcc_3.4.2.spkg
    Size: 20480
    SHA256: 9f86d08...
    Depends: make (>= 3.80), libc
    Description: The GNU compiler collection
"""
import asyncio
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union
from urllib.parse import urlparse

import aiofiles
from pydantic import BaseModel, Field, ValidationError

from models.errors import (
    ChecksumMismatch,
    IndexParseError,
    InvalidManifest,
    NotFound,
    SdsError,
    SdsIoError,
    SizeMismatch,
    UsageError,
)
from models.pydantic_models import NAME_RE, IndexEntry, RepositoryIndex, SourcesConfig
from models.version import parse_platform, parse_version
from services.dep_lang import parse_depends_field, render_depends_field
from services.package_format import PACKAGE_SUFFIX, read_manifest_from_archive
from services.transport import Transport, join_url
from utils.helpers import atomic_write_text, format_file_size, generate_hash, hash_file

logger = logging.getLogger(__name__)

INDEX_FILENAME = "Index"
INDEX_HEADER = "SDS-Index: 1"
SOURCE_SCHEMES = ("http", "https", "file")
_REQUIRED_KEYS = ("Name", "Version", "Platform", "Filename", "Size", "SHA256")


class IndexBuildResult(BaseModel):
    index_path: Path
    entries: List[IndexEntry] = Field(default_factory=list)
    # (archive filename, diagnostic) for every excluded archive
    errors: List[Tuple[str, str]] = Field(default_factory=list)


def sort_entries(entries: Iterable[IndexEntry]) -> List[IndexEntry]:
    return sorted(entries, key=lambda entry: (entry.name, entry.version.sort_key))


def render_entry(entry: IndexEntry) -> str:
    lines = [
        f"Name: {entry.name}",
        f"Version: {entry.version}",
        f"Platform: {' '.join(str(p) for p in entry.platforms)}",
        f"Filename: {entry.filename}",
        f"Size: {entry.size}",
        f"SHA256: {entry.sha256}",
    ]
    if entry.depends:
        lines.append(f"Depends: {render_depends_field(entry.depends)}")
    if entry.description:
        lines.append(f"Description: {entry.description}")
    return "\n".join(lines) + "\n"


def render_index(entries: Iterable[IndexEntry]) -> str:
    stanzas = [INDEX_HEADER + "\n"] + [render_entry(entry) for entry in sort_entries(entries)]
    return "\n".join(stanzas)


def _split_stanzas(text: str) -> List[Tuple[int, List[Tuple[int, str]]]]:
    stanzas = []
    current: List[Tuple[int, str]] = []
    start = 1
    for number, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            if not current:
                start = number
            current.append((number, line))
        elif current:
            stanzas.append((start, current))
            current = []
    if current:
        stanzas.append((start, current))
    return stanzas


def _parse_entry(start: int, lines: List[Tuple[int, str]]) -> IndexEntry:
    fields: Dict[str, Tuple[int, str]] = {}
    for number, line in lines:
        key, sep, value = line.partition(":")
        if not sep or not key.strip() or key != key.strip():
            raise IndexParseError(f"expected 'Field: value', got {line!r}", number)
        if key in fields:
            raise IndexParseError(f"field {key} repeated", number)
        fields[key] = (number, value.strip())

    for key in _REQUIRED_KEYS:
        if key not in fields:
            raise IndexParseError(f"stanza lacks {key}", start)

    number, name = fields["Name"]
    if not NAME_RE.fullmatch(name):
        raise IndexParseError(f"invalid package name {name!r}", number)

    try:
        number, value = fields["Version"]
        version = parse_version(value)
        number, value = fields["Platform"]
        platforms = [parse_platform(token) for token in value.split()]
        if not platforms:
            raise IndexParseError("no platform listed", number)
        number, value = fields["Size"]
        if not value.isdigit():
            raise IndexParseError(f"invalid size {value!r}", number)
        size = int(value)
        number, value = fields.get("Depends", (start, ""))
        depends = parse_depends_field(value, number)
    except IndexParseError:
        raise
    except SdsError as e:
        raise IndexParseError(str(e), number) from e

    try:
        return IndexEntry(
            name=name,
            version=version,
            platforms=platforms,
            filename=fields["Filename"][1],
            size=size,
            sha256=fields["SHA256"][1],
            depends=depends,
            description=fields.get("Description", (start, ""))[1],
        )
    except ValidationError as e:
        raise IndexParseError(e.errors()[0]["msg"], start) from e


def parse_index(text: str, base_url: str = "") -> RepositoryIndex:
    stanzas = _split_stanzas(text)
    if not stanzas or [line for _, line in stanzas[0][1]] != [INDEX_HEADER]:
        raise IndexParseError(f"missing '{INDEX_HEADER}' header", 1)

    entries: List[IndexEntry] = []
    previous = None
    for start, lines in stanzas[1:]:
        entry = _parse_entry(start, lines)
        key = (entry.name, entry.version.sort_key)
        if previous is not None:
            if key == previous:
                raise IndexParseError(f"duplicate entry {entry.name} {entry.version}", start)
            if key < previous:
                raise IndexParseError(f"entry {entry.name} {entry.version} is out of order", start)
        previous = key
        entries.append(entry)
    return RepositoryIndex(base_url=base_url, entries=entries)


def build_index(directory: Union[str, Path]) -> IndexBuildResult:
    """Scan ``directory`` for ``.spkg`` archives and (re)write its ``Index``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise SdsIoError(f"repository directory not found: {directory}")
    entries: Dict[Tuple[str, tuple], IndexEntry] = {}
    errors: List[Tuple[str, str]] = []

    for archive in sorted(directory.glob(f"*{PACKAGE_SUFFIX}")):
        try:
            manifest = read_manifest_from_archive(archive)
            if archive.name != manifest.archive_name:
                raise InvalidManifest(f"file should be named {manifest.archive_name}")
            key = (manifest.name, manifest.version.sort_key)
            if key in entries:
                raise InvalidManifest(f"same package version as {entries[key].filename}")
            data = archive.read_bytes()
            entries[key] = IndexEntry(
                name=manifest.name,
                version=manifest.version,
                platforms=manifest.platforms,
                filename=archive.name,
                size=len(data),
                sha256=generate_hash(data),
                depends=manifest.depends,
                description=manifest.description,
            )
            logger.debug(f"Indexed {archive.name} ({format_file_size(len(data))})")
        except (SdsError, OSError) as e:
            logger.error(f"Excluding {archive.name}: {e}")
            errors.append((archive.name, str(e)))

    index_path = directory / INDEX_FILENAME
    atomic_write_text(index_path, render_index(entries.values()))
    logger.info(f"Wrote {index_path} with {len(entries)} entries ({len(errors)} excluded)")
    return IndexBuildResult(index_path=index_path, entries=sort_entries(entries.values()), errors=errors)


def fetch_index(base_url: str, transport: Transport) -> RepositoryIndex:
    data = transport.get(join_url(base_url, INDEX_FILENAME))
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise IndexParseError("Index is not UTF-8", data[: e.start].count(b"\n") + 1) from e
    index = parse_index(text, base_url)
    logger.info(f"Fetched index of {base_url}: {len(index.entries)} entries")
    return index


def _cached_copy_valid(path: Path, entry: IndexEntry) -> bool:
    try:
        return path.stat().st_size == entry.size and hash_file(path) == entry.sha256
    except FileNotFoundError:
        return False


async def fetch_package(
    entry: IndexEntry,
    base_url: str,
    cache_dir: Union[str, Path],
    transport: Transport,
) -> Path:
    """Download one archive into the cache after verifying size and sha256."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    final_path = cache_dir / entry.filename

    if _cached_copy_valid(final_path, entry):
        logger.debug(f"Cache hit for {entry.filename}")
        return final_path

    # a stale or damaged copy must not survive a failed download
    final_path.unlink(missing_ok=True)
    data = await asyncio.to_thread(transport.get, join_url(base_url, entry.filename))
    if len(data) != entry.size:
        raise SizeMismatch(entry.filename, entry.size, len(data))
    actual = generate_hash(data)
    if actual != entry.sha256:
        raise ChecksumMismatch(entry.filename, entry.sha256, actual)

    fd, tmp_name = tempfile.mkstemp(prefix=f".{entry.filename}.", suffix=".part", dir=cache_dir)
    os.close(fd)
    try:
        async with aiofiles.open(tmp_name, "wb") as f:
            await f.write(data)
        os.replace(tmp_name, final_path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise

    logger.info(f"Downloaded {entry.filename} ({format_file_size(entry.size)})")
    return final_path


async def fetch_packages(
    downloads: Sequence[Tuple[IndexEntry, str]],
    cache_dir: Union[str, Path],
    transport: Transport,
    workers: int = 4,
) -> List[Path]:
    """Fetch (entry, base_url) pairs concurrently; results keep input order."""
    semaphore = asyncio.Semaphore(max(1, workers))

    async def limited(entry: IndexEntry, base_url: str) -> Path:
        async with semaphore:
            return await fetch_package(entry, base_url, cache_dir, transport)

    return list(await asyncio.gather(*(limited(entry, url) for entry, url in downloads)))


def parse_sources(text: str) -> SourcesConfig:
    urls = []
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if urlparse(line).scheme.lower() not in SOURCE_SCHEMES:
            raise UsageError(f"sources line {number}: unsupported repository URL {line!r}")
        if line not in urls:
            urls.append(line)
    return SourcesConfig(urls=urls)


def load_sources(path: Union[str, Path]) -> SourcesConfig:
    path = Path(path).expanduser()
    if not path.is_file():
        logger.debug(f"No sources file at {path}")
        return SourcesConfig()
    return parse_sources(path.read_text(encoding="utf-8"))


def fetch_all_indexes(sources: SourcesConfig, transport: Transport) -> List[RepositoryIndex]:
    if not sources.urls:
        raise UsageError("no repository configured (see SDS_SOURCES)")
    return [fetch_index(url, transport) for url in sources.urls]


def search(indexes: Sequence[RepositoryIndex], pattern: str) -> Dict[str, List[str]]:
    """Package name -> available versions (ascending) for names containing ``pattern``."""
    found: Dict[str, list] = {}
    needle = pattern.lower()
    for index in indexes:
        for entry in index.entries:
            if needle in entry.name:
                versions = found.setdefault(entry.name, [])
                if entry.version not in versions:
                    versions.append(entry.version)
    return {name: [str(v) for v in sorted(found[name])] for name in sorted(found)}


def find_latest(indexes: Sequence[RepositoryIndex], name: str) -> Tuple[IndexEntry, str]:
    """Highest version of ``name``; the earliest repository wins ties."""
    best: Optional[Tuple[IndexEntry, str]] = None
    for index in indexes:
        for entry in index.entries:
            if entry.name == name and (best is None or entry.version > best[0].version):
                best = (entry, index.base_url)
    if best is None:
        raise NotFound(f"no package named {name!r} in any repository")
    return best
