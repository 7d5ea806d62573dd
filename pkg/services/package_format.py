"""The on-disk SDS package: a directory tree or its ``.spkg`` archive.

Layout::

    <name>/
        identification/{NAME,VERSION,LICENSE,PLATFORM,MAINTAINER[,DESCRIPTION]}
        depends/depends
        upstream.url            (optional)
        pkg/                    (embedded upstream or binary payload)
        pre-extract, configure, build, post-install, ...   (executable hooks)
"""
import gzip
import io
import logging
import os
import stat
import tarfile
import tempfile
import zlib
from pathlib import Path, PurePosixPath
from typing import Dict, Iterable, List, Optional, Protocol, Union

from models.errors import (
    AmbiguousUpstream,
    CorruptArchive,
    ForbiddenHook,
    InvalidManifest,
    InvalidPlatform,
    InvalidVersion,
    MissingIdentificationFile,
    MultipleTopLevelDirs,
    PathTraversal,
    SdsIoError,
)
from models.pydantic_models import (
    NAME_RE,
    HookKind,
    PackageManifest,
    Phase,
    Stage,
    UpstreamKind,
    UpstreamRef,
)
from models.version import parse_platform, parse_version
from services.dep_lang import parse_depends

logger = logging.getLogger(__name__)

UPSTREAM_URL_FILE = "upstream.url"
UPSTREAM_SCHEMES = ("http", "https", "file")
ARCHIVE_SUFFIXES = (".tar.gz", ".tgz", ".tar.bz2", ".tbz2", ".tar.xz", ".txz", ".tar", ".zip")
PACKAGE_SUFFIX = ".spkg"


class _PackageSource(Protocol):
    label: str

    def read_text(self, relpath: str) -> Optional[str]: ...

    def list_files(self, reldir: str) -> List[str]: ...

    def root_files(self) -> Dict[str, bool]: ...


class _DirectorySource:
    def __init__(self, root: Path):
        self.root = root
        self.label = str(root)

    def read_text(self, relpath: str) -> Optional[str]:
        path = self.root / relpath
        if not path.is_file():
            return None
        try:
            return path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise SdsIoError(f"cannot read {path}: {e}") from e

    def list_files(self, reldir: str) -> List[str]:
        path = self.root / reldir
        if not path.is_dir():
            return []
        return sorted(entry.name for entry in path.iterdir() if entry.is_file())

    def root_files(self) -> Dict[str, bool]:
        """File name -> executable flag for regular files at the root."""
        return {
            entry.name: os.access(entry, os.X_OK)
            for entry in sorted(self.root.iterdir())
            if entry.is_file()
        }


class _ArchiveSource:
    """Reads a package straight out of an opened ``.spkg`` without extracting it."""

    def __init__(self, tar: tarfile.TarFile, top: str, label: str):
        self.tar = tar
        self.label = label
        self.members: Dict[str, tarfile.TarInfo] = {}
        for member in tar.getmembers():
            parts = PurePosixPath(member.name).parts
            if len(parts) > 1 and parts[0] == top:
                self.members[str(PurePosixPath(*parts[1:]))] = member

    def read_text(self, relpath: str) -> Optional[str]:
        member = self.members.get(relpath)
        if member is None or not member.isfile():
            return None
        handle = self.tar.extractfile(member)
        try:
            return handle.read().decode("utf-8")
        except UnicodeDecodeError as e:
            raise SdsIoError(f"{self.label}: {relpath} is not UTF-8") from e

    def list_files(self, reldir: str) -> List[str]:
        return sorted(
            PurePosixPath(path).name
            for path, member in self.members.items()
            if member.isfile() and str(PurePosixPath(path).parent) == reldir
        )

    def root_files(self) -> Dict[str, bool]:
        return {
            path: bool(member.mode & stat.S_IXUSR)
            for path, member in sorted(self.members.items())
            if member.isfile() and "/" not in path
        }


def _identification(source: _PackageSource, field: str, required: bool = True) -> Optional[str]:
    text = source.read_text(f"identification/{field}")
    if text is None:
        if required:
            raise MissingIdentificationFile(field)
        return None
    text = text.strip()
    if required and not text:
        raise InvalidManifest(f"{source.label}: identification/{field} is empty")
    return text


def _detect_upstream(source: _PackageSource) -> UpstreamRef:
    url_text = source.read_text(UPSTREAM_URL_FILE)
    archives = [name for name in source.list_files("pkg") if name.endswith(ARCHIVE_SUFFIXES)]

    if url_text is not None and archives:
        raise AmbiguousUpstream(
            f"{source.label}: both {UPSTREAM_URL_FILE} and pkg/{archives[0]} are present"
        )
    if len(archives) > 1:
        raise AmbiguousUpstream(f"{source.label}: several upstream archives in pkg/: {', '.join(archives)}")

    if url_text is not None:
        lines = [line.strip() for line in url_text.splitlines() if line.strip()]
        if len(lines) != 1:
            raise InvalidManifest(f"{source.label}: {UPSTREAM_URL_FILE} must hold exactly one URL")
        url = lines[0]
        scheme = url.partition("://")[0].lower() if "://" in url else ""
        if scheme not in UPSTREAM_SCHEMES:
            raise InvalidManifest(f"{source.label}: unsupported upstream URL scheme in {url!r}")
        return UpstreamRef(kind=UpstreamKind.URL, url=url)
    if archives:
        return UpstreamRef(kind=UpstreamKind.EMBEDDED, archive_name=archives[0])
    return UpstreamRef(kind=UpstreamKind.NONE)


def _inventory_hooks(source: _PackageSource) -> frozenset:
    hooks = set()
    for filename, executable in source.root_files().items():
        if filename == Stage.REGISTER.value:
            raise ForbiddenHook(Path(source.label) / filename)
        kind = HookKind.from_filename(filename)
        if kind is None:
            continue
        if kind.stage is Stage.DEPENDS and kind.phase is Phase.MAIN:
            # depends/ is the rules directory, never a hook
            continue
        if not executable:
            logger.warning(f"{source.label}: {filename} is not executable and is ignored as a hook")
            continue
        hooks.add(kind)
    return frozenset(hooks)


def _read_manifest(source: _PackageSource) -> PackageManifest:
    name = _identification(source, "NAME")
    version_text = _identification(source, "VERSION")
    license_text = _identification(source, "LICENSE")
    platform_text = _identification(source, "PLATFORM")
    maintainer = _identification(source, "MAINTAINER")
    description = _identification(source, "DESCRIPTION", required=False) or ""

    if not NAME_RE.fullmatch(name):
        raise InvalidManifest(f"{source.label}: invalid package name {name!r}")
    try:
        version = parse_version(version_text)
    except InvalidVersion as e:
        raise InvalidVersion(e.text, f"{source.label}: identification/VERSION: {e}", e.position) from e

    platforms = [parse_platform(line) for line in platform_text.splitlines() if line.strip()]
    if not platforms:
        raise InvalidPlatform(f"{source.label}: identification/PLATFORM lists no platform")

    depends_text = source.read_text("depends/depends")
    depends = parse_depends(depends_text) if depends_text is not None else []

    return PackageManifest(
        name=name,
        version=version,
        license=license_text,
        platforms=platforms,
        maintainer=maintainer,
        description=description.splitlines()[0] if description else "",
        upstream=_detect_upstream(source),
        depends=depends,
        hooks=_inventory_hooks(source),
    )


def load_package(root: Union[str, Path]) -> PackageManifest:
    root = Path(root)
    if not root.is_dir():
        raise SdsIoError(f"package directory not found: {root}")
    manifest = _read_manifest(_DirectorySource(root))
    logger.debug(f"Loaded package {manifest.name} {manifest.version} from {root}")
    return manifest


def _normalize_member(info: tarfile.TarInfo) -> tarfile.TarInfo:
    info.mtime = 0
    info.uid = info.gid = 0
    info.uname = info.gname = ""
    info.mode &= 0o777
    return info


def pack(root: Union[str, Path], out: Union[str, Path]) -> Path:
    """Build ``<out>/<name>_<version>.spkg``; identical trees give identical bytes."""
    root = Path(root)
    manifest = load_package(root)
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        archive_path = out / manifest.archive_name

        paths = sorted(
            (path for path in root.rglob("*")),
            key=lambda path: path.relative_to(root).as_posix(),
        )
        buffer = io.BytesIO()
        with gzip.GzipFile(filename="", mode="wb", fileobj=buffer, mtime=0) as gz:
            with tarfile.open(fileobj=gz, mode="w", format=tarfile.GNU_FORMAT) as tar:
                tar.add(root, arcname=manifest.name, recursive=False, filter=_normalize_member)
                for path in paths:
                    arcname = f"{manifest.name}/{path.relative_to(root).as_posix()}"
                    tar.add(path, arcname=arcname, recursive=False, filter=_normalize_member)

        fd, tmp_name = tempfile.mkstemp(prefix=f".{archive_path.name}.", dir=out)
        with os.fdopen(fd, "wb") as f:
            f.write(buffer.getvalue())
        os.replace(tmp_name, archive_path)
    except OSError as e:
        raise SdsIoError(f"cannot pack {root}: {e}") from e

    logger.info(f"Packed {manifest.name} {manifest.version} into {archive_path}")
    return archive_path


def check_members(members: Iterable[tarfile.TarInfo]) -> List[str]:
    """Reject members escaping the destination; return the top-level names."""
    tops = []
    for member in members:
        path = PurePosixPath(member.name)
        if member.name.startswith("/") or ".." in path.parts:
            raise PathTraversal(member.name)
        if member.issym() or member.islnk():
            target = PurePosixPath(member.linkname)
            if member.linkname.startswith("/") or ".." in target.parts:
                raise PathTraversal(member.name)
        if not (member.isfile() or member.isdir() or member.issym() or member.islnk()):
            raise CorruptArchive(f"unsupported member type: {member.name}")
        parts = [part for part in path.parts if part != "."]
        if parts and parts[0] not in tops:
            tops.append(parts[0])
    return tops


def _open_archive(archive: Path) -> tarfile.TarFile:
    try:
        tar = tarfile.open(archive, mode="r:gz")
        tar.getmembers()
        return tar
    except (tarfile.TarError, EOFError, OSError, zlib.error) as e:
        raise CorruptArchive(f"{archive}: {e}") from e


def _single_top(tar: tarfile.TarFile, archive: Path) -> str:
    tops = check_members(tar.getmembers())
    if not tops:
        raise CorruptArchive(f"{archive}: archive is empty")
    if len(tops) != 1:
        raise MultipleTopLevelDirs(tops)
    return tops[0]


def unpack(archive: Union[str, Path], dest: Union[str, Path]) -> Path:
    archive, dest = Path(archive), Path(dest)
    with _open_archive(archive) as tar:
        top = _single_top(tar, archive)
        dest.mkdir(parents=True, exist_ok=True)
        try:
            if hasattr(tarfile, "data_filter"):
                tar.extractall(dest, filter="data")
            else:
                tar.extractall(dest)
        except (tarfile.TarError, EOFError, OSError) as e:
            raise CorruptArchive(f"{archive}: {e}") from e
    root = dest / top
    logger.debug(f"Unpacked {archive} into {root}")
    return root


def read_manifest_from_archive(archive: Union[str, Path]) -> PackageManifest:
    """Load the manifest of a ``.spkg`` without writing anything to disk."""
    archive = Path(archive)
    with _open_archive(archive) as tar:
        top = _single_top(tar, archive)
        return _read_manifest(_ArchiveSource(tar, top, f"{archive.name}:{top}"))


def is_package_archive(path: Union[str, Path]) -> bool:
    path = Path(path)
    return path.is_file() and path.name.endswith(PACKAGE_SUFFIX)
