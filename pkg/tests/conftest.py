import io
import tarfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Union

import pytest

from models.errors import TransportError
from models.version import parse_platform
from services.package_format import pack
from services.repository import build_index
from services.transport import FileTransport, path_to_file_url

TEST_PLATFORM = "linux-x86_64"
FIXED_TIME = datetime(2024, 5, 1, 10, 0, 0, tzinfo=timezone.utc)

FileSpec = Union[str, bytes, tuple]


def write_tarball(path: Path, files: Dict[str, FileSpec]) -> Path:
    """gzip tar from ``{member: content}`` or ``{member: (content, mode)}``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with tarfile.open(path, "w:gz") as tar:
        for member, spec in sorted(files.items()):
            content, mode = spec if isinstance(spec, tuple) else (spec, 0o644)
            data = content.encode() if isinstance(content, str) else content
            info = tarfile.TarInfo(member)
            info.size = len(data)
            info.mode = mode
            tar.addfile(info, io.BytesIO(data))
    return path


def shell(body: str) -> str:
    return "#!/bin/sh\n" + body.strip() + "\n"


class RecordingTransport:
    """FileTransport that remembers every URL it was asked for."""

    def __init__(self):
        self.inner = FileTransport()
        self.calls: List[str] = []

    def get(self, url: str) -> bytes:
        self.calls.append(url)
        return self.inner.get(url)


class ClientTransport:
    """Routes http://testserver/... requests into a FastAPI TestClient."""

    def __init__(self, client):
        self.client = client
        self.calls: List[str] = []

    def get(self, url: str) -> bytes:
        self.calls.append(url)
        response = self.client.get(url)
        if response.status_code != 200:
            raise TransportError(url, f"{response.status_code}")
        return response.content


@pytest.fixture
def platform():
    return parse_platform(TEST_PLATFORM)


@pytest.fixture
def clock():
    return lambda: FIXED_TIME


@pytest.fixture
def make_package(tmp_path):
    """Write an unpacked package tree and return its root."""
    base = tmp_path / "src"

    def make(
        name: str,
        version: str = "1.0",
        *,
        platforms=("any",),
        depends: str = "",
        hooks: Optional[Dict[str, str]] = None,
        upstream_url: Optional[str] = None,
        pkg_files: Optional[Dict[str, FileSpec]] = None,
        description: Optional[str] = None,
    ) -> Path:
        root = base / f"{name}-{version}" / name
        (root / "identification").mkdir(parents=True)
        ident = {
            "NAME": name,
            "VERSION": version,
            "LICENSE": "GPL",
            "PLATFORM": "\n".join(platforms),
            "MAINTAINER": "Build Team <build@example.org>",
        }
        if description is not None:
            ident["DESCRIPTION"] = description
        for field, value in ident.items():
            (root / "identification" / field).write_text(value + "\n")
        (root / "depends").mkdir()
        (root / "depends" / "depends").write_text(depends)
        (root / "pkg").mkdir()
        for relpath, spec in (pkg_files or {}).items():
            content, mode = spec if isinstance(spec, tuple) else (spec, 0o644)
            target = root / "pkg" / relpath
            target.parent.mkdir(parents=True, exist_ok=True)
            if isinstance(content, str):
                target.write_text(content)
            else:
                target.write_bytes(content)
            target.chmod(mode)
        if upstream_url is not None:
            (root / "upstream.url").write_text(upstream_url + "\n")
        for filename, body in (hooks or {}).items():
            hook = root / filename
            hook.write_text(shell(body))
            hook.chmod(0o755)
        return root

    return make


@pytest.fixture
def make_repo(tmp_path):
    """Pack package trees into a repository directory and index it."""

    def make(packages, name: str = "repo") -> Path:
        repo = tmp_path / name
        repo.mkdir(exist_ok=True)
        for root in packages:
            pack(root, repo)
        build_index(repo)
        return repo

    return make


@pytest.fixture
def sds_env(tmp_path, monkeypatch):
    """Point sources, cache and platform at the test's temp directory."""
    sources = tmp_path / "sources"
    sources.write_text("")
    cache = tmp_path / "cache"
    monkeypatch.setenv("SDS_SOURCES", str(sources))
    monkeypatch.setenv("SDS_CACHE", str(cache))
    monkeypatch.setenv("SDS_PLATFORM", TEST_PLATFORM)
    monkeypatch.delenv("SDS_HOOK_TIMEOUT", raising=False)

    def use(*urls_or_dirs) -> Path:
        lines = [
            item if isinstance(item, str) else path_to_file_url(item)
            for item in urls_or_dirs
        ]
        sources.write_text("".join(line + "\n" for line in lines))
        return cache

    return use


def tree_snapshot(root: Path, exclude=()) -> Dict[str, bytes]:
    snapshot = {}
    for path in sorted(root.rglob("*")):
        rel = path.relative_to(root).as_posix()
        if any(rel == prefix or rel.startswith(prefix + "/") for prefix in exclude):
            continue
        snapshot[rel] = path.read_bytes() if path.is_file() else b"<dir>"
    return snapshot


@pytest.fixture
def snapshot():
    return tree_snapshot


@pytest.fixture
def recording_transport():
    return RecordingTransport()


@pytest.fixture
def tarball():
    return write_tarball


@pytest.fixture
def http_transport():
    """Serve a repository directory in-process and return a transport for it."""
    from fastapi.testclient import TestClient

    from main import create_app

    def serve(repo_dir: Path) -> ClientTransport:
        return ClientTransport(TestClient(create_app(repo_dir)))

    return serve


@pytest.fixture(autouse=True)
def _isolated_cwd(tmp_path, monkeypatch):
    # keep a developer's .env out of the settings under test
    monkeypatch.chdir(tmp_path)
