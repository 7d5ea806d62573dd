import asyncio
import random

import pytest

from models.errors import (
    ChecksumMismatch,
    IndexParseError,
    NotFound,
    SdsIoError,
    SizeMismatch,
    TransportError,
    UsageError,
)
from services.repository import (
    INDEX_HEADER,
    build_index,
    fetch_all_indexes,
    fetch_index,
    fetch_package,
    fetch_packages,
    find_latest,
    parse_index,
    parse_sources,
    render_index,
    search,
)
from services.transport import path_to_file_url


@pytest.fixture
def gcc_repo(make_package, make_repo):
    return make_repo(
        [
            make_package("gcc", "3.3", description="GNU compiler collection"),
            make_package("gcc", "3.4.2", depends="make (>= 3.80)\nlibc\n", description="GNU compiler collection"),
            make_package("make", "3.81"),
            make_package("libc", "2.3"),
        ]
    )


def test_build_index_lists_every_archive(gcc_repo):
    text = (gcc_repo / "Index").read_text()
    assert text.startswith(INDEX_HEADER + "\n\n")
    index = parse_index(text)
    assert [(e.name, str(e.version)) for e in index.entries] == [
        ("gcc", "3.3"),
        ("gcc", "3.4.2"),
        ("libc", "2.3"),
        ("make", "3.81"),
    ]
    gcc = index.entries[1]
    assert gcc.filename == "gcc_3.4.2.spkg"
    assert gcc.size == (gcc_repo / gcc.filename).stat().st_size
    assert "Depends: make (>= 3.80), libc\n" in text
    assert render_index(index.entries) == text


def test_build_index_excludes_bad_archives(gcc_repo):
    (gcc_repo / "junk_1.0.spkg").write_bytes(b"not an archive")
    (gcc_repo / "gcc_3.4.2.spkg").rename(gcc_repo / "gcc_9.spkg")
    result = build_index(gcc_repo)
    assert sorted(name for name, _ in result.errors) == ["gcc_9.spkg", "junk_1.0.spkg"]
    assert [e.filename for e in result.entries] == ["gcc_3.3.spkg", "libc_2.3.spkg", "make_3.81.spkg"]


def test_build_index_missing_directory(tmp_path):
    with pytest.raises(SdsIoError):
        build_index(tmp_path / "nowhere")


def test_empty_repository(tmp_path):
    repo = tmp_path / "empty"
    repo.mkdir()
    build_index(repo)
    assert parse_index((repo / "Index").read_text()).entries == []


STANZA = (
    "Name: gcc\nVersion: 3.4.2\nPlatform: any\nFilename: gcc_3.4.2.spkg\n"
    "Size: 10\nSHA256: " + "a" * 64 + "\n"
)


@pytest.mark.parametrize(
    "text, line",
    [
        ("Name: gcc\n", 1),
        (f"{INDEX_HEADER}\n\n" + STANZA.replace("Size: 10", "Size: ten"), 7),
        (f"{INDEX_HEADER}\n\n" + STANZA.replace("Platform: any", "Platform: linux"), 5),
        (f"{INDEX_HEADER}\n\n" + STANZA + "\n" + STANZA, 10),
        (f"{INDEX_HEADER}\n\n" + STANZA.replace("Filename: gcc_3.4.2.spkg\n", ""), 3),
        (f"{INDEX_HEADER}\n\n" + STANZA + "Depends: make (>>\n", 9),
        (f"{INDEX_HEADER}\n\n" + STANZA + "garbage line\n", 9),
        (f"{INDEX_HEADER}\n\n" + STANZA.replace("Name: gcc", "Name: ../evil"), 3),
        (f"{INDEX_HEADER}\n\n" + STANZA.replace("Name: gcc", "Name: GCC"), 3),
    ],
)
def test_parse_index_errors(text, line):
    with pytest.raises(IndexParseError) as info:
        parse_index(text)
    assert info.value.line == line


def test_parse_index_rejects_unsorted():
    later = STANZA.replace("3.4.2", "3.5")
    with pytest.raises(IndexParseError):
        parse_index(f"{INDEX_HEADER}\n\n{later}\n{STANZA}")


def test_fetch_index_and_package(gcc_repo, tmp_path, recording_transport):
    base = path_to_file_url(gcc_repo)
    index = fetch_index(base, recording_transport)
    entry = index.entries[1]

    path = asyncio.run(fetch_package(entry, base, tmp_path / "cache", recording_transport))
    assert path.read_bytes() == (gcc_repo / entry.filename).read_bytes()

    calls = len(recording_transport.calls)
    asyncio.run(fetch_package(entry, base, tmp_path / "cache", recording_transport))
    assert len(recording_transport.calls) == calls


def test_fetch_packages_keeps_order(gcc_repo, tmp_path, recording_transport):
    base = path_to_file_url(gcc_repo)
    index = fetch_index(base, recording_transport)
    downloads = [(entry, base) for entry in reversed(index.entries)]
    paths = asyncio.run(fetch_packages(downloads, tmp_path / "cache", recording_transport, workers=2))
    assert [p.name for p in paths] == [entry.filename for entry, _ in downloads]


def test_corrupted_archives_are_rejected(gcc_repo, tmp_path, recording_transport):
    base = path_to_file_url(gcc_repo)
    index = fetch_index(base, recording_transport)
    rng = random.Random(31337)
    cache = tmp_path / "cache"

    for _ in range(100):
        entry = rng.choice(index.entries)
        archive = gcc_repo / entry.filename
        original = archive.read_bytes()
        data = bytearray(original)
        if rng.random() < 0.2:
            data = data[: rng.randrange(len(data))]
            expected = SizeMismatch
        else:
            position = rng.randrange(len(data))
            data[position] ^= rng.randint(1, 255)
            expected = ChecksumMismatch
        archive.write_bytes(bytes(data))
        try:
            with pytest.raises(expected):
                asyncio.run(fetch_package(entry, base, cache, recording_transport))
            assert not (cache / entry.filename).exists()
        finally:
            archive.write_bytes(original)


def test_missing_archive(gcc_repo, tmp_path, recording_transport):
    base = path_to_file_url(gcc_repo)
    entry = fetch_index(base, recording_transport).entries[0]
    (gcc_repo / entry.filename).unlink()
    with pytest.raises(TransportError):
        asyncio.run(fetch_package(entry, base, tmp_path / "cache", recording_transport))


def test_sources_file():
    sources = parse_sources("# repositories\nfile:///srv/a\n\nhttps://example.org/sds  # mirror\nfile:///srv/a\n")
    assert sources.urls == ["file:///srv/a", "https://example.org/sds"]
    with pytest.raises(UsageError):
        parse_sources("ftp://example.org/sds\n")
    with pytest.raises(UsageError):
        fetch_all_indexes(parse_sources(""), None)


def test_search_and_latest(gcc_repo, recording_transport):
    indexes = [fetch_index(path_to_file_url(gcc_repo), recording_transport)]
    assert search(indexes, "gc") == {"gcc": ["3.3", "3.4.2"]}
    assert search(indexes, "zzz") == {}
    entry, _ = find_latest(indexes, "gcc")
    assert str(entry.version) == "3.4.2"
    with pytest.raises(NotFound):
        find_latest(indexes, "nosuchpkg")
