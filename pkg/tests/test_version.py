import random
import re
from functools import cmp_to_key

import pytest

from models.errors import EmptyVersion, IllegalCharacter, InvalidPlatform
from models.version import compare_versions, parse_platform, parse_version

ordered = [
    ("1", "2"),
    ("1.2", "1.2.1"),  # strict prefix is less
    ("1.9", "1.10"),
    ("1.0", "1.0a"),
    ("1.0rc1", "1.0rc2"),
    ("1.0rc2", "1.0rc10"),
    ("1.a", "1.b"),
    ("1.9", "1.a"),  # digits sort before letters
    ("2", "10"),
    ("1a", "2"),
    ("1.a9", "1.a10"),  # letter-prefixed runs still compare numerically
    ("2", "10a"),
    ("3.3", "3.4.2"),
]


@pytest.mark.parametrize("lower, higher", ordered)
def test_comparison(lower, higher):
    a, b = parse_version(lower), parse_version(higher)
    assert a < b
    assert b > a
    assert a != b
    assert compare_versions(a, b) == -1
    assert compare_versions(b, a) == 1


@pytest.mark.parametrize("left, right", [("1.2", "1.2"), ("1.0A", "1.0a"), ("1.01", "1.1")])
def test_equal(left, right):
    assert compare_versions(parse_version(left), parse_version(right)) == 0
    assert hash(parse_version(left)) == hash(parse_version(right))


def test_parse_segments():
    assert parse_version("3.4.2").components == (3, 4, 2)
    assert parse_version("1.0rc1").components == (1, "0rc1")
    assert parse_version("2.0RC").components == (2, "0rc")


def test_rendering_preserves_case():
    assert str(parse_version("1.0RC1")) == "1.0RC1"


def test_empty_version():
    with pytest.raises(EmptyVersion):
        parse_version("")


@pytest.mark.parametrize("text, position", [("1.0-beta", 3), ("1..2", 2), (".1", 0), ("1.", 1), ("1 0", 1)])
def test_illegal_character(text, position):
    with pytest.raises(IllegalCharacter) as info:
        parse_version(text)
    assert info.value.position == position


def _random_version(rng: random.Random) -> str:
    segments = []
    for _ in range(rng.randint(1, 4)):
        kind = rng.random()
        if kind < 0.6:
            segments.append(str(rng.randint(0, 12)))
        elif kind < 0.8:
            segments.append(rng.choice("abcAB") * rng.randint(1, 2))
        else:
            segments.append(f"{rng.randint(0, 3)}{rng.choice(['a', 'rc', 'b'])}{rng.randint(0, 3)}")
    return ".".join(segments)


def _reference_compare(a: str, b: str) -> int:
    """Independent comparator on the raw strings."""

    def runs(segment):
        return [(0, int(r)) if r.isdigit() else (1, r) for r in re.findall(r"\d+|[a-z]+", segment.lower())]

    left = [runs(s) for s in a.split(".")]
    right = [runs(s) for s in b.split(".")]
    return (left > right) - (left < right)


def test_total_order_against_reference():
    rng = random.Random(1234)
    pool = [_random_version(rng) for _ in range(300)]
    for _ in range(10_000):
        a, b = rng.choice(pool), rng.choice(pool)
        va, vb = parse_version(a), parse_version(b)
        assert compare_versions(va, vb) == _reference_compare(a, b)
        assert compare_versions(va, vb) == -compare_versions(vb, va)
        assert str(va) == a


def test_sorting_is_consistent():
    rng = random.Random(99)
    versions = [parse_version(_random_version(rng)) for _ in range(200)]
    ordered_versions = sorted(versions, key=cmp_to_key(compare_versions))
    for earlier, later in zip(ordered_versions, ordered_versions[1:]):
        assert compare_versions(earlier, later) <= 0
    # transitivity spot check over triples
    for _ in range(2000):
        a, b, c = rng.sample(versions, 3)
        if a <= b and b <= c:
            assert a <= c


def test_platform():
    linux = parse_platform("linux-x86_64")
    assert str(linux) == "linux-x86_64"
    assert parse_platform("any").matches(linux)
    assert not parse_platform("sunos-sparc").matches(linux)
    assert linux.matches(parse_platform("linux-x86_64"))


@pytest.mark.parametrize("text", ["linux", "Linux-x86_64", "linux-", "-x86", "linux-x86-64"])
def test_invalid_platform(text):
    with pytest.raises(InvalidPlatform):
        parse_platform(text)
