import re
from functools import total_ordering
from typing import Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict

from models.errors import EmptyVersion, IllegalCharacter, InvalidPlatform

Segment = Union[int, str]

_RUN_RE = re.compile(r"[0-9]+|[a-z]+")
_PLATFORM_TOKEN_RE = re.compile(r"[a-z0-9_]+")
ANY_PLATFORM = "any"


def _segment_key(segment: Segment) -> Tuple[Tuple[int, Union[int, str]], ...]:
    # digit runs compare numerically and always sort before letter runs
    if isinstance(segment, int):
        return ((0, segment),)
    return tuple(
        (0, int(run)) if run.isdigit() else (1, run)
        for run in _RUN_RE.findall(segment)
    )


@total_ordering
class Version(BaseModel):
    """A dotted version string, kept verbatim for rendering."""

    model_config = ConfigDict(frozen=True)

    raw: str
    components: Tuple[Segment, ...]

    @property
    def sort_key(self) -> tuple:
        return tuple(_segment_key(segment) for segment in self.components)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Version):
            return NotImplemented
        return self.sort_key == other.sort_key

    def __lt__(self, other: "Version") -> bool:
        if not isinstance(other, Version):
            return NotImplemented
        return self.sort_key < other.sort_key

    def __hash__(self) -> int:
        return hash(self.sort_key)

    def __str__(self) -> str:
        return self.raw

    def __repr__(self) -> str:
        return f"Version({self.raw!r})"


def parse_version(text: str) -> Version:
    """Parse ``segment("." segment)*`` where a segment is ``[A-Za-z0-9]+``."""
    if not text:
        raise EmptyVersion(text)

    components = []
    start = 0
    for position, char in enumerate(text):
        if char == ".":
            if position == start:
                raise IllegalCharacter(text, position)
            components.append(text[start:position])
            start = position + 1
        elif not (char.isascii() and char.isalnum()):
            raise IllegalCharacter(text, position)
    if start == len(text):
        # trailing dot
        raise IllegalCharacter(text, len(text) - 1)
    components.append(text[start:])

    return Version(
        raw=text,
        components=tuple(
            int(segment) if segment.isdigit() else segment.lower()
            for segment in components
        ),
    )


def compare_versions(a: Version, b: Version) -> int:
    """Return -1, 0 or 1."""
    key_a, key_b = a.sort_key, b.sort_key
    return (key_a > key_b) - (key_a < key_b)


class Platform(BaseModel):
    model_config = ConfigDict(frozen=True)

    os: str
    arch: Optional[str] = None

    @property
    def is_any(self) -> bool:
        return self.os == ANY_PLATFORM and self.arch is None

    def matches(self, target: "Platform") -> bool:
        return self.is_any or self == target

    def __str__(self) -> str:
        return self.os if self.is_any else f"{self.os}-{self.arch}"


def parse_platform(text: str) -> Platform:
    text = text.strip()
    if text == ANY_PLATFORM:
        return Platform(os=ANY_PLATFORM)
    os_name, sep, arch = text.partition("-")
    if (
        not sep
        or not _PLATFORM_TOKEN_RE.fullmatch(os_name)
        or not _PLATFORM_TOKEN_RE.fullmatch(arch)
    ):
        raise InvalidPlatform(f"invalid platform {text!r}: expected '<os>-<arch>' or 'any'")
    return Platform(os=os_name, arch=arch)
