"""Exception hierarchy shared by every SDS tool.

Each error carries a ``category`` that the command line front ends map onto
their documented exit codes.
"""
from pathlib import Path
from typing import List, Optional, Sequence


class SdsError(Exception):
    category = "usage"


class UsageError(SdsError):
    category = "usage"


# --- package format -------------------------------------------------------

class PackageError(SdsError):
    category = "build"


class InvalidVersion(PackageError):
    def __init__(self, text: str, message: str, position: Optional[int] = None):
        self.text = text
        self.position = position
        super().__init__(message)


class EmptyVersion(InvalidVersion):
    def __init__(self, text: str = ""):
        super().__init__(text, "version string is empty")


class IllegalCharacter(InvalidVersion):
    def __init__(self, text: str, position: int):
        char = text[position] if position < len(text) else "end of input"
        super().__init__(
            text,
            f"illegal character {char!r} at position {position} in version {text!r}",
            position,
        )


class InvalidPlatform(PackageError):
    pass


class InvalidManifest(PackageError):
    pass


class MissingIdentificationFile(PackageError):
    def __init__(self, filename: str):
        self.filename = filename
        super().__init__(f"missing identification file: identification/{filename}")


class ForbiddenHook(PackageError):
    def __init__(self, path: Path):
        self.path = path
        super().__init__(f"registration cannot be overridden by a package hook: {path}")


class AmbiguousUpstream(PackageError):
    pass


class CorruptArchive(PackageError):
    category = "transport"


class PathTraversal(PackageError):
    category = "transport"

    def __init__(self, member: str):
        self.member = member
        super().__init__(f"archive member escapes the extraction directory: {member}")


class MultipleTopLevelDirs(PackageError):
    category = "transport"

    def __init__(self, names: Sequence[str]):
        self.names = list(names)
        super().__init__(f"archive must contain a single top-level directory, found: {', '.join(self.names)}")


class SdsIoError(SdsError):
    category = "build"


# --- dependency language --------------------------------------------------

class DependsSyntaxError(PackageError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class DuplicateDependency(PackageError):
    def __init__(self, name: str, line: int):
        self.name = name
        self.line = line
        super().__init__(f"line {line}: duplicate dependency on {name!r}")


# --- install database -----------------------------------------------------

class DatabaseError(SdsError):
    category = "database"


class PermissionDenied(DatabaseError):
    pass


class NotADirectory(DatabaseError):
    pass


class CorruptRecord(DatabaseError):
    def __init__(self, path: Path, reason: str):
        self.path = path
        super().__init__(f"corrupt install record {path}: {reason}")


class AlreadyRegistered(DatabaseError):
    def __init__(self, name: str, version: str):
        self.name = name
        self.version = version
        super().__init__(f"{name} {version} is already registered in this prefix")


class LockHeld(DatabaseError):
    def __init__(self, path: Path):
        self.path = path
        super().__init__(f"another installation holds the prefix lock {path}")


class LockNotHeld(DatabaseError):
    pass


# --- resolution -----------------------------------------------------------

class ResolutionError(SdsError):
    category = "resolution"


class NoCandidate(ResolutionError):
    pass


class PlatformMismatch(ResolutionError):
    pass


class DependencyCycle(ResolutionError):
    def __init__(self, cycle: List[str]):
        self.cycle = cycle
        super().__init__(f"dependency cycle: {' -> '.join(cycle + cycle[:1])}")


class ConflictingConstraints(ResolutionError):
    def __init__(self, name: str, clauses: Sequence[str]):
        self.name = name
        self.clauses = list(clauses)
        super().__init__(f"no version of {name} satisfies all of: {'; '.join(self.clauses)}")


class ReplaceRefused(ResolutionError):
    pass


class NotFound(ResolutionError):
    pass


# --- lifecycle ------------------------------------------------------------

class BuildError(SdsError):
    category = "build"


class StageFailed(BuildError):
    def __init__(self, stage: str, phase: str, exit_status: int, log_path: Optional[Path]):
        self.stage = stage
        self.phase = phase
        self.exit_status = exit_status
        self.log_path = log_path
        super().__init__(
            f"{phase}-{stage} exited with status {exit_status} (log: {log_path})"
            if phase != "main"
            else f"{stage} exited with status {exit_status} (log: {log_path})"
        )


class HookFailed(StageFailed):
    pass


class DependsUnsatisfied(BuildError):
    def __init__(self, clauses: Sequence[str]):
        self.clauses = list(clauses)
        super().__init__(f"unsatisfied dependencies: {', '.join(self.clauses)}")


class UpstreamFetchFailed(BuildError):
    pass


class DefaultToolMissing(BuildError):
    pass


class PlatformUnsupported(BuildError):
    pass


# --- repository -----------------------------------------------------------

class RepositoryError(SdsError):
    category = "transport"


class TransportError(RepositoryError):
    def __init__(self, url: str, status: str):
        self.url = url
        self.status = status
        super().__init__(f"cannot retrieve {url}: {status}")


class IndexParseError(RepositoryError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"Index line {line}: {message}")


class ChecksumMismatch(RepositoryError):
    def __init__(self, filename: str, expected: str, actual: str):
        self.filename = filename
        self.expected = expected
        self.actual = actual
        super().__init__(f"{filename}: sha256 mismatch (expected {expected}, got {actual})")


class SizeMismatch(RepositoryError):
    def __init__(self, filename: str, expected: int, actual: int):
        self.filename = filename
        self.expected = expected
        self.actual = actual
        super().__init__(f"{filename}: size mismatch (expected {expected}, got {actual})")
