"""The dependency-constraint language.

One clause per line::

    gcc (>= 3.4)
    make            # any version

Clauses are conjunctive. The same clause syntax, comma separated, is used by
the repository index ``Depends:`` field.
"""
import logging
import re
from typing import Iterable, List, Tuple, Union

from models.errors import (
    DependsSyntaxError,
    DuplicateDependency,
    InvalidVersion,
    UsageError,
)
from models.pydantic_models import (
    NAME_RE,
    SYMBOL_OPS,
    ConstraintOp,
    DependencyClause,
)
from models.version import Version, compare_versions, parse_version

logger = logging.getLogger(__name__)

_WS_RE = re.compile(r"\s*")
_OP_RE = re.compile(r">=|<=|=|>|<")
_VERSION_TOKEN_RE = re.compile(r"[^\s()#,]+")
_CLI_SPEC_RE = re.compile(r"(?P<name>[^<>=\s]+)(?:(?P<op>>=|<=|=|>|<)(?P<version>.+))?")


def _parse_clause(text: str, line: int, column_offset: int = 0) -> DependencyClause:
    def fail(message: str, position: int) -> DependsSyntaxError:
        return DependsSyntaxError(message, line, column_offset + position + 1)

    pos = _WS_RE.match(text).end()
    name_match = NAME_RE.match(text, pos)
    if not name_match:
        raise fail("expected a package name", pos)
    name = name_match.group()
    pos = _WS_RE.match(text, name_match.end()).end()
    if pos == len(text):
        return DependencyClause(name=name)

    if text[pos] != "(":
        raise fail(f"unexpected {text[pos]!r}", pos)
    pos = _WS_RE.match(text, pos + 1).end()
    op_match = _OP_RE.match(text, pos)
    if not op_match:
        raise fail("expected one of =, >=, <=, >, <", pos)
    pos = _WS_RE.match(text, op_match.end()).end()
    version_match = _VERSION_TOKEN_RE.match(text, pos)
    if not version_match:
        raise fail("expected a version", pos)
    try:
        version = parse_version(version_match.group())
    except InvalidVersion as e:
        raise InvalidVersion(
            e.text, f"line {line}, column {column_offset + pos + 1}: {e}", e.position
        ) from e
    pos = _WS_RE.match(text, version_match.end()).end()
    if pos == len(text) or text[pos] != ")":
        raise fail("expected ')'", pos)
    pos = _WS_RE.match(text, pos + 1).end()
    if pos != len(text):
        raise fail(f"unexpected {text[pos]!r} after clause", pos)

    return DependencyClause(name=name, op=SYMBOL_OPS[op_match.group()], version=version)


def _decode(data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        head = data[: e.start]
        line = head.count(b"\n") + 1
        column = e.start - (head.rfind(b"\n") + 1) + 1
        raise DependsSyntaxError("invalid UTF-8", line, column) from e


def _check_duplicates(clauses: Iterable[Tuple[int, DependencyClause]]) -> List[DependencyClause]:
    seen = set()
    result = []
    for line, clause in clauses:
        if clause.name in seen:
            raise DuplicateDependency(clause.name, line)
        seen.add(clause.name)
        result.append(clause)
    return result


def parse_depends(text: Union[str, bytes]) -> List[DependencyClause]:
    """Parse a ``depends/depends`` file body."""
    if isinstance(text, bytes):
        text = _decode(text)

    parsed = []
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0]
        if not line.strip():
            continue
        parsed.append((number, _parse_clause(line, number)))
    return _check_duplicates(parsed)


def parse_depends_field(text: str, line: int = 1) -> List[DependencyClause]:
    """Parse the comma separated form used on one index line."""
    if not text.strip():
        return []
    parsed = []
    offset = 0
    for part in text.split(","):
        parsed.append((line, _parse_clause(part, line, offset)))
        offset += len(part) + 1
    return _check_duplicates(parsed)


def render_clause(clause: DependencyClause) -> str:
    return str(clause)


def render_depends(clauses: Iterable[DependencyClause]) -> str:
    return "".join(render_clause(clause) + "\n" for clause in clauses)


def render_depends_field(clauses: Iterable[DependencyClause]) -> str:
    return ", ".join(render_clause(clause) for clause in clauses)


def version_satisfies(clause: DependencyClause, version: Version) -> bool:
    if clause.op is ConstraintOp.ANY:
        return True
    order = compare_versions(version, clause.version)
    if clause.op is ConstraintOp.EQ:
        return order == 0
    if clause.op is ConstraintOp.GE:
        return order >= 0
    if clause.op is ConstraintOp.LE:
        return order <= 0
    if clause.op is ConstraintOp.GT:
        return order > 0
    return order < 0


def clause_satisfied(clause: DependencyClause, name: str, version: Version) -> bool:
    return clause.name == name and version_satisfies(clause, version)


def parse_cli_spec(text: str) -> DependencyClause:
    """``name``, ``name=1.2``, ``name>=1.2`` ... as typed on a command line."""
    match = _CLI_SPEC_RE.fullmatch(text.strip())
    if not match or not NAME_RE.fullmatch(match.group("name")):
        raise UsageError(f"invalid package spec {text!r}")
    if match.group("op") is None:
        return DependencyClause(name=match.group("name"))
    try:
        version = parse_version(match.group("version"))
    except InvalidVersion as e:
        raise UsageError(f"invalid package spec {text!r}: {e}") from e
    return DependencyClause(
        name=match.group("name"), op=SYMBOL_OPS[match.group("op")], version=version
    )
