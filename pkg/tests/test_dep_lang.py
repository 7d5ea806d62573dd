import random

import pytest

from models.errors import (
    DependsSyntaxError,
    DuplicateDependency,
    InvalidVersion,
    PackageError,
    UsageError,
)
from models.pydantic_models import ConstraintOp, DependencyClause
from models.version import compare_versions, parse_version
from services.dep_lang import (
    clause_satisfied,
    parse_cli_spec,
    parse_depends,
    parse_depends_field,
    render_clause,
    render_depends,
)


def clause(name, op=ConstraintOp.ANY, version=None):
    return DependencyClause(name=name, op=op, version=parse_version(version) if version else None)


def test_parse_depends_basic():
    assert parse_depends("gcc (>= 3.4)\nmake\n") == [
        clause("gcc", ConstraintOp.GE, "3.4"),
        clause("make"),
    ]


def test_parse_empty():
    assert parse_depends("") == []
    assert parse_depends("\n# only a comment\n   \n") == []


def test_flexible_whitespace_and_comments():
    text = "  gcc(>=3.4)   # compiler\n\tlibc ( =  2.3 )\n"
    assert parse_depends(text) == [
        clause("gcc", ConstraintOp.GE, "3.4"),
        clause("libc", ConstraintOp.EQ, "2.3"),
    ]


def test_duplicate_rejected():
    with pytest.raises(DuplicateDependency) as info:
        parse_depends("gcc (>= 3.4)\ngcc\n")
    assert info.value.line == 2


@pytest.mark.parametrize(
    "text, line, column",
    [
        ("gcc (~ 3.4)", 1, 6),
        ("make\ngcc (>= 3.4", 2, 12),
        ("Gcc", 1, 1),
        ("gcc 3.4", 1, 5),
        ("gcc (>= 3.4) extra", 1, 14),
    ],
)
def test_syntax_errors_report_position(text, line, column):
    with pytest.raises(DependsSyntaxError) as info:
        parse_depends(text)
    assert (info.value.line, info.value.column) == (line, column)


def test_invalid_version_in_clause():
    with pytest.raises(InvalidVersion):
        parse_depends("gcc (>= 3..4)\n")


def test_invalid_utf8():
    with pytest.raises(DependsSyntaxError) as info:
        parse_depends(b"make\ngcc \xff\n")
    assert info.value.line == 2


def test_index_field_form():
    assert parse_depends_field("make (>= 3.80), libc") == [
        clause("make", ConstraintOp.GE, "3.80"),
        clause("libc"),
    ]
    assert parse_depends_field("") == []


@pytest.mark.parametrize(
    "c, candidate, expected",
    [
        (clause("gcc", ConstraintOp.GE, "3.4"), ("gcc", "3.4.2"), True),
        (clause("gcc", ConstraintOp.GE, "3.4"), ("make", "9.9"), False),
        (clause("gcc"), ("gcc", "0.1"), True),
        (clause("gcc", ConstraintOp.LT, "3.4"), ("gcc", "3.3"), True),
        (clause("gcc", ConstraintOp.GT, "3.4"), ("gcc", "3.4"), False),
        (clause("gcc", ConstraintOp.LE, "3.4"), ("gcc", "3.4.0"), False),
    ],
)
def test_clause_satisfied(c, candidate, expected):
    name, version = candidate
    assert clause_satisfied(c, name, parse_version(version)) is expected


def test_render_canonical():
    assert render_clause(clause("gcc", ConstraintOp.GE, "3.4")) == "gcc (>= 3.4)"
    assert render_clause(clause("make")) == "make"


def _random_clause(rng, name):
    op = rng.choice(list(ConstraintOp))
    if op is ConstraintOp.ANY:
        return clause(name)
    version = ".".join(str(rng.randint(0, 20)) for _ in range(rng.randint(1, 3)))
    return clause(name, op, version)


def test_render_round_trip():
    rng = random.Random(7)
    for i in range(1000):
        c = _random_clause(rng, f"pkg{i % 50}-x")
        assert parse_depends(render_clause(c)) == [c]

    for _ in range(100):
        names = rng.sample([f"lib{n}" for n in range(30)], rng.randint(0, 8))
        clauses = [_random_clause(rng, n) for n in names]
        assert parse_depends(render_depends(clauses)) == clauses


def test_eq_and_ge_monotonicity():
    rng = random.Random(11)
    versions = [parse_version(f"{rng.randint(0, 5)}.{rng.randint(0, 5)}") for _ in range(200)]
    for _ in range(2000):
        v, w, w2 = rng.sample(versions, 3)
        eq = DependencyClause(name="p", op=ConstraintOp.EQ, version=v)
        assert clause_satisfied(eq, "p", w) is (compare_versions(v, w) == 0)
        ge = DependencyClause(name="p", op=ConstraintOp.GE, version=v)
        if clause_satisfied(ge, "p", w) and compare_versions(w2, w) > 0:
            assert clause_satisfied(ge, "p", w2)


def test_parser_survives_arbitrary_bytes():
    rng = random.Random(2024)
    alphabet = b"gcmake0123.()<>=# \n\t,-_+" + bytes(range(256))
    for _ in range(100_000):
        data = bytes(rng.choice(alphabet) for _ in range(rng.randint(0, 24)))
        try:
            result = parse_depends(data)
        except PackageError:
            continue
        assert all(isinstance(c, DependencyClause) for c in result)


@pytest.mark.parametrize(
    "spec, expected",
    [
        ("gcc", clause("gcc")),
        ("gcc=3.3", clause("gcc", ConstraintOp.EQ, "3.3")),
        ("gcc>=3.4", clause("gcc", ConstraintOp.GE, "3.4")),
        ("gcc<4", clause("gcc", ConstraintOp.LT, "4")),
    ],
)
def test_cli_spec(spec, expected):
    assert parse_cli_spec(spec) == expected


@pytest.mark.parametrize("spec", ["", ">=1", "gcc>=", "GCC", "gcc>=1..2"])
def test_cli_spec_errors(spec):
    with pytest.raises(UsageError):
        parse_cli_spec(spec)
