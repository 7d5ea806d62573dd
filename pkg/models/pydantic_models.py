import re
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.version import Platform, Version

NAME_RE = re.compile(r"[a-z0-9][a-z0-9_+.-]*")
SHA256_RE = re.compile(r"[0-9a-f]{64}")


class ConstraintOp(str, Enum):
    ANY = "any"
    EQ = "eq"
    GE = "ge"
    LE = "le"
    GT = "gt"
    LT = "lt"

    @property
    def symbol(self) -> str:
        return OP_SYMBOLS[self]


OP_SYMBOLS = {
    ConstraintOp.EQ: "=",
    ConstraintOp.GE: ">=",
    ConstraintOp.LE: "<=",
    ConstraintOp.GT: ">",
    ConstraintOp.LT: "<",
}
SYMBOL_OPS = {symbol: op for op, symbol in OP_SYMBOLS.items()}


class DependencyClause(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    op: ConstraintOp = ConstraintOp.ANY
    version: Optional[Version] = None

    @field_validator("name")
    @classmethod
    def _check_name(cls, value: str) -> str:
        if not NAME_RE.fullmatch(value):
            raise ValueError(f"invalid package name {value!r}")
        return value

    @model_validator(mode="after")
    def _check_version(self) -> "DependencyClause":
        if (self.op is ConstraintOp.ANY) != (self.version is None):
            raise ValueError("a version is required for every operator except 'any'")
        return self

    def __str__(self) -> str:
        if self.op is ConstraintOp.ANY:
            return self.name
        return f"{self.name} ({self.op.symbol} {self.version})"


class UpstreamKind(str, Enum):
    EMBEDDED = "embedded"
    URL = "url"
    NONE = "none"


class UpstreamRef(BaseModel):
    kind: UpstreamKind = UpstreamKind.NONE
    url: Optional[str] = None
    archive_name: Optional[str] = None


class Stage(str, Enum):
    EXTRACT = "extract"
    DEPENDS = "depends"
    CONFIGURE = "configure"
    BUILD = "build"
    INSTALL = "install"
    REGISTER = "register"


class Phase(str, Enum):
    PRE = "pre"
    MAIN = "main"
    POST = "post"


class HookKind(BaseModel):
    model_config = ConfigDict(frozen=True)

    stage: Stage
    phase: Phase

    @property
    def filename(self) -> str:
        if self.phase is Phase.MAIN:
            return self.stage.value
        return f"{self.phase.value}-{self.stage.value}"

    @classmethod
    def from_filename(cls, filename: str) -> Optional["HookKind"]:
        phase, dash, stage = filename.partition("-")
        if not dash:
            phase, stage = Phase.MAIN.value, filename
        elif phase not in (Phase.PRE.value, Phase.POST.value):
            return None
        if stage not in {s.value for s in Stage}:
            return None
        return cls(stage=Stage(stage), phase=Phase(phase))

    def __str__(self) -> str:
        return f"{self.stage.value}/{self.phase.value}"


class PackageManifest(BaseModel):
    name: str
    version: Version
    license: str
    platforms: List[Platform]
    maintainer: str
    description: str = ""
    upstream: UpstreamRef = Field(default_factory=UpstreamRef)
    depends: List[DependencyClause] = Field(default_factory=list)
    hooks: FrozenSet[HookKind] = frozenset()

    @property
    def archive_name(self) -> str:
        return f"{self.name}_{self.version}.spkg"

    def has_hook(self, stage: Stage, phase: Phase) -> bool:
        return HookKind(stage=stage, phase=phase) in self.hooks


class InstallPrefix(BaseModel):
    path: Path

    @property
    def sds_dir(self) -> Path:
        return self.path / ".sds"

    @property
    def db_dir(self) -> Path:
        return self.sds_dir / "db"

    @property
    def lock_file(self) -> Path:
        return self.sds_dir / "lock"

    @property
    def log_dir(self) -> Path:
        return self.sds_dir / "log"

    @property
    def build_root(self) -> Path:
        return self.sds_dir / "build"


class InstallMode(str, Enum):
    FRESH = "fresh"
    REPLACE = "replace"


class InstallRecord(BaseModel):
    name: str
    version: Version
    platform: Platform
    installed_at: datetime
    origin: str = ""
    resolved_deps: List[str] = Field(default_factory=list)
    # fields written by other tools, carried over on rewrite
    extra_fields: Dict[str, str] = Field(default_factory=dict)


class SatisfactionStatus(str, Enum):
    SATISFIED = "satisfied"
    VIOLATING = "installed-but-violating"
    ABSENT = "absent"


class Satisfaction(BaseModel):
    status: SatisfactionStatus
    version: Optional[Version] = None


class IndexEntry(BaseModel):
    name: str
    version: Version
    platforms: List[Platform]
    filename: str
    size: int
    sha256: str
    depends: List[DependencyClause] = Field(default_factory=list)
    description: str = ""

    @model_validator(mode="after")
    def _check_invariants(self) -> "IndexEntry":
        expected = f"{self.name}_{self.version}.spkg"
        if self.filename != expected:
            raise ValueError(f"filename {self.filename!r} should be {expected!r}")
        if not SHA256_RE.fullmatch(self.sha256):
            raise ValueError(f"invalid sha256 digest {self.sha256!r}")
        if "\n" in self.description:
            raise ValueError("description must fit on one line")
        return self


class RepositoryIndex(BaseModel):
    base_url: str
    entries: List[IndexEntry] = Field(default_factory=list)


class SourcesConfig(BaseModel):
    urls: List[str] = Field(default_factory=list)


class ActionKind(str, Enum):
    INSTALL = "install"
    REPLACE = "replace"
    SKIP = "skip"


class PlanAction(BaseModel):
    kind: ActionKind
    name: str
    version: Version
    source: str
    reason: DependencyClause
    # None when the user asked for the package directly
    required_by: Optional[str] = None
    entry: Optional[IndexEntry] = None

    @property
    def reason_text(self) -> str:
        if self.required_by is None:
            return f"requested {self.reason}"
        return f"{self.required_by} requires {self.reason}"

    def serialize(self) -> str:
        return f"{self.kind.value} {self.name} {self.version} {self.source} ({self.reason_text})"


class ResolutionPlan(BaseModel):
    actions: List[PlanAction] = Field(default_factory=list)

    def serialize(self) -> str:
        return "".join(action.serialize() + "\n" for action in self.actions)


class Executor(str, Enum):
    DEFAULT = "default"
    HOOK = "hook"


class StageReport(BaseModel):
    stage: Stage
    phase: Phase
    executor: Executor
    exit_status: int = 0
    log_path: Optional[Path] = None
    duration: float = 0.0


class BuildContext(BaseModel):
    package_root: Path
    build_dir: Path
    # where configure/make and hooks run; a lone top-level directory of the
    # extracted upstream, else build_dir itself
    source_dir: Path
    prefix: InstallPrefix
    platform: Platform
    env: Dict[str, str] = Field(default_factory=dict)
    download_cache: Path
    log_dir: Path
    mode: InstallMode = InstallMode.FRESH
    origin: str = ""


class PackageSummary(BaseModel):
    name: str
    versions: List[str]
    description: str = ""


class HealthResponse(BaseModel):
    status: str
    packages: int
    repository: str
