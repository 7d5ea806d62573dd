import heapq
import logging
from typing import Dict, List, Mapping, Optional, Sequence, Set, Union

from pydantic import BaseModel

from models.errors import (
    ConflictingConstraints,
    DependencyCycle,
    NoCandidate,
    PlatformMismatch,
    ReplaceRefused,
    UsageError,
)
from models.pydantic_models import (
    ActionKind,
    DependencyClause,
    IndexEntry,
    InstallRecord,
    PlanAction,
    RepositoryIndex,
    ResolutionPlan,
)
from models.version import Platform, Version
from services.dep_lang import version_satisfies

logger = logging.getLogger(__name__)

LOCAL_SOURCE = "local"
# bound on re-planning rounds when a changed choice retracts earlier demands
MAX_ROUNDS = 256


class Candidate(BaseModel):
    name: str
    version: Version
    source: str
    entry: IndexEntry


class Demand(BaseModel):
    clause: DependencyClause
    required_by: Optional[str] = None


class _Decision(BaseModel):
    kind: ActionKind
    version: Version
    source: str
    entry: Optional[IndexEntry] = None

    def same_as(self, other: "_Decision") -> bool:
        return (
            self.kind is other.kind
            and self.version.raw == other.version.raw
            and self.source == other.source
        )


def select_version(
    name: str,
    clause: Union[DependencyClause, Sequence[DependencyClause]],
    indexes: Sequence[RepositoryIndex],
    platform: Platform,
) -> Candidate:
    """Highest version of ``name`` meeting every clause on ``platform``.

    Ties between repositories go to the first one in ``indexes``.
    """
    clauses = [clause] if isinstance(clause, DependencyClause) else list(clause)

    named = [(entry, index.base_url) for index in indexes for entry in index.entries if entry.name == name]
    if not named:
        raise NoCandidate(f"no package named {name!r} in any repository")

    satisfying = [
        (entry, url) for entry, url in named
        if all(version_satisfies(c, entry.version) for c in clauses)
    ]
    if not satisfying:
        wanted = "; ".join(str(c) for c in clauses)
        raise NoCandidate(f"no version of {name} satisfies {wanted}")

    compatible = [
        (entry, url) for entry, url in satisfying
        if any(p.matches(platform) for p in entry.platforms)
    ]
    if not compatible:
        raise PlatformMismatch(
            f"{name}: candidate versions exist but none is built for {platform}"
        )

    best_entry, best_url = compatible[0]
    for entry, url in compatible[1:]:
        if entry.version > best_entry.version:
            best_entry, best_url = entry, url
    return Candidate(name=name, version=best_entry.version, source=best_url, entry=best_entry)


class Resolver:
    """Plans installs against a snapshot of a prefix database and the indexes."""

    def __init__(
        self,
        indexes: Sequence[RepositoryIndex],
        platform: Platform,
        installed: Mapping[str, InstallRecord],
        allow_replace: bool = True,
    ):
        self.indexes = list(indexes)
        self.platform = platform
        self.installed = dict(installed)
        self.allow_replace = allow_replace

    def resolve(self, requests: Sequence[DependencyClause]) -> ResolutionPlan:
        if not requests:
            raise UsageError("nothing to install")

        decisions: Dict[str, _Decision] = {}
        for _ in range(MAX_ROUNDS):
            demands = self._collect(requests, decisions)
            updated = {name: self._decide(name, demands[name]) for name in sorted(demands)}
            if updated.keys() == decisions.keys() and all(
                updated[name].same_as(decisions[name]) for name in updated
            ):
                break
            decisions = updated
        else:
            name = sorted(decisions)[0]
            raise ConflictingConstraints(name, [str(d.clause) for d in demands.get(name, [])])

        plan = self._order(decisions, demands)
        logger.info(
            f"Resolved {len(requests)} request(s) into {len(plan.actions)} action(s): "
            + ", ".join(f"{a.kind.value} {a.name} {a.version}" for a in plan.actions)
        )
        return plan

    def _collect(
        self,
        requests: Sequence[DependencyClause],
        decisions: Mapping[str, _Decision],
    ) -> Dict[str, List[Demand]]:
        """Breadth-first walk from the requests through the current decisions."""
        demands: Dict[str, List[Demand]] = {}
        queue: List[str] = []

        def add(demand: Demand) -> None:
            name = demand.clause.name
            if name not in demands:
                demands[name] = []
                queue.append(name)
            demands[name].append(demand)

        for clause in requests:
            add(Demand(clause=clause))
        position = 0
        while position < len(queue):
            name = queue[position]
            position += 1
            decision = decisions.get(name)
            if decision is None or decision.entry is None:
                continue
            for clause in decision.entry.depends:
                add(Demand(clause=clause, required_by=name))
        return demands

    def _decide(self, name: str, demands: List[Demand]) -> _Decision:
        clauses = [demand.clause for demand in demands]
        record = self.installed.get(name)
        if record is not None and all(version_satisfies(c, record.version) for c in clauses):
            return _Decision(kind=ActionKind.SKIP, version=record.version, source=LOCAL_SOURCE)

        try:
            candidate = select_version(name, clauses, self.indexes, self.platform)
        except NoCandidate:
            if len(clauses) > 1 and all(self._has_candidate(name, c) for c in clauses):
                raise ConflictingConstraints(
                    name, [self._describe(demand) for demand in demands]
                ) from None
            raise

        if record is not None:
            if not self.allow_replace:
                raise ReplaceRefused(
                    f"{name} {record.version} is installed but {', '.join(str(c) for c in clauses)} "
                    "requires another version (replacement disabled)"
                )
            kind = ActionKind.REPLACE
        else:
            kind = ActionKind.INSTALL
        return _Decision(kind=kind, version=candidate.version, source=candidate.source, entry=candidate.entry)

    def _has_candidate(self, name: str, clause: DependencyClause) -> bool:
        return any(
            entry.name == name and version_satisfies(clause, entry.version)
            for index in self.indexes
            for entry in index.entries
        )

    @staticmethod
    def _describe(demand: Demand) -> str:
        if demand.required_by is None:
            return f"{demand.clause} (requested)"
        return f"{demand.clause} (required by {demand.required_by})"

    def _order(
        self,
        decisions: Mapping[str, _Decision],
        demands: Mapping[str, List[Demand]],
    ) -> ResolutionPlan:
        """Dependencies first; ready nodes are taken in name order."""
        edges: Dict[str, Set[str]] = {name: set() for name in decisions}
        in_degree: Dict[str, int] = {name: 0 for name in decisions}
        for name, decision in decisions.items():
            if decision.entry is None:
                continue
            for clause in decision.entry.depends:
                if name not in edges[clause.name]:
                    edges[clause.name].add(name)
                    in_degree[name] += 1

        ready = [name for name, degree in in_degree.items() if degree == 0]
        heapq.heapify(ready)
        ordered: List[str] = []
        while ready:
            name = heapq.heappop(ready)
            ordered.append(name)
            for dependent in edges[name]:
                in_degree[dependent] -= 1
                if in_degree[dependent] == 0:
                    heapq.heappush(ready, dependent)

        if len(ordered) != len(decisions):
            raise DependencyCycle(self._find_cycle(decisions, set(ordered)))

        actions = []
        for name in ordered:
            decision = decisions[name]
            first = demands[name][0]
            actions.append(
                PlanAction(
                    kind=decision.kind,
                    name=name,
                    version=decision.version,
                    source=decision.source,
                    reason=first.clause,
                    required_by=first.required_by,
                    entry=decision.entry,
                )
            )
        return ResolutionPlan(actions=actions)

    @staticmethod
    def _find_cycle(decisions: Mapping[str, _Decision], done: Set[str]) -> List[str]:
        graph = {
            name: sorted({c.name for c in decision.entry.depends} - done)
            for name, decision in decisions.items()
            if name not in done and decision.entry is not None
        }
        for start in sorted(graph):
            path: List[str] = []
            on_path: Dict[str, int] = {}
            node = start
            # every remaining node keeps a remaining dependency, so this walk must loop
            while node not in on_path:
                on_path[node] = len(path)
                path.append(node)
                node = graph[node][0]
            cycle = path[on_path[node]:]
            pivot = cycle.index(min(cycle))
            return cycle[pivot:] + cycle[:pivot]
        return sorted(graph)


def resolve(
    requests: Sequence[DependencyClause],
    installed: Mapping[str, InstallRecord],
    indexes: Sequence[RepositoryIndex],
    platform: Platform,
    allow_replace: bool = True,
) -> ResolutionPlan:
    return Resolver(indexes, platform, installed, allow_replace).resolve(requests)
