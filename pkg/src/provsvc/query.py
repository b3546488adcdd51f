"""Traversal queries: REST path grammar parsing and BFS over a snapshot.

A query names a seed (type + identifying values), a direction, and target
types; answering it is finding paths from the seed through the lineage graph
to nodes of the target types. The path grammar is strict:

    /provenance/seeds/{SEED}/values/{V1[,V2,...]}/direction/{forward|backward}/targets/{T1[,T2,...]}

Traversal is exhaustive breadth-first search: it keeps going through
target-typed nodes so every reachable target is reported, each with one
shortest witness path. The reserved target labels Entity and Activity match
on node kind instead of type_label (extension beyond domain types).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping
from urllib.parse import unquote

from .model import Scalar
from .store import Snapshot


class MalformedPath(ValueError):
    """The path does not follow the seeds/values/direction/targets grammar."""


class InvalidDirection(ValueError):
    """Direction segment is neither forward nor backward."""


class Direction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


ASCENDING = "ascending"
DESCENDING = "descending"

_KIND_TARGETS = {"Entity", "Activity"}  # reserved labels matching on node kind


@dataclass(frozen=True)
class QueryRequest:
    seed_type: str
    seed_values: tuple[str, ...]
    direction: Direction
    target_types: tuple[str, ...]
    max_depth: int | None = None
    order_by_attribute: tuple[str, str] | None = None  # (attribute, ascending|descending)

    def __post_init__(self):
        if not self.seed_type:
            raise MalformedPath("seed type must be non-empty")
        if not self.seed_values or any(not v for v in self.seed_values):
            raise MalformedPath("seed values must be non-empty")
        if not self.target_types or any(not t for t in self.target_types):
            raise MalformedPath("target types must be non-empty")


@dataclass(frozen=True)
class NodeSummary:
    node_id: str
    type_label: str
    identity: str
    attributes: Mapping[str, Scalar] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "type_label": self.type_label,
            "identity": self.identity,
            "attributes": dict(self.attributes),
        }


@dataclass(frozen=True)
class QueryResult:
    targets: tuple[NodeSummary, ...] = ()
    paths: tuple[tuple[str, ...], ...] = ()  # one shortest witness path per target
    visited_count: int = 0
    snapshot_epoch: int = 0

    def to_dict(self, include_paths: bool = True) -> dict:
        return {
            "targets": [t.to_dict() for t in self.targets],
            "paths": [list(p) for p in self.paths] if include_paths else [],
            "visited_count": self.visited_count,
            "snapshot_epoch": self.snapshot_epoch,
        }


def parse_query_path(path: str) -> QueryRequest:
    """Parse the REST traversal path; each subpath is subordinate to the previous.

    Segments are percent-decoded after comma-splitting, so encoded commas
    (%2C) survive inside individual values. max_depth and ordering arrive as
    query parameters at the service layer, not in the path.
    """
    parts = path.split("/")
    if len(parts) != 10 or parts[0] != "":
        raise MalformedPath(f"expected 9 path segments, got {path!r}")
    literals = {1: "provenance", 2: "seeds", 4: "values", 6: "direction", 8: "targets"}
    for idx, expected in literals.items():
        if parts[idx] != expected:
            raise MalformedPath(f"segment {idx} must be {expected!r}, got {parts[idx]!r}")

    seed_type = unquote(parts[3])
    raw_values = parts[5]
    raw_direction = unquote(parts[7])
    raw_targets = parts[9]
    if not seed_type or not raw_values or not raw_targets:
        raise MalformedPath("seed type, values, and targets must be non-empty")

    try:
        direction = Direction(raw_direction)
    except ValueError:
        raise InvalidDirection(
            f"direction must be forward or backward, got {raw_direction!r}") from None

    values = tuple(unquote(v) for v in raw_values.split(","))
    targets = tuple(unquote(t) for t in raw_targets.split(","))
    if any(not v for v in values) or any(not t for t in targets):
        raise MalformedPath("empty value or target in comma list")

    return QueryRequest(
        seed_type=seed_type,
        seed_values=values,
        direction=direction,
        target_types=targets,
    )


def _is_target(snapshot: Snapshot, node_id: str, target_types: tuple[str, ...]) -> bool:
    node = snapshot.nodes[node_id]
    for t in target_types:
        if t in _KIND_TARGETS:
            if node.kind.value == t:
                return True
        elif node.type_label == t:
            return True
    return False


def traverse(snapshot: Snapshot, req: QueryRequest) -> QueryResult:
    """Multi-source BFS from the resolved seeds; exhaustive over target types.

    A seed whose own type is a target counts, with a zero-length witness path.
    Derived edges can form cycles, so discovery is guarded by a visited set.
    Unresolvable seeds are a valid empty result, not an error.
    """
    seeds: list[str] = []
    seen_seed: set[str] = set()
    for value in req.seed_values:
        for nid in snapshot.find_by_type_value(req.seed_type, value):
            if nid not in seen_seed:
                seen_seed.add(nid)
                seeds.append(nid)
    if not seeds:
        return QueryResult(snapshot_epoch=snapshot.epoch)

    dist: dict[str, int] = {nid: 0 for nid in seeds}
    parent: dict[str, str | None] = {nid: None for nid in seeds}
    frontier = list(seeds)
    while frontier:
        next_frontier: list[str] = []
        for nid in frontier:
            depth = dist[nid]
            if req.max_depth is not None and depth >= req.max_depth:
                continue
            for _, other in snapshot.neighbors(nid, req.direction.value):
                if other not in dist:
                    dist[other] = depth + 1
                    parent[other] = nid
                    next_frontier.append(other)
        frontier = next_frontier

    hits = [nid for nid in dist if _is_target(snapshot, nid, req.target_types)]
    hits.sort(key=lambda nid: (dist[nid], nid))
    if req.order_by_attribute is not None:
        attr, order = req.order_by_attribute
        sign = 1 if order != DESCENDING else -1

        def rank(nid: str):
            value = snapshot.nodes[nid].attributes.get(attr)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return (1, 0.0, dist[nid], nid)  # targets lacking the attribute sort last
            return (0, sign * float(value), dist[nid], nid)

        hits.sort(key=rank)

    targets: list[NodeSummary] = []
    paths: list[tuple[str, ...]] = []
    for nid in hits:
        node = snapshot.nodes[nid]
        targets.append(NodeSummary(
            node_id=node.node_id,
            type_label=node.type_label,
            identity=node.identity,
            attributes=dict(node.attributes),
        ))
        walk: list[str] = []
        cur: str | None = nid
        while cur is not None:
            walk.append(cur)
            cur = parent[cur]
        paths.append(tuple(reversed(walk)))

    return QueryResult(
        targets=tuple(targets),
        paths=tuple(paths),
        visited_count=len(dist),
        snapshot_epoch=snapshot.epoch,
    )
