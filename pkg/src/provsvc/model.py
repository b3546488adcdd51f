"""Provenance data model: workflow specs, ingest envelopes, and graph deltas.

Two halves live here. The prospective side (WorkflowSpec and friends)
describes a workflow's static structure: named transformations with typed
inputs/outputs and an acyclic dataflow between them. The retrospective side
(IngestEnvelope) describes one task execution and expands into a GraphDelta:
Entity nodes for data items, one Activity node for the execution, and
Used/Generated/Derived edges between them.

Everything in this module is pure data and pure functions. Values are frozen
dataclasses, safe to share between threads; validation returns reports
instead of raising.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Mapping

Scalar = str | int | float | bool

_SCALAR_TYPES = (str, int, float, bool)


class NodeKind(str, Enum):
    ENTITY = "Entity"
    ACTIVITY = "Activity"


class EdgeKind(str, Enum):
    USED = "Used"          # Entity -> Activity
    GENERATED = "Generated"  # Activity -> Entity
    DERIVED = "Derived"    # Entity -> Entity, oriented source -> derived


class MissingIdentity(Exception):
    """A data item has no identity and no deterministic surrogate can be formed."""


class FormatError(ValueError):
    """A JSON document does not have the shape of the requested type."""


def canonical_json(obj: Any) -> str:
    """Canonical wire form: sorted keys, compact separators, raw UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 UTC timestamp; trailing 'Z' is accepted."""
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    dt = datetime.fromisoformat(value)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def _digest(*parts: str) -> str:
    h = hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()
    return h[:20]


def entity_node_id(type_label: str, identity: str) -> str:
    """Stable Entity key: the same (type_label, identity) is always the same node."""
    return "e-" + _digest("entity", type_label, identity)


def activity_node_id(workflow_execution_id: str, task_id: str) -> str:
    """Stable Activity key per task execution; replays hit the same node."""
    return "a-" + _digest("activity", workflow_execution_id, task_id)


def edge_key(kind: EdgeKind, src: str, dst: str) -> str:
    """Stable edge key; duplicate (kind, src, dst) edges collapse to one."""
    return "g-" + _digest("edge", kind.value, src, dst)


# ---------------------------------------------------------------------------
# Prospective provenance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    value_kind: str = "text"  # text | number | boolean | reference
    identifying: bool = False

    def to_dict(self) -> dict:
        return {"name": self.name, "value_kind": self.value_kind, "identifying": self.identifying}

    @classmethod
    def from_dict(cls, d: Mapping) -> "AttributeSpec":
        return cls(
            name=str(d.get("name", "")),
            value_kind=str(d.get("value_kind", "text")),
            identifying=bool(d.get("identifying", False)),
        )


@dataclass(frozen=True)
class DataItemDecl:
    """One side's declaration of a data-item type a transformation touches."""

    type_label: str
    attributes: tuple[AttributeSpec, ...] = ()

    def identifying_attribute(self) -> AttributeSpec | None:
        for attr in self.attributes:
            if attr.identifying:
                return attr
        return None

    def to_dict(self) -> dict:
        return {
            "type_label": self.type_label,
            "attributes": [a.to_dict() for a in self.attributes],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DataItemDecl":
        return cls(
            type_label=str(d.get("type_label", "")),
            attributes=tuple(AttributeSpec.from_dict(a) for a in d.get("attributes", [])),
        )


@dataclass(frozen=True)
class TransformationSpec:
    name: str
    inputs: tuple[DataItemDecl, ...] = ()
    outputs: tuple[DataItemDecl, ...] = ()

    def input_labels(self) -> set[str]:
        return {d.type_label for d in self.inputs}

    def output_labels(self) -> set[str]:
        return {d.type_label for d in self.outputs}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "inputs": [d.to_dict() for d in self.inputs],
            "outputs": [d.to_dict() for d in self.outputs],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TransformationSpec":
        return cls(
            name=str(d.get("name", "")),
            inputs=tuple(DataItemDecl.from_dict(x) for x in d.get("inputs", [])),
            outputs=tuple(DataItemDecl.from_dict(x) for x in d.get("outputs", [])),
        )


@dataclass(frozen=True)
class DataflowLink:
    """producer_transformation emits type_label consumed by consumer_transformation."""

    producer_transformation: str
    type_label: str
    consumer_transformation: str

    def to_dict(self) -> dict:
        return {
            "producer_transformation": self.producer_transformation,
            "type_label": self.type_label,
            "consumer_transformation": self.consumer_transformation,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DataflowLink":
        return cls(
            producer_transformation=str(d.get("producer_transformation", "")),
            type_label=str(d.get("type_label", "")),
            consumer_transformation=str(d.get("consumer_transformation", "")),
        )


@dataclass(frozen=True)
class WorkflowSpec:
    name: str
    version: int = 0  # assigned by the registry; 0 means "not yet registered"
    transformations: tuple[TransformationSpec, ...] = ()
    dataflow: tuple[DataflowLink, ...] = ()

    def transformation(self, name: str) -> TransformationSpec | None:
        for t in self.transformations:
            if t.name == name:
                return t
        return None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "transformations": [t.to_dict() for t in self.transformations],
            "dataflow": [l.to_dict() for l in self.dataflow],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "WorkflowSpec":
        if not isinstance(d, Mapping):
            raise FormatError("workflow spec must be a JSON object")
        if not d.get("name"):
            raise FormatError("workflow spec requires a name")
        return cls(
            name=str(d["name"]),
            version=int(d.get("version", 0)),
            transformations=tuple(TransformationSpec.from_dict(t) for t in d.get("transformations", [])),
            dataflow=tuple(DataflowLink.from_dict(l) for l in d.get("dataflow", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "WorkflowSpec":
        try:
            return cls.from_dict(json.loads(text))
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"invalid workflow spec JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# Retrospective provenance
# ---------------------------------------------------------------------------


def _check_scalar_attrs(attributes: Mapping) -> dict:
    out = {}
    for k, v in attributes.items():
        if not isinstance(k, str):
            raise FormatError("attribute names must be strings")
        if not isinstance(v, _SCALAR_TYPES):
            raise FormatError(f"attribute {k!r} must be a scalar (clients flatten nested values)")
        out[k] = v
    return out


@dataclass(frozen=True)
class DataItemValue:
    type_label: str
    identity: str = ""
    attributes: Mapping[str, Scalar] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "type_label": self.type_label,
            "identity": self.identity,
            "attributes": dict(self.attributes),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DataItemValue":
        if not isinstance(d, Mapping) or "type_label" not in d:
            raise FormatError("data item requires a type_label")
        return cls(
            type_label=str(d["type_label"]),
            identity=str(d.get("identity", "")),
            attributes=_check_scalar_attrs(d.get("attributes", {})),
        )


@dataclass(frozen=True)
class DerivedLink:
    """Explicit entity-to-entity relationship; src is the upstream item dst came from."""

    src_type_label: str
    src_identity: str
    dst_type_label: str
    dst_identity: str

    def to_dict(self) -> dict:
        return {
            "src_type_label": self.src_type_label,
            "src_identity": self.src_identity,
            "dst_type_label": self.dst_type_label,
            "dst_identity": self.dst_identity,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DerivedLink":
        try:
            return cls(
                src_type_label=str(d["src_type_label"]),
                src_identity=str(d["src_identity"]),
                dst_type_label=str(d["dst_type_label"]),
                dst_identity=str(d["dst_identity"]),
            )
        except KeyError as exc:
            raise FormatError(f"derived link missing field {exc}") from exc


@dataclass(frozen=True)
class IngestEnvelope:
    """Wire record for one task execution and the data items it touched."""

    workflow_execution_id: str
    workflow_name: str
    task_id: str
    transformation: str
    started_at: str
    ended_at: str
    used: tuple[DataItemValue, ...] = ()
    generated: tuple[DataItemValue, ...] = ()
    derived: tuple[DerivedLink, ...] = ()
    synthetic_time: bool = False  # set by the historical loader when it invented the timestamps

    def to_dict(self) -> dict:
        d = {
            "workflow_execution_id": self.workflow_execution_id,
            "workflow_name": self.workflow_name,
            "task_id": self.task_id,
            "transformation": self.transformation,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "used": [v.to_dict() for v in self.used],
            "generated": [v.to_dict() for v in self.generated],
        }
        if self.derived:
            d["derived"] = [l.to_dict() for l in self.derived]
        if self.synthetic_time:
            d["synthetic_time"] = True
        return d

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "IngestEnvelope":
        if not isinstance(d, Mapping):
            raise FormatError("envelope must be a JSON object")
        for key in ("workflow_execution_id", "workflow_name", "task_id", "transformation",
                    "started_at", "ended_at"):
            if key not in d:
                raise FormatError(f"envelope missing required field {key!r}")
        return cls(
            workflow_execution_id=str(d["workflow_execution_id"]),
            workflow_name=str(d["workflow_name"]),
            task_id=str(d["task_id"]),
            transformation=str(d["transformation"]),
            started_at=str(d["started_at"]),
            ended_at=str(d["ended_at"]),
            used=tuple(DataItemValue.from_dict(v) for v in d.get("used", [])),
            generated=tuple(DataItemValue.from_dict(v) for v in d.get("generated", [])),
            derived=tuple(DerivedLink.from_dict(l) for l in d.get("derived", [])),
            synthetic_time=bool(d.get("synthetic_time", False)),
        )

    @classmethod
    def from_json(cls, text: str) -> "IngestEnvelope":
        try:
            return cls.from_dict(json.loads(text))
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"invalid envelope JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# Graph elements and deltas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProvNode:
    node_id: str
    kind: NodeKind
    type_label: str
    identity: str = ""  # empty for Activities, which are keyed by execution
    attributes: Mapping[str, Scalar] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "kind": self.kind.value,
            "type_label": self.type_label,
            "identity": self.identity,
            "attributes": dict(self.attributes),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProvNode":
        return cls(
            node_id=str(d["node_id"]),
            kind=NodeKind(d["kind"]),
            type_label=str(d["type_label"]),
            identity=str(d.get("identity", "")),
            attributes=_check_scalar_attrs(d.get("attributes", {})),
        )


@dataclass(frozen=True)
class ProvEdge:
    edge_id: str
    kind: EdgeKind
    src: str
    dst: str

    def to_dict(self) -> dict:
        return {"edge_id": self.edge_id, "kind": self.kind.value, "src": self.src, "dst": self.dst}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProvEdge":
        return cls(
            edge_id=str(d["edge_id"]),
            kind=EdgeKind(d["kind"]),
            src=str(d["src"]),
            dst=str(d["dst"]),
        )


@dataclass(frozen=True)
class GraphDelta:
    """Upsert batch: nodes merge by node_id, duplicate edges collapse."""

    nodes: tuple[ProvNode, ...] = ()
    edges: tuple[ProvEdge, ...] = ()

    def is_empty(self) -> bool:
        return not self.nodes and not self.edges

    def to_dict(self) -> dict:
        return {
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [e.to_dict() for e in self.edges],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "GraphDelta":
        return cls(
            nodes=tuple(ProvNode.from_dict(n) for n in d.get("nodes", [])),
            edges=tuple(ProvEdge.from_dict(e) for e in d.get("edges", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "GraphDelta":
        return cls.from_dict(json.loads(text))

    @staticmethod
    def merge(deltas: "list[GraphDelta]") -> "GraphDelta":
        nodes: list[ProvNode] = []
        edges: list[ProvEdge] = []
        for d in deltas:
            nodes.extend(d.nodes)
            edges.extend(d.edges)
        return GraphDelta(nodes=tuple(nodes), edges=tuple(edges))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str

    def to_dict(self) -> dict:
        return {"code": self.code, "detail": self.detail}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]

    def to_dict(self) -> dict:
        return {"violations": [v.to_dict() for v in self.violations]}

    def __bool__(self) -> bool:  # truthy when clean, mirroring "empty report" language
        return self.ok()


def validate_spec(spec: WorkflowSpec) -> ValidationReport:
    """Check every WorkflowSpec invariant; violations are report entries, never raises."""
    out: list[Violation] = []

    if not spec.name:
        out.append(Violation("empty-name", "workflow name is empty"))

    seen: set[str] = set()
    for t in spec.transformations:
        if not t.name:
            out.append(Violation("empty-name", "transformation with empty name"))
        elif t.name in seen:
            out.append(Violation("duplicate-name", f"transformation {t.name!r} declared twice"))
        seen.add(t.name)
        for side, decls in (("input", t.inputs), ("output", t.outputs)):
            for decl in decls:
                if not decl.type_label:
                    out.append(Violation("empty-name", f"{t.name}: {side} with empty type_label"))
                attr_names: set[str] = set()
                identifying = 0
                for attr in decl.attributes:
                    if not attr.name:
                        out.append(Violation(
                            "empty-name",
                            f"{t.name}/{decl.type_label}: attribute with empty name"))
                    elif attr.name in attr_names:
                        out.append(Violation(
                            "duplicate-name",
                            f"{t.name}/{decl.type_label}: attribute {attr.name!r} declared twice"))
                    attr_names.add(attr.name)
                    if attr.identifying:
                        identifying += 1
                if identifying > 1:
                    out.append(Violation(
                        "duplicate-identifying-attribute",
                        f"{t.name}/{decl.type_label}: {identifying} identifying attributes"))

    names = {t.name for t in spec.transformations}
    flow_edges: list[tuple[str, str]] = []
    for link in spec.dataflow:
        dangling = False
        producer = spec.transformation(link.producer_transformation)
        consumer = spec.transformation(link.consumer_transformation)
        if link.producer_transformation not in names or producer is None:
            out.append(Violation(
                "dangling-dataflow",
                f"dataflow references unknown producer {link.producer_transformation!r}"))
            dangling = True
        if link.consumer_transformation not in names or consumer is None:
            out.append(Violation(
                "dangling-dataflow",
                f"dataflow references unknown consumer {link.consumer_transformation!r}"))
            dangling = True
        if not dangling:
            if link.type_label not in producer.output_labels():
                out.append(Violation(
                    "dangling-dataflow",
                    f"{link.producer_transformation!r} does not output {link.type_label!r}"))
            if link.type_label not in consumer.input_labels():
                out.append(Violation(
                    "dangling-dataflow",
                    f"{link.consumer_transformation!r} does not input {link.type_label!r}"))
            flow_edges.append((link.producer_transformation, link.consumer_transformation))

    if _has_cycle(names, flow_edges):
        out.append(Violation("cyclic-dataflow", "dataflow relation over transformations has a cycle"))

    return ValidationReport(tuple(out))


def _has_cycle(nodes: set[str], edges: list[tuple[str, str]]) -> bool:
    # Kahn's algorithm: a cycle exists iff some node never reaches in-degree 0.
    indeg = {n: 0 for n in nodes}
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        succ[a].append(b)
        indeg[b] += 1
    ready = [n for n, d in indeg.items() if d == 0]
    visited = 0
    while ready:
        n = ready.pop()
        visited += 1
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    return visited != len(nodes)


def validate_envelope(env: IngestEnvelope, spec: WorkflowSpec) -> ValidationReport:
    """Check a retrospective event against the prospective structure it claims."""
    out: list[Violation] = []

    tr = spec.transformation(env.transformation)
    if tr is None:
        out.append(Violation(
            "unknown-transformation",
            f"workflow {spec.name!r} has no transformation {env.transformation!r}"))
        return ValidationReport(tuple(out))

    try:
        started = parse_timestamp(env.started_at)
        ended = parse_timestamp(env.ended_at)
        if started > ended:
            out.append(Violation(
                "invalid-time-order",
                f"started_at {env.started_at} is after ended_at {env.ended_at}"))
    except ValueError:
        out.append(Violation(
            "invalid-timestamp",
            f"timestamps must be ISO-8601: {env.started_at!r} / {env.ended_at!r}"))

    for side, items, decls in (("used", env.used, tr.inputs), ("generated", env.generated, tr.outputs)):
        declared = {d.type_label: d for d in decls}
        for item in items:
            decl = declared.get(item.type_label)
            if decl is None:
                out.append(Violation(
                    "undeclared-type",
                    f"{env.transformation!r} does not declare {side} type {item.type_label!r}"))
                continue
            if decl.identifying_attribute() is not None and not item.identity:
                out.append(Violation(
                    "missing-identity",
                    f"{side} item of type {item.type_label!r} lacks its identifying value"))

    return ValidationReport(tuple(out))


def _item_identity(item: DataItemValue) -> str:
    """Identity, or a deterministic surrogate hashed from the attribute map."""
    if item.identity:
        return item.identity
    if item.attributes:
        return "~" + _digest("surrogate", item.type_label, canonical_json(dict(item.attributes)))
    raise MissingIdentity(
        f"data item of type {item.type_label!r} has no identity and no attributes "
        "to derive one from (client instrumentation bug)")


def expand_envelope(env: IngestEnvelope, spec: WorkflowSpec) -> GraphDelta:
    """Turn one validated envelope into the nodes and edges it contributes.

    Pure and deterministic: identical envelopes expand to byte-identical
    deltas. Entity nodes are keyed by (type_label, identity) so the same data
    item referenced by many tasks stays a single node.
    """
    act_id = activity_node_id(env.workflow_execution_id, env.task_id)
    act_attrs: dict[str, Scalar] = {
        "started_at": env.started_at,
        "ended_at": env.ended_at,
        "workflow_name": env.workflow_name,
        "workflow_execution_id": env.workflow_execution_id,
        "task_id": env.task_id,
    }
    if env.synthetic_time:
        act_attrs["synthetic_time"] = True
    nodes: dict[str, ProvNode] = {
        act_id: ProvNode(
            node_id=act_id,
            kind=NodeKind.ACTIVITY,
            type_label=env.transformation,
            identity="",
            attributes=act_attrs,
        )
    }
    edges: dict[str, ProvEdge] = {}

    def upsert_entity(item: DataItemValue) -> str:
        identity = _item_identity(item)
        nid = entity_node_id(item.type_label, identity)
        prev = nodes.get(nid)
        attrs = dict(prev.attributes) if prev is not None else {}
        attrs.update(item.attributes)
        nodes[nid] = ProvNode(
            node_id=nid,
            kind=NodeKind.ENTITY,
            type_label=item.type_label,
            identity=identity,
            attributes=attrs,
        )
        return nid

    def add_edge(kind: EdgeKind, src: str, dst: str) -> None:
        eid = edge_key(kind, src, dst)
        edges[eid] = ProvEdge(edge_id=eid, kind=kind, src=src, dst=dst)

    for item in env.used:
        add_edge(EdgeKind.USED, upsert_entity(item), act_id)
    for item in env.generated:
        add_edge(EdgeKind.GENERATED, act_id, upsert_entity(item))
    for link in env.derived:
        src = entity_node_id(link.src_type_label, link.src_identity)
        dst = entity_node_id(link.dst_type_label, link.dst_identity)
        add_edge(EdgeKind.DERIVED, src, dst)

    return GraphDelta(nodes=tuple(nodes.values()), edges=tuple(edges.values()))
