"""Append-oriented in-process property graph with snapshot-isolated reads.

Writes go through a single writer calling apply_batch; each batch builds a
fresh immutable Snapshot and swaps it in atomically, so readers are wait-free
and never observe a half-applied batch. Queries run against whichever
Snapshot they grabbed, which stays valid (and unchanged) across later writes.

An optional append-only persistence log keeps one canonical-JSON GraphDelta
per line and is replayed on startup; deltas are merge-based upserts, so
replay is idempotent.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field
from typing import Iterator, Mapping, NamedTuple

from .model import EdgeKind, GraphDelta, ProvEdge, ProvNode


class DanglingEdge(Exception):
    """A delta edge references a node neither stored nor in the delta."""


class UnknownNode(KeyError):
    """The requested node_id is not visible in this snapshot."""


class StoreStats(NamedTuple):
    node_count: int
    edge_count: int
    epoch: int


@dataclass(frozen=True)
class Snapshot:
    """Immutable read view of the graph as of one epoch."""

    epoch: int
    nodes: Mapping[str, ProvNode] = field(default_factory=dict)
    edges: Mapping[str, ProvEdge] = field(default_factory=dict)
    out_edges: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    in_edges: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    index: Mapping[tuple[str, str], tuple[str, ...]] = field(default_factory=dict)

    def find_by_type_value(self, type_label: str, identity: str) -> list[str]:
        """All node_ids whose (type_label, identity) match byte-for-byte."""
        return list(self.index.get((type_label, identity), ()))

    def neighbors(self, node_id: str, direction: str) -> list[tuple[ProvEdge, str]]:
        """Adjacent (edge, node_id) pairs, deterministic (sorted by edge_id).

        forward follows dataflow (src -> dst: Used into the activity,
        Generated out of it, Derived downstream); backward reverses it.
        """
        if node_id not in self.nodes:
            raise UnknownNode(node_id)
        if direction == "forward":
            return [(self.edges[eid], self.edges[eid].dst) for eid in self.out_edges.get(node_id, ())]
        if direction == "backward":
            return [(self.edges[eid], self.edges[eid].src) for eid in self.in_edges.get(node_id, ())]
        raise ValueError(f"direction must be forward or backward, got {direction!r}")

    def stats(self) -> StoreStats:
        return StoreStats(len(self.nodes), len(self.edges), self.epoch)


class GraphStore:
    """Single-writer, many-reader graph store.

    Exactly one component (the ingestion worker) may call apply_batch; a lock
    enforces that discipline defensively. snapshot() is a plain attribute
    read, never blocked by an in-progress write.
    """

    def __init__(self, log_path: str | None = None):
        self._state = Snapshot(epoch=0)
        self._write_lock = threading.Lock()
        self._log_path = log_path
        self._log_file = None
        if log_path:
            if os.path.exists(log_path):
                self._replay(log_path)
            self._log_file = open(log_path, "a", encoding="utf-8")

    def close(self) -> None:
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None

    def _replay(self, log_path: str) -> None:
        with open(log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                self._apply(GraphDelta.from_json(line), log=False)

    def snapshot(self) -> Snapshot:
        """Read view at the latest fully applied epoch."""
        return self._state

    def stats(self) -> StoreStats:
        return self._state.stats()

    def apply_batch(self, delta: GraphDelta) -> int:
        """Make a delta visible atomically; returns the epoch it landed at.

        Re-upserting an existing node merges attributes last-writer-wins per
        key; duplicate edges collapse. An empty delta is a no-op. DanglingEdge
        rejects the whole batch, leaving the store untouched.
        """
        with self._write_lock:
            return self._apply(delta, log=self._log_file is not None)

    def _apply(self, delta: GraphDelta, log: bool) -> int:
        state = self._state
        if delta.is_empty():
            return state.epoch

        nodes = dict(state.nodes)
        for node in delta.nodes:
            prev = nodes.get(node.node_id)
            if prev is None:
                nodes[node.node_id] = node
            else:
                merged = dict(prev.attributes)
                merged.update(node.attributes)
                nodes[node.node_id] = ProvNode(
                    node_id=prev.node_id,
                    kind=prev.kind,
                    type_label=prev.type_label,
                    identity=prev.identity,
                    attributes=merged,
                )

        for edge in delta.edges:
            if edge.src not in nodes or edge.dst not in nodes:
                raise DanglingEdge(
                    f"edge {edge.edge_id} ({edge.kind.value}) references unknown node "
                    f"{edge.src if edge.src not in nodes else edge.dst!r}")

        edges = dict(state.edges)
        out_edges = dict(state.out_edges)
        in_edges = dict(state.in_edges)
        touched_out: set[str] = set()
        touched_in: set[str] = set()
        for edge in delta.edges:
            if edge.edge_id in edges:
                continue
            edges[edge.edge_id] = edge
            out_edges[edge.src] = out_edges.get(edge.src, ()) + (edge.edge_id,)
            in_edges[edge.dst] = in_edges.get(edge.dst, ()) + (edge.edge_id,)
            touched_out.add(edge.src)
            touched_in.add(edge.dst)
        for nid in touched_out:
            out_edges[nid] = tuple(sorted(out_edges[nid]))
        for nid in touched_in:
            in_edges[nid] = tuple(sorted(in_edges[nid]))

        index = dict(state.index)
        for node in delta.nodes:
            key = (node.type_label, nodes[node.node_id].identity)
            known = index.get(key, ())
            if node.node_id not in known:
                index[key] = tuple(sorted(known + (node.node_id,)))

        if log:
            self._log_file.write(delta.to_json() + "\n")
            self._log_file.flush()

        self._state = Snapshot(
            epoch=state.epoch + 1,
            nodes=nodes,
            edges=edges,
            out_edges=out_edges,
            in_edges=in_edges,
            index=index,
        )
        return self._state.epoch


def iter_edges(snapshot: Snapshot) -> Iterator[ProvEdge]:
    return iter(snapshot.edges.values())


def edge_endpoints_valid(edge: ProvEdge, snapshot: Snapshot) -> bool:
    """Endpoint-typing invariant: Used E->A, Generated A->E, Derived E->E."""
    src = snapshot.nodes.get(edge.src)
    dst = snapshot.nodes.get(edge.dst)
    if src is None or dst is None:
        return False
    want = {
        EdgeKind.USED: ("Entity", "Activity"),
        EdgeKind.GENERATED: ("Activity", "Entity"),
        EdgeKind.DERIVED: ("Entity", "Entity"),
    }[edge.kind]
    return (src.kind.value, dst.kind.value) == want
