"""Shared test utilities: independent oracles and random graph corpora.

The reachability oracle here deliberately avoids the production traversal:
it relaxes distances over the raw edge list until fixpoint (Bellman-Ford
style), so it terminates on cycles and is a genuinely independent check of
BFS results and witness-path lengths.
"""

from __future__ import annotations

import random

from provsvc.model import (
    DataItemValue,
    EdgeKind,
    GraphDelta,
    IngestEnvelope,
    NodeKind,
    ProvEdge,
    ProvNode,
    activity_node_id,
    edge_key,
    entity_node_id,
)
from provsvc.store import GraphStore, Snapshot

INF = float("inf")

ENTITY_TYPES = ["WELL", "ZONE", "DATASET", "PROJECTTRAINING", "os_path"]
ACTIVITY_TYPES = ["extract", "integrate", "train"]


def make_envelope(transformation="step", workflow="wf", task="t1",
                  used=(), generated=(), derived=(), exec_id="x1",
                  started="2021-06-01T10:00:00+00:00", ended="2021-06-01T10:05:00+00:00"):
    return IngestEnvelope(
        workflow_execution_id=exec_id,
        workflow_name=workflow,
        task_id=task,
        transformation=transformation,
        started_at=started,
        ended_at=ended,
        used=tuple(DataItemValue(t, i, dict(a)) for t, i, a in used),
        generated=tuple(DataItemValue(t, i, dict(a)) for t, i, a in generated),
        derived=tuple(derived),
    )


def oriented_pairs(snapshot: Snapshot, direction: str) -> list[tuple[str, str]]:
    if direction == "forward":
        return [(e.src, e.dst) for e in snapshot.edges.values()]
    return [(e.dst, e.src) for e in snapshot.edges.values()]


def relaxation_distances(snapshot: Snapshot, seed_ids, direction: str) -> dict[str, int]:
    """Shortest hop counts by edge-list relaxation to fixpoint; cycle-safe."""
    dist = {nid: 0 for nid in seed_ids}
    pairs = oriented_pairs(snapshot, direction)
    changed = True
    while changed:
        changed = False
        for u, v in pairs:
            if u in dist and dist.get(v, INF) > dist[u] + 1:
                dist[v] = dist[u] + 1
                changed = True
    return dist


def scan_seed_ids(snapshot: Snapshot, seed_type: str, values) -> list[str]:
    """Seed resolution by linear scan, independent of the store index."""
    wanted = set(values)
    return [n.node_id for n in snapshot.nodes.values()
            if n.type_label == seed_type and n.identity in wanted]


def node_matches_targets(node: ProvNode, target_types) -> bool:
    for t in target_types:
        if t in ("Entity", "Activity"):
            if node.kind.value == t:
                return True
        elif node.type_label == t:
            return True
    return False


def oracle_target_ids(snapshot: Snapshot, seed_type: str, seed_values, direction: str,
                      target_types, max_depth: int | None = None) -> set[str]:
    seeds = scan_seed_ids(snapshot, seed_type, seed_values)
    dist = relaxation_distances(snapshot, seeds, direction)
    return {
        nid for nid, d in dist.items()
        if (max_depth is None or d <= max_depth)
        and node_matches_targets(snapshot.nodes[nid], target_types)
    }


def edge_pair_set(snapshot: Snapshot, direction: str) -> set[tuple[str, str]]:
    return set(oriented_pairs(snapshot, direction))


def random_graph(rng: random.Random, max_nodes: int = 200) -> GraphStore:
    """Random store with kind-correct Used/Generated/Derived edges.

    Entity identities are unique across the graph, so any entity is uniquely
    addressable by (type_label, identity). Derived edges may form cycles.
    """
    n_entities = rng.randint(1, max(1, int(max_nodes * 0.6)))
    n_activities = rng.randint(0, max_nodes - n_entities)
    nodes: list[ProvNode] = []
    entities: list[ProvNode] = []
    activities: list[ProvNode] = []
    for i in range(n_entities):
        t = rng.choice(ENTITY_TYPES)
        identity = f"v{i}"
        node = ProvNode(entity_node_id(t, identity), NodeKind.ENTITY, t, identity, {})
        entities.append(node)
        nodes.append(node)
    for i in range(n_activities):
        t = rng.choice(ACTIVITY_TYPES)
        node = ProvNode(activity_node_id("w", f"t{i}"), NodeKind.ACTIVITY, t, "", {})
        activities.append(node)
        nodes.append(node)

    edges: dict[str, ProvEdge] = {}
    n_edges = rng.randint(0, 2 * len(nodes))
    for _ in range(n_edges):
        kind = rng.choice([EdgeKind.USED, EdgeKind.GENERATED, EdgeKind.DERIVED])
        if kind is EdgeKind.USED and activities:
            src, dst = rng.choice(entities).node_id, rng.choice(activities).node_id
        elif kind is EdgeKind.GENERATED and activities:
            src, dst = rng.choice(activities).node_id, rng.choice(entities).node_id
        elif len(entities) >= 2:
            kind = EdgeKind.DERIVED
            src, dst = rng.choice(entities).node_id, rng.choice(entities).node_id
            if src == dst:
                continue
        else:
            continue
        eid = edge_key(kind, src, dst)
        edges[eid] = ProvEdge(eid, kind, src, dst)

    store = GraphStore()
    store.apply_batch(GraphDelta(nodes=tuple(nodes), edges=tuple(edges.values())))
    return store


def random_query_inputs(rng: random.Random, snapshot: Snapshot):
    """Pick a resolvable seed plus random direction and target types.

    Seeds come from entities only: the path grammar requires a non-empty
    identifying value, which activities never carry.
    """
    nodes = list(snapshot.nodes.values())
    identified = [n for n in nodes if n.identity]
    seed_node = rng.choice(identified)
    direction = rng.choice(["forward", "backward"])
    labels = sorted({n.type_label for n in nodes})
    k = rng.randint(1, min(3, len(labels)))
    target_types = rng.sample(labels, k)
    if rng.random() < 0.15:
        target_types.append(rng.choice(["Entity", "Activity"]))
    return seed_node.type_label, (seed_node.identity,), direction, tuple(target_types)
