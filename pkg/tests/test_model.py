"""Data model tests: spec/envelope validation and envelope expansion."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from provsvc.model import (
    AttributeSpec,
    DataflowLink,
    DataItemDecl,
    DataItemValue,
    DerivedLink,
    EdgeKind,
    IngestEnvelope,
    MissingIdentity,
    NodeKind,
    TransformationSpec,
    WorkflowSpec,
    entity_node_id,
    expand_envelope,
    validate_envelope,
    validate_spec,
)

from helpers import make_envelope


def two_step_spec(cyclic=False):
    decl_t = DataItemDecl("T", (AttributeSpec("id", identifying=True),))
    flows = [DataflowLink("A", "T", "B")]
    if cyclic:
        flows.append(DataflowLink("B", "T", "A"))
    return WorkflowSpec(
        name="wf",
        transformations=(
            TransformationSpec("A", inputs=(decl_t,), outputs=(decl_t,)),
            TransformationSpec("B", inputs=(decl_t,), outputs=(decl_t,)),
        ),
        dataflow=tuple(flows),
    )


def topo_sortable(names, edges):
    """Independent acyclicity oracle: repeatedly strip nodes with no remaining predecessors."""
    remaining = set(names)
    pending = list(edges)
    while remaining:
        has_pred = {b for a, b in pending if a in remaining}
        free = remaining - has_pred
        if not free:
            return False
        remaining -= free
        pending = [(a, b) for a, b in pending if b in remaining]
    return True


class TestValidateSpec:
    def test_minimal_valid_spec(self):
        assert validate_spec(two_step_spec()).ok()

    def test_dangling_dataflow_unknown_transformation(self):
        spec = WorkflowSpec(
            name="wf",
            transformations=(TransformationSpec("A", outputs=(DataItemDecl("T"),)),),
            dataflow=(DataflowLink("A", "T", "X"),),
        )
        assert "dangling-dataflow" in validate_spec(spec).codes()

    def test_dangling_dataflow_undeclared_type(self):
        spec = two_step_spec()
        spec = WorkflowSpec(
            name=spec.name,
            transformations=spec.transformations,
            dataflow=(DataflowLink("A", "U", "B"),),
        )
        assert "dangling-dataflow" in validate_spec(spec).codes()

    def test_cyclic_dataflow(self):
        spec = two_step_spec(cyclic=True)
        edges = [(l.producer_transformation, l.consumer_transformation) for l in spec.dataflow]
        assert not topo_sortable({t.name for t in spec.transformations}, edges)
        assert "cyclic-dataflow" in validate_spec(spec).codes()

    def test_acyclic_confirmed_by_oracle(self):
        spec = two_step_spec()
        edges = [(l.producer_transformation, l.consumer_transformation) for l in spec.dataflow]
        assert topo_sortable({t.name for t in spec.transformations}, edges)
        assert "cyclic-dataflow" not in validate_spec(spec).codes()

    def test_duplicate_transformation_name(self):
        spec = WorkflowSpec(
            name="wf",
            transformations=(TransformationSpec("A"), TransformationSpec("A")),
        )
        assert "duplicate-name" in validate_spec(spec).codes()

    def test_duplicate_attribute_name(self):
        decl = DataItemDecl("T", (AttributeSpec("id"), AttributeSpec("id")))
        spec = WorkflowSpec(name="wf", transformations=(TransformationSpec("A", inputs=(decl,)),))
        assert "duplicate-name" in validate_spec(spec).codes()

    def test_duplicate_identifying_attribute(self):
        decl = DataItemDecl("T", (
            AttributeSpec("a", identifying=True),
            AttributeSpec("b", identifying=True),
        ))
        spec = WorkflowSpec(name="wf", transformations=(TransformationSpec("A", inputs=(decl,)),))
        assert "duplicate-identifying-attribute" in validate_spec(spec).codes()

    def test_violations_accumulate(self):
        spec = WorkflowSpec(
            name="wf",
            transformations=(TransformationSpec("A"), TransformationSpec("A")),
            dataflow=(DataflowLink("A", "T", "missing"),),
        )
        codes = validate_spec(spec).codes()
        assert "duplicate-name" in codes and "dangling-dataflow" in codes


class TestValidateEnvelope:
    def test_unknown_transformation(self, spec):
        env = make_envelope(transformation="FeatureExtraction", workflow=spec.name)
        assert validate_envelope(env, spec).codes() == ["unknown-transformation"]

    def test_declared_input_type_accepted(self, spec):
        env = make_envelope(
            transformation="ingest-logs", workflow=spec.name,
            used=[("WELL", "12153", {}), ("os_path", "file_158.las", {})],
            generated=[("DATASET", "d1", {})],
        )
        assert validate_envelope(env, spec).ok()

    def test_undeclared_generated_type(self, spec):
        # Exhaustive check against the spec's own output declarations first.
        tr = spec.transformation("ingest-logs")
        declared_outputs = {d.type_label for d in tr.outputs}
        assert "PROJECTTRAINING" not in declared_outputs
        env = make_envelope(
            transformation="ingest-logs", workflow=spec.name,
            generated=[("PROJECTTRAINING", "m1", {})],
        )
        assert "undeclared-type" in validate_envelope(env, spec).codes()

    def test_missing_identity_flagged(self, spec):
        env = make_envelope(
            transformation="ingest-logs", workflow=spec.name,
            used=[("WELL", "", {})],
        )
        assert "missing-identity" in validate_envelope(env, spec).codes()

    def test_time_order_violation(self, spec):
        env = make_envelope(
            transformation="ingest-logs", workflow=spec.name,
            started="2021-06-01T12:00:00+00:00", ended="2021-06-01T11:00:00+00:00",
        )
        assert "invalid-time-order" in validate_envelope(env, spec).codes()

    def test_unparseable_timestamp(self, spec):
        env = make_envelope(transformation="ingest-logs", workflow=spec.name,
                            started="yesterday", ended="today")
        assert "invalid-timestamp" in validate_envelope(env, spec).codes()


class TestExpandEnvelope:
    def test_counts_by_construction_rule(self, spec):
        # 2 used + 1 generated, all distinct: 1 activity + 3 entities, 2 Used + 1 Generated.
        env = make_envelope(
            transformation="ingest-logs", workflow=spec.name,
            used=[("WELL", "12153", {}), ("os_path", "file_158.las", {})],
            generated=[("DATASET", "d1", {})],
        )
        assert validate_envelope(env, spec).ok()
        delta = expand_envelope(env, spec)
        expected_nodes = 1 + len({("WELL", "12153"), ("os_path", "file_158.las"), ("DATASET", "d1")})
        assert len(delta.nodes) == expected_nodes == 4
        assert len(delta.edges) == len(env.used) + len(env.generated) == 3

    def test_empty_io_task(self, spec):
        env = make_envelope(transformation="ingest-logs", workflow=spec.name)
        delta = expand_envelope(env, spec)
        assert len(delta.nodes) == 1 and len(delta.edges) == 0
        assert delta.nodes[0].kind is NodeKind.ACTIVITY

    def test_shared_entity_key_across_envelopes(self, spec):
        env1 = make_envelope(transformation="ingest-logs", workflow=spec.name, task="t1",
                             used=[("WELL", "12153", {})])
        env2 = make_envelope(transformation="ingest-logs", workflow=spec.name, task="t2",
                             used=[("WELL", "12153", {})])
        d1, d2 = expand_envelope(env1, spec), expand_envelope(env2, spec)
        wells1 = [n.node_id for n in d1.nodes if n.type_label == "WELL"]
        wells2 = [n.node_id for n in d2.nodes if n.type_label == "WELL"]
        assert wells1 == wells2 == [entity_node_id("WELL", "12153")]

    def test_activity_attributes_carry_timestamps(self, spec):
        env = make_envelope(transformation="ingest-logs", workflow=spec.name)
        delta = expand_envelope(env, spec)
        act = delta.nodes[0]
        assert act.type_label == "ingest-logs"
        assert act.attributes["started_at"] == env.started_at
        assert act.attributes["ended_at"] == env.ended_at

    def test_deterministic_byte_for_byte(self, spec):
        env = make_envelope(
            transformation="ingest-logs", workflow=spec.name,
            used=[("WELL", "12153", {"orientation": "vertical"})],
            generated=[("DATASET", "d1", {"records": 5})],
        )
        assert expand_envelope(env, spec).to_json() == expand_envelope(env, spec).to_json()

    def test_missing_identity_raises_without_surrogate_material(self):
        decl = DataItemDecl("T")  # no identifying attribute declared
        spec = WorkflowSpec(name="wf", transformations=(
            TransformationSpec("step", inputs=(decl,)),))
        env = make_envelope(used=[("T", "", {})])
        assert validate_envelope(env, spec).ok()
        with pytest.raises(MissingIdentity):
            expand_envelope(env, spec)

    def test_surrogate_identity_from_attributes(self):
        decl = DataItemDecl("T")
        spec = WorkflowSpec(name="wf", transformations=(
            TransformationSpec("step", inputs=(decl,)),))
        env = make_envelope(used=[("T", "", {"path": "/tmp/x"})])
        delta1 = expand_envelope(env, spec)
        delta2 = expand_envelope(env, spec)
        entity = [n for n in delta1.nodes if n.kind is NodeKind.ENTITY][0]
        assert entity.identity.startswith("~")
        assert delta1.to_json() == delta2.to_json()

    def test_derived_edges_between_entities(self, spec):
        env = make_envelope(
            transformation="ingest-logs", workflow=spec.name,
            used=[("WELL", "12153", {})],
            generated=[("DATASET", "d1", {})],
            derived=[DerivedLink("WELL", "12153", "DATASET", "d1")],
        )
        delta = expand_envelope(env, spec)
        derived = [e for e in delta.edges if e.kind is EdgeKind.DERIVED]
        assert len(derived) == 1
        assert derived[0].src == entity_node_id("WELL", "12153")
        assert derived[0].dst == entity_node_id("DATASET", "d1")

    def test_duplicate_items_collapse_in_delta(self, spec):
        env = make_envelope(
            transformation="ingest-logs", workflow=spec.name,
            used=[("WELL", "12153", {"a": 1}), ("WELL", "12153", {"b": 2})],
        )
        delta = expand_envelope(env, spec)
        wells = [n for n in delta.nodes if n.type_label == "WELL"]
        assert len(wells) == 1
        assert wells[0].attributes == {"a": 1, "b": 2}
        assert len(delta.edges) == 1  # identical Used edge collapsed


# -- property tests ---------------------------------------------------------

ident_st = st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True)
value_st = st.from_regex(r"[a-z0-9.]{1,8}", fullmatch=True)
scalar_st = st.one_of(
    st.integers(-10**6, 10**6),
    st.booleans(),
    st.text(max_size=8),
)
item_st = st.tuples(ident_st, value_st, st.dictionaries(ident_st, scalar_st, max_size=3))


@st.composite
def spec_with_envelope(draw):
    used = draw(st.lists(item_st, max_size=4))
    generated = draw(st.lists(item_st, max_size=4))
    decl = lambda label: DataItemDecl(label, (AttributeSpec("id", identifying=True),))
    spec = WorkflowSpec(
        name="wf",
        transformations=(TransformationSpec(
            "step",
            inputs=tuple(decl(t) for t in sorted({t for t, _, _ in used})),
            outputs=tuple(decl(t) for t in sorted({t for t, _, _ in generated})),
        ),),
    )
    env = make_envelope(used=used, generated=generated)
    return spec, env


@given(spec_with_envelope())
@settings(max_examples=150)
def test_edge_typing_invariant(spec_env):
    spec, env = spec_env
    assert validate_spec(spec).ok()
    assert validate_envelope(env, spec).ok()
    delta = expand_envelope(env, spec)
    kinds = {n.node_id: n.kind for n in delta.nodes}
    for edge in delta.edges:
        if edge.kind is EdgeKind.USED:
            assert (kinds[edge.src], kinds[edge.dst]) == (NodeKind.ENTITY, NodeKind.ACTIVITY)
        elif edge.kind is EdgeKind.GENERATED:
            assert (kinds[edge.src], kinds[edge.dst]) == (NodeKind.ACTIVITY, NodeKind.ENTITY)
        else:
            assert (kinds[edge.src], kinds[edge.dst]) == (NodeKind.ENTITY, NodeKind.ENTITY)


@given(spec_with_envelope())
@settings(max_examples=150)
def test_expansion_is_deterministic(spec_env):
    spec, env = spec_env
    assert expand_envelope(env, spec).to_json() == expand_envelope(env, spec).to_json()


@given(spec_with_envelope())
@settings(max_examples=150)
def test_conformance_closure_no_missing_identity(spec_env):
    # Specs here mark identifying attributes for every type, so any envelope
    # that validates cleanly must expand without MissingIdentity.
    spec, env = spec_env
    assert validate_envelope(env, spec).ok()
    expand_envelope(env, spec)  # must not raise


class TestWireFormat:
    def test_spec_json_round_trip(self, spec):
        again = WorkflowSpec.from_json(spec.to_json())
        assert again == spec
        assert again.to_json() == spec.to_json()

    def test_envelope_json_round_trip(self, spec):
        env = make_envelope(
            transformation="ingest-logs", workflow=spec.name,
            used=[("WELL", "12153", {"orientation": "vertical"})],
            generated=[("DATASET", "d1", {"records": 7})],
            derived=[DerivedLink("WELL", "12153", "DATASET", "d1")],
        )
        again = IngestEnvelope.from_json(env.to_json())
        assert again == env
        assert again.to_json() == env.to_json()

    def test_envelope_requires_core_fields(self):
        with pytest.raises(Exception):
            IngestEnvelope.from_json('{"workflow_name": "wf"}')

    def test_nested_attributes_rejected(self):
        doc = make_envelope().to_dict()
        doc["used"] = [{"type_label": "T", "identity": "x", "attributes": {"nested": {"a": 1}}}]
        with pytest.raises(Exception):
            IngestEnvelope.from_dict(doc)

    def test_data_item_defaults(self):
        item = DataItemValue.from_dict({"type_label": "T"})
        assert item.identity == "" and dict(item.attributes) == {}
