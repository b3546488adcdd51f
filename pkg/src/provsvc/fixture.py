"""Deterministic synthetic lineage fixture for the shale sweet-spot domain.

Generates a four-stage workflow (ingest-logs -> feature-extraction-per-zone ->
dataset-integration -> model-training) over WELL, os_path, ZONE, DATASET, and
PROJECTTRAINING data types, plus the envelope file of one full execution.
The first well/log/zone identifiers are pinned (12153, file_158.las, 278) so
the three canonical traversal queries always resolve against it.

Everything is keyed off an integer seed; the same arguments always produce
byte-identical files. This is an approximation of a realistic sweet-spot
workflow, not a transcript of any particular production system.
"""

from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone

from .model import (
    AttributeSpec,
    DataflowLink,
    DataItemDecl,
    DataItemValue,
    IngestEnvelope,
    TransformationSpec,
    WorkflowSpec,
)

WORKFLOW_NAME = "sweet_spot_modeling"

WELL = "WELL"
OS_PATH = "os_path"
ZONE = "ZONE"
DATASET = "DATASET"
MODEL = "PROJECTTRAINING"

FIRST_WELL = 12153
FIRST_LOG = 158
FIRST_ZONE = 278

_BASE_TIME = datetime(2020, 1, 1, tzinfo=timezone.utc)


def _decl(type_label: str, id_attr: str, extra: tuple[AttributeSpec, ...] = ()) -> DataItemDecl:
    return DataItemDecl(
        type_label=type_label,
        attributes=(AttributeSpec(name=id_attr, value_kind="text", identifying=True),) + extra,
    )


def fixture_spec() -> WorkflowSpec:
    return WorkflowSpec(
        name=WORKFLOW_NAME,
        transformations=(
            TransformationSpec(
                name="ingest-logs",
                inputs=(_decl(WELL, "id"), _decl(OS_PATH, "path")),
                outputs=(_decl(DATASET, "id", (AttributeSpec("records", "number"),)),),
            ),
            TransformationSpec(
                name="feature-extraction-per-zone",
                inputs=(_decl(DATASET, "id"), _decl(ZONE, "id")),
                outputs=(_decl(DATASET, "id"),),
            ),
            TransformationSpec(
                name="dataset-integration",
                inputs=(_decl(DATASET, "id"),),
                outputs=(_decl(DATASET, "id"),),
            ),
            TransformationSpec(
                name="model-training",
                inputs=(_decl(DATASET, "id"),),
                outputs=(_decl(MODEL, "id", (AttributeSpec("mse", "number"),)),),
            ),
        ),
        dataflow=(
            DataflowLink("ingest-logs", DATASET, "feature-extraction-per-zone"),
            DataflowLink("feature-extraction-per-zone", DATASET, "dataset-integration"),
            DataflowLink("dataset-integration", DATASET, "model-training"),
        ),
    )


def well_id(i: int) -> str:
    return str(FIRST_WELL + i)


def log_path(i: int) -> str:
    return f"file_{FIRST_LOG + i}.las"


def zone_id(j: int) -> str:
    return str(FIRST_ZONE + j)


def fixture_envelopes(wells: int, zones: int, seed: int = 20) -> list[IngestEnvelope]:
    """One execution's envelopes; empty when wells == 0 (spec-only fixture)."""
    if wells == 0:
        return []
    rng = random.Random(seed)
    exec_id = f"exec-{seed:06d}"
    counter = 0

    def ts_pair() -> tuple[str, str]:
        nonlocal counter
        start = _BASE_TIME + timedelta(minutes=counter)
        return start.isoformat(), (start + timedelta(seconds=30)).isoformat()

    def envelope(transformation: str, used: list[DataItemValue],
                 generated: list[DataItemValue]) -> IngestEnvelope:
        nonlocal counter
        started, ended = ts_pair()
        counter += 1
        return IngestEnvelope(
            workflow_execution_id=exec_id,
            workflow_name=WORKFLOW_NAME,
            task_id=f"t{counter:05d}",
            transformation=transformation,
            started_at=started,
            ended_at=ended,
            used=tuple(used),
            generated=tuple(generated),
        )

    out: list[IngestEnvelope] = []
    logs: list[str] = []
    for i in range(wells):
        logs_id = f"logs_{well_id(i)}"
        logs.append(logs_id)
        out.append(envelope(
            "ingest-logs",
            used=[
                DataItemValue(WELL, well_id(i), {"orientation": "horizontal" if i % 2 else "vertical"}),
                DataItemValue(OS_PATH, log_path(i)),
            ],
            generated=[DataItemValue(DATASET, logs_id, {"records": rng.randint(200, 2000)})],
        ))

    features: dict[int, list[str]] = {j: [] for j in range(zones)}
    for j in range(zones):
        for i in range(wells):
            feat_id = f"features_{well_id(i)}_{zone_id(j)}"
            features[j].append(feat_id)
            out.append(envelope(
                "feature-extraction-per-zone",
                used=[DataItemValue(DATASET, logs[i]), DataItemValue(ZONE, zone_id(j))],
                generated=[DataItemValue(DATASET, feat_id)],
            ))

    for j in range(zones):
        integrated = f"integrated_{zone_id(j)}"
        out.append(envelope(
            "dataset-integration",
            used=[DataItemValue(DATASET, f) for f in features[j]],
            generated=[DataItemValue(DATASET, integrated)],
        ))
        mse = round(rng.uniform(0.05, 0.95), 3)
        out.append(envelope(
            "model-training",
            used=[DataItemValue(DATASET, integrated)],
            generated=[DataItemValue(MODEL, f"model_{zone_id(j)}", {"mse": mse})],
        ))

    return out


def write_fixture(out_dir: str, wells: int, zones: int, seed: int = 20) -> tuple[str, str]:
    """Write spec.json and envelopes.jsonl into out_dir; returns their paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    spec_path = os.path.join(out_dir, "spec.json")
    env_path = os.path.join(out_dir, "envelopes.jsonl")
    with open(spec_path, "w", encoding="utf-8") as fh:
        fh.write(fixture_spec().to_json() + "\n")
    with open(env_path, "w", encoding="utf-8") as fh:
        for env in fixture_envelopes(wells, zones, seed):
            fh.write(env.to_json() + "\n")
    return spec_path, env_path
