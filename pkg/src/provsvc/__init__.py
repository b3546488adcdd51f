"""Lineage tracking service for ML workflows.

Prospective workflow specs, asynchronous ingestion of execution records into
a snapshot-isolated provenance graph, and a seed/direction/target traversal
query API.
"""

from .model import (
    AttributeSpec,
    DataflowLink,
    DataItemDecl,
    DataItemValue,
    DerivedLink,
    EdgeKind,
    GraphDelta,
    IngestEnvelope,
    MissingIdentity,
    NodeKind,
    ProvEdge,
    ProvNode,
    TransformationSpec,
    ValidationReport,
    WorkflowSpec,
    expand_envelope,
    validate_envelope,
    validate_spec,
)
from .store import DanglingEdge, GraphStore, Snapshot, UnknownNode
from .ingest import (
    HistoricalLoadPlan,
    IngestionService,
    IngestJob,
    JobStatus,
    LoadReport,
    QueueFull,
    SpecInvalid,
    SpecRegistry,
    UnknownJob,
)
from .query import (
    Direction,
    InvalidDirection,
    MalformedPath,
    QueryRequest,
    QueryResult,
    parse_query_path,
    traverse,
)
from .service import ProvenanceService, ServiceConfig, ServiceRuntime, load_config

__version__ = "0.1.0"
