"""Asynchronous write path: bounded work queue, single worker, job tracking.

Producers enqueue envelopes and get a job id back immediately; nothing on the
admission path touches the graph or the workflow registry, so enqueue latency
is independent of graph size. A single worker drains jobs, validates them
against the registered prospective spec, expands the valid ones into one
combined delta, applies it in a single batch, and records each job's outcome.

Validation failures are therefore asynchronous by design: the producer learns
about them by polling job status, never at enqueue time.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

from .model import (
    FormatError,
    GraphDelta,
    IngestEnvelope,
    MissingIdentity,
    ValidationReport,
    WorkflowSpec,
    expand_envelope,
    utc_now_iso,
    validate_envelope,
    validate_spec,
)
from .store import DanglingEdge, GraphStore


class QueueFull(Exception):
    """Backpressure: the queue is at capacity, retry with delay."""


class UnknownJob(KeyError):
    pass


class SourceUnreadable(Exception):
    pass


class SpecInvalid(Exception):
    def __init__(self, report: ValidationReport):
        super().__init__("; ".join(f"{v.code}: {v.detail}" for v in report.violations))
        self.report = report


class JobStatus(str, Enum):
    QUEUED = "queued"
    PERSISTING = "persisting"
    PERSISTED = "persisted"
    FAILED = "failed"


TERMINAL = {JobStatus.PERSISTED, JobStatus.FAILED}


@dataclass
class IngestJob:
    job_id: str
    payload: tuple[IngestEnvelope, ...]
    enqueued_at: str
    status: JobStatus = JobStatus.QUEUED
    completed_at: str | None = None
    failure_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "payload": [env.to_dict() for env in self.payload],
            "enqueued_at": self.enqueued_at,
            "completed_at": self.completed_at,
            "status": self.status.value,
            "failure_reason": self.failure_reason,
        }


class SpecRegistry:
    """Registered prospective specs; re-registering a name bumps its version."""

    def __init__(self):
        self._specs: dict[str, WorkflowSpec] = {}
        self._lock = threading.Lock()

    def register(self, spec: WorkflowSpec) -> tuple[str, int]:
        """Validate and store; returns (name, assigned version)."""
        report = validate_spec(spec)
        if not report.ok():
            raise SpecInvalid(report)
        with self._lock:
            current = self._specs.get(spec.name)
            version = (current.version if current else 0) + 1
            stamped = WorkflowSpec(
                name=spec.name,
                version=version,
                transformations=spec.transformations,
                dataflow=spec.dataflow,
            )
            self._specs[spec.name] = stamped
            return spec.name, version

    def get(self, name: str) -> WorkflowSpec | None:
        with self._lock:
            return self._specs.get(name)

    def names(self) -> list[str]:
        with self._lock:
            return sorted(self._specs)


@dataclass(frozen=True)
class HistoricalLoadPlan:
    """Timed batch submission of a newline-delimited envelope file."""

    source: str
    batch_size: int = 100
    interval: float = 0.0  # seconds between batch submissions

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.interval < 0:
            raise ValueError("interval must be >= 0")


@dataclass
class LoadReport:
    total: int = 0
    persisted: int = 0
    failed: int = 0
    submissions: int = 0
    submission_times: list[float] = field(default_factory=list)  # monotonic clock
    failures: list[tuple[int, str]] = field(default_factory=list)  # (1-based line, reason)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "persisted": self.persisted,
            "failed": self.failed,
            "submissions": self.submissions,
            "failures": [{"line": n, "reason": r} for n, r in self.failures],
        }


class IngestionService:
    """Queue plus worker over a GraphStore and a SpecRegistry."""

    def __init__(self, store: GraphStore, registry: SpecRegistry,
                 capacity: int = 1024, max_batch: int = 64, retention: int = 100_000):
        if capacity < 1 or max_batch < 1:
            raise ValueError("capacity and max_batch must be >= 1")
        self.store = store
        self.registry = registry
        self.capacity = capacity
        self.max_batch = max_batch
        self.retention = retention
        self._queue: deque[IngestJob] = deque()
        self._jobs: OrderedDict[str, IngestJob] = OrderedDict()
        self._lock = threading.Lock()

    # -- admission (producer side) -----------------------------------------

    def enqueue(self, env: IngestEnvelope) -> str:
        return self._admit((env,))

    def enqueue_batch(self, envs: Iterable[IngestEnvelope]) -> str:
        return self._admit(tuple(envs))

    def _admit(self, payload: tuple[IngestEnvelope, ...]) -> str:
        job = IngestJob(
            job_id=uuid.uuid4().hex,
            payload=payload,
            enqueued_at=utc_now_iso(),
        )
        with self._lock:
            if len(self._queue) >= self.capacity:
                raise QueueFull(f"queue at capacity {self.capacity}")
            self._queue.append(job)
            self._jobs[job.job_id] = job
            while len(self._jobs) > self.retention:
                self._jobs.popitem(last=False)
        return job.job_id

    def queue_depth(self) -> int:
        return len(self._queue)

    def job_status(self, job_id: str) -> IngestJob:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise UnknownJob(job_id)
        return job

    # -- worker side --------------------------------------------------------

    def worker_step(self) -> int:
        """Drain up to max_batch jobs, apply their combined delta once.

        Per-job failures (unknown workflow/transformation, undeclared types,
        missing identities) are recorded on the job, never raised. Only the
        single ingestion worker may call this.
        """
        batch: list[IngestJob] = []
        with self._lock:
            while self._queue and len(batch) < self.max_batch:
                job = self._queue.popleft()
                job.status = JobStatus.PERSISTING
                batch.append(job)
        if not batch:
            return 0

        expanded: list[tuple[IngestJob, GraphDelta]] = []
        for job in batch:
            reason = None
            deltas: list[GraphDelta] = []
            for env in job.payload:
                spec = self.registry.get(env.workflow_name)
                if spec is None:
                    reason = "unknown-workflow"
                    break
                report = validate_envelope(env, spec)
                if not report.ok():
                    reason = report.violations[0].code
                    break
                try:
                    deltas.append(expand_envelope(env, spec))
                except MissingIdentity:
                    reason = "missing-identity"
                    break
            if reason is not None:
                self._finish(job, JobStatus.FAILED, reason)
            else:
                expanded.append((job, GraphDelta.merge(deltas)))

        if expanded:
            combined = GraphDelta.merge([d for _, d in expanded])
            try:
                self.store.apply_batch(combined)
                for job, _ in expanded:
                    self._finish(job, JobStatus.PERSISTED)
            except DanglingEdge:
                # One job's stray derived reference must not sink its batchmates.
                for job, delta in expanded:
                    try:
                        self.store.apply_batch(delta)
                        self._finish(job, JobStatus.PERSISTED)
                    except DanglingEdge:
                        self._finish(job, JobStatus.FAILED, "dangling-edge")
        return len(batch)

    @staticmethod
    def _finish(job: IngestJob, status: JobStatus, reason: str | None = None) -> None:
        job.status = status
        job.failure_reason = reason
        job.completed_at = utc_now_iso()

    # -- historical loading ---------------------------------------------------

    def load_historical(self, plan: HistoricalLoadPlan, wait_timeout: float = 120.0) -> LoadReport:
        """Submit a historical file through the live queue; requires a running worker."""
        return run_load(plan, self.enqueue, self.job_status, wait_timeout=wait_timeout)


def parse_history_line(line: str, line_no: int) -> IngestEnvelope:
    """One canonical-JSON envelope; missing timestamps get a synthetic monotonic pair."""
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed-json: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("malformed-json: envelope must be an object")
    if "started_at" not in doc or "ended_at" not in doc:
        stamp = _synthetic_timestamp(line_no)
        doc.setdefault("started_at", stamp)
        doc.setdefault("ended_at", stamp)
        doc["synthetic_time"] = True
    return IngestEnvelope.from_dict(doc)


def _synthetic_timestamp(line_no: int) -> str:
    # Deterministic and monotonic in the line number, so replays stay idempotent.
    minutes, seconds = divmod(line_no, 60)
    hours, minutes = divmod(minutes, 60)
    return f"1970-01-01T{hours % 24:02d}:{minutes:02d}:{seconds:02d}+00:00"


def run_load(plan: HistoricalLoadPlan,
             submit: Callable[[IngestEnvelope], str],
             fetch_status: Callable[[str], IngestJob],
             wait_timeout: float = 120.0,
             on_submission: Callable[[int], None] | None = None) -> LoadReport:
    """Shared load protocol: parse, submit in timed batches, await outcomes.

    `submit`/`fetch_status` abstract the transport, so the same cadence logic
    drives both the in-process loader and the CLI's HTTP-based one. Submission
    happens in groups of exactly plan.batch_size records (last group may be
    smaller) with plan.interval seconds between groups.
    """
    report = LoadReport()
    try:
        with open(plan.source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise SourceUnreadable(str(exc)) from exc

    records: list[tuple[int, IngestEnvelope]] = []
    for line_no, line in enumerate(lines, start=1):
        report.total += 1
        try:
            records.append((line_no, parse_history_line(line, line_no)))
        except FormatError as exc:
            report.failed += 1
            report.failures.append((line_no, str(exc)))

    deadline = time.monotonic() + wait_timeout
    pending: dict[str, int] = {}  # job_id -> line number
    for start in range(0, len(records), plan.batch_size):
        group = records[start:start + plan.batch_size]
        if start > 0 and plan.interval > 0:
            time.sleep(plan.interval)
        report.submissions += 1
        report.submission_times.append(time.monotonic())
        if on_submission is not None:
            on_submission(len(group))
        for line_no, env in group:
            while True:
                try:
                    pending[submit(env)] = line_no
                    break
                except QueueFull:
                    if time.monotonic() > deadline:
                        report.failed += 1
                        report.failures.append((line_no, "queue-full-timeout"))
                        break
                    time.sleep(0.005)

    while pending and time.monotonic() < deadline:
        done: list[str] = []
        for job_id, line_no in pending.items():
            job = fetch_status(job_id)
            if job.status in TERMINAL:
                done.append(job_id)
                if job.status is JobStatus.PERSISTED:
                    report.persisted += 1
                else:
                    report.failed += 1
                    report.failures.append((line_no, job.failure_reason or "failed"))
        for job_id in done:
            del pending[job_id]
        if pending:
            time.sleep(0.01)
    for job_id, line_no in pending.items():
        report.failed += 1
        report.failures.append((line_no, "status-timeout"))

    report.failures.sort(key=lambda f: f[0])
    return report
