"""Scoped workflow/task capture with buffered, asynchronous shipping.

The capture surface (begin_task / record_used / record_generated / end_task)
never performs network IO: finished task envelopes accumulate in an in-memory
buffer and leave the process only on flush, either explicit or via an
optional background flusher. Instrumented code therefore pays nanoseconds,
not round trips, and a dead service never breaks the workflow being traced.

A failed flush keeps every unsent envelope buffered, so calling flush again
after the service recovers ships them without data loss.
"""

from __future__ import annotations

import json
import threading
import time
import urllib.error
import urllib.request
import uuid
from datetime import datetime, timezone

_SCALARS = (str, int, float, bool)


class TransportError(Exception):
    """Shipping failed; unsent envelopes remain buffered."""


class InvalidValue(ValueError):
    """Recorded data item is unusable (empty type label or identity)."""


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


class HttpTransport:
    """POSTs envelopes to the service's public /provenance endpoint."""

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def send(self, envelope: dict) -> str:
        data = json.dumps(envelope, sort_keys=True, ensure_ascii=False).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint + "/provenance", data=data, method="POST",
            headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                if resp.status != 202:
                    raise TransportError(f"unexpected status {resp.status}")
                return json.loads(resp.read().decode("utf-8"))["job_id"]
        except urllib.error.HTTPError as exc:
            raise TransportError(f"service rejected envelope: HTTP {exc.code}") from exc
        except (urllib.error.URLError, OSError, TimeoutError, json.JSONDecodeError, KeyError) as exc:
            raise TransportError(str(exc)) from exc


def _check_item(type_label: str, identity: str, attributes) -> dict:
    if not type_label:
        raise InvalidValue("type_label must be non-empty")
    if not identity:
        raise InvalidValue("identity must be non-empty")
    attrs = dict(attributes or {})
    for k, v in attrs.items():
        if not isinstance(v, _SCALARS):
            raise InvalidValue(f"attribute {k!r} must be a scalar; flatten nested values")
    return {"type_label": type_label, "identity": identity, "attributes": attrs}


class TaskCapture:
    """One task execution being recorded; finalized by WorkflowSession.end_task."""

    def __init__(self, transformation: str, task_id: str):
        self.transformation = transformation
        self.task_id = task_id
        self.started_at = _now_iso()
        self.used: list[dict] = []
        self.generated: list[dict] = []
        self._closed = False

    def record_used(self, type_label: str, identity: str, attributes=None) -> None:
        self._record(self.used, type_label, identity, attributes)

    def record_generated(self, type_label: str, identity: str, attributes=None) -> None:
        self._record(self.generated, type_label, identity, attributes)

    def _record(self, side: list, type_label: str, identity: str, attributes) -> None:
        if self._closed:
            raise InvalidValue(f"task {self.task_id} already ended")
        side.append(_check_item(type_label, identity, attributes))


class WorkflowSession:
    """Capture scope for one workflow execution.

    A session is single-owner; concurrent tasks each get their own
    TaskCapture. The envelope buffer is internally synchronized so a
    background flusher (enabled with background_flush=True) can drain it
    while tasks keep ending. Defaults flush at 100 buffered envelopes or
    5 seconds of age.
    """

    def __init__(self, workflow_name: str, endpoint: str | None = None,
                 transport=None, max_buffered: int = 100, max_age: float = 5.0,
                 background_flush: bool = False):
        if transport is None:
            if endpoint is None:
                raise ValueError("either endpoint or transport is required")
            transport = HttpTransport(endpoint)
        self.workflow_name = workflow_name
        self.workflow_execution_id = uuid.uuid4().hex
        self.transport = transport
        self.max_buffered = max_buffered
        self.max_age = max_age
        self._buffer: list[dict] = []
        self._oldest: float | None = None
        self._lock = threading.Lock()
        self._task_counter = 0
        self._flusher: threading.Thread | None = None
        self._wake = threading.Event()
        self._stopping = False
        if background_flush:
            self._flusher = threading.Thread(target=self._flush_loop,
                                             name="capture-flusher", daemon=True)
            self._flusher.start()

    # -- capture surface: no network IO on any of these ----------------------

    def begin_task(self, transformation: str) -> TaskCapture:
        if not transformation:
            raise InvalidValue("transformation must be non-empty")
        with self._lock:
            self._task_counter += 1
            task_id = f"task-{self._task_counter:06d}"
        return TaskCapture(transformation, task_id)

    def end_task(self, capture: TaskCapture) -> dict:
        """Stamp ended_at and buffer exactly one envelope for later shipping."""
        if capture._closed:
            raise InvalidValue(f"task {capture.task_id} already ended")
        capture._closed = True
        envelope = {
            "workflow_execution_id": self.workflow_execution_id,
            "workflow_name": self.workflow_name,
            "task_id": capture.task_id,
            "transformation": capture.transformation,
            "started_at": capture.started_at,
            "ended_at": _now_iso(),
            "used": capture.used,
            "generated": capture.generated,
        }
        with self._lock:
            self._buffer.append(envelope)
            if self._oldest is None:
                self._oldest = time.monotonic()
            due = len(self._buffer) >= self.max_buffered
        if due and self._flusher is not None:
            self._wake.set()
        return envelope

    def task(self, transformation: str):
        """Context-manager sugar around begin_task/end_task."""
        return _TaskScope(self, transformation)

    def pending(self) -> int:
        with self._lock:
            return len(self._buffer)

    # -- shipping -------------------------------------------------------------

    def flush(self) -> list[str]:
        """Ship all buffered envelopes; returns their job ids.

        On transport failure the unsent envelopes (including the failing one)
        stay buffered and TransportError is raised; a later flush retries.
        """
        with self._lock:
            batch = list(self._buffer)
        job_ids: list[str] = []
        for envelope in batch:
            try:
                job_ids.append(self.transport.send(envelope))
            except TransportError:
                with self._lock:
                    del self._buffer[:len(job_ids)]
                    self._oldest = time.monotonic() if self._buffer else None
                raise
        with self._lock:
            del self._buffer[:len(job_ids)]
            if not self._buffer:
                self._oldest = None
        return job_ids

    def _flush_loop(self) -> None:
        while not self._stopping:
            self._wake.wait(timeout=self.max_age / 4 if self.max_age else 0.25)
            self._wake.clear()
            if self._stopping:
                return
            with self._lock:
                count = len(self._buffer)
                age = time.monotonic() - self._oldest if self._oldest is not None else 0.0
            if count and (count >= self.max_buffered or age >= self.max_age):
                try:
                    self.flush()
                except TransportError:
                    pass  # keep buffering; next wake retries

    def close(self, flush: bool = True) -> list[str]:
        """Stop the background flusher and optionally ship what remains."""
        self._stopping = True
        self._wake.set()
        if self._flusher is not None:
            self._flusher.join(timeout=5.0)
            self._flusher = None
        return self.flush() if flush else []


class _TaskScope:
    def __init__(self, session: WorkflowSession, transformation: str):
        self._session = session
        self._transformation = transformation

    def __enter__(self) -> TaskCapture:
        self._capture = self._session.begin_task(self._transformation)
        return self._capture

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self._session.end_task(self._capture)
