"""HTTP facade wiring the store, ingestion queue, and query engine together.

Read/write separation: POST /provenance only admits to the queue (202 before
any graph write); queries grab a fresh snapshot per request and never touch
writer state. One background worker thread is the store's single writer.

Configuration is a flat key=value file; any key can be overridden with a
PROVSVC_-prefixed environment variable (e.g. PROVSVC_QUEUE_CAPACITY=4096).
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .ingest import (
    IngestionService,
    JobStatus,
    QueueFull,
    SpecInvalid,
    SpecRegistry,
    UnknownJob,
)
from .model import FormatError, IngestEnvelope, WorkflowSpec
from .query import (
    ASCENDING,
    DESCENDING,
    InvalidDirection,
    MalformedPath,
    QueryRequest,
    parse_query_path,
    traverse,
)
from .store import GraphStore

ENV_PREFIX = "PROVSVC_"


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:8080"
    queue_capacity: int = 1024
    worker_max_batch: int = 64
    worker_poll_interval: float = 0.02
    persistence_log: str | None = None
    status_retention: int = 100_000
    shutdown_drain_timeout: float = 5.0

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        return host or "127.0.0.1", int(port)


def load_config(path: str | None = None, environ: dict | None = None) -> ServiceConfig:
    """Flat key=value file ('#' comments allowed), then PROVSVC_* env overrides."""
    values: dict[str, str] = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            for raw in fh:
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"config line is not key=value: {line!r}")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    env = os.environ if environ is None else environ
    cfg = ServiceConfig()
    for key in ("listen", "queue_capacity", "worker_max_batch", "worker_poll_interval",
                "persistence_log", "status_retention", "shutdown_drain_timeout"):
        raw = env.get(ENV_PREFIX + key.upper(), values.get(key))
        if raw is None or raw == "":
            continue
        current = getattr(cfg, key)
        if key == "persistence_log":
            setattr(cfg, key, raw)
        elif isinstance(current, float):
            setattr(cfg, key, float(raw))
        elif isinstance(current, int):
            setattr(cfg, key, int(raw))
        else:
            setattr(cfg, key, raw)
    return cfg


class ProvenanceService:
    """The service core, usable directly in-process or behind the HTTP layer."""

    def __init__(self, config: ServiceConfig | None = None):
        self.config = config or ServiceConfig()
        self.store = GraphStore(log_path=self.config.persistence_log)
        self.registry = SpecRegistry()
        self.ingestion = IngestionService(
            self.store,
            self.registry,
            capacity=self.config.queue_capacity,
            max_batch=self.config.worker_max_batch,
            retention=self.config.status_retention,
        )
        self._worker: threading.Thread | None = None
        self._stop = threading.Event()

    # -- worker lifecycle ----------------------------------------------------

    def start_worker(self) -> None:
        if self._worker is not None:
            return
        self._stop.clear()
        self._worker = threading.Thread(target=self._worker_loop, name="ingest-worker", daemon=True)
        self._worker.start()

    def _worker_loop(self) -> None:
        while not self._stop.is_set():
            if self.ingestion.worker_step() == 0:
                self._stop.wait(self.config.worker_poll_interval)

    def stop(self, drain: bool = True) -> None:
        if drain:
            deadline = time.monotonic() + self.config.shutdown_drain_timeout
            while self.ingestion.queue_depth() > 0 and time.monotonic() < deadline:
                time.sleep(0.01)
        self._stop.set()
        if self._worker is not None:
            self._worker.join(timeout=5.0)
            self._worker = None
        self.store.close()

    # -- request handlers ------------------------------------------------------

    def register_workflow(self, spec: WorkflowSpec) -> tuple[str, int]:
        return self.registry.register(spec)

    def submit(self, env: IngestEnvelope) -> str:
        return self.ingestion.enqueue(env)

    def query(self, path: str, params: dict[str, str]) -> tuple[QueryRequest, dict]:
        req = parse_query_path(path)
        max_depth = None
        if "max_depth" in params:
            try:
                max_depth = int(params["max_depth"])
            except ValueError:
                raise MalformedPath(f"max_depth must be an integer, got {params['max_depth']!r}")
            if max_depth < 1:
                raise MalformedPath("max_depth must be >= 1")
        order_by = None
        if "order_by" in params:
            order = params.get("order", "asc")
            if order not in ("asc", "desc"):
                raise MalformedPath(f"order must be asc or desc, got {order!r}")
            order_by = (params["order_by"], ASCENDING if order == "asc" else DESCENDING)
        req = QueryRequest(
            seed_type=req.seed_type,
            seed_values=req.seed_values,
            direction=req.direction,
            target_types=req.target_types,
            max_depth=max_depth,
            order_by_attribute=order_by,
        )
        include_paths = params.get("include_paths", "true").lower() != "false"
        result = traverse(self.store.snapshot(), req)
        return req, result.to_dict(include_paths=include_paths)

    def health(self) -> dict:
        s = self.store.stats()
        return {"status": "ok", "epoch": s.epoch, "queue_depth": self.ingestion.queue_depth()}


class _Handler(BaseHTTPRequestHandler):
    service: ProvenanceService  # injected by make_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _send(self, status: int, body: dict) -> None:
        data = json.dumps(body, sort_keys=True, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0))
        return self.rfile.read(length) if length else b""

    def do_POST(self):
        path = urlsplit(self.path).path
        if path == "/workflows":
            self._post_workflow()
        elif path == "/provenance":
            self._post_provenance()
        else:
            self._send(404, {"error": "unknown-path"})

    def _post_workflow(self):
        try:
            spec = WorkflowSpec.from_json(self._read_body().decode("utf-8"))
        except (FormatError, UnicodeDecodeError) as exc:
            self._send(400, {"error": "malformed-spec", "detail": str(exc)})
            return
        try:
            name, version = self.service.register_workflow(spec)
        except SpecInvalid as exc:
            self._send(400, {"error": "invalid-spec", **exc.report.to_dict()})
            return
        self._send(200, {"name": name, "version": version})

    def _post_provenance(self):
        try:
            env = IngestEnvelope.from_json(self._read_body().decode("utf-8"))
        except (FormatError, UnicodeDecodeError) as exc:
            self._send(400, {"error": "malformed-envelope", "detail": str(exc)})
            return
        try:
            job_id = self.service.submit(env)
        except QueueFull:
            self._send(429, {"error": "queue-full"})
            return
        self._send(202, {"job_id": job_id})

    def do_GET(self):
        split = urlsplit(self.path)
        path = split.path
        if path == "/health":
            self._send(200, self.service.health())
        elif path.startswith("/jobs/"):
            self._get_job(path[len("/jobs/"):])
        elif path.startswith("/provenance/seeds/"):
            self._get_query(path, split.query)
        else:
            self._send(404, {"error": "unknown-path"})

    def _get_job(self, job_id: str):
        try:
            job = self.service.ingestion.job_status(job_id)
        except UnknownJob:
            self._send(404, {"error": "unknown-job", "job_id": job_id})
            return
        self._send(200, job.to_dict())

    def _get_query(self, path: str, query_string: str):
        params = {k: v[-1] for k, v in parse_qs(query_string, keep_blank_values=True).items()}
        try:
            _, result = self.service.query(path, params)
        except InvalidDirection as exc:
            self._send(400, {"error": "invalid-direction", "detail": str(exc)})
            return
        except MalformedPath as exc:
            self._send(400, {"error": "malformed-path", "detail": str(exc)})
            return
        self._send(200, result)


def make_server(service: ProvenanceService, host: str, port: int) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


class ServiceRuntime:
    """Service plus HTTP server plus worker, for embedding and tests."""

    def __init__(self, config: ServiceConfig | None = None):
        self.service = ProvenanceService(config)
        host, port = self.service.config.host_port()
        self.server = make_server(self.service, host, port)
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self.service.start_worker()
        self._thread = threading.Thread(target=self.server.serve_forever, name="http", daemon=True)
        self._thread.start()

    def shutdown(self, drain: bool = True) -> None:
        self.server.shutdown()
        self.server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None
        self.service.stop(drain=drain)

    def serve_until_interrupt(self) -> None:
        self.service.start_worker()
        try:
            self.server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            self.server.server_close()
            self.service.stop(drain=True)
