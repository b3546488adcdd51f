import json
import signal
import socket
import subprocess
import sys
import time
import urllib.error
import urllib.request

import pytest


def http_json(method: str, url: str, body=None, timeout=10.0):
    data = json.dumps(body).encode("utf-8") if body is not None else None
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read().decode("utf-8"))


@pytest.fixture(scope="session")
def service_url(tmp_path_factory):
    """A real provsvc server in a subprocess, reached only over HTTP."""
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    cfg = tmp_path_factory.mktemp("svc") / "svc.conf"
    cfg.write_text(f"listen=127.0.0.1:{port}\nworker_poll_interval=0.005\n", encoding="utf-8")
    proc = subprocess.Popen(
        [sys.executable, "-m", "provsvc", "serve", "--config", str(cfg)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE)
    url = f"http://127.0.0.1:{port}"
    deadline = time.monotonic() + 20
    last_err = None
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            out, err = proc.communicate()
            raise RuntimeError(f"service exited early: {out!r} {err!r}")
        try:
            status, _ = http_json("GET", url + "/health", timeout=1)
            if status == 200:
                break
        except OSError as exc:
            last_err = exc
            time.sleep(0.05)
    else:
        proc.kill()
        raise RuntimeError(f"service never became healthy: {last_err}")
    yield url
    proc.send_signal(signal.SIGINT)
    try:
        proc.wait(timeout=15)
    except subprocess.TimeoutExpired:
        proc.kill()


TOY_PIPELINE_SPEC = {
    "name": "toy_pipeline",
    "transformations": [
        {
            "name": "prepare",
            "inputs": [{"type_label": "RAW", "attributes": [
                {"name": "id", "value_kind": "text", "identifying": True}]}],
            "outputs": [{"type_label": "CLEAN", "attributes": [
                {"name": "id", "value_kind": "text", "identifying": True}]}],
        },
        {
            "name": "train",
            "inputs": [{"type_label": "CLEAN", "attributes": [
                {"name": "id", "value_kind": "text", "identifying": True}]}],
            "outputs": [{"type_label": "MODEL", "attributes": [
                {"name": "id", "value_kind": "text", "identifying": True}]}],
        },
        {
            "name": "evaluate",
            "inputs": [{"type_label": "MODEL", "attributes": [
                {"name": "id", "value_kind": "text", "identifying": True}]}],
            "outputs": [{"type_label": "REPORT", "attributes": [
                {"name": "id", "value_kind": "text", "identifying": True}]}],
        },
    ],
    "dataflow": [
        {"producer_transformation": "prepare", "type_label": "CLEAN",
         "consumer_transformation": "train"},
        {"producer_transformation": "train", "type_label": "MODEL",
         "consumer_transformation": "evaluate"},
    ],
}

REQUEST_SERVICE_SPEC = {
    "name": "request_service",
    "transformations": [
        {
            "name": "handle-request",
            "inputs": [{"type_label": "REQUEST", "attributes": [
                {"name": "id", "value_kind": "text", "identifying": True}]}],
            "outputs": [{"type_label": "RESPONSE", "attributes": [
                {"name": "id", "value_kind": "text", "identifying": True}]}],
        },
    ],
    "dataflow": [],
}


@pytest.fixture(scope="session")
def registered_specs(service_url):
    for spec in (TOY_PIPELINE_SPEC, REQUEST_SERVICE_SPEC):
        status, resp = http_json("POST", service_url + "/workflows", spec)
        assert status == 200, resp
    return service_url


def wait_persisted(service_url: str, job_ids, timeout=15.0):
    deadline = time.monotonic() + timeout
    for jid in job_ids:
        while True:
            status, job = http_json("GET", f"{service_url}/jobs/{jid}")
            assert status == 200, job
            if job["status"] in ("persisted", "failed"):
                assert job["status"] == "persisted", job
                break
            if time.monotonic() > deadline:
                raise AssertionError(f"job {jid} stuck in {job['status']}")
            time.sleep(0.005)


class CountingTransport:
    """Wraps a transport, counting outbound requests (zero-network assertions)."""

    def __init__(self, inner):
        self.inner = inner
        self.sent = 0

    def send(self, envelope: dict) -> str:
        self.sent += 1
        return self.inner.send(envelope)


class RecordingTransport:
    """Keeps envelopes locally and fabricates job ids; no network at all."""

    def __init__(self):
        self.envelopes: list[dict] = []

    def send(self, envelope: dict) -> str:
        self.envelopes.append(envelope)
        return f"job-{len(self.envelopes)}"


class FailingTransport:
    """Fails after an optional number of successful sends."""

    def __init__(self, succeed_first: int = 0):
        self.succeed_first = succeed_first
        self.sent: list[dict] = []

    def send(self, envelope: dict) -> str:
        from provsvc_client import TransportError

        if len(self.sent) < self.succeed_first:
            self.sent.append(envelope)
            return f"job-{len(self.sent)}"
        raise TransportError("transport down")
