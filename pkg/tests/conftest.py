import json
import time
import urllib.error
import urllib.request

import pytest

from provsvc.fixture import fixture_spec
from provsvc.service import ServiceConfig, ServiceRuntime


@pytest.fixture
def spec():
    return fixture_spec()


class HttpClient:
    def __init__(self, base_url: str):
        self.base_url = base_url

    def request(self, method: str, path: str, body=None, timeout=10.0):
        data = json.dumps(body).encode("utf-8") if body is not None else None
        req = urllib.request.Request(self.base_url + path, data=data, method=method,
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return resp.status, json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            return exc.code, json.loads(exc.read().decode("utf-8"))

    def get(self, path):
        return self.request("GET", path)

    def post(self, path, body):
        return self.request("POST", path, body)

    def post_raw(self, path, raw: bytes, timeout=10.0):
        req = urllib.request.Request(self.base_url + path, data=raw, method="POST",
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return resp.status, json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            return exc.code, json.loads(exc.read().decode("utf-8"))

    def wait_job(self, job_id: str, timeout=10.0) -> dict:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            status, job = self.get(f"/jobs/{job_id}")
            assert status == 200, job
            if job["status"] in ("persisted", "failed"):
                return job
            time.sleep(0.005)
        raise AssertionError(f"job {job_id} did not reach a terminal status")


def start_runtime(**kwargs) -> ServiceRuntime:
    kwargs.setdefault("listen", "127.0.0.1:0")
    kwargs.setdefault("worker_poll_interval", 0.005)
    rt = ServiceRuntime(ServiceConfig(**kwargs))
    rt.start()
    return rt


@pytest.fixture
def runtime():
    rt = start_runtime()
    yield rt
    rt.shutdown(drain=False)


@pytest.fixture
def http(runtime):
    return HttpClient(runtime.base_url)
