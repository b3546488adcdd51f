#!/usr/bin/env python3
"""Read/write isolation experiment: query latency idle vs. under ingest load.

Builds a ~10^4-node graph, measures traversal latency over HTTP while the
writer is idle, then again while a historical load hammers the queue, and
prints both distributions. The contract under test: the during-load median
stays within 5x of the idle median.

Usage: python scripts/cqrs_latency.py [--queries N] [--background-records N]
"""

import argparse
import json
import statistics
import sys
import threading
import time
import urllib.request

from provsvc.fixture import fixture_envelopes, fixture_spec
from provsvc.model import DataItemValue, IngestEnvelope
from provsvc.service import ServiceConfig, ServiceRuntime

Q1 = "/provenance/seeds/WELL/values/12153/direction/forward/targets/PROJECTTRAINING"


def call(base, method, path, body=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=30) as resp:
        return resp.status, json.loads(resp.read())


def background_records(n):
    base = dict(
        workflow_execution_id="bg", workflow_name=fixture_spec().name,
        transformation="ingest-logs",
        started_at="2022-01-01T00:00:00+00:00", ended_at="2022-01-01T00:00:30+00:00")
    return [
        IngestEnvelope(
            task_id=f"bg{i}",
            used=(DataItemValue("WELL", f"bgw{i}"), DataItemValue("os_path", f"bgf{i}.las")),
            generated=(DataItemValue("DATASET", f"bgd{i}"),),
            **base,
        )
        for i in range(n)
    ]


def measure(base, n):
    samples = []
    for _ in range(n):
        t0 = time.perf_counter()
        status, resp = call(base, "GET", Q1)
        samples.append(time.perf_counter() - t0)
        assert status == 200 and resp["targets"]
        time.sleep(0.002)
    return samples


def describe(label, samples):
    ms = sorted(s * 1000 for s in samples)
    print(f"{label:>12}: median {statistics.median(ms):7.2f}ms   "
          f"p90 {ms[int(0.9 * len(ms))]:7.2f}ms   max {ms[-1]:7.2f}ms")
    return statistics.median(ms)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--queries", type=int, default=150)
    parser.add_argument("--background-records", type=int, default=6000)
    args = parser.parse_args()

    runtime = ServiceRuntime(ServiceConfig(listen="127.0.0.1:0", queue_capacity=16384))
    runtime.start()
    base = runtime.base_url
    try:
        call(base, "POST", "/workflows", fixture_spec().to_dict())
        print("building ~10^4-node graph ...")
        ing = runtime.service.ingestion
        for env in fixture_envelopes(100, 48):
            ing.enqueue(env)
        while ing.queue_depth() > 0:
            time.sleep(0.01)
        _, health = call(base, "GET", "/health")
        print(f"graph ready: epoch {health['epoch']}")

        idle = measure(base, args.queries)

        records = background_records(args.background_records)
        done = threading.Event()

        def loader():
            for env in records:
                while True:
                    status, _ = call(base, "POST", "/provenance", env.to_dict())
                    if status == 202:
                        break
                    time.sleep(0.001)
            done.set()

        t = threading.Thread(target=loader)
        t.start()
        time.sleep(0.05)
        loaded = measure(base, args.queries)
        overlapped = not done.is_set()
        t.join()

        idle_median = describe("idle", idle)
        loaded_median = describe("during load", loaded)
        print(f"\nratio: {loaded_median / idle_median:.2f}x (contract: <= 5x)"
              + ("" if overlapped else "   [warning: load finished early]"))
        return 0 if loaded_median <= 5 * idle_median else 1
    finally:
        runtime.shutdown(drain=False)


if __name__ == "__main__":
    sys.exit(main())
