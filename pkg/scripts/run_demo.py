#!/usr/bin/env python3
"""End-to-end demo: generate a fixture, serve, load it, answer the three
canonical lineage questions.

Usage: python scripts/run_demo.py [--wells N] [--zones M]
"""

import argparse
import json
import sys
import tempfile
import urllib.request

from provsvc.fixture import write_fixture
from provsvc.service import ServiceConfig, ServiceRuntime

QUESTIONS = [
    ("Which trained models depend on production data of well 12153?",
     "/provenance/seeds/WELL/values/12153/direction/forward/targets/PROJECTTRAINING"),
    ("Which trained models depend on log file file_158.las?",
     "/provenance/seeds/os_path/values/file_158.las/direction/forward/targets/PROJECTTRAINING"),
    ("Best model for zone 278 (lowest mse)?",
     "/provenance/seeds/ZONE/values/278/direction/forward/targets/PROJECTTRAINING"
     "?order_by=mse&order=asc"),
]


def call(base, method, path, body=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=30) as resp:
        return json.loads(resp.read())


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--wells", type=int, default=5)
    parser.add_argument("--zones", type=int, default=3)
    args = parser.parse_args()

    workdir = tempfile.mkdtemp(prefix="provsvc-demo-")
    spec_path, env_path = write_fixture(workdir, args.wells, args.zones)
    print(f"fixture: {spec_path}, {env_path}")

    runtime = ServiceRuntime(ServiceConfig(listen="127.0.0.1:0"))
    runtime.start()
    base = runtime.base_url
    print(f"service: {base}")
    try:
        spec = json.load(open(spec_path, encoding="utf-8"))
        print("registered:", call(base, "POST", "/workflows", spec))

        job_ids = [call(base, "POST", "/provenance", json.loads(line))["job_id"]
                   for line in open(env_path, encoding="utf-8")]
        import time
        for jid in job_ids:
            while call(base, "GET", f"/jobs/{jid}")["status"] not in ("persisted", "failed"):
                time.sleep(0.005)
        print("ingested:", len(job_ids), "records ->", call(base, "GET", "/health"))

        for question, path in QUESTIONS:
            result = call(base, "GET", path)
            answers = [f"{t['identity']} (mse={t['attributes'].get('mse', '?')})"
                       for t in result["targets"]]
            print(f"\n{question}")
            for a in answers:
                print(f"  {a}")
    finally:
        runtime.shutdown()
    return 0


if __name__ == "__main__":
    sys.exit(main())
