"""Operator CLI: run the service, register specs, load history, issue queries.

Exit codes: 0 success, 1 domain failure (validation or load errors),
2 usage/IO errors. --json switches output to machine-readable JSON.
All commands except serve and gen-fixture talk to a running service over
HTTP (--endpoint, default http://127.0.0.1:8080 or $PROVSVC_ENDPOINT).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import urllib.error
import urllib.request
from urllib.parse import quote, urlencode

from .fixture import write_fixture
from .ingest import HistoricalLoadPlan, IngestJob, JobStatus, QueueFull, run_load
from .model import canonical_json
from .service import ServiceRuntime, load_config

DEFAULT_ENDPOINT = "http://127.0.0.1:8080"

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class ServiceUnreachable(Exception):
    pass


def http_json(method: str, url: str, body: dict | None = None, timeout: float = 30.0) -> tuple[int, dict]:
    data = canonical_json(body).encode("utf-8") if body is not None else None
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        try:
            return exc.code, json.loads(exc.read().decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            return exc.code, {"error": "non-json-response"}
    except (urllib.error.URLError, OSError, TimeoutError) as exc:
        raise ServiceUnreachable(f"{method} {url}: {exc}") from exc


def parse_duration(text: str) -> float:
    """Seconds; accepts plain floats plus 'ms' and 's' suffixes (e.g. 200ms)."""
    text = text.strip()
    if text.endswith("ms"):
        return float(text[:-2]) / 1000.0
    if text.endswith("s"):
        return float(text[:-1])
    return float(text)


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    runtime = ServiceRuntime(config)
    host, port = runtime.server.server_address[:2]
    print(f"listening on {host}:{port}", flush=True)
    runtime.serve_until_interrupt()
    return EXIT_OK


def cmd_register_spec(args: argparse.Namespace) -> int:
    try:
        with open(args.file, "r", encoding="utf-8") as fh:
            body = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read spec file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    status, resp = http_json("POST", args.endpoint + "/workflows", body)
    if args.json:
        print(canonical_json(resp))
    if status == 200:
        if not args.json:
            print(f"registered {resp['name']} version {resp['version']}")
        return EXIT_OK
    if not args.json:
        print(f"spec rejected ({resp.get('error', status)}):", file=sys.stderr)
        for v in resp.get("violations", []):
            print(f"  {v['code']}: {v['detail']}", file=sys.stderr)
    return EXIT_DOMAIN


def cmd_load(args: argparse.Namespace) -> int:
    try:
        plan = HistoricalLoadPlan(
            source=args.file,
            batch_size=args.batch_size,
            interval=parse_duration(args.interval),
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not os.path.exists(args.file):
        print(f"error: no such file: {args.file}", file=sys.stderr)
        return EXIT_USAGE

    def submit(env) -> str:
        status, resp = http_json("POST", args.endpoint + "/provenance", env.to_dict())
        if status == 429:
            raise QueueFull()
        if status != 202:
            raise ServiceUnreachable(f"unexpected status {status}: {resp}")
        return resp["job_id"]

    def fetch_status(job_id: str) -> IngestJob:
        status, resp = http_json("GET", args.endpoint + f"/jobs/{job_id}")
        if status != 200:
            raise ServiceUnreachable(f"job lookup failed with {status}")
        return IngestJob(
            job_id=job_id,
            payload=(),
            enqueued_at=resp.get("enqueued_at", ""),
            status=JobStatus(resp["status"]),
            completed_at=resp.get("completed_at"),
            failure_reason=resp.get("failure_reason"),
        )

    report = run_load(plan, submit, fetch_status, wait_timeout=args.timeout)
    if args.json:
        print(canonical_json(report.to_dict()))
    else:
        print(f"total={report.total} persisted={report.persisted} "
              f"failed={report.failed} submissions={report.submissions}")
        for line_no, reason in report.failures:
            print(f"  line {line_no}: {reason}", file=sys.stderr)
    return EXIT_OK if report.failed == 0 else EXIT_DOMAIN


def build_query_url(endpoint: str, args: argparse.Namespace) -> str:
    path = (
        f"/provenance/seeds/{quote(args.seed_type, safe='')}"
        f"/values/{','.join(quote(v, safe='') for v in args.value)}"
        f"/direction/{args.direction}"
        f"/targets/{','.join(quote(t, safe='') for t in args.target)}"
    )
    params = {}
    if args.max_depth is not None:
        params["max_depth"] = str(args.max_depth)
    order_attr = args.min_attr or args.order_by
    if order_attr:
        params["order_by"] = order_attr
        params["order"] = args.order
    return endpoint + path + ("?" + urlencode(params) if params else "")


def cmd_query(args: argparse.Namespace) -> int:
    status, resp = http_json("GET", build_query_url(args.endpoint, args))
    if status != 200:
        if args.json:
            print(canonical_json(resp))
        else:
            print(f"query failed ({resp.get('error', status)}): {resp.get('detail', '')}",
                  file=sys.stderr)
        return EXIT_DOMAIN
    targets = resp.get("targets", [])
    if args.min_attr and targets:
        targets = targets[:1]  # service already ordered ascending by that attribute
    if args.dot:
        try:
            with open(args.dot, "w", encoding="utf-8") as fh:
                fh.write(paths_to_dot(resp))
        except OSError as exc:
            print(f"error: cannot write DOT file: {exc}", file=sys.stderr)
            return EXIT_USAGE
    if args.json:
        out = dict(resp)
        out["targets"] = targets
        print(canonical_json(out))
        return EXIT_OK
    if not targets:
        print("no targets")
        return EXIT_OK
    for t in targets:
        attrs = " ".join(f"{k}={v}" for k, v in sorted(t.get("attributes", {}).items()))
        line = f"{t['type_label']} {t['identity']}"
        print(f"{line} {attrs}".rstrip())
    return EXIT_OK


def paths_to_dot(result: dict) -> str:
    """Best-effort DOT rendering of the witness paths."""
    lines = ["digraph lineage {"]
    seen: set[tuple[str, str]] = set()
    for path in result.get("paths", []):
        for a, b in zip(path, path[1:]):
            if (a, b) not in seen:
                seen.add((a, b))
                lines.append(f'  "{a}" -> "{b}";')
        if len(path) == 1:
            lines.append(f'  "{path[0]}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_gen_fixture(args: argparse.Namespace) -> int:
    if args.wells < 0 or args.zones < 0:
        print("error: --wells and --zones must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    spec_path, env_path = write_fixture(args.out, args.wells, args.zones, args.seed)
    n_envs = sum(1 for _ in open(env_path, encoding="utf-8"))
    if args.json:
        print(canonical_json({"spec": spec_path, "envelopes": env_path, "records": n_envs}))
    else:
        print(f"wrote {spec_path} and {env_path} ({n_envs} records)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="provsvc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_endpoint(p):
        p.add_argument("--endpoint", default=os.environ.get("PROVSVC_ENDPOINT", DEFAULT_ENDPOINT))
        p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("serve", help="run the service until interrupted")
    p.add_argument("--config", default=None, help="key=value config file")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("register-spec", help="register a workflow spec file")
    p.add_argument("file")
    add_endpoint(p)
    p.set_defaults(func=cmd_register_spec)

    p = sub.add_parser("load", help="load a historical envelope file in timed batches")
    p.add_argument("file")
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--interval", default="0", help="delay between batches, e.g. 200ms or 0.2s")
    p.add_argument("--timeout", type=float, default=120.0)
    add_endpoint(p)
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("query", help="run a lineage traversal query")
    p.add_argument("--seed-type", required=True)
    p.add_argument("--value", action="append", required=True)
    p.add_argument("--direction", choices=["forward", "backward"], required=True)
    p.add_argument("--target", action="append", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--min-attr", help="print only the target minimizing this numeric attribute")
    group.add_argument("--order-by", help="order targets by this numeric attribute")
    p.add_argument("--order", choices=["asc", "desc"], default="asc")
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--dot", help="write witness paths as a DOT graph to this file")
    add_endpoint(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("gen-fixture", help="generate the synthetic lineage fixture")
    p.add_argument("--wells", type=int, default=3)
    p.add_argument("--zones", type=int, default=2)
    p.add_argument("--seed", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gen_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ServiceUnreachable as exc:
        print(f"error: service unreachable: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
