"""Command-line client of the torusflow service.

Subcommands sweep, diagnostics and single submit work through the HTTP
API.  By default the app is mounted in process (no server needed); pass
--url to talk to a running `torusflow serve` instead.  Outputs are
materialized locally from the response payloads: sweep.csv,
monotonicity.txt, diagnostics.txt and binary snapshots.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import fields as dc_fields

import httpx

from .harness import ExperimentConfig


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torusflow", description=__doc__)
    p.add_argument("--url", default=os.environ.get("TORUSFLOW_URL", ""),
                   help="service base URL; empty runs the app in process")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, help="master seed override")
        sp.add_argument("--out", help="output directory override")
        sp.add_argument("--eps", help="comma-separated epsilon list override")
        sp.add_argument("--system", choices=["se", "e", "both"], help="system selector")
        sp.add_argument("--replicas", type=int, help="replica count override")

    sp = sub.add_parser("sweep", help="run the epsilon-sweep convergence study")
    common(sp)
    sp.add_argument("--per-replica", action="store_true", help="also write per-replica rows")

    sp = sub.add_parser("diagnostics", help="run the closed-form diagnostic suite")
    common(sp)

    sp = sub.add_parser("single", help="one replica with snapshot dumps")
    common(sp)
    sp.add_argument("--eps-value", type=float, default=0.2, help="epsilon of the run")
    sp.add_argument("--replica", type=int, default=0, help="replica id (seed stream)")

    sp = sub.add_parser("serve", help="start the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    if args.eps:
        cfg.eps_list = tuple(float(x) for x in args.eps.split(",") if x.strip())
    if args.system:
        cfg.system = args.system
    if args.replicas is not None:
        cfg.replicas = args.replicas
    return cfg


def config_payload(cfg: ExperimentConfig) -> dict:
    d = {f.name: getattr(cfg, f.name) for f in dc_fields(cfg)}
    d["eps_list"] = list(d["eps_list"])
    return d


def make_client(url: str) -> httpx.Client:
    if url:
        return httpx.Client(base_url=url, timeout=None)
    # embedded mode: mount the app in process behind the same HTTP surface
    from starlette.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def poll_job(client: httpx.Client, job_id: str, quiet: bool = False) -> dict:
    while True:
        r = client.get(f"/jobs/{job_id}")
        r.raise_for_status()
        status = r.json()
        if status["state"] in ("done", "failed"):
            if not quiet:
                sys.stderr.write("\n")
            return status
        if not quiet:
            sys.stderr.write(".")
            sys.stderr.flush()
        time.sleep(0.5)


def _write(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)
    print(f"wrote {path}")


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    with make_client(args.url) as client:
        r = client.post(
            "/sweep",
            json={
                "config": config_payload(cfg),
                "per_replica": bool(args.per_replica),
                "write_files": False,
            },
        )
        r.raise_for_status()
        status = poll_job(client, r.json()["job_id"])
    if status["state"] == "failed":
        print(f"sweep failed: {status['error']}", file=sys.stderr)
        return 1
    sweep = status["sweep"]
    _write(os.path.join(cfg.out_dir, "sweep.csv"), sweep["csv_text"])
    mono_lines = []
    for m in sweep["monotonicity"]:
        means = " ".join(f"{x:.6g}" for x in m["means"])
        mono_lines.append(
            f"{m['metric']} inversions={m['inversions']} "
            f"max_violation_stderr={m['max_violation_stderr']:.3g} means=[{means}]"
        )
    _write(os.path.join(cfg.out_dir, "monotonicity.txt"), "\n".join(mono_lines) + "\n")
    if args.per_replica and sweep.get("replica_csv_text"):
        _write(os.path.join(cfg.out_dir, "sweep_replicas.csv"), sweep["replica_csv_text"])
    for line in mono_lines:
        print(line)
    if sweep["n_failed"]:
        print(f"warning: {sweep['n_failed']} replica(s) failed", file=sys.stderr)
    return 0


def cmd_diagnostics(args) -> int:
    cfg = load_config(args)
    with make_client(args.url) as client:
        r = client.post(
            "/diagnostics", json={"config": config_payload(cfg), "write_files": False}
        )
        r.raise_for_status()
        resp = r.json()
    _write(os.path.join(cfg.out_dir, "diagnostics.txt"), resp["text"])
    print(resp["text"], end="")
    return 0 if resp["all_pass"] else 2


def cmd_single(args) -> int:
    cfg = load_config(args)
    with make_client(args.url) as client:
        r = client.post(
            "/single",
            json={
                "config": config_payload(cfg),
                "eps": args.eps_value,
                "replica": args.replica,
            },
        )
        r.raise_for_status()
        status = poll_job(client, r.json()["job_id"])
    if status["state"] == "failed":
        print(f"single run failed: {status['error']}", file=sys.stderr)
        return 1
    for f in status["single"]["files"]:
        print(f"wrote {f}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "sweep": cmd_sweep,
        "diagnostics": cmd_diagnostics,
        "single": cmd_single,
        "serve": cmd_serve,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
