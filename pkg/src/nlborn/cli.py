"""Thin command-line client for the experiment service.

Every subcommand builds a request model, sends it over HTTP and prints the
response.  Without --server the service app runs in-process behind an ASGI
transport, so batch use needs no running server; point --server (or
NLBORN_SERVER) at a deployed instance to share its operator caches.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys

import httpx

from .experiments import ExperimentConfig, PhantomConfig
from .bounds import bounds_report_from_json

SERVER_ENV = "NLBORN_SERVER"
TIMEOUT = httpx.Timeout(None)


class _InProcessClient:
    """One request per call against the service app over an ASGI transport."""

    def __init__(self):
        from .service import create_app
        self._app = create_app()

    def post(self, path: str, json: dict) -> httpx.Response:
        async def go():
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(transport=transport, timeout=TIMEOUT,
                                         base_url="http://nlborn.local") as client:
                return await client.post(path, json=json)
        return asyncio.run(go())

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def _client(server: str | None):
    server = server or os.environ.get(SERVER_ENV)
    if server:
        return httpx.Client(base_url=server, timeout=TIMEOUT)
    return _InProcessClient()


def _load_config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
        if "config" in doc:  # accept a persisted config.json artifact
            doc = doc["config"]
    overrides = {
        "name": args.name,
        "g0": getattr(args, "g0", None),
        "rcond": getattr(args, "rcond", None),
        "ibs_order": getattr(args, "order", None),
        "data_h": getattr(args, "data_h", None),
        "recon_h": getattr(args, "recon_h", None),
        "solver": getattr(args, "solver", None),
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "phantom", None) is not None:
        phantom = doc.get("phantom", {})
        phantom["kind"] = args.phantom
        doc["phantom"] = phantom
    return ExperimentConfig(**doc)


def _post(client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code >= 400:
        detail = resp.json().get("detail", resp.text)
        print(f"error: {detail}", file=sys.stderr)
        sys.exit(1)
    return resp.json()


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="experiment config JSON file")
    parser.add_argument("--name", help="run name (output subdirectory)")
    parser.add_argument("--g0", type=float, help="source strength")
    parser.add_argument("--rcond", type=float, help="singular value cutoff ratio")
    parser.add_argument("--order", type=int, help="inverse series order M")
    parser.add_argument("--data-h", type=float, dest="data_h")
    parser.add_argument("--recon-h", type=float, dest="recon_h")
    parser.add_argument("--solver", choices=["fixed_point", "born"])
    parser.add_argument("--phantom", choices=["three_gaussians", "disk",
                                              "disk_plus_gaussian", "custom"])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nlborn",
                                     description="nonlinear scattering experiment client")
    parser.add_argument("--server", help=f"service URL (default in-process; env {SERVER_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p_grid = sub.add_parser("grid", help="build and persist a disk grid")
    p_grid.add_argument("--target-h", type=float, required=True)
    p_grid.add_argument("--grid-name", default="grid")
    _add_config_flags(p_grid)

    for cmd, desc in [("phantom", "persist the configured phantom"),
                      ("forward", "generate synthetic boundary data"),
                      ("bounds", "print and persist the bound table"),
                      ("sweep", "bound table over a g0 sweep")]:
        p = sub.add_parser(cmd, help=desc)
        _add_config_flags(p)
        if cmd == "bounds":
            p.add_argument("--data", help="run directory with persisted data")
        if cmd == "sweep":
            p.add_argument("--g0-values", type=float, nargs="+", required=True)

    p_rec = sub.add_parser("reconstruct", help="inverse series reconstruction")
    _add_config_flags(p_rec)
    p_rec.add_argument("--data", required=True, help="run directory with persisted data")

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)

    args = parser.parse_args(argv)

    if args.command == "serve":
        import uvicorn
        uvicorn.run("nlborn.service:app", host=args.host, port=args.port)
        return 0

    with _client(args.server) as client:
        if args.command == "grid":
            payload = {"target_h": args.target_h, "name": args.grid_name}
            if args.config or args.name:
                payload["config"] = _load_config(args).model_dump()
            doc = _post(client, "/grid", payload)
            print(f"grid {doc['grid_hash']} with {doc['n_nodes']} nodes -> {doc['path']}")
            return 0

        cfg = _load_config(args)
        if args.command == "phantom":
            doc = _post(client, "/phantom", {"config": cfg.model_dump()})
            contrast = "n/a" if doc["contrast"] is None else f"{doc['contrast']:.3f}"
            print(f"phantom {doc['kind']} contrast={contrast} sup={doc['sup_norm']:.4g} "
                  f"-> {doc['path']}")
            return 0
        if args.command == "forward":
            doc = _post(client, "/forward", {"config": cfg.model_dump()})
            print(f"data -> {doc['data_path']}")
            for idx, msg in doc["failures"]:
                print(f"  source {idx} failed: {msg}", file=sys.stderr)
            print(bounds_report_from_json(doc["bounds"]).table())
            return doc["status"]
        if args.command == "reconstruct":
            doc = _post(client, "/reconstruct",
                        {"config": cfg.model_dump(), "data_dir": args.data})
            norms = ", ".join(f"{v:.3e}" for v in doc["correction_norms"])
            print(f"reconstruction -> {doc['run_dir']}")
            print(f"correction sup-norms: {norms}")
            print(f"distance to projection: {doc['projection_distance']:.4f}")
            if doc["diverged_at"] is not None:
                print(f"divergence guard tripped at order {doc['diverged_at']}",
                      file=sys.stderr)
            return doc["status"]
        if args.command == "bounds":
            doc = _post(client, "/bounds",
                        {"config": cfg.model_dump(), "data_dir": args.data})
            print(bounds_report_from_json(doc["report"]).table())
            if doc["data_check"]:
                chk = doc["data_check"]
                verdict = "holds" if chk["hypothesis_ok"] else "FAILS"
                print(f"|K1^+ phi| = {chk['k1phi_norm']:.4e} vs r = {chk['r']:.4e} "
                      f"-> small-data hypothesis {verdict}")
            return doc["status"]
        if args.command == "sweep":
            doc = _post(client, "/sweep",
                        {"config": cfg.model_dump(), "g0_values": args.g0_values})
            print("g0          nu0           |K1^+|        C             r")
            for row in doc["rows"]:
                print(f"{row['g0']:<10.4g}  {row['nu0']:<12.4e}  {row['k1_norm']:<12.4e}  "
                      f"{row['C']:<12.4e}  {row['r']:<12.4e}")
            return doc["status"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
