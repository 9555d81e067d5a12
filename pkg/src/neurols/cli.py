"""Command-line client for the workbench service.

Every subcommand talks to the HTTP API: against ``--server URL`` (or
``NEUROLS_SERVER``) when given, otherwise against an in-process instance
of the app mounted over an ASGI transport, so batch runs need no separate
server.  Remote mode assumes the server shares the client's filesystem
(artifacts are written server-side under ``--out``).
"""

from __future__ import annotations

import asyncio
import json
import time
from pathlib import Path
from typing import Optional

import click
import httpx


class ServiceClient:
    def __init__(self, server: Optional[str]):
        if server:
            self._client = httpx.AsyncClient(base_url=server, timeout=120.0)
        else:
            from .service import create_app
            self._client = httpx.AsyncClient(
                transport=httpx.ASGITransport(app=create_app()),
                base_url="http://neurols.internal", timeout=120.0)

    async def request(self, method: str, path: str, **kwargs) -> dict:
        resp = await self._client.request(method, path, **kwargs)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except json.JSONDecodeError:
                detail = resp.text
            raise click.ClickException(f"{path} failed ({resp.status_code}): {detail}")
        return resp.json()

    async def close(self) -> None:
        await self._client.aclose()


def _run(server: Optional[str], coro_fn) -> None:
    async def body():
        client = ServiceClient(server)
        try:
            await coro_fn(client)
        finally:
            await client.close()

    asyncio.run(body())


@click.group()
@click.option("--server", envvar="NEUROLS_SERVER", default=None,
              help="Workbench service URL; omit to run in-process.")
@click.pass_context
def main(ctx, server):
    """Local-search policy workbench."""
    ctx.obj = server


@main.command()
@click.argument("kind", type=click.Choice(["nk", "qubo"]))
@click.option("--n", type=int, required=True, help="Problem dimension.")
@click.option("--k", type=int, default=None, help="NK dependencies per variable.")
@click.option("--m-frac", type=float, default=None,
              help="QUBO sub-function density (fraction of n(n-1)/2).")
@click.option("--m", type=int, default=None, help="QUBO sub-function count.")
@click.option("--family", type=click.Choice(["uni", "imp", "ic"]), default=None,
              help="QUBO importance family preset.")
@click.option("--d", type=float, default=None, help="Importance degree.")
@click.option("--alpha", type=float, default=None, help="Importance co-appearance.")
@click.option("--important-frac", type=float, default=0.2)
@click.option("--count", type=int, required=True, help="Number of instances.")
@click.option("--restarts", type=int, default=1, help="Start points per instance.")
@click.option("--role", default="test")
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, help="Output directory.")
@click.pass_obj
def generate(server, kind, n, k, m_frac, m, family, d, alpha, important_frac,
             count, restarts, role, seed, out):
    """Generate an instance set plus its manifest."""
    payload = {"kind": kind, "n": n, "count": count, "seed": seed, "out_dir": out,
               "role": role, "restarts": restarts, "k": k, "m_frac": m_frac,
               "m": m, "family": family, "d": d, "alpha": alpha,
               "important_frac": important_frac}

    async def go(client):
        doc = await client.request("POST", "/instances/generate", json=payload)
        click.echo(f"wrote {doc['count']} instances")
        click.echo(f"manifest: {doc['manifest_path']}")
        click.echo(f"provenance: {doc['manifest_hash']}")

    _run(server, go)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Training config JSON (TrainConfig fields).")
@click.option("--out", required=True, help="Output directory for artifacts.")
@click.option("--seed", type=int, default=None, help="Override master_seed.")
@click.option("--workers", type=int, default=None, help="Override worker count.")
@click.option("--obs", type=click.Choice(["o1", "o2", "o3", "o4"]), default=None,
              help="Override observation kind.")
@click.option("--poll-interval", type=float, default=0.5, show_default=True)
@click.pass_obj
def train(server, config_path, out, seed, workers, obs, poll_interval):
    """Run a training experiment; streams one progress line per generation."""
    doc = json.loads(Path(config_path).read_text())
    if seed is not None:
        doc["master_seed"] = seed
    if workers is not None:
        doc["workers"] = workers
    if obs is not None:
        doc["observation_kind"] = obs
    doc["out_dir"] = out

    async def go(client):
        created = await client.request("POST", "/train/jobs", json=doc)
        job_id = created["job_id"]
        click.echo(f"job {job_id} submitted")
        cursor = 0
        while True:
            status = await client.request("GET", f"/train/jobs/{job_id}",
                                          params={"since": cursor})
            for line in status["log_lines"]:
                click.echo(line)
            cursor = status["log_cursor"]
            if status["state"] == "done":
                result = status["result"]
                click.echo(f"champion: {result['champion_path']}")
                click.echo(f"report:   {result['report_csv_path']}")
                click.echo(f"champion valid {result['champion_valid_score']:.6f} "
                           f"vs bhc {result['bhc_valid_reference']:.6f}")
                return
            if status["state"] == "failed":
                raise click.ClickException(status["error"] or "training failed")
            await asyncio.sleep(poll_interval)

    _run(server, go)


@main.command()
@click.option("--manifest", required=True, help="Instance-set manifest path.")
@click.option("--policy", "policies", multiple=True,
              help="Policy file; repeatable.")
@click.option("--strategy", "strategies", multiple=True,
              type=click.Choice(["neuro", "bhc", "fhc", "es"]),
              help="Restrict which strategies run (default: all).")
@click.option("--lambda", "es_lambda", type=int, default=None,
              help="Lambda for the (1,lambda)-ES baseline.")
@click.option("--horizon", type=int, default=None, help="Defaults to 2n.")
@click.option("--seed", type=int, default=None,
              help="Override the manifest's master seed for trajectories.")
@click.option("--out", required=True)
@click.pass_obj
def evaluate(server, manifest, policies, strategies, es_lambda, horizon, seed, out):
    """Head-to-head evaluation on a shared test set."""
    chosen = set(strategies) if strategies else None
    baselines = []
    for name in ("bhc", "fhc", "es"):
        if chosen is None or name in chosen:
            if name == "es" and es_lambda is None:
                if chosen is not None and "es" in chosen:
                    raise click.ClickException("--strategy es requires --lambda")
                continue
            baselines.append(name)
    policy_paths = list(policies) if (chosen is None or "neuro" in chosen) else []
    payload = {"manifest_path": manifest, "policy_paths": policy_paths,
               "baselines": baselines, "es_lambda": es_lambda,
               "horizon": horizon, "master_seed": seed, "out_dir": out}

    async def go(client):
        doc = await client.request("POST", "/evaluate", json=payload)
        click.echo(doc["table"])
        click.echo(f"report: {doc['report_csv_path']}")
        click.echo(f"scores: {doc['scores_csv_path']}")

    _run(server, go)


@main.command()
@click.option("--policy", required=True, help="Policy file to analyze.")
@click.option("--manifest", required=True, help="Instance-set manifest path.")
@click.option("--trajectories", type=int, default=10, show_default=True)
@click.option("--horizon", type=int, default=None, help="Defaults to 2n.")
@click.option("--out", required=True)
@click.pass_obj
def analyze(server, policy, manifest, trajectories, horizon, out):
    """Export move-rank traces and the network response curve."""
    payload = {"policy_path": policy, "manifest_path": manifest,
               "trajectories": trajectories, "horizon": horizon, "out_dir": out}

    async def go(client):
        doc = await client.request("POST", "/analyze", json=payload)
        for p in doc["trace_csv_paths"]:
            click.echo(f"trace: {p}")
        click.echo(f"response curve: {doc['response_csv_path']} "
                   f"({doc['points']} points)")

    _run(server, go)


@main.command("calibrate-lambda")
@click.option("--n", type=int, required=True)
@click.option("--k", type=int, required=True)
@click.option("--grid", default=None, help="Comma-separated lambda values.")
@click.option("--q", type=int, default=10, show_default=True)
@click.option("--r", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0)
@click.pass_obj
def calibrate(server, n, k, grid, q, r, seed):
    """Grid-search lambda for the (1,lambda)-ES baseline."""
    grid_list = [int(v) for v in grid.split(",")] if grid else None
    payload = {"n": n, "k": k, "grid": grid_list, "q": q, "r": r,
               "master_seed": seed}

    async def go(client):
        doc = await client.request("POST", "/calibrate-lambda", json=payload)
        for lam in sorted(doc["scores"], key=int):
            click.echo(f"lambda {lam}: {doc['scores'][lam]:.6f}")
        click.echo(f"best lambda: {doc['best_lambda']}")

    _run(server, go)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the workbench service."""
    import uvicorn

    uvicorn.run("neurols.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
