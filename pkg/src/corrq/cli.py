"""Command-line client for the corrq service.

Subcommands build service requests, post them (in-process by default, or to a
remote instance via --server), and persist the returned artifacts.  Exit codes:
0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import json
import os
import sys

import click
import httpx

CONFIG_EXIT = 2
RUNTIME_EXIT = 1


def _load_table(path: str) -> dict:
    if not os.path.exists(path):
        raise click.ClickException(f"config file not found: {path}")
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        if path.endswith(".json"):
            return json.loads(blob.decode("utf-8"))
        try:
            import tomllib as toml_mod
        except ModuleNotFoundError:
            import tomli as toml_mod
        return toml_mod.loads(blob.decode("utf-8"))
    except Exception as exc:
        raise click.ClickException(f"cannot parse {path}: {exc}") from exc


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    import warnings
    with warnings.catch_warnings():
        # starlette warns about its own httpx-based test client on import
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import app
    return TestClient(app)


def _format_detail(detail) -> str:
    if isinstance(detail, list):  # pydantic validation errors
        parts = []
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", []) if p != "body")
            parts.append(f"{loc}: {item.get('msg', 'invalid')}")
        return "; ".join(parts)
    return str(detail)


def _post(client, path: str, payload: dict, verbose: bool) -> dict:
    if verbose:
        click.echo(f"POST {path}", err=True)
    try:
        resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        click.echo(f"service unreachable: {exc}", err=True)
        sys.exit(RUNTIME_EXIT)
    if resp.status_code in (400, 422):
        click.echo(f"config error: {_format_detail(resp.json().get('detail'))}", err=True)
        sys.exit(CONFIG_EXIT)
    if resp.status_code != 200:
        click.echo(f"runtime error: HTTP {resp.status_code}: {resp.text[:500]}", err=True)
        sys.exit(RUNTIME_EXIT)
    return resp.json()


def _ensure_out(out: str) -> str:
    os.makedirs(out, exist_ok=True)
    return out


def _apply_seed_override(table: dict, seed: int | None) -> dict:
    table.setdefault("seed", {})
    if seed is not None:
        table["seed"]["master"] = seed
    return table


@click.group()
@click.option("--server", default=None, envvar="CORRQ_SERVER",
              help="Base URL of a running corrq service; defaults to in-process.")
@click.option("--verbose", is_flag=True, default=False)
@click.pass_context
def main(ctx, server, verbose):
    """Simulation lab for queues with service-correlated patience."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server
    ctx.obj["verbose"] = verbose


@main.command()
@click.option("--config", "config_path", required=True, type=str)
@click.option("--seed", type=int, default=None, envvar="CORRQ_SEED",
              help="Override the config's master seed (falls back to CORRQ_SEED).")
@click.option("--out", default=".", type=str, help="Output directory (created if absent).")
@click.pass_context
def simulate(ctx, config_path, seed, out):
    """Run a single trace and write trace.csv plus provenance metadata."""
    table = _apply_seed_override(_load_table(config_path), seed)
    payload = {
        "params": table.get("model", {}),
        "init": table.get("init", {"variant": "empty"}),
        "horizon": table.get("run", {}).get("horizon"),
        "record_dt": table.get("run", {}).get("record_dt", 0.1),
        "seed": table.get("seed", {}),
        "check_invariants": bool(table.get("run", {}).get("check_invariants", False)),
    }
    client = _client(ctx.obj["server"])
    data = _post(client, "/simulate", payload, ctx.obj["verbose"])
    out = _ensure_out(out)
    trace_path = os.path.join(out, "trace.csv")
    with open(trace_path, "w", encoding="utf-8") as fh:
        fh.write(data["csv"])
    meta = {k: data[k] for k in ("arrivals", "served", "abandoned", "initial_total",
                                 "final_total", "violations", "seed")}
    with open(os.path.join(out, "trace.meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    click.echo(trace_path)


@main.command()
@click.option("--plan", "plan_path", required=True, type=str)
@click.option("--seed", type=int, default=None, envvar="CORRQ_SEED")
@click.option("--out", default=".", type=str)
@click.option("--workers", type=int, default=1)
@click.pass_context
def experiment(ctx, plan_path, seed, out, workers):
    """Run a named harness experiment from a TOML/JSON plan file."""
    table = _apply_seed_override(_load_table(plan_path), seed)
    payload = {"plan": table, "workers": workers}
    client = _client(ctx.obj["server"])
    data = _post(client, "/experiment", payload, ctx.obj["verbose"])
    out = _ensure_out(out)
    kind = data["summary"]["kind"]
    summary_path = os.path.join(out, f"{kind}_summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(data["summary"], fh, indent=2)
        fh.write("\n")
    for name, payload_csv in data["raw_csv"].items():
        with open(os.path.join(out, name), "w", encoding="utf-8") as fh:
            fh.write(payload_csv)
    click.echo(summary_path)


@main.command()
@click.option("--xstar", "what", flag_value="xstar")
@click.option("--hw-table", "what", flag_value="hw_table")
@click.option("--lof-table", "what", flag_value="lof_table")
@click.option("--beta", type=float, required=True)
@click.option("--theta", type=float, default=1.0)
@click.option("--x0", type=float, default=0.0)
@click.option("--t-max", type=float, default=10.0)
@click.option("--points", type=int, default=201)
@click.option("--out", default=".", type=str)
@click.pass_context
def limits(ctx, what, beta, theta, x0, t_max, points, out):
    """Tabulate the limit models: fluid fixed point, stationary law, fluid path."""
    if what is None:
        click.echo("choose one of --xstar, --hw-table, --lof-table", err=True)
        sys.exit(CONFIG_EXIT)
    payload = {"what": what, "beta": beta, "theta": theta, "x0": x0,
               "t_max": t_max, "points": points}
    client = _client(ctx.obj["server"])
    data = _post(client, "/limits", payload, ctx.obj["verbose"])
    if what == "xstar":
        click.echo(f"{data['value']:.12g}")
        return
    out = _ensure_out(out)
    path = os.path.join(out, f"{what}.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(data["csv"])
    click.echo(path)


@main.command()
@click.option("--config", "config_path", required=True, type=str)
@click.option("--seed", type=int, default=None, envvar="CORRQ_SEED")
@click.option("--out", default=".", type=str)
@click.pass_context
def couple(ctx, config_path, seed, out):
    """Run a coupling check and write its JSON report."""
    table = _apply_seed_override(_load_table(config_path), seed)
    client = _client(ctx.obj["server"])
    data = _post(client, "/couple", table, ctx.obj["verbose"])
    report = data["report"]
    out = _ensure_out(out)
    path = os.path.join(out, f"couple_{report['kind']}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    click.echo(f"{path} violations={report['violations']}")


if __name__ == "__main__":
    main()
