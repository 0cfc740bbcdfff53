"""Command-line client.

Every command builds the same request model the HTTP service accepts. By
default the request is handled in-process; with ``--server URL`` it is sent
to a running ``graphfi serve`` instead (paths are then resolved server-side).

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
from pydantic import BaseModel, ValidationError

from . import schemas as S
from . import workflows

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class RuntimeFailure(click.ClickException):
    exit_code = 1


class ConfigFailure(click.ClickException):
    exit_code = 2


def _setup_logging():
    level = os.environ.get("GRAPHFI_LOG_LEVEL", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _dispatch(server: str | None, route: str, req: BaseModel, local, response_model):
    if server is None:
        try:
            return local(req)
        except click.ClickException:
            raise
        except Exception as e:  # noqa: BLE001 - every library failure maps to exit 1
            raise RuntimeFailure(f"{type(e).__name__}: {e}") from e
    import httpx

    try:
        r = httpx.post(server.rstrip("/") + route, json=req.model_dump(mode="json"), timeout=None)
    except httpx.HTTPError as e:
        raise RuntimeFailure(f"cannot reach {server}: {e}") from e
    if r.status_code >= 400:
        raise RuntimeFailure(f"server error {r.status_code}: {r.text}")
    return response_model.model_validate(r.json())


def _build(model, **kw):
    try:
        return model(**kw)
    except ValidationError as e:
        msgs = "; ".join(err["msg"].removeprefix("Value error, ") for err in e.errors())
        raise click.UsageError(msgs) from e


def _expand_inputs(paths) -> list[str]:
    out = []
    for p in paths:
        p = Path(p)
        out += [str(x) for x in sorted(p.glob("*.gfiw"))] if p.is_dir() else [str(p)]
    return out


server_opt = click.option("--server", default=None, metavar="URL", help="Send the request to a graphfi service.")
model_opts = [
    click.option("--graph", required=True, type=click.Path(), help="Graph document (.gfi)."),
    click.option("--weights", required=True, type=click.Path(), help="Weights bundle (.gfiw)."),
]


def with_model(f):
    for opt in reversed(model_opts):
        f = opt(f)
    return f


@click.group()
@click.version_option(package_name="graphfi")
def main():
    """Fault injection campaigns on tensor dataflow graphs."""
    _setup_logging()


@main.command()
@with_model
@click.option("--input", "inputs", multiple=True, required=True, help="Feed bundle; repeatable, or a directory.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@server_opt
def golden(graph, weights, inputs, as_json, server):
    """Fault-free run: print outputs and a trace summary."""
    req = _build(S.GoldenRequest, graph=graph, weights=weights, inputs=_expand_inputs(inputs))
    resp = _dispatch(server, "/golden", req, workflows.golden, S.GoldenResponse)
    if as_json:
        click.echo(resp.model_dump_json(indent=1))
        return
    for r in resp.results:
        lab = f" label={r.labels[0] if len(r.labels) == 1 else r.labels}" if r.labels else ""
        click.echo(f"{r.input}:{lab} outputs={json.dumps(r.outputs)} "
                   f"nodes={r.trace.executed_nodes} instances={sum(r.trace.injectable_instances.values())}")


@main.command()
@with_model
@click.option("--input", default=None, help="Feed bundle used to count dynamic instances.")
@click.option("--json", "as_json", is_flag=True)
@server_opt
def inspect(graph, weights, input, as_json, server):
    """List nodes, static shapes and the injectable instance profile."""
    req = _build(S.InspectRequest, graph=graph, weights=weights, input=input)
    resp = _dispatch(server, "/inspect", req, workflows.inspect, S.InspectResponse)
    if as_json:
        click.echo(resp.model_dump_json(indent=1))
        return
    click.echo(f"graph {resp.name}: {len(resp.nodes)} nodes, outputs {resp.outputs}")
    for n in resp.nodes:
        flag = "*" if n.injectable else " "
        click.echo(f" {flag} {n.id:<16} {n.op:<12} {str(n.shape):<16} <- {', '.join(n.inputs)}")
    click.echo("profile: " + ", ".join(f"{k}={v}" for k, v in resp.profile.items())
               + f" (total {resp.total_instances})")


@main.command("validate-config")
@click.argument("path", type=click.Path())
@server_opt
def validate_config(path, server):
    """Check a YAML campaign config; exit 2 if it is invalid."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise RuntimeFailure(str(e)) from e
    resp = _dispatch(server, "/config/validate", S.ConfigRequest(text=text), workflows.validate_config,
                     S.ConfigResponse)
    for w in resp.warnings:
        click.echo(f"warning: {w}", err=True)
    if not resp.valid:
        raise ConfigFailure("invalid config: " + "; ".join(resp.diagnostics))
    click.echo(json.dumps(resp.config, indent=1))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="YAML campaign config.")
@with_model
@click.option("--inputs", multiple=True, required=True, help="Feed bundle or directory; repeatable.")
@click.option("--n", "n", type=int, default=1, show_default=True, help="Injections per input.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--criterion", type=click.Choice(["class", "regression"]), default="class", show_default=True)
@click.option("--threshold", type=float, default=None, help="Regression SDC threshold (output units).")
@click.option("--seed", type=int, default=None, help="Overrides the config Seed.")
@click.option("--log", "log_path", type=click.Path(), default=None, help="Run log (one JSON object per line).")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write the CSV stats table here.")
@server_opt
def run(config_path, graph, weights, inputs, n, workers, criterion, threshold, seed, log_path, out_path, server):
    """Run an injection campaign and print SDC statistics."""
    inputs = _expand_inputs(inputs)
    req = _build(S.CampaignRequest, graph=graph, weights=weights, inputs=inputs, n=n, workers=workers,
                 criterion=criterion, threshold=threshold, seed=seed, log=log_path,
                 **({"config": config_path} if server else {"config_text": _read_config(config_path)}))
    if server is None:
        for p in (graph, weights, *inputs):
            if not Path(p).exists():
                raise ConfigFailure(f"no such file: {p}")
    resp = _dispatch(server, "/campaigns/run", req, lambda r: workflows.campaign(r)[0], S.CampaignResponse)
    st = resp.stats
    click.echo(f"mode={st.mode} fault_type={st.fault_type} error_rate={st.error_rate or '-'} "
               f"criterion={st.criterion} seed={st.seed}")
    click.echo(f"runs={st.runs} outputs={st.total} sdc={st.sdc} crashes={st.crashes} "
               f"sdc_rate={st.sdc_rate:.4f} ci95=±{st.ci95_half_width:.4f}")
    if st.note:
        click.echo(f"note: {st.note}")
    click.echo(resp.csv, nl=False)
    if out_path:
        Path(out_path).write_text(resp.csv, encoding="utf-8")


def _read_config(path) -> str:
    from .config import ConfigError, parse_config

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigFailure(str(e)) from e
    try:
        parse_config(text)
    except ConfigError as e:
        raise ConfigFailure("invalid config: " + "; ".join(e.diagnostics)) from e
    return text


@main.command()
@with_model
@click.option("--input", required=True, help="Feed bundle used for every prediction.")
@click.option("--predictions", type=int, default=50, show_default=True)
@click.option("--repeats", type=int, default=5, show_default=True, help="Best-of repeats per column.")
@click.option("--json", "as_json", is_flag=True)
@server_opt
def bench(graph, weights, input, predictions, repeats, as_json, server):
    """Baseline vs disabled-injection vs enabled-injection timings."""
    req = _build(S.BenchRequest, graph=graph, weights=weights, input=input, predictions=predictions,
                 repeats=repeats)
    resp = _dispatch(server, "/bench", req, workflows.run_bench, S.BenchResponse)
    if as_json:
        click.echo(resp.model_dump_json(indent=1))
    else:
        click.echo(f"{resp.predictions} predictions per column (seconds)")
        click.echo(resp.table)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, type=int, show_default=True)
def serve(host, port):
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("graphfi.service:app", host=host, port=port)


@main.command("write-fixtures")
@click.argument("directory", type=click.Path(file_okay=False))
def write_fixtures(directory):
    """Write the fixture models, inputs and sample config to DIRECTORY."""
    from .fixtures import write_all

    write_all(directory)
    click.echo(f"fixtures written to {directory}")


if __name__ == "__main__":
    main()
