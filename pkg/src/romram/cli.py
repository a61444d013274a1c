"""Command-line front end: a thin client of the simulation service.

Commands parse flags, ship the config document to the service (in process
by default, remote with ``--server``), and write the returned file payloads
atomically into the output directory.

Exit codes: 0 success, 1 usage or configuration error, 2 a Monte-Carlo
case missed the yield threshold, 3 calibration infeasible.
"""
from __future__ import annotations

import os
import sys
import tempfile
from pathlib import Path

import click

from .client import ServiceClient, ServiceError
from .config import ConfigError, parse_document
from .runner import STATUS_INFEASIBLE, STATUS_OK, STATUS_THRESHOLD_FAILED
from .units import UnitError, parse_quantity

# usage errors must exit 1, not click's default 2
click.UsageError.exit_code = 1

_STATUS_CODES = {STATUS_OK: 0, STATUS_THRESHOLD_FAILED: 2, STATUS_INFEASIBLE: 3}


def _write_atomic(directory: Path, name: str, content: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    target = directory / name
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(content)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def _finish(ctx: click.Context, response: dict) -> None:
    out_dir = Path(ctx.obj["output_dir"])
    for payload in response["files"]:
        path = _write_atomic(out_dir, payload["name"], payload["content"])
        click.echo(f"wrote {path}")
    status = response["status"]
    for key, value in sorted(response.get("info", {}).items()):
        click.echo(f"{key}: {value}")
    code = _STATUS_CODES.get(status, 1)
    if code:
        click.echo(f"status: {status}", err=True)
    ctx.exit(code)


def _load_document(ctx: click.Context) -> dict:
    path = ctx.obj["config_path"]
    if path is None:
        raise click.UsageError(
            "no configuration given; pass --config or set ROMRAM_CONFIG"
        )
    try:
        return parse_document(Path(path).read_text(), source=str(path))
    except FileNotFoundError:
        raise click.UsageError(f"config file not found: {path}")
    except ConfigError as exc:
        raise click.UsageError(str(exc))


def _overrides(ctx: click.Context) -> dict[str, str]:
    pairs = {}
    for item in ctx.obj["overrides"]:
        if "=" not in item:
            raise click.UsageError(f"--set needs PATH=VALUE, got {item!r}")
        path, value = item.split("=", 1)
        pairs[path.strip()] = value.strip()
    return pairs


def _client(ctx: click.Context) -> ServiceClient:
    return ServiceClient(base_url=ctx.obj["server"], timeout=None)


def _run(ctx: click.Context, command: str, **kwargs) -> None:
    document = _load_document(ctx)
    overrides = _overrides(ctx)
    client = _client(ctx)
    try:
        response = getattr(client, command)(document, overrides, **kwargs)
    except (ServiceError, ConfigError, UnitError) as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(1)
    _finish(ctx, response)


@click.group()
@click.option(
    "--config",
    "-c",
    "config_path",
    envvar="ROMRAM_CONFIG",
    type=click.Path(),
    help="run-configuration document (YAML); env ROMRAM_CONFIG",
)
@click.option("--server", default=None, help="service base URL; default runs in process")
@click.option(
    "--set",
    "overrides",
    multiple=True,
    metavar="PATH=VALUE",
    help="override a scalar config leaf, e.g. sim.dt_max='5 ps'",
)
@click.option("--output-dir", "-o", default="out", show_default=True)
@click.pass_context
def main(ctx: click.Context, config_path, server, overrides, output_dir) -> None:
    """Desk-scale simulator for the ROM-augmented 8T SRAM bit-cell."""
    ctx.obj = {
        "config_path": config_path,
        "server": server,
        "overrides": list(overrides),
        "output_dir": output_dir,
    }


@main.command()
@click.option("--case", required=True, help="2-bit case code: 00, 01, 10 or 11")
@click.option("--mode", required=True, help="protocol mode supplying the phase plan")
@click.option("--vsl", default=None, help="source-line override, e.g. '-0.10 V'")
@click.option("--duration", default=None, help="event window override, e.g. '0.8 ns'")
@click.option("--phase", default=1, show_default=True, type=int)
@click.pass_context
def simulate(ctx, case, mode, vsl, duration, phase) -> None:
    """Write one bit-line discharge trace as CSV."""
    _run(ctx, "simulate", case=case, mode=mode, vsl=vsl, duration=duration, phase=phase)


@main.command()
@click.option("--mode", required=True)
@click.option("--calibrate/--no-calibrate", "calibrate_first", default=False,
              help="re-calibrate sensing before the run")
@click.pass_context
def mc(ctx, mode, calibrate_first) -> None:
    """Monte-Carlo yield run; exit 2 if a case misses the yield threshold."""
    _run(ctx, "mc", mode=mode, calibrate_first=calibrate_first)


@main.command()
@click.option("--mode", required=True)
@click.pass_context
def calibrate(ctx, mode) -> None:
    """Maximin search for comparator reference and strobe; exit 3 if infeasible."""
    _run(ctx, "calibrate", mode=mode)


@main.command()
@click.option(
    "--modes",
    default=None,
    help="comma-separated mode names; 'baseline' gives the all-ones row",
)
@click.pass_context
def table1(ctx, modes) -> None:
    """Normalized delay/energy/leakage table over calibrated modes."""
    names = [m.strip() for m in modes.split(",")] if modes else None
    _run(ctx, "table1", modes=names)


@main.command()
@click.option("--parameter", required=True, type=click.Choice(["vsl", "v_ref", "sigma_vt", "c_bl"]))
@click.option("--mode", required=True)
@click.option(
    "--values",
    default="",
    help="comma-separated points with units, e.g. '-0.05 V,-0.25 V,-0.45 V'",
)
@click.pass_context
def sweep(ctx, parameter, mode, values) -> None:
    """Calibrate-plus-MC row per sweep point."""
    dimension = "capacitance" if parameter == "c_bl" else "voltage"
    points: list[float] = []
    for chunk in values.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            points.append(parse_quantity(chunk, dimension))
        except UnitError as exc:
            raise click.UsageError(str(exc))
    _run(ctx, "sweep", parameter=parameter, values=points, mode=mode)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("romram.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
