"""Command line client for the scenario service.

The CLI is a thin HTTP client: scenarios are validated locally, posted to
the service (an in-process application instance by default, or a remote
server via --server), and the returned table is written as CSV with the
resolved spec and its hash in the header.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx
from pydantic import ValidationError

from . import __version__
from .scenarios import RunResult, ScenarioSpec, render_csv

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=3600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from fastapi.testclient import TestClient

    from .service.app import app

    return TestClient(app, raise_server_exceptions=False)


def _load_spec(config: str, seed: int | None, jobs: int | None) -> ScenarioSpec:
    try:
        raw = json.loads(Path(config).read_text())
    except OSError as exc:
        raise click.ClickException(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        click.echo(f"config error: invalid JSON: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if seed is not None:
        raw["seed"] = seed
    if jobs is not None:
        raw["jobs"] = jobs
    try:
        return ScenarioSpec.model_validate(raw)
    except ValidationError as exc:
        click.echo("config error:", err=True)
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            click.echo(f"  {loc}: {err['msg']}", err=True)
        sys.exit(EXIT_CONFIG)


def _run_and_write(subcommand: str, spec: ScenarioSpec, out: str, server: str | None):
    try:
        with _client(server) as client:
            resp = client.post(f"/run/{subcommand}", json={"spec": spec.model_dump(mode="json")})
    except httpx.HTTPError as exc:
        click.echo(f"service unreachable: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    if resp.status_code == 422:
        click.echo(f"config error: {resp.json().get('detail', resp.text)}", err=True)
        sys.exit(EXIT_CONFIG)
    if resp.status_code != 200:
        click.echo(f"numerical failure: {resp.text}", err=True)
        sys.exit(EXIT_NUMERICAL)
    payload = resp.json()
    result = RunResult(
        subcommand=payload["subcommand"],
        columns=payload["columns"],
        rows=payload["rows"],
        summary=payload["summary"],
        spec=ScenarioSpec.model_validate(payload["spec"]),
    )
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{subcommand}.csv"
    path.write_text(render_csv(result))
    for key in sorted(result.summary):
        click.echo(f"{key}: {result.summary[key]}")
    click.echo(f"wrote {path}")


def _common(fn):
    fn = click.option("--config", required=True, type=click.Path(), help="Scenario spec JSON.")(fn)
    fn = click.option("--out", required=True, type=click.Path(), help="Output directory for CSV.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the spec seed.")(fn)
    fn = click.option("--jobs", type=int, default=None, help="Parallel sweep workers.")(fn)
    fn = click.option("--server", default=None, help="Remote service URL (default: in-process).")(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main():
    """Timing-recovery experiments for simulated coherent optical links."""


@main.command()
@_common
def scurve(config, out, seed, jobs, server):
    """Detector characteristic curves over a timing-phase sweep.

    CSV columns: detector, tau_g_ui, e_t, aux_real
    (e_t is the error signal, aux_real the in-phase part).
    """
    _run_and_write("scurve", _load_spec(config, seed, jobs), out, server)


@main.command(name="cd-sweep")
@_common
def cd_sweep(config, out, seed, jobs, server):
    """CD estimation over random principal-state draws.

    CSV columns: draw, p1, p2, p3, tau_g_ui, estimator, dl_hat_ns_per_nm,
    err_ns_per_nm, low_confidence, grid_step_ns_per_nm.
    """
    _run_and_write("cd-sweep", _load_spec(config, seed, jobs), out, server)


@main.command(name="dgd-sweep")
@_common
def dgd_sweep(config, out, seed, jobs, server):
    """DGD / principal-state estimation over a DGD grid.

    CSV columns: dgd_true_s, dgd_hat_s, err_s, psp_err_deg, low_confidence.
    """
    _run_and_write("dgd-sweep", _load_spec(config, seed, jobs), out, server)


@main.command()
@_common
def track(config, out, seed, jobs, server):
    """Closed-loop timing tracking trajectories.

    CSV columns: detector, block, phase_ui, phase_unwrapped_ui, e_t, locked,
    injected_ui.
    """
    _run_and_write("track", _load_spec(config, seed, jobs), out, server)


@main.command()
@_common
def ber(config, out, seed, jobs, server):
    """End-to-end receiver chain and bit error rate.

    CSV columns: detector, spacing, taps, ber, bit_errors, total_bits,
    mse_tail, lock.
    """
    _run_and_write("ber", _load_spec(config, seed, jobs), out, server)


@main.command()
@click.option("--seed", type=int, default=7, help="Seed for the consistency checks.")
@click.option("--server", default=None, help="Remote service URL (default: in-process).")
def selftest(seed, server):
    """Run the oracle-equivalence and invariance suite."""
    with _client(server) as client:
        resp = client.post("/selftest", json={"seed": seed})
    if resp.status_code != 200:
        click.echo(f"selftest failed to run: {resp.text}", err=True)
        sys.exit(EXIT_NUMERICAL)
    payload = resp.json()
    for check in payload["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        click.echo(f"[{status}] {check['check']}: {check['detail']}")
    if not payload["passed"]:
        sys.exit(EXIT_NUMERICAL)
    click.echo("selftest passed")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def serve(host, port):
    """Run the scenario service."""
    import uvicorn

    uvicorn.run("cyclosync.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
