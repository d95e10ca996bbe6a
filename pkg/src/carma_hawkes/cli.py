"""Command-line interface.

Every subcommand writes its outputs plus a ``manifest.json`` (command,
effective configuration, sha256 digests of the inputs, seed, package
version, wall times) into one run directory.  Outputs are byte-identical
across runs with the same inputs, flags, and seed; only the manifest wall
times differ.

Settings resolve as: explicit flag, then ``CARMA_HAWKES_THREADS`` for the
thread count, then the ``--config`` file, then built-in defaults.  Config
files hold ``key = value`` lines (``#`` comments allowed); keys are flag
names with underscores, values are Python literals where that parses
(``alpha_levels = 0.95, 0.99`` for multi-valued flags) and bare strings
otherwise.

Exit codes: 0 success, 1 user or input error, 2 internal error.
"""

from __future__ import annotations

import ast
import csv
import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .data import (
    ingest_ticks,
    parse_ticks,
    read_events,
    spread_stats,
    write_events,
    write_ticks,
)
from .errors import CarmaHawkesError, DataError
from .estimate import fit_bivariate, fit_univariate
from .jumps import DEFAULT_ALPHA_LEVELS, LMConfig, detect_jumps
from .model import (
    BivariateOrder,
    EventSeries,
    MarkedEventSeries,
    UnivariateOrder,
    spec_from_dict,
    spec_to_dict,
)
from .pipeline import PipelineConfig, run_pipeline
from .simulate import SimulationConfig, simulate_bivariate, simulate_univariate

__all__ = ["cli", "main"]


# ---------------------------------------------------------------------------
# Plumbing


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _jsonable(value):
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, Path):
        return str(value)
    return str(value)


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")


def _parse_config_value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _load_config(ctx, param, value):
    """Eager --config callback: file values become parameter defaults."""
    if value is None:
        return None
    # config keys are flag names; a few flags rename their parameter
    # (--window feeds window_k), so translate through the option table
    alias = {}
    for p in ctx.command.params:
        for opt in getattr(p, "opts", ()):
            if opt.startswith("--"):
                alias[opt.lstrip("-").replace("-", "_")] = p.name
    mapping = {}
    with open(value) as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise click.UsageError(
                    f"{value}: line {line_no}: expected key = value")
            key, _, rhs = line.partition("=")
            key = key.strip().replace("-", "_")
            mapping[alias.get(key, key)] = _parse_config_value(rhs.strip())
    ctx.default_map = {**(ctx.default_map or {}), **mapping}
    return value


def _config_option(fn):
    return click.option(
        "--config", "config_path",
        type=click.Path(exists=True, dir_okay=False), default=None,
        callback=_load_config, is_eager=True,
        help="key = value defaults file; explicit flags win.")(fn)


def _outdir_option(fn):
    return click.option(
        "--outdir", type=click.Path(file_okay=False), default=None,
        help="Output directory; default derives from inputs and flags.")(fn)


def _resolve_outdir(outdir, command: str, params: dict, inputs: dict) -> Path:
    if outdir is not None:
        path = Path(outdir)
    else:
        material = json.dumps(_jsonable({"command": command, "params": params,
                                         "inputs": inputs}), sort_keys=True)
        short = hashlib.sha256(material.encode()).hexdigest()[:8]
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        path = Path(f"{command}-{stamp}-{short}")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, command: str, params: dict, inputs: dict,
                    seed, started: str) -> None:
    _dump_json(out / "manifest.json", {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": params,
        "inputs": inputs,
        "started_at": started,
        "finished_at": _now(),
    })


def _csv_writer(handle):
    return csv.writer(handle, lineterminator="\n")


# ---------------------------------------------------------------------------
# Command group


@click.group()
@click.version_option(version=__version__, prog_name="carma-hawkes")
def cli() -> None:
    """Point-process modeling of tick data: simulation, estimation,
    jump detection, and the sequential framework-selection routine."""


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--instrument", default=None, help="Keep only this instrument.")
@click.option("--side", type=click.Choice(["bid", "ask"]), default=None,
              help="Keep only this quote side.")
@click.option("--calendar", default="eur", show_default=True,
              help="Trading-session calendar (eur or sgd).")
@_config_option
@_outdir_option
@click.pass_context
def ingest(ctx, source, instrument, side, calendar, config_path, outdir):
    """Clean a raw tick CSV into the canonical form."""
    started = _now()
    series, stats = ingest_ticks(source, instrument=instrument, side=side,
                                 calendar=calendar)
    inputs = {source: _sha256(source)}
    out = _resolve_outdir(outdir, "ingest", ctx.params, inputs)
    write_ticks(series, out / "ticks.csv")
    _dump_json(out / "stats.json", {
        "rows_read": stats.rows_read,
        "duplicates_dropped": stats.duplicates_dropped,
        "ties_shifted": stats.ties_shifted,
        "out_of_session_dropped": stats.out_of_session_dropped,
        "days": stats.days,
        "ticks": series.n,
        "instrument": series.instrument_id,
        "side": series.side,
        "calendar": series.calendar.name,
    })
    _write_manifest(out, "ingest", ctx.params, inputs, None, started)
    click.echo(str(out))


@cli.command("spread-stats")
@click.argument("bid_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("ask_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--tick-size", type=float, default=0.001, show_default=True,
              help="Grid used to discretize the spread for the mode.")
@click.option("--calendar", default="eur", show_default=True)
@_config_option
@_outdir_option
@click.pass_context
def spread_stats_cmd(ctx, bid_file, ask_file, tick_size, calendar,
                     config_path, outdir):
    """Descriptive statistics of the bid-ask spread.

    BID_FILE and ASK_FILE are canonical tick CSVs, one quote side each.
    """
    started = _now()
    bid = parse_ticks(bid_file, calendar=calendar)
    ask = parse_ticks(ask_file, calendar=calendar)
    stats = spread_stats(bid, ask, tick_size=tick_size)
    inputs = {bid_file: _sha256(bid_file), ask_file: _sha256(ask_file)}
    out = _resolve_outdir(outdir, "spread-stats", ctx.params, inputs)
    with open(out / "spread_stats.csv", "w", newline="") as handle:
        writer = _csv_writer(handle)
        writer.writerow(stats.COLUMNS)
        writer.writerow(stats.to_row())
    _dump_json(out / "spread_stats.json", {
        "mean": stats.mean, "median": stats.median, "mode": stats.mode,
        "std": stats.std, "excess_kurtosis": stats.excess_kurtosis,
        "skewness": stats.skewness, "iqr": stats.iqr,
        "min": stats.min, "max": stats.max, "n": stats.n,
    })
    _write_manifest(out, "spread-stats", ctx.params, inputs, None, started)
    click.echo(str(out))


@cli.command("detect-jumps")
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", "alpha_levels", type=float, multiple=True,
              default=DEFAULT_ALPHA_LEVELS, show_default=True,
              help="Confidence level; repeat for several.")
@click.option("--window", "window_k", type=int, default=None,
              help="Bipower window length K (default: from the bar count).")
@click.option("--window-exponent", type=float, default=-0.6, show_default=True,
              help="Exponent tying the default K to the daily bar count.")
@click.option("--keep-zero-returns", is_flag=True, default=False,
              help="Test zero returns instead of dropping them.")
@click.option("--instrument", default=None)
@click.option("--side", type=click.Choice(["bid", "ask"]), default=None)
@click.option("--calendar", default="eur", show_default=True)
@_config_option
@_outdir_option
@click.pass_context
def detect_jumps_cmd(ctx, source, alpha_levels, window_k, window_exponent,
                     keep_zero_returns, instrument, side, calendar,
                     config_path, outdir):
    """Flag intraday jumps in a tick CSV."""
    started = _now()
    series = parse_ticks(source, instrument=instrument, side=side,
                         calendar=calendar)
    lm_config = LMConfig(K=window_k, alpha_levels=tuple(alpha_levels),
                         window_exponent=window_exponent,
                         drop_zero_returns=not keep_zero_returns)
    result = detect_jumps(series, lm_config)
    inputs = {source: _sha256(source)}
    out = _resolve_outdir(outdir, "detect-jumps", ctx.params, inputs)
    alphas = result.alpha_levels
    with open(out / "jumps.csv", "w", newline="") as handle:
        writer = _csv_writer(handle)
        writer.writerow(["tick_index", "business_time", "log_return",
                         "statistic", "sign"]
                        + [f"flag_{a:g}" for a in alphas])
        for i in range(result.lm.m.shape[0]):
            writer.writerow(
                [int(result.tick_index[i]), repr(float(result.business_times[i])),
                 repr(float(result.returns[i])), repr(float(result.lm.m[i])),
                 int(result.signs[i])]
                + [int(result.flags[a][i]) for a in alphas])
    _dump_json(out / "summary.json", {
        "K": result.lm.K,
        "n_tested": result.lm.n,
        "c_n": result.lm.c_n,
        "s_n": result.lm.s_n,
        "c_constant": result.lm.c_constant,
        "dropped_zero": result.lm.dropped_zero,
        "untestable": result.lm.untestable,
        "thresholds": {f"{a:g}": result.thresholds[a] for a in alphas},
        "jump_fraction": {f"{a:g}": result.jump_fraction[a] for a in alphas},
        "flagged": {f"{a:g}": int(result.flags[a].sum()) for a in alphas},
    })
    _write_manifest(out, "detect-jumps", ctx.params, inputs, None, started)
    click.echo(str(out))


@cli.command()
@click.option("--params", "params_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Model spec JSON, as written by `fit`.")
@click.option("--horizon", type=float, required=True,
              help="Length of the simulated window.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-events", type=int, default=10_000_000, show_default=True)
@_config_option
@_outdir_option
@click.pass_context
def simulate(ctx, params_file, horizon, seed, max_events, config_path, outdir):
    """Simulate a model to an events CSV."""
    started = _now()
    with open(params_file) as handle:
        spec = spec_from_dict(json.load(handle))
    sim_config = SimulationConfig(max_events=max_events)
    if spec.order.bivariate:
        events = simulate_bivariate(spec, horizon, seed, config=sim_config)
    else:
        events = simulate_univariate(spec, horizon, seed, config=sim_config)
    inputs = {params_file: _sha256(params_file)}
    out = _resolve_outdir(outdir, "simulate", ctx.params, inputs)
    write_events(events, out / "events.csv")
    _dump_json(out / "summary.json", {
        "n_events": events.n,
        "horizon": horizon,
        "counts": list(events.counts) if isinstance(events, MarkedEventSeries) else None,
    })
    _write_manifest(out, "simulate", ctx.params, inputs, seed, started)
    click.echo(str(out))


def _parse_order(text: str):
    try:
        if ":" in text:
            p_part, q_part = text.split(":")
            p = tuple(int(v) for v in p_part.split(","))
            q = tuple(int(v) for v in q_part.split(","))
            return BivariateOrder(p, q)
        p, q = (int(v) for v in text.split(","))
        return UnivariateOrder(p, q)
    except ValueError as exc:
        raise click.UsageError(
            f"--order must look like 'p,q' or 'p1,p2:q1,q12,q21,q2': {exc}")


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--order", required=True,
              help="Model order: 'p,q' or 'p1,p2:q1,q12,q21,q2'.")
@click.option("--horizon", type=float, default=None,
              help="Observation window; default is the last event time.")
@click.option("--window", type=click.Choice(["events", "horizon"]),
              default="events", show_default=True)
@click.option("--n-starts", type=int, default=5, show_default=True)
@click.option("--max-evals", type=int, default=20_000, show_default=True)
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--kernel-screen/--no-kernel-screen", default=True,
              show_default=True)
@_config_option
@_outdir_option
@click.pass_context
def fit(ctx, source, order, horizon, window, n_starts, max_evals, tol, seed,
        kernel_screen, config_path, outdir):
    """Fit a model to an events CSV by maximum likelihood."""
    started = _now()
    model_order = _parse_order(order)
    events = read_events(source, horizon=horizon)
    if model_order.bivariate and not isinstance(events, MarkedEventSeries):
        raise DataError("a bivariate order needs marked events (nonzero marks)")
    if not model_order.bivariate and isinstance(events, MarkedEventSeries):
        raise DataError("a univariate order needs unmarked events (marks all 0)")
    options = dict(n_starts=n_starts, max_evals=max_evals, tol=tol, seed=seed,
                   kernel_screen=kernel_screen, window=window)
    if model_order.bivariate:
        result = fit_bivariate(events, model_order, **options)
    else:
        result = fit_univariate(events, model_order, **options)
    inputs = {source: _sha256(source)}
    out = _resolve_outdir(outdir, "fit", ctx.params, inputs)
    validation = result.diagnostics["validation"]
    _dump_json(out / "fit.json", {
        "spec": spec_to_dict(result.spec),
        "loglik": result.loglik,
        "aic": result.aic,
        "n_params": result.n_params,
        "converged": result.converged,
        "n_events": events.n,
        "window": window,
        "valid": validation.valid,
        "validation": validation.summary(),
        "best_start": result.diagnostics["best_start"],
        "starts": result.diagnostics["starts"],
    })
    _write_manifest(out, "fit", ctx.params, inputs, seed, started)
    click.echo(str(out))


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", "alpha_levels", type=float, multiple=True,
              default=DEFAULT_ALPHA_LEVELS, show_default=True)
@click.option("--window", "window_k", type=int, default=None,
              help="Jump-test bipower window length K.")
@click.option("--window-exponent", type=float, default=-0.6, show_default=True)
@click.option("--lr-alpha", type=float, default=0.05, show_default=True)
@click.option("--ks-alpha", type=float, default=0.05, show_default=True)
@click.option("--p-max", type=int, default=3, show_default=True)
@click.option("--n-starts", type=int, default=5, show_default=True)
@click.option("--max-evals", type=int, default=20_000, show_default=True)
@click.option("--event-cap", type=int, default=50_000, show_default=True)
@click.option("--threads", type=int, default=None, envvar="CARMA_HAWKES_THREADS",
              help="Concurrent fits per framework stage.")
@click.option("--seed", type=int, default=None)
@click.option("--instrument", default=None)
@click.option("--side", type=click.Choice(["bid", "ask"]), default=None)
@click.option("--calendar", default="eur", show_default=True)
@_config_option
@_outdir_option
@click.pass_context
def pipeline(ctx, source, alpha_levels, window_k, window_exponent, lr_alpha,
             ks_alpha, p_max, n_starts, max_evals, event_cap, threads, seed,
             instrument, side, calendar, config_path, outdir):
    """Run the sequential framework-selection routine on a tick CSV."""
    started = _now()
    series = parse_ticks(source, instrument=instrument, side=side,
                         calendar=calendar)
    config = PipelineConfig(
        lm_config=LMConfig(K=window_k, alpha_levels=tuple(alpha_levels),
                           window_exponent=window_exponent),
        lr_alpha=lr_alpha, ks_alpha=ks_alpha, p_max=p_max, n_starts=n_starts,
        max_evals=max_evals, event_cap=event_cap, threads=threads)
    report = run_pipeline(series, config, seed=seed)
    inputs = {source: _sha256(source)}
    out = _resolve_outdir(outdir, "pipeline", ctx.params, inputs)
    (out / "report.json").write_text(report.to_json() + "\n")
    with open(out / "report.csv", "w", newline="") as handle:
        writer = _csv_writer(handle)
        writer.writerow(report.CSV_HEADER)
        writer.writerows(report.to_csv_rows())
    _write_manifest(out, "pipeline", ctx.params, inputs, seed, started)
    click.echo(str(out))
    click.echo(json.dumps(report.verdict, sort_keys=True))


# ---------------------------------------------------------------------------
# Entry point


def main(argv=None) -> int:
    """Run the CLI; returns the exit code instead of raising SystemExit."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except CarmaHawkesError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return 2
    return 0
