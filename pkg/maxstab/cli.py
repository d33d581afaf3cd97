"""Flask CLI commands: simulate, classify, decompose, diagnose and report."""

from __future__ import annotations

from functools import wraps
from pathlib import Path
import time
from typing import Any, Callable

import click
from flask import current_app
from flask.cli import with_appcontext

from maxstab.extensions import pool, writer
from maxstab.services.diagnostics import run_diagnostics
from maxstab.services.errors import ConfigError, MaxStabError, record_exception
from maxstab.services.export import paths_payload, read_fields, read_paths, write_decomposition, write_field
from maxstab.services.manifest import RunManifest, load_manifest, load_resolved_config, open_run
from maxstab.services.randkit import RngStream
from maxstab.services.report import CURVES_DIR, DIAGNOSTICS_JSON, SIMULATE_JSON, VERDICTS_JSON, run_plot_hook, write_report
from maxstab.services.runconfig import RunConfig, load_run_config
from maxstab.services.runs import (
    STREAM_DIAGNOSE,
    classify_paths,
    decompose_fields,
    field_paths,
    resolve_run_dir,
    sample_model_paths,
    simulate_run,
    simulation_summary,
)


class CommandFailure(click.ClickException):
    """Carries the toolkit exit code through click."""

    def __init__(self, exc: MaxStabError) -> None:
        super().__init__(str(exc))
        self.exit_code = exc.exit_code


def _guarded(context: str) -> Callable[[Callable[..., Any]], Callable[..., Any]]:
    def decorate(fn: Callable[..., Any]) -> Callable[..., Any]:
        @wraps(fn)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            try:
                return fn(*args, **kwargs)
            except MaxStabError as exc:
                record_exception(context, exc)
                current_app.logger.error("%s failed: %s", context, exc)
                raise CommandFailure(exc) from exc

        return wrapper

    return decorate


def _run_options(fn: Callable[..., Any]) -> Callable[..., Any]:
    options = (
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="JSON or TOML run configuration"),
        click.option("--seed", type=int, default=None, help="Override the configured seed"),
        click.option("--out", type=click.Path(file_okay=False), default=None, help="Run directory"),
        click.option("--reps", type=int, default=None, help="Override the number of replicates"),
        click.option("--threads", type=int, default=None, help="Worker threads (default MAXSTAB_THREADS)"),
    )
    for option in reversed(options):
        fn = option(fn)
    return fn


def _load(config_path: str | None, seed: int | None, out: str | None, reps: int | None) -> RunConfig:
    return load_run_config(config_path).with_overrides(seed=seed, output_dir=out, n_reps=reps)


def _check_threads(threads: int | None) -> None:
    if threads is not None and threads < 1:
        raise ConfigError("invalid flags", {"--threads": ["Must be at least 1."]})


def _atom_log_cap() -> int | None:
    cap = current_app.config.get("MAXSTAB_ATOM_LOG_CAP")
    return None if cap is None else int(cap)


def _finish(manifest: RunManifest, run_dir: Path, stage: str, started: float, records: list, **flags: Any) -> None:
    manifest.stage(stage, time.perf_counter() - started, records, **flags)
    manifest.save(writer, run_dir)
    click.echo(f"{stage}: {len(records)} files written to {run_dir}")


def _simulate_into(config: RunConfig, run_dir: Path, threads: int | None) -> tuple[list, list]:
    with pool.executor(threads) as executor:
        fields = simulate_run(config, executor=executor, atom_log_cap=_atom_log_cap())
    records = []
    for i, field in enumerate(fields):
        records += write_field(writer, run_dir, i, field)
    records.append(writer.write_json(run_dir, SIMULATE_JSON, simulation_summary(fields)))
    return fields, records


def register_cli(app) -> None:
    @app.cli.command("simulate")
    @_run_options
    @with_appcontext
    @_guarded("simulate")
    def simulate(config_path: str | None, seed: int | None, out: str | None, reps: int | None, threads: int | None) -> None:
        """Simulate replicate fields and write them as CSV and JSON."""

        _check_threads(threads)
        started = time.perf_counter()
        config = _load(config_path, seed, out, reps)
        run_dir = resolve_run_dir(config, Path(current_app.config["RUNS_ROOT"]), out)
        manifest = open_run(config, run_dir, writer)
        fields, records = _simulate_into(config, run_dir, threads)
        exact = all(f.truncation.exact for f in fields)
        _finish(manifest, run_dir, "simulate", started, records, exact=exact, n_reps=len(fields))

    @app.cli.command("classify")
    @_run_options
    @click.option("--paths", "paths_file", type=click.Path(dir_okay=False), default=None, help="Paths file to classify")
    @click.option("--run", "run_path", type=click.Path(file_okay=False), default=None, help="Classify the atoms of a simulated run")
    @with_appcontext
    @_guarded("classify")
    def classify(
        config_path: str | None,
        seed: int | None,
        out: str | None,
        reps: int | None,
        threads: int | None,
        paths_file: str | None,
        run_path: str | None,
    ) -> None:
        """Label spectral paths on both cone axes."""

        _check_threads(threads)
        if paths_file and run_path:
            raise ConfigError("conflicting flags", {"--paths": ["Cannot be combined with --run."]})
        started = time.perf_counter()
        records = []
        if run_path:
            if seed is not None or reps is not None:
                raise ConfigError("conflicting flags", {"--run": ["Seed and reps come from the run."]})
            run_dir = Path(run_path).resolve()
            config = load_run_config(config_path) if config_path else load_resolved_config(run_dir)
            paths = field_paths(read_fields(run_dir))
            source = "run"
        else:
            config = _load(config_path, seed, out, reps)
            run_dir = resolve_run_dir(config, Path(current_app.config["RUNS_ROOT"]), out)
            if paths_file:
                paths = read_paths(Path(paths_file))
                source = "paths"
            else:
                with pool.executor(threads) as executor:
                    paths = sample_model_paths(config, executor=executor)
                source = "model"
        manifest = open_run(config, run_dir, writer)
        if source == "model":
            records.append(writer.write_json(run_dir, "classify/paths.json", paths_payload(paths)))
        with pool.executor(threads) as executor:
            result = classify_paths(paths, config, executor=executor)
        records.append(writer.write_json(run_dir, VERDICTS_JSON, result.to_json(source)))
        _finish(manifest, run_dir, "classify", started, records, source=source, zero_on_window=result.zero_on_window)

    @app.cli.command("decompose")
    @_run_options
    @click.option("--run", "run_path", type=click.Path(file_okay=False), default=None, help="Decompose the fields of a simulated run")
    @click.option("--axis", type=click.Choice(["hopf", "neveu"]), default=None)
    @click.option("--policy", type=click.Choice(["strict", "assign_to_part1", "assign_to_part2"]), default=None)
    @with_appcontext
    @_guarded("decompose")
    def decompose(
        config_path: str | None,
        seed: int | None,
        out: str | None,
        reps: int | None,
        threads: int | None,
        run_path: str | None,
        axis: str | None,
        policy: str | None,
    ) -> None:
        """Split each field into its two parts and extract the M3 representation."""

        _check_threads(threads)
        started = time.perf_counter()
        records = []
        if run_path:
            if seed is not None or reps is not None:
                raise ConfigError("conflicting flags", {"--run": ["Seed and reps come from the run."]})
            run_dir = Path(run_path).resolve()
            config = load_run_config(config_path) if config_path else load_resolved_config(run_dir)
            manifest = open_run(config, run_dir, writer)
            fields = read_fields(run_dir)
        else:
            config = _load(config_path, seed, out, reps)
            run_dir = resolve_run_dir(config, Path(current_app.config["RUNS_ROOT"]), out)
            manifest = open_run(config, run_dir, writer)
            fields, records = _simulate_into(config, run_dir, threads)
        with pool.executor(threads) as executor:
            result = decompose_fields(fields, config, axis=axis, policy=policy, executor=executor)
        chosen = result.decompositions[0].axis
        for i, part in enumerate(result.decompositions):
            records += write_decomposition(writer, run_dir, i, part)
        records.append(writer.write_json(run_dir, f"decompose/{chosen}/summary.json", result.to_json()))
        _finish(manifest, run_dir, "decompose", started, records, axis=chosen, policy=result.decompositions[0].policy)

    @app.cli.command("diagnose")
    @_run_options
    @with_appcontext
    @_guarded("diagnose")
    def diagnose(config_path: str | None, seed: int | None, out: str | None, reps: int | None, threads: int | None) -> None:
        """Estimate the ergodic, mixing and M3 criteria for the configured model."""

        _check_threads(threads)
        started = time.perf_counter()
        config = _load(config_path, seed, out, reps)
        run_dir = resolve_run_dir(config, Path(current_app.config["RUNS_ROOT"]), out)
        manifest = open_run(config, run_dir, writer)
        settings = config.diagnostic_settings()
        with pool.executor(threads) as executor:
            report = run_diagnostics(
                config.build_model(), config.build_grid(), settings, RngStream(config.seed, STREAM_DIAGNOSE), executor
            )
        records = [writer.write_json(run_dir, DIAGNOSTICS_JSON, report.to_json())]
        for curve in report.curves():
            records.append(writer.write_csv(run_dir, f"{CURVES_DIR}/{curve.name}.csv", curve.rows()))
        for name, v in sorted(report.verdicts.items()):
            click.echo(f"{name}: {v.status}")
        _finish(manifest, run_dir, "diagnose", started, records, exact=report.provenance["fields_exact"])

    @app.cli.command("report")
    @click.option("--run", "run_path", type=click.Path(file_okay=False), required=True, help="Run directory")
    @with_appcontext
    @_guarded("report")
    def report(run_path: str) -> None:
        """Verify a run's digests and write report.txt plus a plot index."""

        started = time.perf_counter()
        run_dir = Path(run_path).resolve()
        manifest = load_manifest(run_dir)
        manifest.verify(run_dir)
        records = write_report(writer, run_dir, manifest)
        _finish(manifest, run_dir, "report", started, records)
        code = run_plot_hook(current_app.config.get("MAXSTAB_PLOT_HOOK"), run_dir)
        if code is not None:
            click.echo(f"plot hook exited with {code}")
