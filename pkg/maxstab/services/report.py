"""Plain-text report and plot index assembled from a finished run directory."""

from __future__ import annotations

import json
import logging
from pathlib import Path
import subprocess
from typing import Any, Mapping

from maxstab.extensions import ArtifactRecord, ArtifactWriter
from maxstab.services.errors import DataError
from maxstab.services.manifest import RunManifest

logger = logging.getLogger(__name__)

DIAGNOSTICS_JSON = "diagnostics/report.json"
CURVES_DIR = "diagnostics/curves"
VERDICTS_JSON = "classify/verdicts.json"
SIMULATE_JSON = "simulate/summary.json"
DECOMPOSE_DIR = "decompose"
REPORT_TXT = "report/report.txt"
PLOTS_JSON = "report/plots.json"


def _load(run_dir: Path, relpath: str) -> Mapping[str, Any] | None:
    target = run_dir / relpath
    if not target.is_file():
        return None
    return json.loads(target.read_text(encoding="utf-8"))


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def _table(headers: list[str], rows: list[list[Any]]) -> list[str]:
    cells = [headers] + [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return lines


def _simulation_section(summary: Mapping[str, Any]) -> list[str]:
    rows = [[r["rep"], r["mode"], r["n_used"], r["exact"], r["overflow"]] for r in summary.get("reps", [])]
    return ["Simulation", ""] + _table(["rep", "mode", "atoms", "exact", "log overflow"], rows)


def _classify_section(payload: Mapping[str, Any]) -> list[str]:
    counts: dict[str, dict[str, int]] = {}
    for item in payload.get("paths", []):
        for test, label in item.get("labels", {}).items():
            counts.setdefault(test, {}).setdefault(label, 0)
            counts[test][label] += 1
    rows = [[test, label, n] for test in sorted(counts) for label, n in sorted(counts[test].items())]
    return [f"Path classification ({payload.get('count', 0)} paths)", ""] + _table(["test", "label", "count"], rows)


def _diagnostics_section(report: Mapping[str, Any]) -> list[str]:
    lines = ["Criteria", ""]
    verdicts = report.get("verdicts", {})
    lines += _table(
        ["criterion", "status", "note"],
        [[name, v["status"], v.get("note", "")] for name, v in sorted(verdicts.items())],
    )
    curve = report.get("min_expectation", {})
    lines += ["", "E[min(X0, Xt)]", ""]
    lines += _table(
        ["lag", "estimate", "se"],
        [list(row) for row in zip(curve.get("x", []), curve.get("estimate", []), curve.get("se", []))],
    )
    theta = report.get("theta", {})
    lines += ["", "Extremal index", ""]
    lines += _table(["z", "theta"], [list(row) for row in zip(theta.get("zs", []), theta.get("thetas", []))])
    lb = report.get("local_boundedness", {})
    lines += ["", f"local boundedness: exponent={_fmt(lb.get('exponent'))} holds={_fmt(lb.get('holds'))}"]
    for note in report.get("notes", []):
        lines.append(f"note: {note}")
    return lines


def _decompose_section(axis: str, summary: Mapping[str, Any]) -> list[str]:
    rows = [
        [r["rep"], r["counts"]["part1"], r["counts"]["part2"], r["counts"]["unassigned"], r["m3_identity_gap"]]
        for r in summary.get("reps", [])
    ]
    lines = [f"Decomposition ({axis})", ""]
    lines += _table(["rep", "part1", "part2", "unassigned", "m3 identity gap"], rows)
    independence = summary.get("independence")
    if independence:
        lines.append(f"independence: max deviation {_fmt(independence['max_deviation'])} over {independence['n_reps']} reps")
    trip = summary.get("m3_round_trip")
    if trip:
        lines.append(
            f"m3 round trip: ks {_fmt(trip['ks'])} at lag {_fmt(trip['lag'])} "
            f"({trip['n_resimulated']} fields from {trip['n_atoms']} atoms)"
        )
    return lines


def render_report(run_dir: Path, manifest: RunManifest) -> str:
    lines = [
        f"run: {run_dir}",
        f"config digest: {manifest.config_digest}",
        f"seed: {manifest.seed}",
        f"stages: {', '.join(sorted(manifest.stages)) or '-'}",
    ]
    sections = (
        (SIMULATE_JSON, _simulation_section),
        (VERDICTS_JSON, _classify_section),
        (DIAGNOSTICS_JSON, _diagnostics_section),
    )
    found = False
    for relpath, render in sections:
        payload = _load(run_dir, relpath)
        if payload is None:
            continue
        found = True
        lines += ["", *render(payload)]
    for target in sorted((run_dir / DECOMPOSE_DIR).glob("*/summary.json")):
        found = True
        lines += ["", *_decompose_section(target.parent.name, json.loads(target.read_text(encoding="utf-8")))]
    if not found:
        raise DataError(f"nothing to report in {run_dir}")
    return "\n".join(lines) + "\n"


def plot_index(run_dir: Path) -> dict[str, Any]:
    """Describe every curve CSV so an external plotter can draw it."""

    folder = run_dir / CURVES_DIR
    plots = []
    for csv_path in sorted(folder.glob("*.csv")) if folder.is_dir() else []:
        header = csv_path.read_text(encoding="utf-8").splitlines()[0].split(",")
        plots.append(
            {
                "name": csv_path.stem,
                "file": csv_path.relative_to(run_dir).as_posix(),
                "x": header[0],
                "y": header[1],
                "band": [c for c in header[2:]],
                "log_x": csv_path.stem.startswith("cesaro"),
            }
        )
    return {"plots": plots}


def write_report(writer: ArtifactWriter, run_dir: Path, manifest: RunManifest) -> list[ArtifactRecord]:
    return [
        writer.write_text(run_dir, REPORT_TXT, render_report(run_dir, manifest)),
        writer.write_json(run_dir, PLOTS_JSON, plot_index(run_dir)),
    ]


def run_plot_hook(hook: str | None, run_dir: Path) -> int | None:
    """Invoke the external plotting command with the run directory; failures only warn."""

    if not hook:
        return None
    try:
        result = subprocess.run([hook, str(run_dir)], check=False, capture_output=True, text=True, timeout=600)
    except (OSError, subprocess.TimeoutExpired) as exc:
        logger.warning("plot hook %s failed to start: %s", hook, exc)
        return None
    if result.returncode != 0:
        logger.warning("plot hook exited with %d: %s", result.returncode, result.stderr.strip())
    return result.returncode
