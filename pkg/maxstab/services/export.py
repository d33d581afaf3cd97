"""Reading and writing fields, path files and classification results."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from maxstab.extensions import ArtifactRecord, ArtifactWriter
from maxstab.models import Grid, MaxStableField, SpectralPath
from maxstab.services.decompose import Decomposition
from maxstab.services.errors import DataError

logger = logging.getLogger(__name__)

PATHS_SCHEMA = 1
FIELDS_DIR = "fields"


def field_stem(rep: int) -> str:
    return f"{FIELDS_DIR}/field_{rep:04d}"


def write_field(writer: ArtifactWriter, run_dir: Path, rep: int, field: MaxStableField) -> list[ArtifactRecord]:
    stem = field_stem(rep)
    return [
        writer.write_csv(run_dir, f"{stem}.csv", field.csv_rows()),
        writer.write_json(run_dir, f"{stem}.json", field.to_json()),
    ]


def read_fields(run_dir: Path) -> list[MaxStableField]:
    folder = run_dir / FIELDS_DIR
    files = sorted(folder.glob("field_*.json")) if folder.is_dir() else []
    if not files:
        raise DataError("empty run")
    fields = []
    for path in files:
        try:
            fields.append(MaxStableField.from_json(json.loads(path.read_text(encoding="utf-8"))))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"unreadable field file {path.name}: {exc}") from exc
    return fields


def paths_payload(paths: Sequence[SpectralPath]) -> dict[str, Any]:
    if not paths:
        raise DataError("empty run")
    grid = paths[0].grid
    payload: dict[str, Any] = {
        "schema_version": PATHS_SCHEMA,
        "grid": grid.describe(),
        "paths": [p.values.tolist() for p in paths],
    }
    if all(p.cell_mass is not None for p in paths):
        payload["cell_masses"] = [p.cell_mass.tolist() for p in paths]  # type: ignore[union-attr]
    return payload


def read_paths(path: Path) -> list[SpectralPath]:
    """Parse a paths file: one grid descriptor plus a list of value arrays."""

    if not path.is_file():
        raise DataError(f"paths file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        grid = Grid.from_descriptor(payload["grid"])
        rows = payload["paths"]
        masses = payload.get("cell_masses") or [None] * len(rows)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed paths file: {exc}") from exc
    if not rows:
        raise DataError("empty run")
    out = []
    if len(masses) != len(rows):
        raise DataError("cell_masses does not match paths")
    for i, (row, mass) in enumerate(zip(rows, masses)):
        values = np.asarray(row, dtype=float)
        if values.shape != (grid.size,):
            raise DataError(f"path {i} has {values.size} values for a grid of {grid.size}")
        out.append(SpectralPath(grid, values, mass))
    return out


def write_decomposition(
    writer: ArtifactWriter,
    run_dir: Path,
    rep: int,
    decomposition: Decomposition,
) -> list[ArtifactRecord]:
    base = f"decompose/{decomposition.axis}/rep_{rep:04d}"
    records = [
        writer.write_csv(run_dir, f"{base}_part1.csv", decomposition.part1.csv_rows()),
        writer.write_csv(run_dir, f"{base}_part2.csv", decomposition.part2.csv_rows()),
    ]
    if decomposition.unassigned.atoms:
        records.append(writer.write_csv(run_dir, f"{base}_unassigned.csv", decomposition.unassigned.csv_rows()))
    return records
