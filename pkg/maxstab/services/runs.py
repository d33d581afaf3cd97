"""Command-level pipelines: simulate, classify and decompose from a RunConfig."""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass
import logging
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from maxstab.models import MaxStableField, SpectralPath
from maxstab.services.catalog import ShapeModel
from maxstab.services.cones import PathClassification, classify_path, default_radii
from maxstab.services.decompose import (
    DEFAULT_TEST,
    Decomposition,
    M3Extraction,
    RoundTrip,
    classify_atoms,
    extract_m3,
    independence_check,
    m3_identity_gap,
    m3_round_trip,
    split_atoms,
)
from maxstab.services.dehaan import DeHaanSimulator, M3Simulator
from maxstab.services.diagnostics import sample_paths
from maxstab.services.errors import ConfigError, DataError
from maxstab.services.randkit import RngStream, replicate
from maxstab.services.runconfig import RunConfig

logger = logging.getLogger(__name__)

STREAM_SIMULATE = 1
STREAM_CLASSIFY = 2
STREAM_RESIMULATE = 3
STREAM_DIAGNOSE = 4


def resolve_run_dir(config: RunConfig, runs_root: Path, out: str | None = None) -> Path:
    """``--out`` wins over ``output_dir``; otherwise runs/<digest prefix>."""

    target = out or config.output_dir
    if target:
        return Path(target).expanduser().resolve()
    return runs_root / config.digest()[:12]


def _simulate_one(config: RunConfig, stream: RngStream, atom_log_cap: int) -> MaxStableField:
    sim_cfg = config.simulation
    grid = config.build_grid()
    model = config.build_model()
    mode = sim_cfg["mode"]
    bound = sim_cfg["sup_bound"]
    if sim_cfg["kind"] == "m3":
        if not isinstance(model, ShapeModel):
            raise ConfigError("invalid configuration", {"simulation.kind": ["m3 needs a shape model (compact_bump or comb)."]})
        sim: DeHaanSimulator = M3Simulator(
            model, grid, stream,
            padding=config.grid["padding"], positions=sim_cfg["positions"], atom_log_cap=atom_log_cap,
        )
    else:
        sim = DeHaanSimulator(model, grid, stream, atom_log_cap=atom_log_cap)
    if mode == "auto":
        mode = "threshold" if bound is not None or sim.model.sup_bound(grid) is not None else "fixed_n"
    if mode == "threshold":
        return sim.run_threshold(bound)
    return sim.run_fixed(int(sim_cfg["n_atoms"]))


def simulate_run(
    config: RunConfig,
    *,
    executor: Executor | None = None,
    atom_log_cap: int | None = None,
) -> list[MaxStableField]:
    """Simulate ``simulation.n_reps`` independent fields, replicate i on stream spawn(i)."""

    n_reps = int(config.simulation["n_reps"])
    if n_reps < 1:
        raise DataError("empty run")
    cap = int(config.simulation["atom_log_cap"] if atom_log_cap is None else atom_log_cap)
    rng = RngStream(config.seed, STREAM_SIMULATE)
    fields = replicate(lambda i, s: _simulate_one(config, s, cap), n_reps, rng, executor)
    approx = [i for i, f in enumerate(fields) if not f.truncation.exact]
    if approx:
        logger.warning("%d of %d fields used fixed_n truncation", len(approx), n_reps)
    return fields


def simulation_summary(fields: Sequence[MaxStableField]) -> dict[str, Any]:
    return {
        "reps": [
            {"rep": i, **f.truncation.to_json(), "logged_atoms": len(f.atoms), "max_value": float(np.max(f.values))}
            for i, f in enumerate(fields)
        ]
    }


@dataclass(frozen=True)
class ClassifiedPaths:
    items: tuple[PathClassification, ...]
    total: int
    zero_on_window: int

    def to_json(self, source: str) -> dict[str, Any]:
        return {
            "source": source,
            "count": len(self.items),
            "total": self.total,
            "zero_on_window": self.zero_on_window,
            "paths": [c.to_json() for c in self.items],
        }


def classify_paths(
    paths: Sequence[SpectralPath],
    config: RunConfig,
    *,
    executor: Executor | None = None,
) -> ClassifiedPaths:
    """Run every test on each path; paths that vanish on the largest box are counted, not classified."""

    if not paths:
        raise DataError("empty run")
    grid = paths[0].grid
    radii = config.radii() or default_radii(grid)
    thresholds = config.thresholds()
    weight = config.weight()
    box = grid.box_mask(radii[-1])
    live = [(i, p) for i, p in enumerate(paths) if np.any(p.values[box] > 0)]

    def run(item: tuple[int, SpectralPath]) -> PathClassification:
        i, path = item
        return classify_path(path, radii, thresholds, weight, index=i)

    items = list(executor.map(run, live)) if executor else [run(item) for item in live]
    return ClassifiedPaths(tuple(items), len(paths), len(paths) - len(live))


def sample_model_paths(config: RunConfig, *, executor: Executor | None = None) -> list[SpectralPath]:
    n_reps = int(config.simulation["n_reps"])
    if n_reps < 1:
        raise DataError("empty run")
    grid = config.build_grid()
    values, masses = sample_paths(config.build_model(), grid, n_reps, RngStream(config.seed, STREAM_CLASSIFY), executor)
    return [SpectralPath(grid, values[i], masses[i]) for i in range(values.shape[0])]


def field_paths(fields: Sequence[MaxStableField]) -> list[SpectralPath]:
    paths = [a.path for f in fields for a in f.atoms]
    if not paths:
        raise DataError("empty run")
    return paths


@dataclass(frozen=True)
class DecomposeResult:
    decompositions: tuple[Decomposition, ...]
    extractions: tuple[M3Extraction, ...]
    identity_gaps: tuple[float, ...]
    independence: Any | None
    round_trip: RoundTrip | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "reps": [
                {
                    "rep": i,
                    **d.to_json(),
                    "m3": ex.to_json(),
                    "m3_identity_gap": gap,
                }
                for i, (d, ex, gap) in enumerate(zip(self.decompositions, self.extractions, self.identity_gaps))
            ],
            "independence": self.independence.to_json() if self.independence is not None else None,
            "m3_round_trip": self.round_trip.to_json() if self.round_trip is not None else None,
        }


def decompose_fields(
    fields: Sequence[MaxStableField],
    config: RunConfig,
    *,
    axis: str | None = None,
    policy: str | None = None,
    executor: Executor | None = None,
) -> DecomposeResult:
    """Label atoms, split each field on ``axis`` and extract the M3 representation."""

    if not fields:
        raise DataError("empty run")
    cls_cfg = config.classifier
    axis = axis or cls_cfg["axis"]
    policy = policy or cls_cfg["policy"]
    test = cls_cfg["test"]
    test = DEFAULT_TEST[axis] if test == "auto" else test
    thresholds = config.thresholds()
    decompositions = []
    extractions = []
    gaps = []
    for i, field in enumerate(fields):
        radii = config.radii() or default_radii(field.grid)
        labelled = classify_atoms(field, axis, test, radii=radii, thresholds=thresholds, executor=executor)
        decompositions.append(split_atoms(labelled, axis, policy=policy))
        extraction = extract_m3(field, cls_cfg["margin"])
        extractions.append(extraction)
        gaps.append(m3_identity_gap(field, extraction))
        logger.debug("rep %d: %s", i, decompositions[-1].counts())
    independence = independence_check(decompositions) if len(decompositions) >= 2 else None
    round_trip = None
    if cls_cfg["resimulate"]:
        round_trip = m3_round_trip(
            fields, extractions, int(cls_cfg["resimulate"]), RngStream(config.seed, STREAM_RESIMULATE),
            padding=config.grid["padding"], executor=executor,
        )
    return DecomposeResult(tuple(decompositions), tuple(extractions), tuple(gaps), independence, round_trip)
