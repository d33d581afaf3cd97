"""Atom-level decompositions of simulated fields and M3 extraction."""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass
import logging
from typing import Any, Mapping, Sequence

import numpy as np

from maxstab.models import Atom, Grid, MaxStableField, SpectralPath
from maxstab.services.catalog import EmpiricalShape
from maxstab.services.cones import TESTS, ConeVerdict, Thresholds, axis_of, default_radii
from maxstab.services.dehaan import simulate_m3
from maxstab.services.errors import ContractViolation, DataError
from maxstab.services.randkit import RngStream, replicate

logger = logging.getLogger(__name__)

POLICIES = ("strict", "assign_to_part1", "assign_to_part2")
PART1_LABELS = {"conservative", "positive"}
PART2_LABELS = {"dissipative", "null"}
DEFAULT_TEST = {"hopf": "integral", "neveu": "cesaro"}
DEFAULT_MARGIN_FRACTION = 0.1


@dataclass(frozen=True)
class Decomposition:
    part1: MaxStableField
    part2: MaxStableField
    unassigned: MaxStableField
    axis: str
    policy: str

    def reconstruction(self) -> np.ndarray:
        return np.maximum(np.maximum(self.part1.values, self.part2.values), self.unassigned.values)

    def counts(self) -> dict[str, int]:
        return {
            "part1": len(self.part1.atoms),
            "part2": len(self.part2.atoms),
            "unassigned": len(self.unassigned.atoms),
        }

    def to_json(self) -> dict[str, Any]:
        return {
            "axis": self.axis,
            "policy": self.policy,
            "counts": self.counts(),
            "part1_atoms": [a.index for a in self.part1.atoms],
            "part2_atoms": [a.index for a in self.part2.atoms],
            "unassigned_atoms": [a.index for a in self.unassigned.atoms],
        }


def _zero_verdict(axis: str, test: str) -> ConeVerdict:
    return ConeVerdict(axis, "inconclusive", test, (), Thresholds(), 0.0, "zero_path")


def classify_atoms(
    field: MaxStableField,
    axis: str,
    test: str | None = None,
    *,
    radii: Sequence[float] | None = None,
    thresholds: Thresholds | None = None,
    executor: Executor | None = None,
) -> MaxStableField:
    """Label every logged atom path on ``axis``; paths zero on the window stay inconclusive."""

    if axis not in DEFAULT_TEST:
        raise ContractViolation(f"unknown_axis:{axis}")
    name = test or DEFAULT_TEST[axis]
    if name not in TESTS or axis_of(name) != axis:
        raise ContractViolation(f"test_{name}_does_not_decide_{axis}")
    rr = list(radii) if radii is not None else default_radii(field.grid)
    th = thresholds or Thresholds()
    run = TESTS[name]

    def label(atom: Atom) -> Atom:
        if atom.path.is_zero or not np.any(atom.path.values[field.grid.box_mask(rr[-1])] > 0):
            return atom.with_label(axis, _zero_verdict(axis, name))
        return atom.with_label(axis, run(atom.path, rr, th))

    atoms = list(executor.map(label, field.atoms)) if executor else [label(a) for a in field.atoms]
    return MaxStableField(field.grid, field.values, tuple(atoms), field.truncation, field.padding)


def split_atoms(
    field: MaxStableField,
    axis: str,
    verdicts: Mapping[int, ConeVerdict] | None = None,
    policy: str = "strict",
) -> Decomposition:
    """Route atoms to part1 (conservative/positive) or part2 (dissipative/null)."""

    if policy not in POLICIES:
        raise ContractViolation(f"unknown_policy:{policy}")
    if field.truncation.overflow:
        raise DataError("cannot_split_field_with_truncated_atom_log")
    buckets: dict[str, list[Atom]] = {"part1": [], "part2": [], "unassigned": []}
    for atom in field.atoms:
        verdict = verdicts.get(atom.index) if verdicts is not None else atom.labels.get(axis)
        if verdict is None:
            raise DataError(f"missing_verdict:atom={atom.index},axis={axis}")
        if verdict.axis != axis:
            raise ContractViolation(f"verdict_axis_mismatch:{verdict.axis}!={axis}")
        if verdict.label in PART1_LABELS:
            buckets["part1"].append(atom)
        elif verdict.label in PART2_LABELS:
            buckets["part2"].append(atom)
        elif policy == "assign_to_part1":
            buckets["part1"].append(atom)
        elif policy == "assign_to_part2":
            buckets["part2"].append(atom)
        else:
            buckets["unassigned"].append(atom)
    parts = {
        name: MaxStableField.from_atoms(field.grid, atoms, field.truncation, padding=field.padding)
        for name, atoms in buckets.items()
    }
    return Decomposition(parts["part1"], parts["part2"], parts["unassigned"], axis, policy)


# --------------------------------------------------------------------------
# M3 extraction
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class M3Atom:
    """Recentred atom: U Y(x) = V Z(x - X) with Z(0) = 1 = max Z."""

    X: tuple[float, ...]
    V: float
    Z: SpectralPath
    peak: float
    index: int

    def __post_init__(self) -> None:
        if not self.V > 0:
            raise ContractViolation("m3_level_must_be_positive")

    def contribution(self) -> np.ndarray:
        return self.V * self.Z.values

    def to_json(self) -> dict[str, Any]:
        return {"index": self.index, "X": list(self.X), "V": self.V, "peak": self.peak}


@dataclass(frozen=True)
class M3Extraction:
    atoms: tuple[M3Atom, ...]
    excluded: int
    skipped_zero: int
    margin: float

    def to_json(self) -> dict[str, Any]:
        return {
            "margin": self.margin,
            "excluded_boundary": self.excluded,
            "skipped_zero": self.skipped_zero,
            "atoms": [a.to_json() for a in self.atoms],
        }


def extract_m3(field: MaxStableField, margin: float | None = None) -> M3Extraction:
    """Recentre each atom at its first (lexicographically smallest) argmax.

    Atoms whose argmax lies within ``margin`` of the window boundary are
    excluded and counted.
    """

    grid = field.grid
    radius = grid.radius
    margin = DEFAULT_MARGIN_FRACTION * radius if margin is None else float(margin)
    norms = grid.norms()
    kept: list[M3Atom] = []
    excluded = skipped = 0
    for atom in field.atoms:
        values = atom.path.values
        if atom.path.is_zero:
            skipped += 1
            continue
        idx = int(np.argmax(values))
        if norms[idx] > radius - margin + 1e-9:
            excluded += 1
            continue
        x = grid.points[idx]
        peak = float(values[idx])
        z = SpectralPath(grid.translate(-x), values / peak)
        kept.append(M3Atom(tuple(float(c) for c in x), atom.u * peak, z, peak, atom.index))
    if excluded:
        logger.warning("excluded %d atoms with boundary maxima (margin %g)", excluded, margin)
    return M3Extraction(tuple(kept), excluded, skipped, margin)


def m3_identity_gap(field: MaxStableField, extraction: M3Extraction) -> float:
    """Largest relative gap |U Y(x) - V Z(x - X)| over extracted atoms.

    V = U * peak and Z = Y / peak, so both sides agree up to the rounding of
    those two products: the gap is at most a few ulps (below 4 * machine
    epsilon).
    """

    by_index = {a.index: a for a in field.atoms}
    worst = 0.0
    for m3 in extraction.atoms:
        atom = by_index[m3.index]
        lhs = atom.contribution
        rhs = m3.contribution()
        scale = max(float(np.max(lhs)), 1e-300)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
    return worst


def empirical_shape(extractions: Sequence[M3Extraction]) -> EmpiricalShape:
    atoms = [a for ex in extractions for a in ex.atoms]
    if not atoms:
        raise DataError("no_m3_atoms_extracted")
    return EmpiricalShape.from_paths([a.Z for a in atoms], [a.peak for a in atoms])


def resimulate_m3(
    source: Sequence[M3Extraction] | EmpiricalShape,
    grid: Grid,
    rng: RngStream,
    n_reps: int = 1,
    *,
    padding: float | None = None,
    executor: Executor | None = None,
) -> list[MaxStableField]:
    """Simulate ``n_reps`` M3 fields on ``grid`` from the empirical (V, Z) law.

    ``source`` is either the extractions or a shape already built from them.
    """

    shape = source if isinstance(source, EmpiricalShape) else empirical_shape(source)
    return replicate(
        lambda i, stream: simulate_m3(shape, grid, stream, padding=padding, positions="grid"), n_reps, rng, executor
    )


def lag_pairs(fields: Sequence[MaxStableField], lag: float) -> np.ndarray:
    """(eta(0), eta(lag)) per field, one row per replicate."""

    if not fields:
        raise DataError("empty run")
    grid = fields[0].grid
    origin, other = grid.origin_index, grid.index_of(lag)
    return np.array([[f.values[origin], f.values[other]] for f in fields])


@dataclass(frozen=True)
class RoundTrip:
    lag: float
    n_source: int
    n_resimulated: int
    n_atoms: int
    ks: float

    def to_json(self) -> dict[str, Any]:
        return {
            "lag": self.lag,
            "n_source": self.n_source,
            "n_resimulated": self.n_resimulated,
            "n_atoms": self.n_atoms,
            "ks": self.ks,
        }


def m3_round_trip(
    fields: Sequence[MaxStableField],
    extractions: Sequence[M3Extraction],
    n_reps: int,
    rng: RngStream,
    *,
    lag: float = 1.0,
    padding: float | None = None,
    executor: Executor | None = None,
) -> RoundTrip:
    """Re-simulate from the extracted atoms and compare bivariate laws at ``lag``."""

    if n_reps < 1:
        raise DataError("empty run")
    shape = empirical_shape(extractions)
    resimulated = resimulate_m3(shape, fields[0].grid, rng, n_reps, padding=padding, executor=executor)
    ks = bivariate_ks(lag_pairs(fields, lag), lag_pairs(resimulated, lag))
    atoms = sum(len(ex.atoms) for ex in extractions)
    logger.info("m3 round trip at lag %g: ks %.4f over %d atoms", lag, ks, atoms)
    return RoundTrip(float(lag), len(fields), n_reps, atoms, ks)


# --------------------------------------------------------------------------
# Distributional checks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IndependenceReport:
    max_deviation: float
    n_reps: int
    rows: tuple[tuple[float, float, float, float, float], ...]

    def to_json(self) -> dict[str, Any]:
        return {
            "max_deviation": self.max_deviation,
            "n_reps": self.n_reps,
            "rows": [
                {"lag": lag, "a": a, "b": b, "joint": joint, "product": prod}
                for lag, a, b, joint, prod in self.rows
            ],
        }


def _levels(sample: np.ndarray) -> list[float]:
    qs = np.quantile(sample, [0.25, 0.5, 0.75])
    return sorted(set(float(q) for q in qs)) + [float("inf")]


def independence_check(
    decompositions: Sequence[Decomposition],
    lags: Sequence[float] = (0.0,),
    levels: Sequence[float] | None = None,
) -> IndependenceReport:
    """Compare P[part1(0) <= a, part2(x) <= b] with the product of the marginals."""

    n = len(decompositions)
    if n == 0:
        raise DataError("empty run")
    grid = decompositions[0].part1.grid
    origin = grid.origin_index
    first = np.array([d.part1.values[origin] for d in decompositions])
    rows = []
    worst = 0.0
    for lag in lags:
        idx = grid.index_of(lag)
        second = np.array([d.part2.values[idx] for d in decompositions])
        a_levels = list(levels) + [float("inf")] if levels is not None else _levels(first)
        b_levels = list(levels) + [float("inf")] if levels is not None else _levels(second)
        for a in a_levels:
            pa = first <= a
            for b in b_levels:
                pb = second <= b
                joint = float(np.mean(pa & pb))
                prod = float(np.mean(pa) * np.mean(pb))
                worst = max(worst, abs(joint - prod))
                rows.append((float(lag), a, b, joint, prod))
    return IndependenceReport(worst, n, tuple(rows))


def bivariate_ks(sample_a: np.ndarray, sample_b: np.ndarray, chunk: int = 512) -> float:
    """sup |F_a - F_b| of bivariate empirical CDFs over the pooled sample points."""

    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != 2 or b.shape[1] != 2:
        raise ContractViolation("bivariate_samples_need_two_columns")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DataError("empty run")
    pooled = np.vstack([a, b])
    worst = 0.0
    for start in range(0, pooled.shape[0], chunk):
        pts = pooled[start : start + chunk]
        fa = np.mean((a[:, None, 0] <= pts[None, :, 0]) & (a[:, None, 1] <= pts[None, :, 1]), axis=0)
        fb = np.mean((b[:, None, 0] <= pts[None, :, 0]) & (b[:, None, 1] <= pts[None, :, 1]), axis=0)
        worst = max(worst, float(np.max(np.abs(fa - fb))))
    return worst
