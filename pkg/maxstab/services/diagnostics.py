"""Monte Carlo diagnostics for ergodicity, mixing and the M3 property."""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass, field
from functools import reduce
import logging
import math
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats

from maxstab.models import Grid, MaxStableField, SpectralPath
from maxstab.services.catalog import ShapeModel, SpectralModel
from maxstab.services.cones import PathClassification, Thresholds, classify_path, default_radii
from maxstab.services.dehaan import DEFAULT_N_ATOMS, DeHaanSimulator, M3Simulator, pointwise_max, rescale
from maxstab.services.errors import ContractViolation, DataError, NumericFailure
from maxstab.services.randkit import RngStream, replicate

logger = logging.getLogger(__name__)

WILSON_Z = 3.0
PATH_CHUNK = 64
DYADIC_MAX_EXPONENT = 8
GENERIC_LAGS = (3.0, 5.0, 11.0, 23.0, 47.0, 95.0, 191.0)
DELTAS = (0.05, 0.1, 0.2)
THETA_ZS = (0.5, 1.0, 2.0)
EXCEEDANCE_FLOOR = 0.05
DECAY_FRACTION = 0.95
ERGODIC_DECAY_RATIO = 0.9
ERGODIC_STABLE_RATIO = 0.95
GROWTH_EXPONENT_LIMIT = 1.5
THETA_GROWTH_LIMIT = 0.25
STATUSES = ("supported", "rejected", "inconclusive")


def dyadic_lags(max_exponent: int = DYADIC_MAX_EXPONENT) -> tuple[float, ...]:
    return tuple(2.0**m for m in range(max_exponent + 1))


# --------------------------------------------------------------------------
# Result types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Curve:
    """Point estimates on an abscissa with standard errors or interval bounds."""

    name: str
    x: tuple[float, ...]
    estimate: tuple[float, ...]
    se: tuple[float, ...] | None = None
    lower: tuple[float, ...] | None = None
    upper: tuple[float, ...] | None = None

    def at(self, x: float) -> float:
        return self.estimate[self.x.index(float(x))]

    def rows(self) -> list[list[Any]]:
        header = ["x", "estimate"]
        cols: list[tuple[float, ...]] = [self.x, self.estimate]
        for name, col in (("se", self.se), ("lower", self.lower), ("upper", self.upper)):
            if col is not None:
                header.append(name)
                cols.append(col)
        return [header] + [[repr(float(v)) for v in row] for row in zip(*cols)]

    def to_json(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"name": self.name, "x": list(self.x), "estimate": list(self.estimate)}
        for name in ("se", "lower", "upper"):
            col = getattr(self, name)
            if col is not None:
                payload[name] = list(col)
        return payload


@dataclass(frozen=True)
class IdentityCheck:
    lag: float
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def gap(self) -> float:
        return self.lhs - self.rhs

    @property
    def pooled_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    def to_json(self) -> dict[str, Any]:
        return {
            "lag": self.lag,
            "lhs": self.lhs,
            "lhs_se": self.lhs_se,
            "rhs": self.rhs,
            "rhs_se": self.rhs_se,
            "gap": self.gap,
            "pooled_se": self.pooled_se,
        }


@dataclass(frozen=True)
class CesaroResult:
    radii: tuple[float, ...]
    curve: tuple[float, ...]
    median: tuple[float, ...]
    lower_decile: tuple[float, ...]
    upper_decile: tuple[float, ...]

    def as_curves(self) -> list[Curve]:
        return [
            Curve("cesaro_mean", self.radii, self.curve),
            Curve("cesaro_path_median", self.radii, self.median, lower=self.lower_decile, upper=self.upper_decile),
        ]

    def to_json(self) -> dict[str, Any]:
        return {
            "radii": list(self.radii),
            "curve": list(self.curve),
            "median": list(self.median),
            "lower_decile": list(self.lower_decile),
            "upper_decile": list(self.upper_decile),
        }


@dataclass(frozen=True)
class ThetaEstimate:
    zs: tuple[float, ...]
    thetas: tuple[float | None, ...]
    at_median: float
    n: int
    exact_sup: bool

    @property
    def usable(self) -> tuple[float, ...]:
        return tuple(t for t in self.thetas if t is not None)

    @property
    def spread(self) -> float | None:
        vals = self.usable
        if not vals or np.mean(vals) == 0:
            return None
        return float((max(vals) - min(vals)) / np.mean(vals))

    def to_json(self) -> dict[str, Any]:
        return {
            "zs": list(self.zs),
            "thetas": list(self.thetas),
            "unusable": [z for z, t in zip(self.zs, self.thetas) if t is None],
            "at_median": self.at_median,
            "spread": self.spread,
            "n": self.n,
            "exact_sup": self.exact_sup,
        }


@dataclass(frozen=True)
class LocalBoundedness:
    """Growth exponent of the replicate maximum of window sups plus theta growth."""

    exponent: float | None
    tail_count: int
    paddings: tuple[float, ...] = ()
    thetas: tuple[float, ...] = ()

    @property
    def theta_growth(self) -> float | None:
        if len(self.thetas) < 2 or self.thetas[0] <= 0:
            return None
        return (self.thetas[-1] - self.thetas[0]) / self.thetas[0]

    @property
    def holds(self) -> bool | None:
        if self.exponent is None:
            return None
        if self.exponent > GROWTH_EXPONENT_LIMIT:
            return False
        growth = self.theta_growth
        return growth is None or growth < THETA_GROWTH_LIMIT

    def to_json(self) -> dict[str, Any]:
        return {
            "exponent": self.exponent,
            "tail_count": self.tail_count,
            "paddings": list(self.paddings),
            "thetas": list(self.thetas),
            "theta_growth": self.theta_growth,
            "holds": self.holds,
        }


@dataclass(frozen=True)
class Verdict:
    criterion: str
    status: str
    evidence: Mapping[str, Any]
    note: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"criterion": self.criterion, "status": self.status, "evidence": dict(self.evidence), "note": self.note}


@dataclass(frozen=True)
class ClassifierTally:
    total: int
    zero_on_window: int
    counts: Mapping[str, Mapping[str, int]]
    conflicts: int

    def fraction(self, test: str, label: str) -> float | None:
        classified = self.total - self.zero_on_window
        if classified <= 0:
            return None
        return self.counts.get(test, {}).get(label, 0) / classified

    def to_json(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "zero_on_window": self.zero_on_window,
            "counts": {k: dict(v) for k, v in self.counts.items()},
            "conflicts": self.conflicts,
        }


# --------------------------------------------------------------------------
# Sampling helpers
# --------------------------------------------------------------------------


def wilson_interval(successes: int, n: int, z: float = WILSON_Z) -> tuple[float, float, float]:
    if n <= 0:
        raise DataError("empty run")
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return p, max(0.0, center - half), min(1.0, center + half)


def lag_grid(lags: Sequence[float], d: int = 1, *, lattice: bool = False) -> Grid:
    xs = sorted({0.0, *(float(x) for x in lags)})
    pts = [[x] + [0.0] * (d - 1) for x in xs]
    return Grid.from_points(pts, lattice=lattice)


def sample_paths(
    model: SpectralModel,
    grid: Grid,
    n_reps: int,
    rng: RngStream,
    executor: Executor | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Values and cell masses of ``n_reps`` independent spectral paths."""

    if n_reps < 1:
        raise DataError("empty run")
    chunks = math.ceil(n_reps / PATH_CHUNK)

    def draw(i: int, stream: RngStream) -> tuple[np.ndarray, np.ndarray | None]:
        return model.sample_arrays(grid, stream, min(PATH_CHUNK, n_reps - i * PATH_CHUNK))

    parts = replicate(draw, chunks, rng, executor)
    values = np.vstack([v for v, _ in parts])
    if all(m is not None for _, m in parts):
        masses = np.vstack([m for _, m in parts])
    elif grid.spacing is not None or grid.lattice:
        masses = values * grid.cell_volume
    else:
        masses = values
    return values, masses


def simulate_field(
    model: SpectralModel,
    grid: Grid,
    rng: RngStream,
    *,
    n_atoms: int | None = None,
    atom_log_cap: int = 0,
) -> MaxStableField:
    """Exact field for bounded models, fixed-n otherwise."""

    sim = DeHaanSimulator(model, grid, rng, atom_log_cap=atom_log_cap)
    if n_atoms is None and model.sup_bound(grid) is not None:
        return sim.run_threshold()
    return sim.run_fixed(n_atoms or DEFAULT_N_ATOMS)


def sample_fields(
    model: SpectralModel,
    grid: Grid,
    n_reps: int,
    rng: RngStream,
    *,
    n_atoms: int | None = None,
    executor: Executor | None = None,
) -> tuple[np.ndarray, bool]:
    if n_reps < 1:
        raise DataError("empty run")
    fields = replicate(lambda i, s: simulate_field(model, grid, s, n_atoms=n_atoms), n_reps, rng, executor)
    return np.vstack([f.values for f in fields]), all(f.truncation.exact for f in fields)


# --------------------------------------------------------------------------
# Estimators
# --------------------------------------------------------------------------


def min_expectation_curve(grid: Grid, values: np.ndarray, lags: Sequence[float]) -> Curve:
    y0 = values[:, grid.origin_index]
    est, se = [], []
    n = values.shape[0]
    for lag in lags:
        m = np.minimum(values[:, grid.index_of(lag)], y0)
        est.append(float(m.mean()))
        se.append(float(m.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0)
    return Curve("min_expectation", tuple(float(x) for x in lags), tuple(est), tuple(se))


def est_min_expectation(
    model: SpectralModel,
    lags: Sequence[float],
    n_reps: int,
    rng: RngStream,
    *,
    lattice: bool = False,
    executor: Executor | None = None,
) -> Curve:
    """Sample mean of min(Y(x), Y(0)) per lag with standard errors."""

    if n_reps < 100:
        raise ContractViolation("min_expectation_needs_at_least_100_reps")
    grid = lag_grid(lags, model.d, lattice=lattice)
    values, _ = sample_paths(model, grid, n_reps, rng, executor)
    return min_expectation_curve(grid, values, lags)


def exceedance_curves(grid: Grid, values: np.ndarray, lags: Sequence[float], deltas: Sequence[float]) -> list[Curve]:
    n = values.shape[0]
    curves = []
    for delta in deltas:
        est, lo, hi = [], [], []
        for lag in lags:
            hits = int(np.sum(values[:, grid.index_of(lag)] > delta))
            p, a, b = wilson_interval(hits, n)
            est.append(p)
            lo.append(a)
            hi.append(b)
        curves.append(
            Curve(f"exceedance_{delta:g}", tuple(float(x) for x in lags), tuple(est), lower=tuple(lo), upper=tuple(hi))
        )
    return curves


def est_exceedance(
    model: SpectralModel,
    lags: Sequence[float],
    deltas: Sequence[float],
    n_reps: int,
    rng: RngStream,
    *,
    lattice: bool = False,
    executor: Executor | None = None,
) -> list[Curve]:
    """P[Y(x) > delta] over the lag ladder, one curve per delta, Wilson bounds."""

    grid = lag_grid(lags, model.d, lattice=lattice)
    values, _ = sample_paths(model, grid, n_reps, rng, executor)
    return exceedance_curves(grid, values, lags, deltas)


def check_unit_scale(model: SpectralModel, grid: Grid) -> None:
    mean = model.mean_scale(grid)
    if mean is None or not model.is_stationary or abs(mean - 1.0) > 1e-9:
        raise ContractViolation(
            f"identity_needs_unit_scale:mean={mean},stationary={model.is_stationary};"
            " rescale the model so that E[Y(x)] = 1"
        )


def est_bivariate_identity(
    model: SpectralModel,
    lag: float,
    n_reps: int,
    rng: RngStream,
    *,
    lattice: bool = False,
    n_atoms: int | None = None,
    executor: Executor | None = None,
) -> IdentityCheck:
    """E[Y(x) min Y(0)] from paths against 2 + log P[eta(x) <= 1, eta(0) <= 1] from fields."""

    grid = lag_grid([lag], model.d, lattice=lattice)
    check_unit_scale(model, grid)
    values, _ = sample_paths(model, grid, n_reps, rng.spawn(0), executor)
    lhs = min_expectation_curve(grid, values, [lag])
    fields, _ = sample_fields(model, grid, n_reps, rng.spawn(1), n_atoms=n_atoms, executor=executor)
    p = float(np.mean(np.all(fields <= 1.0, axis=1)))
    if p <= 0:
        raise NumericFailure("log_of_zero_probability")
    rhs_se = math.sqrt((1 - p) / (n_reps * p))
    return IdentityCheck(float(lag), lhs.estimate[0], lhs.se[0], 2.0 + math.log(p), rhs_se)  # type: ignore[index]


def est_cesaro_criterion(
    model: SpectralModel,
    grid: Grid,
    radii: Sequence[float],
    n_reps: int,
    rng: RngStream,
    *,
    executor: Executor | None = None,
) -> CesaroResult:
    """Mean curve C(r) of min(Y(x), Y(0)) over B_r and per-path Cesaro averages A_r."""

    rr = [float(r) for r in radii]
    if not rr or rr[-1] > grid.radius + 1e-9:
        raise ContractViolation("cesaro_radii_outside_window")
    values, masses = sample_paths(model, grid, n_reps, rng, executor)
    m_hat = np.minimum(values, values[:, [grid.origin_index]]).mean(axis=0)
    curve, med, lo, hi = [], [], [], []
    unit = grid.cell_volume
    for r in rr:
        box = grid.box_mask(r)
        count = int(box.sum())
        curve.append(float(m_hat[box].mean()))
        averages = masses[:, box].sum(axis=1) / (count * unit)
        q10, q50, q90 = np.quantile(averages, [0.1, 0.5, 0.9])
        med.append(float(q50))
        lo.append(float(q10))
        hi.append(float(q90))
    return CesaroResult(tuple(rr), tuple(curve), tuple(med), tuple(lo), tuple(hi))


def window_sups(
    fields: Sequence[MaxStableField],
    lo: Sequence[float],
    hi: Sequence[float],
    shape: ShapeModel | None = None,
) -> tuple[np.ndarray, bool]:
    """sup of each field over the box [lo, hi]; exact over the continuum when the
    shape provides ``sup_over`` and atoms carry their origins."""

    lo_a = np.asarray(lo, dtype=float)
    hi_a = np.asarray(hi, dtype=float)
    exact = shape is not None and all(
        not f.truncation.overflow and f.atoms and f.atoms[0].origin is not None for f in fields
    )
    sups = np.empty(len(fields))
    for i, f in enumerate(fields):
        inside = np.all((f.grid.points >= lo_a - 1e-9) & (f.grid.points <= hi_a + 1e-9), axis=1)
        if not np.any(inside):
            raise ContractViolation("theta_box_contains_no_grid_point")
        grid_sup = float(f.values[inside].max())
        if exact:
            best = max(a.u * shape.sup_over(lo_a, hi_a, a.origin) for a in f.atoms)  # type: ignore[union-attr]
            sups[i] = max(best, grid_sup)
        else:
            sups[i] = grid_sup
    return sups, exact


def theta_from_sups(sups: np.ndarray, zs: Sequence[float] = THETA_ZS, *, exact_sup: bool = False) -> ThetaEstimate:
    """theta(z) = -z log P[sup_K eta <= z]; z with P = 0 is reported unusable."""

    if len(sups) == 0:
        raise DataError("empty run")
    thetas: list[float | None] = []
    for z in zs:
        if not z > 0:
            raise ContractViolation("theta_levels_must_be_positive")
        p = float(np.mean(sups <= z))
        if p <= 0:
            logger.warning("theta level z=%g unusable: no replication below it", z)
            thetas.append(None)
        else:
            thetas.append(abs(-z * math.log(p)))
    median = float(np.median(sups))
    return ThetaEstimate(tuple(float(z) for z in zs), tuple(thetas), median * math.log(2.0), len(sups), exact_sup)


def est_theta(
    fields: Sequence[MaxStableField],
    K: tuple[Sequence[float], Sequence[float]],
    zs: Sequence[float] = THETA_ZS,
    shape: ShapeModel | None = None,
) -> ThetaEstimate:
    sups, exact = window_sups(fields, K[0], K[1], shape)
    return theta_from_sups(sups, zs, exact_sup=exact)


def theta_quadrature(shape: ShapeModel, lo: float, hi: float, n_points: int = 20001) -> float:
    """Midpoint rule for intensity * integral of sup_{x in [lo, hi]} Z(x - y) dy (d = 1)."""

    if shape.d != 1:
        raise ContractViolation("theta_quadrature_is_one_dimensional")
    rho = shape.support_radius
    a, b = lo - rho, hi + rho
    step = (b - a) / n_points
    ys = a + step * (np.arange(n_points) + 0.5)
    total = sum(shape.sup_over([lo], [hi], [y]) for y in ys)
    return float(total * step * shape.intensity)


def hill_exponent(sups: np.ndarray, tail_fraction: float = 0.1, min_tail: int = 10) -> tuple[float | None, int]:
    """Hill estimate of 1/alpha, the growth exponent of max over n replications."""

    x = np.sort(np.asarray(sups, dtype=float)[np.asarray(sups) > 0])
    n = x.size
    k = max(min_tail, int(n * tail_fraction))
    if n <= k:
        return None, 0
    logs = np.log(x)
    return float(np.mean(logs[n - k :]) - logs[n - k - 1]), k


def local_boundedness(
    sups: np.ndarray,
    paddings: Sequence[float] = (),
    thetas: Sequence[float] = (),
) -> LocalBoundedness:
    exponent, k = hill_exponent(sups)
    return LocalBoundedness(exponent, k, tuple(float(p) for p in paddings), tuple(float(t) for t in thetas))


def max_stability_test(
    model: SpectralModel,
    n_fold: int,
    points: Sequence[float],
    n_reps: int,
    rng: RngStream,
    *,
    n_atoms: int | None = None,
    executor: Executor | None = None,
) -> dict[float, float]:
    """KS distance between (1/n) max of n fields and a direct field, per point."""

    if n_fold < 2:
        raise ContractViolation("fold_needs_at_least_two_fields")
    grid = lag_grid(points, model.d)

    def folded(i: int, stream: RngStream) -> np.ndarray:
        parts = [simulate_field(model, grid, stream.spawn(j), n_atoms=n_atoms) for j in range(n_fold)]
        return rescale(reduce(pointwise_max, parts), 1.0 / n_fold).values

    left = np.vstack(replicate(folded, n_reps, rng.spawn(0), executor))
    right, _ = sample_fields(model, grid, n_reps, rng.spawn(1), n_atoms=n_atoms, executor=executor)
    return {
        float(x): float(stats.ks_2samp(left[:, grid.index_of(x)], right[:, grid.index_of(x)]).statistic)
        for x in points
    }


def classify_sample(
    model: SpectralModel,
    grid: Grid,
    n_paths: int,
    rng: RngStream,
    *,
    radii: Sequence[float] | None = None,
    thresholds: Thresholds | None = None,
    executor: Executor | None = None,
) -> tuple[list[PathClassification], ClassifierTally]:
    rr = list(radii) if radii is not None else default_radii(grid)
    values, masses = sample_paths(model, grid, n_paths, rng, executor)
    box = grid.box_mask(rr[-1])
    results: list[PathClassification] = []
    zero = 0
    for i in range(values.shape[0]):
        if not np.any(values[i, box] > 0):
            zero += 1
            continue
        path = SpectralPath(grid, values[i], masses[i])
        results.append(classify_path(path, rr, thresholds, index=i))
    counts: dict[str, dict[str, int]] = {}
    for item in results:
        for name, v in item.verdicts.items():
            bucket = counts.setdefault(name, {})
            bucket[v.label] = bucket.get(v.label, 0) + 1
    conflicts = sum(1 for item in results if item.conflicts)
    return results, ClassifierTally(values.shape[0], zero, counts, conflicts)


# --------------------------------------------------------------------------
# Verdicts
# --------------------------------------------------------------------------


def _ergodic_verdict(cesaro: CesaroResult) -> Verdict:
    if cesaro.median[0] > 0:
        ratio, source = cesaro.median[-1] / cesaro.median[0], "path_median"
    elif cesaro.curve[0] > 0:
        ratio, source = cesaro.curve[-1] / cesaro.curve[0], "mean_curve"
    else:
        return Verdict("ergodic", "inconclusive", {"source": "none"}, "empty cesaro curves")
    evidence = {"source": source, "ratio": ratio, "r_first": cesaro.radii[0], "r_last": cesaro.radii[-1]}
    if ratio <= ERGODIC_DECAY_RATIO:
        return Verdict("ergodic", "supported", evidence)
    if ratio >= ERGODIC_STABLE_RATIO:
        return Verdict("ergodic", "rejected", evidence)
    return Verdict("ergodic", "inconclusive", evidence)


def _tail(lags: Sequence[float], ladder: Sequence[float], count: int = 2) -> list[float]:
    present = [x for x in ladder if x in lags]
    return present[-count:]


def _mixing_verdict(curves: Sequence[Curve], dyadic: Sequence[float], generic: Sequence[float]) -> Verdict:
    evidence: dict[str, Any] = {}
    decayed_all = True
    persists = False
    for curve in curves:
        lags = list(curve.x)
        idx = {x: lags.index(x) for x in lags}
        tails = {"dyadic": _tail(lags, dyadic), "generic": _tail(lags, generic)}
        upper = max(curve.upper[idx[x]] for t in tails.values() for x in t)  # type: ignore[index]
        decayed = upper <= EXCEEDANCE_FLOOR
        persist_by = [
            name for name, t in tails.items() if t and min(curve.lower[idx[x]] for x in t) > EXCEEDANCE_FLOOR  # type: ignore[index]
        ]
        evidence[curve.name] = {
            "tail_lags": tails,
            "max_upper": upper,
            "persistent_ladders": persist_by,
        }
        decayed_all = decayed_all and decayed
        persists = persists or bool(persist_by)
    if persists:
        return Verdict("mixing", "rejected", evidence)
    if decayed_all:
        return Verdict("mixing", "supported", evidence)
    return Verdict("mixing", "inconclusive", evidence)


def _m3_verdict(tally: ClassifierTally, boundedness: LocalBoundedness | None) -> Verdict:
    frac = tally.fraction("decay", "dissipative")
    evidence: dict[str, Any] = {
        "decay_dissipative_fraction": frac,
        "local_boundedness": None if boundedness is None else boundedness.to_json(),
    }
    if frac is None:
        return Verdict("m3", "inconclusive", evidence, "no path reached the window")
    holds = None if boundedness is None else boundedness.holds
    if frac >= DECAY_FRACTION and holds:
        return Verdict("m3", "supported", evidence)
    if frac < 0.5 or holds is False:
        return Verdict("m3", "rejected", evidence)
    return Verdict("m3", "inconclusive", evidence)


def _conflict_note(tally: ClassifierTally, boundedness: LocalBoundedness | None) -> str:
    classified = tally.total - tally.zero_on_window
    if not classified:
        return ""
    if tally.conflicts * 2 > classified:
        integral_dissipative = tally.counts.get("integral", {}).get("dissipative", 0)
        return (
            f"integrable_without_decay on {tally.conflicts}/{classified} paths "
            f"(integral dissipative on {integral_dissipative})"
        )
    # a finite window rarely certifies integrability; a diverging theta stands in for it
    growth = None if boundedness is None else boundedness.theta_growth
    persistent = tally.fraction("decay", "conservative") or 0.0
    box_sized = tally.fraction("integral", "conservative") or 0.0
    if growth is not None and growth >= THETA_GROWTH_LIMIT and persistent > 0.5 and box_sized < 0.5:
        return (
            f"integrable_without_decay: sups persist on {persistent:.0%} of paths, "
            f"integral conservative on {box_sized:.0%}, theta growth {growth:.3g} over paddings"
        )
    return ""


def verdict(
    cesaro: CesaroResult,
    exceedance: Sequence[Curve],
    tally: ClassifierTally,
    boundedness: LocalBoundedness | None,
    *,
    dyadic: Sequence[float] = dyadic_lags(),
    generic: Sequence[float] = GENERIC_LAGS,
) -> dict[str, Verdict]:
    """Tri-state verdicts with the hierarchy m3 => mixing => ergodic enforced."""

    out = {
        "ergodic": _ergodic_verdict(cesaro),
        "mixing": _mixing_verdict(exceedance, dyadic, generic),
        "m3": _m3_verdict(tally, boundedness),
    }
    note = _conflict_note(tally, boundedness)
    if note:
        return {k: Verdict(k, "inconclusive", v.evidence, note) for k, v in out.items()}

    def demote(name: str, status: str, note: str) -> None:
        out[name] = Verdict(name, status, out[name].evidence, note)

    if out["ergodic"].status == "rejected":
        if out["mixing"].status == "supported":
            demote("mixing", "inconclusive", "contradicts rejected ergodicity")
        else:
            demote("mixing", "rejected", "implied by rejected ergodicity")
    if out["mixing"].status == "rejected" and out["m3"].status != "rejected":
        demote("m3", "rejected" if out["m3"].status == "inconclusive" else "inconclusive", "mixing rejected")
    if out["mixing"].status == "supported" and out["ergodic"].status != "supported":
        demote("mixing", "inconclusive", "ergodicity not supported")
    if out["m3"].status == "supported" and out["mixing"].status != "supported":
        demote("m3", "inconclusive", "mixing not supported")
    return out


# --------------------------------------------------------------------------
# Orchestration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticSettings:
    n_reps: int = 1000
    dyadic_max_exponent: int = DYADIC_MAX_EXPONENT
    generic_lags: tuple[float, ...] = GENERIC_LAGS
    deltas: tuple[float, ...] = DELTAS
    radii: tuple[float, ...] | None = None
    zs: tuple[float, ...] = THETA_ZS
    theta_box: tuple[float, float] = (0.0, 1.0)
    paddings: tuple[float, ...] | None = None
    identity_lags: tuple[float, ...] = ()
    fold: int = 0
    n_atoms: int | None = None
    n_paths: int | None = None
    thresholds: Thresholds = field(default_factory=Thresholds)

    @property
    def lags(self) -> tuple[float, ...]:
        return tuple(sorted(set(dyadic_lags(self.dyadic_max_exponent)) | set(self.generic_lags)))


@dataclass(frozen=True)
class DiagnosticReport:
    model: Mapping[str, Any]
    provenance: Mapping[str, Any]
    min_expectation: Curve
    exceedance: tuple[Curve, ...]
    cesaro: CesaroResult
    tally: ClassifierTally
    theta: ThetaEstimate
    boundedness: LocalBoundedness
    verdicts: Mapping[str, Verdict]
    identity: tuple[IdentityCheck, ...] = ()
    max_stability: Mapping[float, float] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def curves(self) -> list[Curve]:
        return [self.min_expectation, *self.exceedance, *self.cesaro.as_curves()]

    def to_json(self) -> dict[str, Any]:
        return {
            "model": dict(self.model),
            "provenance": dict(self.provenance),
            "min_expectation": self.min_expectation.to_json(),
            "exceedance": [c.to_json() for c in self.exceedance],
            "cesaro": self.cesaro.to_json(),
            "classifier": self.tally.to_json(),
            "theta": self.theta.to_json(),
            "local_boundedness": self.boundedness.to_json(),
            "identity": [i.to_json() for i in self.identity],
            "max_stability": {repr(k): v for k, v in self.max_stability.items()},
            "verdicts": {k: v.to_json() for k, v in self.verdicts.items()},
            "notes": list(self.notes),
        }


def _theta_grid(grid: Grid, box: tuple[float, float]) -> Grid:
    reach = max(abs(box[0]), abs(box[1]), 1.0)
    if grid.lattice:
        return Grid.window(grid.d, math.ceil(reach), lattice=True)
    return Grid.window(grid.d, math.ceil(reach), grid.spacing or 1.0)


def _theta_fields(
    model: SpectralModel,
    grid: Grid,
    settings: DiagnosticSettings,
    rng: RngStream,
    executor: Executor | None,
) -> tuple[ThetaEstimate, LocalBoundedness, bool]:
    k_grid = _theta_grid(grid, settings.theta_box)
    lo = [settings.theta_box[0]] * grid.d
    hi = [settings.theta_box[1]] * grid.d
    n = settings.n_reps
    if isinstance(model, ShapeModel):
        base = model.resolve(k_grid).support_radius
        paddings = settings.paddings or (base, 2 * base, 4 * base)
        estimates = []
        sups_first = None
        for j, padding in enumerate(paddings):
            shape = model.resolve(k_grid, padding)

            def run(i: int, stream: RngStream, shape=shape, padding=padding) -> MaxStableField:
                return M3Simulator(shape, k_grid, stream, padding=padding).run_threshold()

            fields = replicate(run, n, rng.spawn(j), executor)
            sups, exact = window_sups(fields, lo, hi, shape)
            estimates.append(theta_from_sups(sups, settings.zs, exact_sup=exact))
            if sups_first is None:
                sups_first = sups
        thetas = [e.at_median for e in estimates]
        return estimates[-1], local_boundedness(sups_first, paddings, thetas), True  # type: ignore[arg-type]
    fields = replicate(
        lambda i, s: simulate_field(model, k_grid, s, n_atoms=settings.n_atoms), n, rng, executor
    )
    sups, exact = window_sups(fields, lo, hi)
    return theta_from_sups(sups, settings.zs), local_boundedness(sups), all(f.truncation.exact for f in fields)


def run_diagnostics(
    model: SpectralModel,
    grid: Grid,
    settings: DiagnosticSettings,
    rng: RngStream,
    executor: Executor | None = None,
) -> DiagnosticReport:
    """Assemble the full report for ``model`` on the window ``grid``."""

    if settings.n_reps < 1:
        raise DataError("empty run")
    lags = settings.lags
    notes: list[str] = []
    logger.info("diagnostics: lag sample (%d reps)", settings.n_reps)
    l_grid = lag_grid(lags, model.d, lattice=grid.lattice)
    values, _ = sample_paths(model, l_grid, settings.n_reps, rng.spawn(0), executor)
    m_curve = min_expectation_curve(l_grid, values, (0.0, *lags))
    exceed = exceedance_curves(l_grid, values, lags, settings.deltas)

    logger.info("diagnostics: cesaro curves")
    radii = settings.radii or tuple(default_radii(grid))
    cesaro = est_cesaro_criterion(model, grid, radii, settings.n_reps, rng.spawn(1), executor=executor)

    logger.info("diagnostics: path classification")
    n_paths = settings.n_paths or min(settings.n_reps, 200)
    _, tally = classify_sample(
        model, grid, n_paths, rng.spawn(2), radii=radii, thresholds=settings.thresholds, executor=executor
    )

    logger.info("diagnostics: theta and local boundedness")
    theta, bounded, exact = _theta_fields(model, grid, settings, rng.spawn(3), executor)
    for z, t in zip(theta.zs, theta.thetas):
        if t is None:
            notes.append(f"theta unusable at z={z:g}")

    identity = []
    for j, lag in enumerate(settings.identity_lags):
        try:
            identity.append(
                est_bivariate_identity(
                    model, lag, settings.n_reps, rng.spawn(4, j),
                    lattice=grid.lattice, n_atoms=settings.n_atoms, executor=executor,
                )
            )
        except ContractViolation as exc:
            logger.warning("bivariate identity skipped: %s", exc)
            notes.append(str(exc))
            break

    fold = {}
    if settings.fold >= 2:
        fold = max_stability_test(
            model, settings.fold, [0.0], settings.n_reps, rng.spawn(5), n_atoms=settings.n_atoms, executor=executor
        )

    verdicts = verdict(cesaro, exceed, tally, bounded, dyadic=dyadic_lags(settings.dyadic_max_exponent),
                       generic=settings.generic_lags)
    provenance = {
        "rng": rng.describe(),
        "n_reps": settings.n_reps,
        "n_paths": n_paths,
        "fields_exact": exact,
        "n_atoms": settings.n_atoms,
    }
    if not exact:
        logger.warning("diagnostic fields used fixed_n truncation (%s atoms)", settings.n_atoms or DEFAULT_N_ATOMS)
    return DiagnosticReport(
        model.describe(), provenance, m_curve, tuple(exceed), cesaro, tally, theta, bounded, verdicts,
        tuple(identity), fold, tuple(notes),
    )
