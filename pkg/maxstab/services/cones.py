"""Finite-window cone classification of spectral paths.

Every test computes a trace of box integrals I_r, Cesaro averages A_r and
annulus sups s_r over increasing radii, then maps the trace to a label with
:func:`relabel`. Absolute thresholds (``eps_abs``, ``floor``) apply to the
path divided by its sup over the largest box, so labels do not change when a
path is multiplied by a positive constant.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
import logging
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import ndimage

from maxstab.models import Grid, SpectralPath
from maxstab.services.errors import ContractViolation, DataError

logger = logging.getLogger(__name__)

AXES = ("hopf", "neveu")
HOPF_LABELS = ("conservative", "dissipative", "inconclusive")
NEVEU_LABELS = ("positive", "null", "inconclusive")
WEIGHTED_EVIDENCE = ("finite", "divergent", "undetermined")
DYADIC_EXPONENTS = range(3, 11)

_RADIUS_TOL = 1e-9


@dataclass(frozen=True)
class Thresholds:
    eps_rel: float = 0.01
    eps_abs: float = 0.05
    growth_window: int = 4
    floor: float = 0.1
    slope: float = -0.1
    k_halfwidth: float = 0.5

    def __post_init__(self) -> None:
        if self.growth_window < 2:
            raise ContractViolation("growth_window_must_be_at_least_two")
        if not (self.eps_rel > 0 and self.eps_abs > 0 and self.floor > 0 and self.k_halfwidth > 0):
            raise ContractViolation("thresholds_must_be_positive")

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any] | None) -> "Thresholds":
        if not data:
            return cls()
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


@dataclass(frozen=True)
class TraceRow:
    r: float
    integral: float
    average: float
    annulus_sup: float

    def to_json(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class ConeVerdict:
    axis: str
    label: str
    test: str
    trace: tuple[TraceRow, ...]
    thresholds: Thresholds
    scale: float
    evidence: str = ""

    @property
    def radii(self) -> np.ndarray:
        return np.array([row.r for row in self.trace])

    def to_json(self) -> dict[str, Any]:
        return {
            "axis": self.axis,
            "label": self.label,
            "test": self.test,
            "evidence": self.evidence,
            "scale": self.scale,
            "thresholds": self.thresholds.to_json(),
            "trace": [row.to_json() for row in self.trace],
        }

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> "ConeVerdict":
        return cls(
            axis=payload["axis"],
            label=payload["label"],
            test=payload["test"],
            trace=tuple(TraceRow(**row) for row in payload["trace"]),
            thresholds=Thresholds.from_mapping(payload.get("thresholds")),
            scale=float(payload["scale"]),
            evidence=payload.get("evidence", ""),
        )


@dataclass(frozen=True)
class WeightFunction:
    """Positive integrable weight, non-increasing in |x|.

    ``exponential``: exp(-rate |x|). ``power``: (1 + |x|)^-exponent with
    exponent > 1.
    """

    kind: str = "exponential"
    rate: float = 1.0
    exponent: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("exponential", "power"):
            raise ContractViolation(f"unknown_weight:{self.kind}")
        if self.kind == "exponential" and not self.rate > 0:
            raise ContractViolation("weight_rate_must_be_positive")
        if self.kind == "power" and not self.exponent > 1:
            raise ContractViolation("power_weight_needs_exponent_above_one")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        a = np.abs(np.asarray(x, dtype=float))
        if self.kind == "exponential":
            return np.exp(-self.rate * a)
        return (1.0 + a) ** (-self.exponent)

    def describe(self) -> dict[str, Any]:
        if self.kind == "exponential":
            return {"kind": self.kind, "rate": self.rate}
        return {"kind": self.kind, "exponent": self.exponent}


def default_radii(grid: Grid) -> list[float]:
    """Dyadic radii 2^3..2^10, in units of h on continuous grids, clipped to the window."""

    unit = 1.0 if grid.lattice else float(grid.spacing or 1.0)
    radius = grid.radius
    radii = [unit * 2.0**k for k in DYADIC_EXPONENTS if unit * 2.0**k <= radius + _RADIUS_TOL]
    if len(radii) < 4:
        radii = [radius / 8.0, radius / 4.0, radius / 2.0, radius]
    return radii


def _check_radii(radii: Sequence[float], window: float) -> np.ndarray:
    rr = np.asarray(radii, dtype=float)
    if rr.size < 4:
        raise ContractViolation("needs_at_least_four_radii")
    if np.any(np.diff(rr) <= 0) or rr[0] <= 0:
        raise ContractViolation("radii_must_be_increasing")
    if rr[-1] > window + _RADIUS_TOL:
        raise ContractViolation(f"radius_outside_window:{rr[-1]}>{window}")
    return rr


def _trace(grid: Grid, values: np.ndarray, masses: np.ndarray, radii: np.ndarray) -> tuple[TraceRow, ...]:
    norms = grid.norms()
    order = np.argsort(norms, kind="stable")
    sorted_norms = norms[order]
    cumulative = np.cumsum(masses[order])
    unit = grid.cell_volume
    rows = []
    for r in radii:
        count = int(np.searchsorted(sorted_norms, r + _RADIUS_TOL, side="right"))
        integral = float(cumulative[count - 1]) if count else 0.0
        annulus = (norms > r / 2 + _RADIUS_TOL) & (norms <= r + _RADIUS_TOL)
        s = float(values[annulus].max()) if np.any(annulus) else 0.0
        rows.append(TraceRow(float(r), integral, integral / (count * unit) if count else 0.0, s))
    return tuple(rows)


def box_trace(path: SpectralPath, radii: Sequence[float]) -> tuple[tuple[TraceRow, ...], float]:
    """Trace rows plus the normaliser (sup of the path over the largest box)."""

    if path.is_zero:
        raise ContractViolation("zero_path_rejected")
    rr = _check_radii(radii, path.window_radius)
    scale = float(path.values[path.grid.box_mask(rr[-1])].max())
    if scale <= 0:
        raise ContractViolation("zero_path_rejected")
    return _trace(path.grid, path.values, path.masses, rr), scale


# --------------------------------------------------------------------------
# Labelling rules
# --------------------------------------------------------------------------


def _integral_rule(trace: Sequence[TraceRow], scale: float, th: Thresholds) -> tuple[str, str]:
    w = min(th.growth_window, len(trace))
    integral = np.array([row.integral for row in trace])
    average = np.array([row.average for row in trace]) / scale
    last = integral[-1]
    if last <= 0:
        return "inconclusive", "empty_box"
    growth = (last - integral[-w]) / last
    if growth < th.eps_rel:
        return "dissipative", f"relative_growth={growth:.6g}"
    if average[-w:].min() >= th.floor:
        return "conservative", f"min_average={average[-w:].min():.6g}"
    return "inconclusive", f"relative_growth={growth:.6g}"


def _decay_rule(trace: Sequence[TraceRow], scale: float, th: Thresholds) -> tuple[str, str]:
    w = min(th.growth_window, len(trace))
    sups = np.array([row.annulus_sup for row in trace]) / scale
    tail = sups[-w:]
    if sups[-1] < th.eps_abs and sups[-2] < th.eps_abs and sups[-1] <= sups[-2]:
        return "dissipative", f"last_sup={sups[-1]:.6g}"
    hits = int(np.sum(tail >= th.floor))
    if hits >= w / 2:
        return "conservative", f"annuli_above_floor={hits}/{w}"
    return "inconclusive", f"last_sup={sups[-1]:.6g}"


def _loglog_slope(radii: np.ndarray, average: np.ndarray) -> float | None:
    if np.any(average <= 0):
        return None
    return float(np.polyfit(np.log(radii), np.log(average), 1)[0])


def _cesaro_rule(trace: Sequence[TraceRow], scale: float, th: Thresholds) -> tuple[str, str]:
    w = min(th.growth_window, len(trace))
    radii = np.array([row.r for row in trace])[-w:]
    average = np.array([row.average for row in trace])[-w:] / scale
    if average.min() < th.eps_abs:
        return "null", f"min_average={average.min():.6g}"
    slope = _loglog_slope(radii, average)
    if slope is not None and average[-1] < average[0] and slope < th.slope:
        return "null", f"loglog_slope={slope:.6g}"
    change = (average.max() - average.min()) / average[-1]
    if change < th.eps_rel and average[-1] >= th.floor:
        return "positive", f"relative_change={change:.6g}"
    return "inconclusive", f"relative_change={change:.6g}"


def _weighted_rule(trace: Sequence[TraceRow], scale: float, th: Thresholds) -> tuple[str, str]:
    w = min(th.growth_window, len(trace))
    integral = np.array([row.integral for row in trace])
    if integral[-1] <= 0:
        return "inconclusive", "undetermined"
    growth = (integral[-1] - integral[-w]) / integral[-1]
    if growth < th.eps_rel:
        return "inconclusive", "finite"
    steps = np.diff(integral[-w:])
    if steps[-1] >= steps[-2]:
        return "inconclusive", "divergent"
    return "inconclusive", "undetermined"


_RULES: dict[str, tuple[str, Callable[[Sequence[TraceRow], float, Thresholds], tuple[str, str]]]] = {
    "integral": ("hopf", _integral_rule),
    "decay": ("hopf", _decay_rule),
    "sup_local": ("hopf", _integral_rule),
    "cesaro": ("neveu", _cesaro_rule),
    "weighted": ("neveu", _weighted_rule),
}


def relabel(verdict: ConeVerdict, thresholds: Thresholds | None = None) -> ConeVerdict:
    """Recompute the label of ``verdict`` from its trace."""

    th = thresholds or verdict.thresholds
    axis, rule = _RULES[verdict.test]
    label, evidence = rule(verdict.trace, verdict.scale, th)
    return replace(verdict, axis=axis, label=label, evidence=evidence, thresholds=th)


def _verdict(test: str, trace: tuple[TraceRow, ...], scale: float, th: Thresholds) -> ConeVerdict:
    axis, rule = _RULES[test]
    label, evidence = rule(trace, scale, th)
    return ConeVerdict(axis, label, test, trace, th, scale, evidence)


# --------------------------------------------------------------------------
# Tests
# --------------------------------------------------------------------------


def integral_test(path: SpectralPath, radii: Sequence[float], thresholds: Thresholds | None = None) -> ConeVerdict:
    trace, scale = box_trace(path, radii)
    return _verdict("integral", trace, scale, thresholds or Thresholds())


def decay_test(path: SpectralPath, radii: Sequence[float], thresholds: Thresholds | None = None) -> ConeVerdict:
    trace, scale = box_trace(path, radii)
    return _verdict("decay", trace, scale, thresholds or Thresholds())


def cesaro_test(path: SpectralPath, radii: Sequence[float], thresholds: Thresholds | None = None) -> ConeVerdict:
    trace, scale = box_trace(path, radii)
    return _verdict("cesaro", trace, scale, thresholds or Thresholds())


def sup_smoothed(path: SpectralPath, halfwidth: float) -> SpectralPath:
    """Sliding sup of the path over x + [-halfwidth, halfwidth]^d."""

    grid = path.grid
    if grid.lattice:
        raise ContractViolation("sup_local_test_needs_continuous_grid")
    if not grid.is_window or grid.spacing is None:
        raise ContractViolation("sup_local_test_needs_window_grid")
    if grid.spacing > halfwidth / 4 + _RADIUS_TOL:
        raise ContractViolation(f"spacing_too_coarse:{grid.spacing}>{halfwidth / 4}")
    m = int(round(halfwidth / grid.spacing))
    smoothed = ndimage.maximum_filter(path.values.reshape(grid.shape), size=2 * m + 1, mode="constant", cval=0.0)
    return SpectralPath(grid, smoothed.reshape(-1))


def sup_local_test(
    path: SpectralPath,
    radii: Sequence[float],
    thresholds: Thresholds | None = None,
) -> ConeVerdict:
    th = thresholds or Thresholds()
    trace, scale = box_trace(sup_smoothed(path, th.k_halfwidth), radii)
    return _verdict("sup_local", trace, scale, th)


def weighted_test(
    path: SpectralPath,
    weight: WeightFunction,
    radii: Sequence[float],
    thresholds: Thresholds | None = None,
) -> ConeVerdict:
    """Integral test on path * w; reports evidence only, the label stays inconclusive."""

    if path.grid.d != 1:
        raise ContractViolation("weighted_test_is_one_dimensional")
    if path.is_zero:
        raise ContractViolation("zero_path_rejected")
    rr = _check_radii(radii, path.window_radius)
    w = weight(path.grid.points[:, 0])
    values = path.values * w
    trace = _trace(path.grid, values, path.masses * w, rr)
    scale = float(values[path.grid.box_mask(rr[-1])].max()) or 1.0
    return _verdict("weighted", trace, scale, thresholds or Thresholds())


TESTS: dict[str, Callable[..., ConeVerdict]] = {
    "integral": integral_test,
    "decay": decay_test,
    "cesaro": cesaro_test,
    "sup_local": sup_local_test,
}


def axis_of(name: str) -> str:
    if name not in _RULES:
        raise ContractViolation(f"unknown_test:{name}")
    return _RULES[name][0]


# --------------------------------------------------------------------------
# Whole-path classification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PathClassification:
    verdicts: Mapping[str, ConeVerdict]
    conflicts: tuple[str, ...] = ()
    index: int | None = None

    @property
    def hopf(self) -> ConeVerdict:
        return self.verdicts["integral"]

    @property
    def neveu(self) -> ConeVerdict:
        return self.verdicts["cesaro"]

    def label(self, test: str) -> str:
        try:
            return self.verdicts[test].label
        except KeyError as exc:
            raise DataError(f"missing_verdict:{test}") from exc

    def to_json(self, *, include_traces: bool = True) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "labels": {name: v.label for name, v in self.verdicts.items()},
            "conflicts": list(self.conflicts),
        }
        if self.index is not None:
            payload["index"] = self.index
        if "weighted" in self.verdicts:
            payload["weighted_evidence"] = self.verdicts["weighted"].evidence
        if include_traces:
            payload["verdicts"] = {name: v.to_json() for name, v in self.verdicts.items()}
        return payload


def classify_path(
    path: SpectralPath,
    radii: Sequence[float] | None = None,
    thresholds: Thresholds | None = None,
    weight: WeightFunction | None = None,
    *,
    index: int | None = None,
) -> PathClassification:
    """Run every applicable test on ``path``."""

    th = thresholds or Thresholds()
    rr = list(radii) if radii is not None else default_radii(path.grid)
    trace, scale = box_trace(path, rr)
    verdicts: dict[str, ConeVerdict] = {
        name: _verdict(name, trace, scale, th) for name in ("integral", "decay", "cesaro")
    }
    grid = path.grid
    if grid.continuous and grid.is_window and grid.spacing is not None and grid.spacing <= th.k_halfwidth / 4:
        verdicts["sup_local"] = sup_local_test(path, rr, th)
    if weight is not None and grid.d == 1:
        verdicts["weighted"] = weighted_test(path, weight, rr, th)
    conflicts = []
    if verdicts["integral"].label == "dissipative" and verdicts["decay"].label == "conservative":
        conflicts.append("integrable_without_decay")
        logger.debug("path %s integrable without decay", index)
    return PathClassification(verdicts, tuple(conflicts), index)


def label_counts(classifications: Sequence[PathClassification], test: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for item in classifications:
        label = item.label(test)
        counts[label] = counts.get(label, 0) + 1
    return counts


__all__ = [
    "AXES",
    "ConeVerdict",
    "PathClassification",
    "Thresholds",
    "TraceRow",
    "WeightFunction",
    "box_trace",
    "cesaro_test",
    "classify_path",
    "decay_test",
    "default_radii",
    "integral_test",
    "label_counts",
    "relabel",
    "sup_local_test",
    "sup_smoothed",
    "weighted_test",
]
