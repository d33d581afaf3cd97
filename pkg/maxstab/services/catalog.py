"""Catalog of spectral models: named generators of spectral paths on a grid."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
import math
from typing import Any, ClassVar, Mapping, Sequence

import numpy as np

from maxstab.models import Grid, SpectralPath
from maxstab.services.errors import ContractViolation
from maxstab.services.randkit import GaussianSpec, RngStream, sample_gaussian_path

DEFAULT_SERIES_TERMS = 40
SAMPLERS = ("series", "cholesky")
PLACEMENTS = ("centered", "uniform")
SHAPES = ("triangular", "parabolic")


# --------------------------------------------------------------------------
# Brown-Resnick series
# --------------------------------------------------------------------------


def _dyadic_frequencies(K: int) -> np.ndarray:
    return 2.0 * np.pi / 2.0 ** np.arange(1, K + 1)


def sigma2_series(t: float | np.ndarray, K: int = DEFAULT_SERIES_TERMS) -> float | np.ndarray:
    """Truncated incremental variance sum_{k<=K} (1 - cos(2 pi t / 2^k))."""

    if K < 1:
        raise ContractViolation("series_needs_at_least_one_term")
    tt = np.asarray(t, dtype=float)
    phase = tt[..., None] * _dyadic_frequencies(K)
    # 1 - cos x = 2 sin^2(x/2), accurate for small x
    out = np.sum(2.0 * np.sin(0.5 * phase) ** 2, axis=-1)
    return float(out) if out.ndim == 0 else out


def sigma2_tail_bound(t: float | np.ndarray, K: int = DEFAULT_SERIES_TERMS) -> float | np.ndarray:
    """Quadratic bound on the neglected terms k > K."""

    tt = np.asarray(t, dtype=float)
    out = 0.5 * (2.0 * np.pi * tt) ** 2 * 4.0 ** (-K) / 3.0
    return float(out) if out.ndim == 0 else out


def sigma2_records(n_max: int, K: int = DEFAULT_SERIES_TERMS, chunk: int = 65536) -> list[tuple[int, float]]:
    """Integers t <= n_max at which sigma2 reaches a new running maximum."""

    records: list[tuple[int, float]] = []
    best = -math.inf
    for start in range(1, n_max + 1, chunk):
        ts = np.arange(start, min(start + chunk, n_max + 1), dtype=float)
        vals = sigma2_series(ts, K)
        running = np.maximum.accumulate(np.concatenate([[best], vals]))[1:]
        new = np.flatnonzero(vals > np.concatenate([[best], running[:-1]]))
        for i in new:
            records.append((int(ts[i]), float(vals[i])))
        best = float(running[-1])
    return records


def _series_basis(grid: Grid, K: int) -> tuple[np.ndarray, np.ndarray]:
    phase = grid.points[:, 0][None, :] * _dyadic_frequencies(K)[:, None]
    return 2.0 * np.sin(0.5 * phase) ** 2, np.sin(phase)


def brown_resnick_Z(grid: Grid, K: int, rng: RngStream, sampler: str = "series", count: int = 1) -> np.ndarray:
    """Gaussian process Z with Z(0) = 0 and incremental variance sigma2_series(., K).

    Returns shape ``(count, n)``.
    """

    if K < 1:
        raise ContractViolation("series_needs_at_least_one_term")
    if grid.d != 1:
        raise ContractViolation("brown_resnick_is_one_dimensional")
    if sampler == "series":
        cos_part, sin_part = _series_basis(grid, K)
        normals = rng.generator().standard_normal((2, count, K))
        return (normals[0] @ cos_part + normals[1] @ sin_part) / math.sqrt(2.0)
    if sampler == "cholesky":
        spec = GaussianSpec(variogram=lambda h: sigma2_series(h[..., 0], K), anchor=(0.0,))
        return sample_gaussian_path(spec, grid, rng, count=count)
    raise ContractViolation(f"unknown_sampler:{sampler}")


def brown_resnick_Y(
    grid: Grid,
    K: int,
    rng: RngStream,
    sampler: str = "series",
    count: int = 1,
) -> np.ndarray:
    """Log-normal spectral functions exp(Z - sigma2/2), shape ``(count, n)``."""

    z = brown_resnick_Z(grid, K, rng, sampler, count)
    drift = 0.5 * np.asarray(sigma2_series(grid.points[:, 0], K))
    return np.exp(z - drift[None, :])


# --------------------------------------------------------------------------
# Shape profiles
# --------------------------------------------------------------------------


def _profile(kind: str, t: np.ndarray) -> np.ndarray:
    a = np.abs(t)
    if kind == "triangular":
        return np.where(a <= 1.0, 1.0 - a, 0.0)
    return np.where(a <= 1.0, 1.0 - a * a, 0.0)


def _primitive(kind: str, t: np.ndarray) -> np.ndarray:
    c = np.clip(t, -1.0, 1.0)
    if kind == "triangular":
        return c - c * np.abs(c) / 2.0
    return c - c**3 / 3.0


def _profile_integral(kind: str, d: int) -> float:
    if d == 1:
        return 1.0 if kind == "triangular" else 4.0 / 3.0
    return math.pi / 3.0 if kind == "triangular" else math.pi / 2.0


def _cell_edges(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    x = grid.points[:, 0]
    half = 0.5 * grid.cell_volume
    return x - half, x + half


# --------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------


class SpectralModel(ABC):
    """A generator of spectral paths Y on finite grids."""

    kind: ClassVar[str]
    d: int

    def check_grid(self, grid: Grid) -> None:
        if grid.d != self.d:
            raise ContractViolation(f"{self.kind}_expects_dimension_{self.d}")

    @abstractmethod
    def _sample(self, grid: Grid, rng: RngStream, count: int) -> tuple[np.ndarray, np.ndarray | None]:
        """Return values ``(count, n)`` and optional exact cell masses."""

    def sample_arrays(self, grid: Grid, rng: RngStream, count: int) -> tuple[np.ndarray, np.ndarray | None]:
        self.check_grid(grid)
        return self._sample(grid, rng, count)

    def sample_values(self, grid: Grid, rng: RngStream, count: int = 1) -> np.ndarray:
        return self.sample_arrays(grid, rng, count)[0]

    def sample_batch(self, grid: Grid, rng: RngStream, count: int) -> list[SpectralPath]:
        self.check_grid(grid)
        values, masses = self._sample(grid, rng, count)
        return [
            SpectralPath(grid, values[i], None if masses is None else masses[i])
            for i in range(count)
        ]

    def sample(self, grid: Grid, rng: RngStream) -> SpectralPath:
        return self.sample_batch(grid, rng, 1)[0]

    @abstractmethod
    def sup_bound(self, grid: Grid) -> float | None:
        """Almost-sure bound tau >= sup Y on ``grid``; None when unbounded."""

    @abstractmethod
    def mean_scale(self, grid: Grid) -> float | None:
        """E[Y(0)] when known in closed form."""

    @property
    @abstractmethod
    def is_stationary(self) -> bool: ...

    @abstractmethod
    def describe(self) -> dict[str, Any]: ...


@dataclass(frozen=True)
class Constant(SpectralModel):
    kind: ClassVar[str] = "constant"
    c: float = 1.0
    d: int = 1

    def __post_init__(self) -> None:
        if not self.c > 0:
            raise ContractViolation("constant_must_be_positive")

    def _sample(self, grid, rng, count):
        return np.full((count, grid.size), float(self.c)), None

    def sup_bound(self, grid):
        return float(self.c)

    def mean_scale(self, grid):
        return float(self.c)

    @property
    def is_stationary(self) -> bool:
        return True

    def describe(self):
        return {"kind": self.kind, "c": self.c, "d": self.d}


@dataclass(frozen=True)
class BrownResnick(SpectralModel):
    kind: ClassVar[str] = "brown_resnick"
    K: int = DEFAULT_SERIES_TERMS
    sampler: str = "series"
    d: int = 1

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ContractViolation("series_needs_at_least_one_term")
        if self.sampler not in SAMPLERS:
            raise ContractViolation(f"unknown_sampler:{self.sampler}")
        if self.d != 1:
            raise ContractViolation("brown_resnick_is_one_dimensional")

    def _sample(self, grid, rng, count):
        return brown_resnick_Y(grid, self.K, rng, self.sampler, count), None

    def sup_bound(self, grid):
        return None

    def mean_scale(self, grid):
        return 1.0

    @property
    def is_stationary(self) -> bool:
        return True

    def describe(self):
        return {"kind": self.kind, "K": self.K, "sampler": self.sampler, "d": self.d}


class ShapeModel(SpectralModel):
    """Deterministic shape Z usable both as a de Haan spectral model and as an M3 shape.

    With ``placement="centered"`` the spectral path is Z itself. With
    ``placement="uniform"`` it is A * Z(x - X) with X uniform on the window
    padded by the support radius and A the padded area, the windowed de Haan
    form of the stationary M3 process driven by Z.
    """

    placement: str
    intensity: float = 1.0

    @property
    @abstractmethod
    def support_radius(self) -> float: ...

    @property
    @abstractmethod
    def height(self) -> float: ...

    @property
    @abstractmethod
    def integral(self) -> float: ...

    @abstractmethod
    def shape_values(self, grid: Grid, centers: np.ndarray, rng: RngStream | None = None) -> np.ndarray:
        """Z(x - X) for each row X of ``centers``; shape ``(len(centers), n)``."""

    def shape_masses(self, grid: Grid, centers: np.ndarray) -> np.ndarray | None:
        return None

    def masses_for(self, grid: Grid, centers: np.ndarray) -> np.ndarray | None:
        if grid.spacing is None and not grid.lattice:
            return None
        return self.shape_masses(grid, centers)

    @abstractmethod
    def sup_over(self, lo: Sequence[float], hi: Sequence[float], center: Sequence[float]) -> float:
        """sup of Z(x - center) over the box [lo, hi]."""

    def resolve(self, grid: Grid, padding: float | None = None) -> "ShapeModel":
        return self

    def padded_area(self, grid: Grid, padding: float) -> float:
        outer = grid.radius + padding
        if grid.lattice:
            return float((2 * math.floor(outer) + 1) ** grid.d)
        return float((2.0 * outer) ** grid.d)

    def draw_centers(self, grid: Grid, padding: float, gen: np.random.Generator, count: int) -> np.ndarray:
        outer = grid.radius + padding
        if grid.lattice:
            m = math.floor(outer)
            return gen.integers(-m, m + 1, size=(count, grid.d)).astype(float)
        return gen.uniform(-outer, outer, size=(count, grid.d))

    def _sample(self, grid, rng, count):
        model = self.resolve(grid)
        if self.placement == "centered":
            centers = np.zeros((count, grid.d))
            return model.shape_values(grid, centers, rng), model.masses_for(grid, centers)
        padding = model.support_radius
        area = model.padded_area(grid, padding)
        centers = model.draw_centers(grid, padding, rng.spawn(0).generator(), count)
        values = area * model.shape_values(grid, centers, rng.spawn(1))
        masses = model.masses_for(grid, centers)
        return values, None if masses is None else area * masses

    def sup_bound(self, grid):
        model = self.resolve(grid)
        if self.placement == "centered":
            return model.height
        return model.padded_area(grid, model.support_radius) * model.height

    def mean_scale(self, grid):
        model = self.resolve(grid)
        if self.placement == "uniform":
            return model.integral * model.intensity
        return float(model.shape_values(Grid.from_points([[0.0] * grid.d]), np.zeros((1, grid.d)))[0, 0])

    @property
    def is_stationary(self) -> bool:
        return self.placement == "uniform"


@dataclass(frozen=True)
class CompactBump(ShapeModel):
    """Radial bump height * profile(|x| / support_radius) with bounded support."""

    kind: ClassVar[str] = "compact_bump"
    shape: str = "triangular"
    support_radius_: float = 1.0
    height_: float = 1.0
    placement: str = "centered"
    d: int = 1

    def __post_init__(self) -> None:
        if self.shape not in SHAPES:
            raise ContractViolation(f"unknown_shape:{self.shape}")
        if not (self.support_radius_ > 0 and self.height_ > 0):
            raise ContractViolation("zero_shape_rejected")
        if self.placement not in PLACEMENTS:
            raise ContractViolation(f"unknown_placement:{self.placement}")

    @property
    def support_radius(self) -> float:
        return float(self.support_radius_)

    @property
    def height(self) -> float:
        return float(self.height_)

    @property
    def integral(self) -> float:
        return self.height * self.support_radius**self.d * _profile_integral(self.shape, self.d)

    def _radial(self, grid: Grid, centers: np.ndarray) -> np.ndarray:
        rel = grid.points[None, :, :] - centers[:, None, :]
        return np.sqrt(np.sum(rel * rel, axis=-1)) / self.support_radius

    def shape_values(self, grid, centers, rng=None):
        return self.height * _profile(self.shape, self._radial(grid, np.atleast_2d(centers)))

    def shape_masses(self, grid, centers):
        if grid.d != 1 or grid.lattice:
            return None
        lo, hi = _cell_edges(grid)
        c = np.atleast_2d(centers)[:, :1]
        rho = self.support_radius
        upper = _primitive(self.shape, (hi[None, :] - c) / rho)
        lower = _primitive(self.shape, (lo[None, :] - c) / rho)
        return self.height * rho * (upper - lower)

    def sup_over(self, lo, hi, center):
        c = np.asarray(center, dtype=float)
        nearest = np.clip(c, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        dist = float(np.sqrt(np.sum((nearest - c) ** 2))) / self.support_radius
        return float(self.height * _profile(self.shape, np.asarray(dist)))

    def describe(self):
        return {
            "kind": self.kind,
            "shape": self.shape,
            "support_radius": self.support_radius,
            "height": self.height,
            "placement": self.placement,
            "d": self.d,
        }


def _comb_values(u: np.ndarray, N: int) -> np.ndarray:
    # bumps n >= 2 have half-width <= 1/4, so only round(u) can cover u
    out = _profile("parabolic", u - 1.0) if N >= 1 else np.zeros_like(u)
    m = np.rint(u)
    live = (m >= 2) & (m <= N)
    out = out + np.where(live, _profile("parabolic", m * m * (u - m)), 0.0)
    return out


def _comb_masses(a: np.ndarray, b: np.ndarray, N: int) -> np.ndarray:
    out = _primitive("parabolic", b - 1.0) - _primitive("parabolic", a - 1.0)
    base = np.floor(a)
    for step in range(3):
        k = base + step
        live = (k >= 2) & (k <= N)
        ksq = np.where(live, k * k, 1.0)
        part = (_primitive("parabolic", ksq * (b - k)) - _primitive("parabolic", ksq * (a - k))) / ksq
        out = out + np.where(live, part, 0.0)
    return out


@dataclass(frozen=True)
class Comb(ShapeModel):
    """Bumps f(n^2 (x - n)), n = 1..N, with f(t) = (1 - t^2) on |t| <= 1.

    ``N=None`` resolves to window radius + 1 on a grid, or padding - 1 when
    used as an M3 shape.
    """

    kind: ClassVar[str] = "comb"
    N: int | None = None
    placement: str = "centered"
    d: int = 1

    def __post_init__(self) -> None:
        if self.N is not None and self.N < 1:
            raise ContractViolation("comb_needs_at_least_one_bump")
        if self.d != 1:
            raise ContractViolation("comb_is_one_dimensional")
        if self.placement not in PLACEMENTS:
            raise ContractViolation(f"unknown_placement:{self.placement}")

    def check_grid(self, grid: Grid) -> None:
        super().check_grid(grid)
        if grid.lattice:
            raise ContractViolation("comb_needs_continuous_grid")

    @property
    def bumps(self) -> int:
        if self.N is None:
            raise ContractViolation("comb_truncation_unresolved")
        return int(self.N)

    def resolve(self, grid: Grid, padding: float | None = None) -> "Comb":
        if self.N is not None:
            return self
        if padding is not None:
            return replace(self, N=max(1, math.floor(padding) - 1))
        return replace(self, N=math.ceil(grid.radius) + 1)

    @property
    def support_radius(self) -> float:
        return float(self.bumps + 1)

    @property
    def height(self) -> float:
        return 1.0

    @property
    def integral(self) -> float:
        return 4.0 / 3.0 * float(np.sum(1.0 / np.arange(1, self.bumps + 1) ** 2))

    def shape_values(self, grid, centers, rng=None):
        u = grid.points[None, :, 0] - np.atleast_2d(centers)[:, :1]
        return _comb_values(u, self.bumps)

    def shape_masses(self, grid, centers):
        lo, hi = _cell_edges(grid)
        c = np.atleast_2d(centers)[:, :1]
        return _comb_masses(lo[None, :] - c, hi[None, :] - c, self.bumps)

    def sup_over(self, lo, hi, center):
        a = float(np.asarray(lo, dtype=float).reshape(-1)[0] - np.asarray(center, dtype=float).reshape(-1)[0])
        b = float(np.asarray(hi, dtype=float).reshape(-1)[0] - np.asarray(center, dtype=float).reshape(-1)[0])
        peaks = np.arange(max(1, math.ceil(a)), min(self.bumps, math.floor(b)) + 1, dtype=float)
        points = np.concatenate([np.linspace(a, b, 65), peaks])
        return float(np.max(_comb_values(points, self.bumps)))

    def describe(self):
        return {"kind": self.kind, "N": self.N, "placement": self.placement, "d": self.d}


def comb_Z(grid: Grid, N: int) -> SpectralPath:
    model = Comb(N=N)
    return model.sample(grid, RngStream(0))


def compact_bump_Z(grid: Grid, shape: CompactBump, rng: RngStream | None = None) -> SpectralPath:
    return shape.sample(grid, rng or RngStream(0))


def constant_Y(grid: Grid, c: float = 1.0) -> SpectralPath:
    return Constant(c=c, d=grid.d).sample(grid, RngStream(0))


@dataclass(frozen=True)
class Mixture(SpectralModel):
    """Draws one component per path with categorical weights."""

    kind: ClassVar[str] = "mixture"
    weights: tuple[float, ...] = ()
    components: tuple[SpectralModel, ...] = ()
    d: int = 1

    def __post_init__(self) -> None:
        if not self.components or len(self.weights) != len(self.components):
            raise ContractViolation("mixture_weights_and_components_must_align")
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or not w.sum() > 0:
            raise ContractViolation("mixture_weights_must_be_non_negative")
        if any(c.d != self.d for c in self.components):
            raise ContractViolation("mixture_dimension_mismatch")

    @property
    def probabilities(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        return w / w.sum()

    def choose(self, rng: RngStream, count: int) -> np.ndarray:
        return rng.spawn(0).generator().choice(len(self.components), size=count, p=self.probabilities)

    def _sample(self, grid, rng, count):
        picks = self.choose(rng, count)
        values = np.zeros((count, grid.size))
        masses = values * grid.cell_volume if grid.spacing is not None or grid.lattice else None
        for j, comp in enumerate(self.components):
            rows = np.flatnonzero(picks == j)
            if rows.size == 0:
                continue
            comp.check_grid(grid)
            vals, mass = comp._sample(grid, rng.spawn(j + 1), rows.size)
            values[rows] = vals
            if masses is not None:
                masses[rows] = vals * grid.cell_volume if mass is None else mass
        return values, masses

    def sup_bound(self, grid):
        bounds = [c.sup_bound(grid) for c in self.components]
        return None if any(b is None for b in bounds) else float(max(bounds))

    def mean_scale(self, grid):
        means = [c.mean_scale(grid) for c in self.components]
        if any(m is None for m in means):
            return None
        return float(np.dot(self.probabilities, means))

    @property
    def is_stationary(self) -> bool:
        return all(c.is_stationary for c in self.components)

    def describe(self):
        return {
            "kind": self.kind,
            "weights": list(self.weights),
            "components": [c.describe() for c in self.components],
            "d": self.d,
        }


@dataclass(frozen=True, eq=False)
class EmpiricalShape(ShapeModel):
    """M3 shape law resampled from extracted (Z, peak) pairs.

    Shapes are drawn with probability proportional to their peak weight and
    evaluated at lattice offsets, so positions must lie on the grid spacing.
    """

    kind: ClassVar[str] = "empirical_shape"
    keys: tuple[np.ndarray, ...] = ()
    tables: tuple[np.ndarray, ...] = ()
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))
    spacing: float = 1.0
    placement: str = "centered"
    d: int = 1

    def __post_init__(self) -> None:
        if not self.tables or len(self.tables) != len(self.keys) or len(self.weights) != len(self.tables):
            raise ContractViolation("empirical_shape_needs_atoms")
        if self.d != 1:
            raise ContractViolation("empirical_shape_is_one_dimensional")

    @classmethod
    def from_paths(cls, paths: Sequence[SpectralPath], weights: Sequence[float]) -> "EmpiricalShape":
        keys, tables = [], []
        spacing = paths[0].grid.cell_volume if paths else 1.0
        for path in paths:
            k = np.rint(path.grid.points[:, 0] / spacing).astype(np.int64)
            keys.append(np.array([k.min(), k.max()]))
            table = np.zeros(int(k.max() - k.min() + 1))
            table[k - k.min()] = path.values
            tables.append(table)
        return cls(tuple(keys), tuple(tables), np.asarray(weights, dtype=float), float(spacing))

    @property
    def intensity(self) -> float:  # type: ignore[override]
        return float(np.mean(self.weights))

    @property
    def support_radius(self) -> float:
        reach = 0.0
        for (kmin, _), table in zip(self.keys, self.tables):
            live = np.flatnonzero(table > 0)
            if live.size:
                reach = max(reach, abs(kmin + live[0]), abs(kmin + live[-1]))
        return reach * self.spacing

    @property
    def height(self) -> float:
        return 1.0

    @property
    def integral(self) -> float:
        p = self.weights / self.weights.sum()
        return float(sum(pi * t.sum() * self.spacing for pi, t in zip(p, self.tables)))

    def shape_values(self, grid, centers, rng=None):
        if rng is None:
            raise ContractViolation("empirical_shape_needs_rng")
        centers = np.atleast_2d(centers)
        p = self.weights / self.weights.sum()
        picks = rng.generator().choice(len(self.tables), size=centers.shape[0], p=p)
        out = np.zeros((centers.shape[0], grid.size))
        for row, (pick, c) in enumerate(zip(picks, centers[:, 0])):
            kmin, kmax = self.keys[pick]
            offs = np.rint((grid.points[:, 0] - c) / self.spacing).astype(np.int64)
            inside = (offs >= kmin) & (offs <= kmax)
            out[row, inside] = self.tables[pick][offs[inside] - kmin]
        return out

    def sup_over(self, lo, hi, center):
        raise ContractViolation("empirical_shape_has_no_exact_sup")

    def describe(self):
        return {"kind": self.kind, "atoms": len(self.tables), "spacing": self.spacing}


def model_from_descriptor(desc: Mapping[str, Any]) -> SpectralModel:
    kind = desc.get("kind")
    d = int(desc.get("d", 1))
    if kind == "constant":
        return Constant(c=float(desc.get("c", 1.0)), d=d)
    if kind == "brown_resnick":
        return BrownResnick(K=int(desc.get("K", DEFAULT_SERIES_TERMS)), sampler=desc.get("sampler", "series"), d=d)
    if kind == "compact_bump":
        return CompactBump(
            shape=desc.get("shape", "triangular"),
            support_radius_=float(desc.get("support_radius", 1.0)),
            height_=float(desc.get("height", 1.0)),
            placement=desc.get("placement", "centered"),
            d=d,
        )
    if kind == "comb":
        n = desc.get("N")
        return Comb(N=None if n is None else int(n), placement=desc.get("placement", "centered"), d=d)
    if kind == "mixture":
        comps = tuple(model_from_descriptor({"d": d, **c}) for c in desc.get("components", ()))
        return Mixture(weights=tuple(float(w) for w in desc.get("weights", ())), components=comps, d=d)
    raise ContractViolation(f"unknown_model:{kind}")
