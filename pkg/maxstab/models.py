"""Domain types shared by the simulators, classifiers and diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, Mapping, Sequence

import numpy as np

from maxstab.services.errors import ContractViolation, DataError

if TYPE_CHECKING:  # pragma: no cover
    from maxstab.services.cones import ConeVerdict


_COORD_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Grid:
    """Finite ordered point set in R^d or Z^d.

    Window grids are the regular boxes [-r, r]^d with spacing h, stored in
    lexicographic (C) order so that the first flat index of a tie is the
    lexicographically smallest point.
    """

    points: np.ndarray
    spacing: float | None = None
    lattice: bool = False
    shape: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ContractViolation("grid_needs_points")
        if pts.shape[1] not in (1, 2):
            raise ContractViolation(f"unsupported_dimension:{pts.shape[1]}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def window(cls, d: int, radius: float, spacing: float = 1.0, *, lattice: bool = False) -> "Grid":
        if d not in (1, 2):
            raise ContractViolation(f"unsupported_dimension:{d}")
        if lattice:
            spacing = 1.0
        if spacing <= 0 or radius < 0:
            raise ContractViolation("window_needs_positive_spacing")
        m = int(round(radius / spacing))
        axis = spacing * np.arange(-m, m + 1, dtype=float)
        if d == 1:
            pts = axis[:, None]
            shape: tuple[int, ...] = (axis.size,)
        else:
            xx, yy = np.meshgrid(axis, axis, indexing="ij")
            pts = np.column_stack([xx.ravel(), yy.ravel()])
            shape = (axis.size, axis.size)
        return cls(points=pts, spacing=float(spacing), lattice=lattice, shape=shape)

    @classmethod
    def from_points(cls, coords: Sequence[Any], *, lattice: bool = False) -> "Grid":
        return cls(points=np.asarray(coords, dtype=float), lattice=lattice)

    @property
    def d(self) -> int:
        return int(self.points.shape[1])

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def radius(self) -> float:
        return float(np.max(np.abs(self.points)))

    @property
    def is_window(self) -> bool:
        return self.shape is not None

    @property
    def continuous(self) -> bool:
        return not self.lattice

    @property
    def cell_volume(self) -> float:
        if self.lattice:
            return 1.0
        if self.spacing is None:
            raise ContractViolation("scattered_grid_has_no_cells")
        return float(self.spacing) ** self.d

    @property
    def axis(self) -> np.ndarray:
        if not self.is_window:
            raise ContractViolation("not_a_window_grid")
        return np.unique(self.points[:, 0])

    @property
    def origin_index(self) -> int:
        return self.index_of(np.zeros(self.d))

    def norms(self, center: Sequence[float] | None = None) -> np.ndarray:
        pts = self.points if center is None else self.points - np.asarray(center, dtype=float)
        return np.max(np.abs(pts), axis=1)

    def box_mask(self, r: float, center: Sequence[float] | None = None) -> np.ndarray:
        return self.norms(center) <= r + _COORD_TOL

    def index_of(self, x: Sequence[float] | float) -> int:
        target = np.atleast_1d(np.asarray(x, dtype=float))
        if target.size == 1 and self.d == 2:
            target = np.array([float(target[0]), 0.0])
        hits = np.flatnonzero(np.all(np.abs(self.points - target) <= _COORD_TOL, axis=1))
        if hits.size == 0:
            raise DataError(f"point_not_on_grid:{target.tolist()}")
        return int(hits[0])

    def translate(self, offset: Sequence[float]) -> "Grid":
        shifted = self.points + np.asarray(offset, dtype=float)
        return Grid(points=shifted, spacing=self.spacing, lattice=self.lattice, shape=self.shape)

    def same_as(self, other: "Grid") -> bool:
        return (
            self.points.shape == other.points.shape
            and self.lattice == other.lattice
            and bool(np.array_equal(self.points, other.points))
        )

    def describe(self) -> dict[str, Any]:
        if self.is_window:
            return {
                "kind": "window",
                "d": self.d,
                "radius": self.radius,
                "spacing": self.spacing,
                "lattice": self.lattice,
            }
        return {"kind": "points", "points": self.points.tolist(), "lattice": self.lattice}

    @classmethod
    def from_descriptor(cls, desc: Mapping[str, Any]) -> "Grid":
        if desc.get("kind") == "window":
            return cls.window(
                int(desc["d"]),
                float(desc["radius"]),
                float(desc.get("spacing") or 1.0),
                lattice=bool(desc.get("lattice", False)),
            )
        return cls.from_points(desc["points"], lattice=bool(desc.get("lattice", False)))


@dataclass(frozen=True, eq=False)
class SpectralPath:
    """A realisation of a spectral function restricted to a grid.

    ``cell_mass`` optionally holds the exact integral of the path over each
    grid cell; when absent the rectangle rule ``values * cell_volume`` is used.
    """

    grid: Grid
    values: np.ndarray
    cell_mass: np.ndarray | None = None

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.size != self.grid.size:
            raise DataError("path_grid_size_mismatch")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ContractViolation("path_values_must_be_finite_non_negative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.cell_mass is not None:
            mass = np.asarray(self.cell_mass, dtype=float).reshape(-1)
            mass.setflags(write=False)
            object.__setattr__(self, "cell_mass", mass)

    @property
    def window_radius(self) -> float:
        return self.grid.radius

    @property
    def is_zero(self) -> bool:
        return not bool(np.any(self.values > 0))

    @property
    def masses(self) -> np.ndarray:
        if self.cell_mass is not None:
            return self.cell_mass
        return self.values * self.grid.cell_volume

    @property
    def peak(self) -> float:
        return float(self.values.max())

    def at(self, x: Sequence[float] | float) -> float:
        return float(self.values[self.grid.index_of(x)])

    def to_json(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"grid": self.grid.describe(), "values": self.values.tolist()}
        if self.cell_mass is not None:
            payload["cell_mass"] = self.cell_mass.tolist()
        return payload

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> "SpectralPath":
        grid = Grid.from_descriptor(payload["grid"])
        return cls(grid, np.asarray(payload["values"], dtype=float), payload.get("cell_mass"))


@dataclass(frozen=True, eq=False)
class Atom:
    """One Poisson atom (U_i, Y_i) of a de Haan or M3 representation."""

    u: float
    path: SpectralPath
    index: int
    origin: tuple[float, ...] | None = None
    labels: Mapping[str, "ConeVerdict"] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.u > 0:
            raise ContractViolation("atom_level_must_be_positive")

    @property
    def contribution(self) -> np.ndarray:
        return self.u * self.path.values

    def with_label(self, axis: str, verdict: "ConeVerdict") -> "Atom":
        labels = dict(self.labels)
        labels[axis] = verdict
        return replace(self, labels=labels)

    def to_json(self, *, include_path: bool = True) -> dict[str, Any]:
        payload: dict[str, Any] = {"index": self.index, "u": self.u}
        if self.origin is not None:
            payload["origin"] = list(self.origin)
        if self.labels:
            payload["labels"] = {axis: v.label for axis, v in self.labels.items()}
        if include_path:
            payload["path"] = self.path.values.tolist()
            if self.path.cell_mass is not None:
                payload["cell_mass"] = self.path.cell_mass.tolist()
        return payload


@dataclass(frozen=True)
class Truncation:
    mode: str
    n_used: int
    exact: bool
    overflow: bool = False

    def to_json(self) -> dict[str, Any]:
        return {"mode": self.mode, "n_used": self.n_used, "exact": self.exact, "overflow": self.overflow}


@dataclass(frozen=True, eq=False)
class MaxStableField:
    """Grid values of a simulated max-stable field plus its atom log."""

    grid: Grid
    values: np.ndarray
    atoms: tuple[Atom, ...]
    truncation: Truncation
    padding: float | None = None

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.size != self.grid.size:
            raise DataError("field_grid_size_mismatch")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "atoms", tuple(self.atoms))

    @classmethod
    def from_atoms(
        cls,
        grid: Grid,
        atoms: Sequence[Atom],
        truncation: Truncation,
        *,
        padding: float | None = None,
    ) -> "MaxStableField":
        values = np.zeros(grid.size)
        for atom in atoms:
            np.maximum(values, atom.contribution, out=values)
        return cls(grid, values, tuple(atoms), truncation, padding)

    def recompute(self) -> np.ndarray:
        values = np.zeros(self.grid.size)
        for atom in self.atoms:
            np.maximum(values, atom.contribution, out=values)
        return values

    def at(self, x: Sequence[float] | float) -> float:
        return float(self.values[self.grid.index_of(x)])

    def csv_rows(self) -> list[list[Any]]:
        header = [f"x{k}" for k in range(self.grid.d)] + ["value"]
        rows: list[list[Any]] = [header]
        for point, value in zip(self.grid.points, self.values):
            rows.append([*(repr(float(c)) for c in point), repr(float(value))])
        return rows

    def to_json(self, *, include_paths: bool = True) -> dict[str, Any]:
        return {
            "grid": self.grid.describe(),
            "padding": self.padding,
            "truncation": self.truncation.to_json(),
            "values": self.values.tolist(),
            "atoms": [a.to_json(include_path=include_paths) for a in self.atoms],
        }

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> "MaxStableField":
        grid = Grid.from_descriptor(payload["grid"])
        atoms = []
        for row in payload.get("atoms", []):
            if "path" not in row:
                raise DataError("atom_log_without_paths")
            origin = tuple(row["origin"]) if row.get("origin") is not None else None
            path = SpectralPath(grid, row["path"], row.get("cell_mass"))
            atoms.append(Atom(float(row["u"]), path, int(row["index"]), origin))
        trunc = Truncation(**payload["truncation"])
        return cls(grid, np.asarray(payload["values"], dtype=float), tuple(atoms), trunc, payload.get("padding"))
