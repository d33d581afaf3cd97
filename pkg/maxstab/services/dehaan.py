"""Max-stable field simulation from de Haan spectral atoms and from M3 shapes."""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from maxstab.models import Atom, Grid, MaxStableField, SpectralPath, Truncation
from maxstab.services.catalog import ShapeModel, SpectralModel
from maxstab.services.errors import ContractViolation, DataError, NumericFailure
from maxstab.services.randkit import ARRIVAL_BLOCK, PoissonArrivals, RngStream

logger = logging.getLogger(__name__)

DEFAULT_N_ATOMS = 500
DEFAULT_ATOM_LOG_CAP = 10_000
MAX_THRESHOLD_ATOMS = 1_000_000
POSITIONS = ("continuous", "grid")

_BOUND_TOL = 1e-12


def _pointwise_bound(model: SpectralModel, grid: Grid) -> np.ndarray | None:
    """Per-point a.s. bound on Y(x); zeros mark points no atom can reach."""

    if isinstance(model, ShapeModel) and model.placement == "centered":
        resolved = model.resolve(grid)
        return resolved.shape_values(grid, np.zeros((1, grid.d)), RngStream(0))[0]
    components = getattr(model, "components", None)
    if components:
        bounds = [_pointwise_bound(c, grid) for c in components]
        if any(b is None for b in bounds):
            return None
        return np.max(np.vstack(bounds), axis=0)
    tau = model.sup_bound(grid)
    return None if tau is None else np.full(grid.size, float(tau))


class DeHaanSimulator:
    """Incremental simulator for eta(x) = max_i U_i Y_i(x) on a finite grid.

    Levels come from the arrival stream ``rng.spawn(0)``; spectral paths are
    drawn in blocks of :data:`ARRIVAL_BLOCK` from ``rng.spawn(1, block)``, so
    the i-th atom does not depend on how the run is stopped or extended.
    Atoms are absorbed a block at a time; the threshold rule is checked per
    atom inside the block, so the stopping index is the sequential one.
    """

    mode_fixed = "fixed_n"
    mode_threshold = "threshold"

    def __init__(
        self,
        model: SpectralModel,
        grid: Grid,
        rng: RngStream,
        *,
        atom_log_cap: int = DEFAULT_ATOM_LOG_CAP,
        level_scale: float = 1.0,
    ) -> None:
        model.check_grid(grid)
        self.model = model
        self.grid = grid
        self.rng = rng
        self.atom_log_cap = int(atom_log_cap)
        self.arrivals = PoissonArrivals(rng.spawn(0), scale=level_scale)
        self.values = np.zeros(grid.size)
        self.atoms: list[Atom] = []
        self.n_used = 0
        self.overflow = False
        self.mode = self.mode_fixed
        self.exact = False
        self._levels = np.empty(0)
        self._block_index = -1
        self._block: tuple[np.ndarray, np.ndarray | None, np.ndarray | None] | None = None

    # -- atom source -------------------------------------------------------

    def _draw_block(self, block: int) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
        """Return (values, masses, origins) for ``ARRIVAL_BLOCK`` atoms."""

        values, masses = self.model.sample_arrays(self.grid, self.rng.spawn(1, block), ARRIVAL_BLOCK)
        return values, masses, None

    def _block_rows(self, block: int) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
        if block != self._block_index:
            self._block = self._draw_block(block)
            self._block_index = block
        return self._block  # type: ignore[return-value]

    def _block_levels(self, block: int) -> np.ndarray:
        end = (block + 1) * ARRIVAL_BLOCK
        if self._levels.size < end:
            fresh = self.arrivals.take(end - self._levels.size)
            self._levels = np.concatenate([self._levels, fresh])
        return self._levels[block * ARRIVAL_BLOCK : end]

    def _absorb(self, count: int) -> None:
        """Absorb ``count`` atoms from the current block (must not cross it)."""

        block, row = divmod(self.n_used, ARRIVAL_BLOCK)
        values, masses, origins = self._block_rows(block)
        levels = self._block_levels(block)[row : row + count]
        contrib = levels[:, None] * values[row : row + count]
        np.maximum(self.values, contrib.max(axis=0), out=self.values)
        for j in range(count):
            if len(self.atoms) >= self.atom_log_cap:
                if not self.overflow:
                    self.overflow = True
                    if self.atom_log_cap:
                        logger.warning("atom log capped at %d atoms; later atoms are not logged", self.atom_log_cap)
                break
            k = row + j
            path = SpectralPath(self.grid, values[k], None if masses is None else masses[k])
            origin = None if origins is None else tuple(float(c) for c in origins[k])
            self.atoms.append(Atom(u=float(levels[j]), path=path, index=self.n_used + j, origin=origin))
        self.n_used += count

    def _absorb_until(self, n_total: int) -> None:
        while self.n_used < n_total:
            room = ARRIVAL_BLOCK - self.n_used % ARRIVAL_BLOCK
            self._absorb(min(room, n_total - self.n_used))

    # -- runs --------------------------------------------------------------

    def run_fixed(self, n_atoms: int) -> MaxStableField:
        if n_atoms < 1:
            raise ContractViolation("n_atoms_must_be_positive")
        self.mode = self.mode_fixed
        self.exact = False
        self._absorb_until(n_atoms)
        logger.debug("fixed_n truncation at %d atoms; field is approximate", self.n_used)
        return self.field()

    def _check_bound(self, tau: float | None) -> np.ndarray:
        model_tau = self.model.sup_bound(self.grid)
        if model_tau is None:
            raise ContractViolation(f"threshold_mode_needs_bounded_model:{self.model.kind}")
        if tau is None:
            tau = model_tau
        if tau < model_tau * (1 - _BOUND_TOL):
            raise ContractViolation(f"sup_bound_below_model_bound:{tau}<{model_tau}")
        bound = _pointwise_bound(self.model, self.grid)
        return np.minimum(float(tau), bound) if bound is not None else np.full(self.grid.size, float(tau))

    def _stop_index(self, bound: np.ndarray) -> int | None:
        """Atoms of the current block to absorb before stopping, or None."""

        live = bound > 0
        if not np.any(live):
            return 0
        block, row = divmod(self.n_used, ARRIVAL_BLOCK)
        values, _, _ = self._block_rows(block)
        levels = self._block_levels(block)[row:]
        contrib = levels[:, None] * values[row:, live]
        before = np.maximum.accumulate(np.vstack([self.values[live], contrib[:-1]]), axis=0)
        settled = np.all(levels[:, None] * bound[live] <= before, axis=1)
        hits = np.flatnonzero(settled)
        return int(hits[0]) if hits.size else None

    def run_threshold(self, tau: float | None = None, *, max_atoms: int = MAX_THRESHOLD_ATOMS) -> MaxStableField:
        """Draw atoms until no future atom can raise any grid value."""

        bound = self._check_bound(tau)
        self.mode = self.mode_threshold
        while True:
            stop = self._stop_index(bound)
            if stop is not None:
                if stop:
                    self._absorb(stop)
                break
            if self.n_used >= max_atoms:
                raise NumericFailure(f"threshold_simulation_did_not_terminate:{max_atoms}")
            self._absorb(ARRIVAL_BLOCK - self.n_used % ARRIVAL_BLOCK)
        self.exact = True
        logger.debug("threshold stop after %d atoms", self.n_used)
        return self.field()

    def extend(self, k: int) -> MaxStableField:
        """Add ``k`` more atoms to the current run."""

        if k < 0:
            raise ContractViolation("extension_must_be_non_negative")
        self._absorb_until(self.n_used + k)
        return self.field()

    def field(self) -> MaxStableField:
        truncation = Truncation(self.mode, self.n_used, self.exact, self.overflow)
        return MaxStableField(self.grid, self.values.copy(), tuple(self.atoms), truncation)


def simulate_dehaan(
    model: SpectralModel,
    grid: Grid,
    rng: RngStream,
    *,
    n_atoms: int | None = None,
    sup_bound: float | None = None,
    threshold: bool = False,
    atom_log_cap: int = DEFAULT_ATOM_LOG_CAP,
) -> MaxStableField:
    """Simulate a field in fixed-n mode (``n_atoms``) or threshold mode.

    Threshold mode is selected by ``sup_bound`` or ``threshold=True`` (the
    model's own bound). Neither selects fixed-n with the default atom count.
    """

    if n_atoms is not None and (sup_bound is not None or threshold):
        raise ContractViolation("choose_either_n_atoms_or_threshold")
    sim = DeHaanSimulator(model, grid, rng, atom_log_cap=atom_log_cap)
    if sup_bound is not None or threshold:
        return sim.run_threshold(sup_bound)
    field = sim.run_fixed(DEFAULT_N_ATOMS if n_atoms is None else n_atoms)
    logger.warning("fixed_n truncation at %d atoms; field is approximate", field.truncation.n_used)
    return field


class M3Simulator(DeHaanSimulator):
    """Moving-maximum simulator: atoms (X_i, V_i) on the padded window.

    Levels are ``A / Gamma_i`` with A the intensity measure of the padded
    window; shapes are evaluated on the inner grid only.
    """

    def __init__(
        self,
        shape: ShapeModel,
        grid: Grid,
        rng: RngStream,
        *,
        padding: float | None = None,
        positions: str = "continuous",
        atom_log_cap: int = DEFAULT_ATOM_LOG_CAP,
    ) -> None:
        if positions not in POSITIONS:
            raise ContractViolation(f"unknown_positions:{positions}")
        if positions == "grid" and grid.spacing is None:
            raise ContractViolation("grid_positions_need_spacing")
        resolved = shape.resolve(grid, padding)
        if padding is None:
            padding = resolved.support_radius
        if padding < resolved.support_radius - _BOUND_TOL:
            raise ContractViolation(f"padding_below_support_radius:{padding}<{resolved.support_radius}")
        self.shape = resolved
        self.padding = float(padding)
        self.positions = positions
        self.area = self._padded_measure(grid)
        super().__init__(resolved, grid, rng, atom_log_cap=atom_log_cap, level_scale=self.area)

    def _padded_measure(self, grid: Grid) -> float:
        if self.positions == "grid" and not grid.lattice:
            h = float(grid.spacing)  # type: ignore[arg-type]
            m = math.floor((grid.radius + self.padding) / h + _BOUND_TOL)
            return (2 * m + 1) ** grid.d * h**grid.d * self.shape.intensity
        return self.shape.padded_area(grid, self.padding) * self.shape.intensity

    def _draw_centers(self, gen: np.random.Generator) -> np.ndarray:
        if self.positions == "grid" and not self.grid.lattice:
            h = float(self.grid.spacing)  # type: ignore[arg-type]
            m = math.floor((self.grid.radius + self.padding) / h + _BOUND_TOL)
            return h * gen.integers(-m, m + 1, size=(ARRIVAL_BLOCK, self.grid.d)).astype(float)
        return self.shape.draw_centers(self.grid, self.padding, gen, ARRIVAL_BLOCK)

    def _draw_block(self, block):
        centers = self._draw_centers(self.rng.spawn(1, block).generator())
        values = self.shape.shape_values(self.grid, centers, self.rng.spawn(2, block))
        return values, self.shape.masses_for(self.grid, centers), centers

    def _check_bound(self, tau):
        height = self.shape.height
        if tau is None:
            tau = height
        if tau < height * (1 - _BOUND_TOL):
            raise ContractViolation(f"sup_bound_below_shape_height:{tau}<{height}")
        return np.full(self.grid.size, float(tau))

    def field(self) -> MaxStableField:
        base = super().field()
        return MaxStableField(base.grid, base.values, base.atoms, base.truncation, self.padding)


def simulate_m3(
    shape: ShapeModel,
    grid: Grid,
    rng: RngStream,
    *,
    padding: float | None = None,
    n_atoms: int | None = None,
    threshold: float | bool | None = None,
    positions: str = "continuous",
    atom_log_cap: int = DEFAULT_ATOM_LOG_CAP,
) -> MaxStableField:
    if n_atoms is not None and threshold not in (None, False):
        raise ContractViolation("choose_either_n_atoms_or_threshold")
    sim = M3Simulator(shape, grid, rng, padding=padding, positions=positions, atom_log_cap=atom_log_cap)
    if threshold is True or (threshold is None and n_atoms is None):
        return sim.run_threshold()
    if threshold not in (None, False):
        return sim.run_threshold(float(threshold))
    return sim.run_fixed(n_atoms if n_atoms is not None else DEFAULT_N_ATOMS)


def build_m3_field(
    shape: ShapeModel,
    grid: Grid,
    atoms: Sequence[tuple[Sequence[float] | float, float]],
    *,
    padding: float | None = None,
    rng: RngStream | None = None,
) -> MaxStableField:
    """Field max_i V_i Z(x - X_i) from explicit (X_i, V_i) pairs."""

    resolved = shape.resolve(grid, padding)
    ordered = sorted(atoms, key=lambda a: -float(a[1]))
    centers = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in ordered]).reshape(-1, grid.d)
    values = resolved.shape_values(grid, centers, rng or RngStream(0))
    logged = [
        Atom(u=float(v), path=SpectralPath(grid, values[i]), index=i, origin=tuple(centers[i].tolist()))
        for i, (_, v) in enumerate(ordered)
    ]
    truncation = Truncation("injected", len(logged), True)
    return MaxStableField.from_atoms(grid, logged, truncation, padding=padding)


def pointwise_max(f1: MaxStableField, f2: MaxStableField) -> MaxStableField:
    if not f1.grid.same_as(f2.grid):
        raise DataError("grid_mismatch")
    atoms = sorted(f1.atoms + f2.atoms, key=lambda a: -a.u)
    t1, t2 = f1.truncation, f2.truncation
    truncation = Truncation(
        t1.mode if t1.mode == t2.mode else "combined",
        t1.n_used + t2.n_used,
        t1.exact and t2.exact,
        t1.overflow or t2.overflow,
    )
    return MaxStableField(f1.grid, np.maximum(f1.values, f2.values), tuple(atoms), truncation, f1.padding)


def rescale(field: MaxStableField, factor: float) -> MaxStableField:
    if not factor > 0:
        raise ContractViolation("rescale_factor_must_be_positive")
    atoms = tuple(
        Atom(a.u * factor, a.path, a.index, a.origin, a.labels) for a in field.atoms
    )
    return MaxStableField(field.grid, field.values * factor, atoms, field.truncation, field.padding)
