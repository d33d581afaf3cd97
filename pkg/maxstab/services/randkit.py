"""Seedable random streams and the low-level samplers built on them."""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass
import logging
from typing import Callable, Sequence, TypeVar

import numpy as np
from scipy import linalg

from maxstab.models import Grid
from maxstab.services.errors import ContractViolation, NumericFailure

logger = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
ARRIVAL_BLOCK = 64

T = TypeVar("T")


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id, *path).

    Every call to :meth:`generator` restarts the stream, so samplers are pure
    functions of the stream they are handed.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.seed < 0 or self.stream_id < 0 or any(i < 0 for i in self.path):
            raise ContractViolation("stream_keys_must_be_non_negative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        return np.random.Generator(np.random.Philox(seq))

    def spawn(self, *indices: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + tuple(int(i) for i in indices))

    def describe(self) -> dict[str, object]:
        return {"seed": self.seed, "stream_id": self.stream_id, "path": list(self.path)}


@dataclass(frozen=True)
class GaussianSpec:
    """Zero-mean Gaussian process with stationary increments pinned at ``anchor``.

    ``variogram`` maps an array of displacements (shape ``(..., d)``) to the
    incremental variance sigma^2.
    """

    variogram: Callable[[np.ndarray], np.ndarray]
    anchor: tuple[float, ...] = (0.0,)

    def covariance(self, grid: Grid) -> np.ndarray:
        anchor = np.zeros(grid.d)
        anchor[: len(self.anchor)] = self.anchor[: grid.d]
        rel = grid.points - anchor
        var = np.asarray(self.variogram(rel), dtype=float)
        diff = rel[None, :, :] - rel[:, None, :]
        inc = np.asarray(self.variogram(diff), dtype=float)
        return 0.5 * (var[:, None] + var[None, :] - inc)


class PoissonArrivals:
    """Lazy arrivals Gamma_1 < Gamma_2 < ... of a unit-rate Poisson process.

    Exponential increments are drawn in fixed blocks so the sequence does not
    depend on how many levels are requested per call. Levels are
    ``scale / Gamma_i``.
    """

    def __init__(self, rng: RngStream, *, scale: float = 1.0) -> None:
        if scale <= 0:
            raise ContractViolation("level_scale_must_be_positive")
        self._gen = rng.generator()
        self._scale = float(scale)
        self._buffer = np.empty(0)
        self._pos = 0
        self._gamma = 0.0
        self.count = 0

    def _refill(self) -> None:
        self._buffer = self._gen.standard_exponential(ARRIVAL_BLOCK)
        self._pos = 0

    def next_arrival(self) -> float:
        if self._pos >= self._buffer.size:
            self._refill()
        self._gamma += float(self._buffer[self._pos])
        self._pos += 1
        self.count += 1
        return self._gamma

    def next_level(self) -> float:
        return self._scale / self.next_arrival()

    def peek_level(self) -> float:
        if self._pos >= self._buffer.size:
            self._refill()
        return self._scale / (self._gamma + float(self._buffer[self._pos]))

    def take(self, n: int) -> np.ndarray:
        return np.array([self.next_level() for _ in range(n)])


def levels_from_increments(increments: Sequence[float], scale: float = 1.0) -> np.ndarray:
    gammas = np.cumsum(np.asarray(increments, dtype=float))
    return scale / gammas


def poisson_frechet_atoms(rng: RngStream, n: int) -> np.ndarray:
    """Decreasing levels U_1 > ... > U_n of the Poisson process u^-2 du."""

    if n < 0:
        raise ContractViolation("atom_count_must_be_non_negative")
    if n == 0:
        return np.empty(0)
    return PoissonArrivals(rng).take(n)


def cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    n = cov.shape[0]
    for delta in JITTER_LADDER:
        try:
            chol = linalg.cholesky(cov + delta * np.eye(n), lower=True)
        except linalg.LinAlgError:
            logger.debug("cholesky failed with jitter %g", delta)
            continue
        if delta > 0:
            logger.warning("cholesky needed jitter %g on a %d-point grid", delta, n)
        return chol
    raise NumericFailure(f"cholesky_failed:n={n},max_jitter={JITTER_LADDER[-1]}")


def sample_gaussian_path(
    spec: GaussianSpec,
    grid: Grid,
    rng: RngStream,
    count: int | None = None,
) -> np.ndarray:
    """Sample the pinned Gaussian process on ``grid``.

    Returns shape ``(n,)`` or ``(count, n)``. Points of zero variance (the
    anchor) are exactly zero.
    """

    cov = spec.covariance(grid)
    diag = np.diag(cov)
    if np.any(diag < -1e-12):
        raise NumericFailure("variogram_gives_negative_variance")
    live = diag > 0
    reps = 1 if count is None else int(count)
    out = np.zeros((reps, grid.size))
    if np.any(live):
        chol = cholesky_with_jitter(cov[np.ix_(live, live)])
        noise = rng.generator().standard_normal((int(live.sum()), reps))
        out[:, live] = (chol @ noise).T
    return out[0] if count is None else out


def _check_domain(values: np.ndarray, name: str, lo: float, hi: float | None) -> None:
    bad = ~np.isfinite(values) | (values <= lo)
    if hi is not None:
        bad |= values >= hi
    if np.any(bad):
        raise ContractViolation(f"{name}_out_of_domain")


def frechet_cdf(z: float | np.ndarray, c: float = 1.0) -> float | np.ndarray:
    """P[eta <= z] = exp(-c / z) for a Frechet margin with scale c."""

    zz = np.asarray(z, dtype=float)
    _check_domain(zz, "z", 0.0, None)
    _check_domain(np.asarray(c, dtype=float), "scale", 0.0, None)
    out = np.exp(-c / zz)
    return float(out) if out.ndim == 0 else out


def frechet_quantile(p: float | np.ndarray, c: float = 1.0) -> float | np.ndarray:
    pp = np.asarray(p, dtype=float)
    _check_domain(pp, "p", 0.0, 1.0)
    _check_domain(np.asarray(c, dtype=float), "scale", 0.0, None)
    out = -c / np.log(pp)
    return float(out) if out.ndim == 0 else out


def replicate(
    fn: Callable[[int, RngStream], T],
    n_reps: int,
    rng: RngStream,
    executor: Executor | None = None,
) -> list[T]:
    """Run ``fn(index, rng.spawn(index))`` for each replication, in order."""

    streams = [rng.spawn(i) for i in range(n_reps)]
    if executor is None:
        return [fn(i, s) for i, s in enumerate(streams)]
    return list(executor.map(fn, range(n_reps), streams))
