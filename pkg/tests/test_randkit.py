import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from maxstab.models import Grid
from maxstab.services.errors import ContractViolation, NumericFailure
from maxstab.services.randkit import (
    GaussianSpec,
    PoissonArrivals,
    RngStream,
    cholesky_with_jitter,
    frechet_cdf,
    frechet_quantile,
    levels_from_increments,
    poisson_frechet_atoms,
    replicate,
    sample_gaussian_path,
)


def test_stream_is_reproducible_and_spawns_are_independent():
    a = RngStream(7, 3).spawn(1, 2).generator().standard_normal(5)
    b = RngStream(7, 3).spawn(1, 2).generator().standard_normal(5)
    c = RngStream(7, 3).spawn(1, 3).generator().standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_negative_stream_keys_rejected():
    with pytest.raises(ContractViolation):
        RngStream(-1)


def test_levels_from_fixed_increments():
    levels = levels_from_increments([1.0, 1.0, 2.0])
    assert levels.tolist() == [1.0, 0.5, 0.25]


def test_arrivals_do_not_depend_on_request_pattern():
    one = PoissonArrivals(RngStream(11)).take(150)
    other = PoissonArrivals(RngStream(11))
    parts = np.concatenate([other.take(7), other.take(100), other.take(43)])
    assert np.array_equal(one, parts)


def test_peek_matches_next_level():
    arrivals = PoissonArrivals(RngStream(5), scale=3.0)
    arrivals.take(63)
    peeked = arrivals.peek_level()
    assert arrivals.next_level() == peeked


@given(st.integers(min_value=0, max_value=2**32), st.integers(min_value=1, max_value=300))
@settings(max_examples=30, deadline=None)
def test_levels_strictly_decrease(seed, n):
    levels = poisson_frechet_atoms(RngStream(seed), n)
    assert levels.shape == (n,)
    assert np.all(np.diff(levels) < 0)
    assert np.all(levels > 0)


def test_max_of_levels_is_unit_frechet():
    firsts = np.array([poisson_frechet_atoms(RngStream(3, 0, (i,)), 1)[0] for i in range(2000)])
    result = stats.kstest(firsts, lambda z: np.exp(-1.0 / z))
    assert result.pvalue > 1e-3


def test_frechet_cdf_and_quantile_invert():
    p = np.array([0.1, 0.5, 0.9])
    assert np.allclose(frechet_cdf(frechet_quantile(p, 2.0), 2.0), p)
    assert frechet_cdf(1.0) == pytest.approx(math.exp(-1.0))


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_frechet_domain_errors(bad):
    with pytest.raises(ContractViolation):
        frechet_cdf(bad)
    with pytest.raises(ContractViolation):
        frechet_quantile(1.0)


def test_cholesky_jitter_rescues_semidefinite():
    cov = np.ones((3, 3))
    chol = cholesky_with_jitter(cov)
    assert np.allclose(chol @ chol.T, cov, atol=1e-6)


def test_cholesky_gives_up_on_indefinite():
    with pytest.raises(NumericFailure):
        cholesky_with_jitter(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_gaussian_path_is_pinned_at_anchor():
    grid = Grid.window(1, 4.0, 1.0)
    spec = GaussianSpec(variogram=lambda h: np.abs(h[..., 0]))
    draws = sample_gaussian_path(spec, grid, RngStream(1), count=500)
    assert np.all(draws[:, grid.origin_index] == 0.0)
    var = draws[:, grid.index_of(4.0)].var()
    assert var == pytest.approx(4.0, rel=0.25)


def test_replicate_keeps_order_with_executor():
    from concurrent.futures import ThreadPoolExecutor

    fn = lambda i, s: (i, s.generator().integers(0, 1000))
    serial = replicate(fn, 20, RngStream(9))
    with ThreadPoolExecutor(max_workers=4) as pool:
        threaded = replicate(fn, 20, RngStream(9), pool)
    assert serial == threaded
