import math

import numpy as np
import pytest

from maxstab.models import Grid
from maxstab.services.catalog import (
    BrownResnick,
    Comb,
    CompactBump,
    Constant,
    Mixture,
    comb_Z,
    constant_Y,
    model_from_descriptor,
    sigma2_records,
    sigma2_series,
    sigma2_tail_bound,
)
from maxstab.services.errors import ContractViolation


def test_sigma2_at_integers_and_dyadics():
    assert sigma2_series(0.0) == 0.0
    # t = 2^m: the first m terms vanish
    assert sigma2_series(4.0, K=2) == pytest.approx(0.0, abs=1e-12)
    assert sigma2_series(1.0, K=1) == pytest.approx(2.0)
    assert sigma2_series(1.0, K=3) == pytest.approx(3.29289, abs=1e-5)


@pytest.mark.parametrize("m", range(1, 9))
def test_sigma2_is_invariant_under_dyadic_rescaling(m):
    assert sigma2_series(2.0**m, K=3 + m) == pytest.approx(sigma2_series(1.0, K=3), abs=1e-9)
    assert sigma2_series(2.0**m, K=40 + m) == pytest.approx(sigma2_series(1.0, K=40), abs=1e-9)


def test_sigma2_small_t_is_accurate():
    t = 1e-9
    expected = sum((2 * math.pi * t / 2**k) ** 2 / 2 for k in range(1, 41))
    assert sigma2_series(t) == pytest.approx(expected, rel=1e-6)


def test_sigma2_tail_bound_controls_truncation():
    t = np.array([1.0, 3.0, 100.0])
    gap = np.abs(sigma2_series(t, K=60) - sigma2_series(t, K=20))
    assert np.all(gap <= sigma2_tail_bound(t, K=20) + 1e-12)


def test_sigma2_records_grow():
    records = sigma2_records(2000)
    ts = [t for t, _ in records]
    vals = [v for _, v in records]
    assert ts[0] == 1
    assert ts == sorted(ts)
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_brown_resnick_is_one_at_origin_and_lognormal(rng):
    grid = Grid.window(1, 8.0, 1.0)
    values = BrownResnick().sample_values(grid, rng, 4000)
    assert np.allclose(values[:, grid.origin_index], 1.0)
    logs = np.log(values[:, grid.index_of(1.0)])
    s2 = sigma2_series(1.0)
    assert logs.mean() == pytest.approx(-s2 / 2, abs=0.15)
    assert logs.var() == pytest.approx(s2, rel=0.15)


def test_brown_resnick_samplers_agree_in_law(rng):
    grid = Grid.window(1, 4.0, 1.0)
    series = np.log(BrownResnick(sampler="series").sample_values(grid, rng, 3000))
    chol = np.log(BrownResnick(sampler="cholesky").sample_values(grid, rng.spawn(1), 3000))
    idx = grid.index_of(3.0)
    assert series[:, idx].var() == pytest.approx(chol[:, idx].var(), rel=0.15)


def test_brown_resnick_rejects_two_dimensions():
    with pytest.raises(ContractViolation):
        BrownResnick(d=2)


def test_constant_paths():
    path = constant_Y(Grid.window(2, 2.0, 1.0), 3.0)
    assert np.all(path.values == 3.0)
    with pytest.raises(ContractViolation):
        Constant(c=0.0)


def test_bump_masses_integrate_exactly(rng):
    grid = Grid.window(1, 4.0, 0.5)
    bump = CompactBump(shape="parabolic", support_radius_=1.3)
    path = bump.sample(grid, rng)
    assert path.masses.sum() == pytest.approx(bump.integral)


def test_bump_sup_over_clips_to_box():
    bump = CompactBump(support_radius_=2.0)
    assert bump.sup_over([0.0], [1.0], [0.5]) == 1.0
    assert bump.sup_over([0.0], [1.0], [2.0]) == pytest.approx(0.5)
    assert bump.sup_over([0.0], [1.0], [5.0]) == 0.0


def test_zero_shape_rejected():
    with pytest.raises(ContractViolation):
        CompactBump(height_=0.0)


def test_comb_values_and_masses():
    grid = Grid.window(1, 6.0, 1 / 32)
    path = comb_Z(grid, 5)
    for n in range(1, 6):
        assert path.at(float(n)) == pytest.approx(1.0)
    assert path.at(1.5) == pytest.approx(0.75)
    assert path.at(2.5) == 0.0
    expected = 4 / 3 * sum(1 / n**2 for n in range(1, 6))
    assert path.masses.sum() == pytest.approx(expected, rel=1e-9)


def test_comb_resolves_default_truncation():
    grid = Grid.window(1, 16.0, 0.25)
    assert Comb().resolve(grid).bumps == 17
    assert Comb().resolve(grid, padding=10.0).bumps == 9


def test_comb_needs_continuous_grid(rng):
    with pytest.raises(ContractViolation):
        Comb(N=3).sample(Grid.window(1, 4.0, lattice=True), rng)


def test_uniform_bump_has_integral_mean(rng):
    grid = Grid.window(1, 4.0, 0.25)
    bump = CompactBump(support_radius_=1.0, placement="uniform")
    values = bump.sample_values(grid, rng, 6000)
    assert bump.is_stationary
    assert values[:, grid.origin_index].mean() == pytest.approx(bump.mean_scale(grid), rel=0.15)


def test_mixture_routes_components(rng):
    grid = Grid.window(1, 2.0, 1.0)
    mix = Mixture(weights=(1.0, 3.0), components=(Constant(1.0), Constant(2.0)))
    values = mix.sample_values(grid, rng, 4000)
    share = np.mean(values[:, 0] == 2.0)
    assert share == pytest.approx(0.75, abs=0.04)
    assert mix.sup_bound(grid) == 2.0


def test_mixture_rejects_misaligned_weights():
    with pytest.raises(ContractViolation):
        Mixture(weights=(1.0,), components=(Constant(1.0), Constant(2.0)))


def test_descriptor_round_trip():
    desc = {
        "kind": "mixture",
        "d": 1,
        "weights": [0.5, 0.5],
        "components": [{"kind": "comb", "N": 4}, {"kind": "compact_bump", "shape": "triangular"}],
    }
    model = model_from_descriptor(desc)
    assert model_from_descriptor(model.describe()).describe() == model.describe()


def test_unknown_model_rejected():
    with pytest.raises(ContractViolation):
        model_from_descriptor({"kind": "nope"})
