import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxstab.models import Grid, SpectralPath
from maxstab.services.catalog import CompactBump, comb_Z, constant_Y
from maxstab.services.cones import (
    ConeVerdict,
    Thresholds,
    WeightFunction,
    axis_of,
    box_trace,
    cesaro_test,
    classify_path,
    decay_test,
    default_radii,
    integral_test,
    label_counts,
    relabel,
    sup_local_test,
    sup_smoothed,
    weighted_test,
)
from maxstab.services.errors import ContractViolation, DataError

RADII = [2.0**k for k in range(3, 8)]


@pytest.fixture
def grid():
    return Grid.window(1, 128.0, 0.125)


def test_default_radii_in_spacing_units(grid):
    assert default_radii(grid) == [2.0**k * 0.125 for k in range(3, 11)]


def test_constant_path_is_conservative_and_positive(grid):
    path = constant_Y(grid, 2.0)
    assert integral_test(path, RADII).label == "conservative"
    assert decay_test(path, RADII).label == "conservative"
    assert cesaro_test(path, RADII).label == "positive"


def test_bump_is_dissipative_and_null(grid):
    path = CompactBump().sample(grid, None)
    assert integral_test(path, RADII).label == "dissipative"
    assert decay_test(path, RADII).label == "dissipative"
    assert cesaro_test(path, RADII).label == "null"


def test_comb_is_integrable_without_decay():
    grid = Grid.window(1, 1024.0, 0.125)
    path = comb_Z(grid, 1025)
    radii = [2.0**k for k in range(3, 11)]
    result = classify_path(path, radii)
    assert result.label("integral") == "dissipative"
    assert result.label("decay") == "conservative"
    assert "integrable_without_decay" in result.conflicts


def test_trace_integrals_are_monotone(grid):
    path = comb_Z(grid, 129)
    trace, scale = box_trace(path, RADII)
    integrals = [row.integral for row in trace]
    assert integrals == sorted(integrals)
    assert scale == 1.0


def test_zero_path_rejected(grid):
    with pytest.raises(ContractViolation):
        integral_test(SpectralPath(grid, np.zeros(grid.size)), RADII)


@pytest.mark.parametrize(
    "radii",
    [[1.0, 2.0, 4.0], [8.0, 4.0, 16.0, 32.0], [8.0, 16.0, 32.0, 256.0]],
)
def test_bad_radii_rejected(grid, radii):
    with pytest.raises(ContractViolation):
        integral_test(constant_Y(grid), radii)


def test_sup_local_smooths_narrow_spikes(grid):
    path = comb_Z(grid, 129)
    smoothed = sup_smoothed(path, 0.5)
    assert smoothed.at(10.375) == pytest.approx(1.0)
    assert path.at(10.375) == 0.0
    assert sup_local_test(path, RADII).test == "sup_local"


def test_sup_local_rejects_coarse_and_lattice_grids():
    with pytest.raises(ContractViolation):
        sup_local_test(constant_Y(Grid.window(1, 64.0, 0.5)), [8.0, 16.0, 32.0, 64.0])
    with pytest.raises(ContractViolation):
        sup_smoothed(constant_Y(Grid.window(1, 64.0, lattice=True)), 0.5)


def test_weighted_test_only_reports_evidence(grid):
    verdict = weighted_test(constant_Y(grid), WeightFunction("exponential", rate=1.0), RADII)
    assert verdict.label == "inconclusive"
    assert verdict.evidence == "finite"


def test_power_weight_needs_exponent_above_one():
    with pytest.raises(ContractViolation):
        WeightFunction("power", exponent=1.0)


def test_relabel_with_new_thresholds(grid):
    verdict = decay_test(constant_Y(grid), RADII)
    strict = relabel(verdict, Thresholds(floor=5.0))
    assert strict.label == "inconclusive"
    assert ConeVerdict.from_json(verdict.to_json()).label == verdict.label


def test_axis_lookup():
    assert axis_of("integral") == "hopf"
    assert axis_of("cesaro") == "neveu"
    with pytest.raises(ContractViolation):
        axis_of("nope")


def test_classification_counts(grid):
    items = [classify_path(constant_Y(grid)), classify_path(CompactBump().sample(grid, None))]
    counts = label_counts(items, "integral")
    assert counts == {"conservative": 1, "dissipative": 1}
    with pytest.raises(DataError):
        items[0].label("weighted")


HOPF_AND_NEVEU = ("integral", "decay", "cesaro")


def _labels(path, radii=RADII):
    result = classify_path(path, radii)
    return {name: result.label(name) for name in HOPF_AND_NEVEU}


def _bump_path(grid, shape, center):
    values = shape.shape_values(grid, [[center]])[0]
    masses = shape.shape_masses(grid, [[center]])
    return SpectralPath(grid, values, None if masses is None else masses[0])


@given(st.integers(min_value=-30, max_value=30), st.sampled_from(["constant", "bump", "comb"]))
@settings(max_examples=25, deadline=None)
def test_labels_survive_rescaling(power, kind):
    grid = Grid.window(1, 128.0, 0.125)
    path = {"constant": constant_Y(grid), "bump": CompactBump().sample(grid, None), "comb": comb_Z(grid, 129)}[kind]
    factor = 2.0**power
    scaled = SpectralPath(grid, path.values * factor, path.masses * factor)
    before = classify_path(path, RADII).verdicts
    after = classify_path(scaled, RADII).verdicts
    assert {k: (v.label, v.evidence) for k, v in after.items()} == {k: (v.label, v.evidence) for k, v in before.items()}


@given(
    st.integers(min_value=-32, max_value=32),
    st.sampled_from(["triangular", "parabolic"]),
    st.floats(min_value=0.5, max_value=3.0),
)
@settings(max_examples=25, deadline=None)
def test_bump_labels_survive_shifts(steps, profile, support):
    grid = Grid.window(1, 128.0, 0.125)
    shape = CompactBump(shape=profile, support_radius_=support)
    centred = _labels(_bump_path(grid, shape, 0.0))
    shifted = _labels(_bump_path(grid, shape, steps * grid.spacing))
    assert shifted == centred == {"integral": "dissipative", "decay": "dissipative", "cesaro": "null"}


@given(
    st.integers(min_value=-4, max_value=4),
    st.integers(min_value=2, max_value=6),
    st.sampled_from(["triangular", "parabolic"]),
)
@settings(max_examples=20, deadline=None)
def test_lattice_window_agrees_with_integer_points(center, support, profile):
    lattice = Grid.window(1, 128.0, lattice=True)
    fine = Grid.window(1, 128.0, 0.125)
    shape = CompactBump(shape=profile, support_radius_=float(support))
    coarse = _bump_path(lattice, shape, float(center))
    dense = _bump_path(fine, shape, float(center))
    on_integers = fine.points[:, 0] == np.round(fine.points[:, 0])
    assert np.array_equal(fine.points[on_integers], lattice.points)
    assert np.array_equal(dense.values[on_integers], coarse.values)
    assert _labels(coarse) == _labels(dense)


def test_constant_labels_match_on_lattice_and_fine_windows():
    assert _labels(constant_Y(Grid.window(1, 128.0, lattice=True))) == _labels(constant_Y(Grid.window(1, 128.0, 0.125)))
