import numpy as np
import pytest

from maxstab.models import Atom, Grid, MaxStableField, SpectralPath, Truncation
from maxstab.services.catalog import CompactBump, Constant, Mixture
from maxstab.services.dehaan import rescale, simulate_dehaan, simulate_m3
from maxstab.services.decompose import (
    bivariate_ks,
    classify_atoms,
    empirical_shape,
    extract_m3,
    independence_check,
    lag_pairs,
    m3_identity_gap,
    m3_round_trip,
    resimulate_m3,
    split_atoms,
)
from maxstab.services.errors import ContractViolation, DataError
from maxstab.services.randkit import RngStream

RADII = [2.0, 4.0, 8.0, 16.0]


@pytest.fixture
def grid():
    return Grid.window(1, 16.0, 0.25)


def _mixed_field(grid, seed, n_atoms=40):
    model = Mixture(weights=(1.0, 1.0), components=(Constant(1.0), CompactBump(support_radius_=1.0)))
    return simulate_dehaan(model, grid, RngStream(seed), n_atoms=n_atoms)


def test_split_reconstructs_field(grid):
    field = classify_atoms(_mixed_field(grid, 1), "hopf", radii=RADII)
    parts = split_atoms(field, "hopf")
    assert np.array_equal(parts.reconstruction(), field.values)
    counts = parts.counts()
    assert counts["part1"] + counts["part2"] + counts["unassigned"] == len(field.atoms)


def test_split_routes_by_label(grid):
    field = classify_atoms(_mixed_field(grid, 2), "hopf", radii=RADII)
    parts = split_atoms(field, "hopf")
    assert all(np.all(a.path.values == 1.0) for a in parts.part1.atoms)
    assert all(a.path.values.max() <= 1.0 and a.path.values.min() == 0.0 for a in parts.part2.atoms)


def test_neveu_axis_uses_cesaro(grid):
    field = classify_atoms(_mixed_field(grid, 3), "neveu", radii=RADII)
    assert {a.labels["neveu"].test for a in field.atoms} == {"cesaro"}
    parts = split_atoms(field, "neveu")
    assert parts.axis == "neveu"


def test_test_must_match_axis(grid):
    with pytest.raises(ContractViolation):
        classify_atoms(_mixed_field(grid, 4), "neveu", "integral", radii=RADII)


def test_missing_verdict_is_data_error(grid):
    with pytest.raises(DataError):
        split_atoms(_mixed_field(grid, 5), "hopf")


def test_policy_assigns_inconclusive_atoms(grid):
    path = SpectralPath(grid, np.zeros(grid.size))
    atom = Atom(1.0, path, 0)
    field = MaxStableField.from_atoms(grid, [atom], Truncation("fixed_n", 1, False))
    labelled = classify_atoms(field, "hopf", radii=RADII)
    assert labelled.atoms[0].labels["hopf"].evidence == "zero_path"
    assert split_atoms(labelled, "hopf").counts()["unassigned"] == 1
    assert split_atoms(labelled, "hopf", policy="assign_to_part2").counts()["part2"] == 1


def test_overflowed_log_cannot_be_split(grid):
    field = simulate_dehaan(Constant(), grid, RngStream(6), n_atoms=10, atom_log_cap=2)
    with pytest.raises(DataError):
        split_atoms(classify_atoms(field, "hopf", radii=RADII), "hopf")


def test_m3_extraction_recenters_atoms(grid):
    field = simulate_m3(CompactBump(support_radius_=1.0), grid, RngStream(7), positions="grid")
    extraction = extract_m3(field)
    assert extraction.atoms
    for m3 in extraction.atoms:
        assert m3.Z.at(0.0) == pytest.approx(1.0)
        assert m3.Z.values.max() == pytest.approx(1.0)
    assert m3_identity_gap(field, extraction) <= 4 * np.finfo(float).eps


def test_m3_extraction_excludes_boundary_maxima(grid):
    path = SpectralPath(grid, np.where(grid.points[:, 0] == 16.0, 1.0, 0.0))
    field = MaxStableField.from_atoms(grid, [Atom(1.0, path, 0)], Truncation("fixed_n", 1, False))
    extraction = extract_m3(field)
    assert extraction.excluded == 1
    assert not extraction.atoms


def _bump_m3_fields(grid, n, seed):
    shape = CompactBump(support_radius_=1.0)
    return [simulate_m3(shape, grid, RngStream(seed, 0, (i,)), positions="grid") for i in range(n)]


def test_resimulated_m3_fields_share_one_shape(grid):
    extractions = [extract_m3(f) for f in _bump_m3_fields(grid, 3, 8)]
    shape = empirical_shape(extractions)
    again = resimulate_m3(shape, grid, RngStream(9), 4)
    assert len(again) == 4
    assert all(f.truncation.exact for f in again)
    assert all(np.all(f.values > 0) for f in again)
    assert np.array_equal(resimulate_m3(extractions, grid, RngStream(9), 4)[3].values, again[3].values)


def test_m3_round_trip_keeps_the_bivariate_law(grid):
    fields = _bump_m3_fields(grid, 400, 21)
    extractions = [extract_m3(f) for f in fields]
    result = m3_round_trip(fields, extractions, 400, RngStream(22), lag=1.0)
    assert result.n_atoms == sum(len(ex.atoms) for ex in extractions)
    assert result.ks < 0.15
    fresh = _bump_m3_fields(grid, 400, 23)
    scaled = [rescale(f, 4.0) for f in fresh]
    assert bivariate_ks(lag_pairs(fields, 1.0), lag_pairs(scaled, 1.0)) > 0.3


def test_independence_of_parts(grid):
    decompositions = [
        split_atoms(classify_atoms(_mixed_field(grid, 100 + i), "hopf", radii=RADII), "hopf") for i in range(300)
    ]
    report = independence_check(decompositions, lags=[0.0, 4.0])
    assert report.max_deviation < 0.12
    with pytest.raises(DataError):
        independence_check([])


def test_bivariate_ks_detects_shift():
    gen = np.random.default_rng(0)
    a = gen.standard_normal((400, 2))
    b = gen.standard_normal((400, 2))
    assert bivariate_ks(a, b) < 0.2
    assert bivariate_ks(a, b + 2.0) > 0.5
