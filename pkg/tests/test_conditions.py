import numpy as np
import pytest

from reflectdiff.conditions import (Eigenblock, certify, check_sunnyside, cylinder_reference,
                                    first_eigenblock, perturbation_stability, transport_lower_bound,
                                    transport_operator, transport_ratio)
from reflectdiff.errors import ConfigurationError
from reflectdiff.geometry import Domain, SubdomainSpec, build_grid, smooth_bump
from reflectdiff.spectral import DiffusivityField, SpectralDecomposition, decompose, laplacian_basis

BOX = Domain.box((0, 1), (0, 2))
CENTRAL = [[0.2, 0.8], [0.4, 1.6]]


@pytest.fixture(scope="module")
def box_grid():
    return build_grid(BOX, [24, 48])


@pytest.fixture(scope="module")
def box_spectrum(box_grid):
    return laplacian_basis(box_grid, 10)


@pytest.fixture(scope="module")
def fine_interval():
    return build_grid(Domain.interval(0, 1), [1024])


def test_box_block_is_simple(box_spectrum):
    block = first_eigenblock(box_spectrum, "scan", CENTRAL)
    assert block.members == (1,)
    assert block.eigenvalue == pytest.approx(np.pi**2 / 4, rel=0.01)


def test_square_block_has_dimension_two():
    S = laplacian_basis(build_grid(Domain.box((0, 1), (0, 1)), [20, 20]), 8)
    block = first_eigenblock(S, "scan", [[0.2, 0.8], [0.2, 0.8]])
    assert len(block.members) == 2
    assert np.linalg.norm(block.iota) == pytest.approx(1.0)


def test_interval_block_is_simple(small_grid):
    rng = np.random.default_rng(0)
    for _ in range(5):
        f = DiffusivityField(small_grid, rng.uniform(0.5, 2.0, small_grid.size))
        assert first_eigenblock(decompose(f, 6), [1.0]).members == (1,)


def test_closed_form_interval_certificate(fine_interval):
    S = laplacian_basis(fine_interval, 4)
    block = first_eigenblock(S, [1.0])
    x = fine_interval.centers[:, 0]
    np.testing.assert_allclose(block.field, np.sqrt(2) * np.cos(np.pi * x), atol=1e-10)
    rep = check_sunnyside(block, [[0.25, 0.75]], 1.0, fine_interval)
    assert rep.c0 == pytest.approx(np.pi**2 / 2, rel=0.02)
    assert rep.worst_point[0] == pytest.approx(0.25, abs=2e-3)
    assert rep.certified and rep.mu == 1.0


def test_interior_maximum_never_certifies(fine_interval):
    x = fine_interval.centers[:, 0]
    rep = check_sunnyside(1.0 - (x - 0.5) ** 2, [[0.25, 0.75]], "optimize", fine_interval)
    assert not rep.certified
    assert max(rep.extra["mu_scan"].values()) <= 0


def test_box_certifies_on_central_region(box_spectrum):
    block, rep = certify(box_spectrum, CENTRAL)
    assert rep.certified and rep.c0 > 0
    assert set(rep.to_dict()) >= {"mu", "c0", "certified", "worst_point", "iota", "cluster"}


def test_region_outside_domain_rejected(box_spectrum, box_grid):
    with pytest.raises(ConfigurationError):
        check_sunnyside(box_spectrum.mode(1), [[0.2, 1.2], [0.4, 1.6]], 1.0, box_grid)


def test_explicit_iota_normalised(box_spectrum):
    block = first_eigenblock(box_spectrum, [-3.0])
    assert block.iota.tolist() == [-1.0]
    with pytest.raises(ConfigurationError):
        first_eigenblock(box_spectrum, [1.0, 1.0])


def test_large_cluster_scan_refused(small_grid):
    lam = np.array([0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0])
    S = SpectralDecomposition(small_grid, lam, np.eye(small_grid.size)[:, :7])
    with pytest.raises(ConfigurationError):
        first_eigenblock(S, "scan", [[0.2, 0.8]])
    assert len(first_eigenblock(S, np.ones(5)).members) == 5


def test_perturbation_certifies(box_grid):
    bump = smooth_bump(box_grid.centers, [0.5, 1.0], [0.3, 0.6])
    rep = perturbation_stability(DiffusivityField(box_grid, 1 + 0.05 * bump), CENTRAL, 0.1)
    assert rep.certified
    assert abs(rep.extra["eigenvalue_shift"]) <= 0.1
    assert not rep.extra["outside_hypothesis"]


def test_identity_perturbation_matches_direct_check(box_grid, box_spectrum):
    rep = perturbation_stability(DiffusivityField.constant(box_grid, 1.0), CENTRAL, 0.1, J=10)
    _, direct = certify(box_spectrum, CENTRAL)
    assert rep.c0 == pytest.approx(direct.c0, rel=1e-10)
    assert rep.extra["eigenvalue_shift"] == 0.0


def test_large_perturbation_flagged(box_grid):
    bump = smooth_bump(box_grid.centers, [0.5, 1.0], [0.3, 0.6])
    rep = perturbation_stability(DiffusivityField(box_grid, 1 + 0.5 * bump), CENTRAL, 0.1)
    assert rep.extra["outside_hypothesis"]


def test_transport_zero_h(fine_interval):
    u0 = np.sqrt(2) * np.cos(np.pi * fine_interval.centers[:, 0])
    zero = np.zeros(fine_interval.size)
    assert np.all(transport_operator(fine_interval, zero, u0) == 0.0)
    assert np.isnan(transport_ratio(fine_interval, zero, u0))
    sub = SubdomainSpec(((0.3, 0.7),), ((0.2, 0.8),))
    rep = transport_lower_bound(u0, fine_interval, sub, test_functions=np.vstack([zero, zero + 1]))
    assert rep.skipped == 1 and rep.ratios.size == 1


def test_transport_positive_and_scale_invariant(fine_interval):
    u0 = np.sqrt(2) * np.cos(np.pi * fine_interval.centers[:, 0])
    sub = SubdomainSpec(((0.3, 0.7),), ((0.2, 0.8),))
    rep = transport_lower_bound(u0, fine_interval, sub, trials=100, seed=1)
    assert rep.c > 0 and rep.ratios.size == 100
    h = np.random.default_rng(2).standard_normal(fine_interval.size)
    assert transport_ratio(fine_interval, 2 * h, u0) == transport_ratio(fine_interval, h, u0)


def test_transport_requires_certified_u0(fine_interval):
    x = fine_interval.centers[:, 0]
    sub = SubdomainSpec(((0.3, 0.7),), ((0.2, 0.8),))
    with pytest.raises(ConfigurationError):
        transport_lower_bound(1 - (x - 0.5) ** 2, fine_interval, sub, trials=3)


def test_cylinder_reference_values(box_spectrum):
    cyl = cylinder_reference(2.0, Domain.interval(0, 1))
    assert cyl.eigenvalue == pytest.approx(2.46740, abs=1e-5)
    assert box_spectrum.eigenvalues[1] == pytest.approx(cyl.eigenvalue, rel=0.01)
    z = np.linspace(0.1, 1.9, 200)
    pts = np.column_stack([np.full_like(z, 0.5), z])
    assert cyl.gradient_norm(pts).min() >= cyl.gradient_floor > 0
    x = box_spectrum.grid.centers
    np.testing.assert_allclose(np.abs(cyl.eigenfunction(x)), np.abs(box_spectrum.mode(1)), atol=5e-3)


def test_cylinder_reference_needs_short_base():
    with pytest.raises(ConfigurationError):
        cylinder_reference(1.0, Domain.interval(0, 2))


def test_eigenblock_requires_grid_for_fields(box_spectrum):
    block = Eigenblock(1.0, (1,), np.array([1.0]), box_spectrum.mode(1))
    with pytest.raises(ConfigurationError):
        check_sunnyside(block, CENTRAL, 1.0)
