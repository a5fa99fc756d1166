import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflectdiff.errors import ConfigurationError, ResolutionError
from reflectdiff.geometry import (SMOOTHSTEP_CURVATURE, Domain, SubdomainSpec, build_cutoff,
                                  build_grid, smooth_bump, smoothstep)


def test_interval_centres_and_spacing():
    g = build_grid(Domain.interval(0, 1), [4])
    np.testing.assert_allclose(g.centers[:, 0], [0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(g.spacing, [0.25])


def test_box_cell_count_and_volume():
    g = build_grid(Domain.box((0, 1), (0, 2)), [2, 4])
    assert g.size == 8
    assert g.cell_volume == pytest.approx(0.25)
    assert g.domain.volume == pytest.approx(2.0)


@pytest.mark.parametrize("cells", [0, -3])
def test_degenerate_cell_count_rejected(cells):
    with pytest.raises(ConfigurationError):
        build_grid(Domain.interval(0, 1), [cells])


def test_domain_rejects_inverted_bounds():
    with pytest.raises(ConfigurationError):
        Domain(((1.0, 0.0),))


def test_domain_kind_and_diameter():
    assert Domain.interval(0, 1).kind == "interval"
    box = Domain.box((0, 3), (0, 4))
    assert box.kind == "box"
    assert box.diameter == pytest.approx(5.0)


def test_locate_clips_boundary_points():
    g = build_grid(Domain.interval(0, 1), [4])
    np.testing.assert_array_equal(g.locate(np.array([[0.0], [0.3], [1.0]])), [0, 1, 3])


def test_inner_product_of_constants_is_volume():
    g = build_grid(Domain.box((0, 1), (0, 2)), [5, 7])
    one = g.constant(1.0)
    assert g.inner(one, one) == pytest.approx(2.0)


@given(st.lists(st.integers(2, 12), min_size=1, max_size=3),
       st.lists(st.floats(0.1, 5.0), min_size=3, max_size=3))
@settings(max_examples=40, deadline=None)
def test_grid_invariants(cells, sides):
    dom = Domain(tuple((0.0, s) for s in sides[: len(cells)]))
    g = build_grid(dom, cells)
    assert g.size == int(np.prod(cells))
    assert g.cell_volume * g.size == pytest.approx(dom.volume)
    np.testing.assert_allclose(g.spacing, np.asarray(sides[: len(cells)]) / cells)
    assert np.all(dom.contains(g.centers, closed=False))


def test_cutoff_plateau_and_support():
    g = build_grid(Domain.interval(0, 1), [64])
    spec = SubdomainSpec(((0.3, 0.7),), ((0.1, 0.9),))
    z = build_cutoff(g, spec)
    x = g.centers[:, 0]
    assert z[np.argmin(abs(x - 0.5))] == 1.0
    assert z[np.argmin(abs(x - 0.01))] == 0.0
    assert np.all((z >= 0) & (z <= 1))
    assert np.all(z[(x >= 0.3) & (x <= 0.7)] == 1.0)
    assert np.all(z[(x <= 0.1) | (x >= 0.9)] == 0.0)


def test_cutoff_transition_midpoint_is_half():
    g = build_grid(Domain.interval(0, 1), [40])
    spec = SubdomainSpec(((0.3375, 0.6625),), ((0.1375, 0.8625),))
    z = build_cutoff(g, spec)
    mid = np.argmin(abs(g.centers[:, 0] - 0.2375))
    assert g.centers[mid, 0] == pytest.approx(0.2375)
    assert z[mid] == pytest.approx(0.5)
    assert smoothstep(0.5) == 0.5


def test_cutoff_second_differences_bounded():
    g = build_grid(Domain.interval(0, 1), [200])
    spec = SubdomainSpec(((0.35, 0.65),), ((0.15, 0.85),))
    z = build_cutoff(g, spec)
    h, width = g.spacing[0], 0.2
    assert np.max(np.abs(np.diff(z, 2))) <= SMOOTHSTEP_CURVATURE * (h / width) ** 2 * 1.0001


def test_cutoff_margin_too_thin():
    g = build_grid(Domain.interval(0, 1), [8])
    with pytest.raises(ResolutionError):
        build_cutoff(g, SubdomainSpec(((0.25, 0.75),), ((0.125, 0.875),)))


def test_subdomain_must_nest():
    dom = Domain.interval(0, 1)
    with pytest.raises(ConfigurationError):
        SubdomainSpec(((0.1, 0.9),), ((0.2, 0.8),)).validate(dom)
    with pytest.raises(ConfigurationError):
        SubdomainSpec(((0.2, 0.8),), ((0.0, 1.0),)).validate(dom)


def test_centred_subdomain_fractions():
    spec = SubdomainSpec.centred(Domain.box((0, 1), (0, 2)), 0.8, 0.6)
    np.testing.assert_allclose(spec.support, [[0.1, 0.9], [0.2, 1.8]])
    np.testing.assert_allclose(spec.inner, [[0.2, 0.8], [0.4, 1.6]])


def test_cutoff_box_is_tensor_product():
    g = build_grid(Domain.box((0, 1), (0, 2)), [32, 64])
    z = build_cutoff(g, SubdomainSpec.centred(g.domain, 0.8, 0.5))
    Z = g.as_array(z)
    np.testing.assert_allclose(Z, np.outer(Z.max(axis=1), Z.max(axis=0)), atol=1e-15)


def test_smooth_bump_peak_and_support():
    x = np.array([[0.5], [0.7], [0.81]])
    b = smooth_bump(x, [0.5], [0.3])
    assert b[0] == 1.0
    assert 0 < b[1] < 1
    assert b[2] == 0.0
