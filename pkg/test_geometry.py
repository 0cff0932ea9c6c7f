"""
Tests for the benchmark domains, Latin hypercube sampling, collocation sets and slab partitions.
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import ConfigurationError, EmptySampleError, OutOfDomainError, PartitionError
from geometry import (
    RECTANGLE_FLOW,
    SEMICIRCLE_FLOW,
    CollocationCounts,
    CollocationSet,
    RectangleDomain,
    SemiCircularDomain,
    assign_subdomains,
    generate_collocation,
    partition_domain,
    rectangle_inlet_velocity,
    sample_lhs,
    semicircle_inlet_velocity,
)


def _assert_stratified(points, bounds):
    n = len(points)
    for d, (lo, hi) in enumerate(bounds):
        strata = np.floor((points[:, d] - lo) / (hi - lo) * n).astype(int)
        strata = np.clip(strata, 0, n - 1)
        assert sorted(strata.tolist()) == list(range(n))


@pytest.mark.parametrize("n, bounds", [
    (4, [(0.0, 1.0), (0.0, 1.0)]),
    (1, [(2.0, 3.0)]),
    (100, [(-1.0, 1.0), (0.0, 5.0), (0.0, 0.5)]),
    (3321, [(0.0, 1.1), (0.0, 0.41), (0.0, 0.5)]),
])
def test_lhs_one_point_per_stratum(n, bounds):
    points = sample_lhs(n, bounds, seed=3)
    assert points.shape == (n, len(bounds))
    for d, (lo, hi) in enumerate(bounds):
        assert np.all(points[:, d] >= lo) and np.all(points[:, d] <= hi)
    _assert_stratified(points, bounds)


def test_lhs_is_seeded_and_rejects_bad_input():
    assert np.array_equal(sample_lhs(10, [(0, 1), (0, 1)], 5), sample_lhs(10, [(0, 1), (0, 1)], 5))
    with pytest.raises(EmptySampleError):
        sample_lhs(0, [(0, 1)])
    with pytest.raises(ConfigurationError):
        sample_lhs(5, [(1.0, 1.0)])


def test_rectangle_inlet_profile():
    domain = RectangleDomain()
    h, t_end = domain.height, domain.final_time

    u, v = rectangle_inlet_velocity(h / 2, 0.0, domain, RECTANGLE_FLOW)
    assert float(u) == 0.0 and float(v) == 0.0
    u, v = rectangle_inlet_velocity(h / 2, t_end, domain, RECTANGLE_FLOW)
    assert_allclose([float(u), float(v)], [1.0, 0.0], atol=1e-12)
    u, _ = rectangle_inlet_velocity(np.zeros(3), np.array([0.1, 0.2, 0.3]), domain, RECTANGLE_FLOW)
    assert np.all(u == 0.0)

    with pytest.raises(OutOfDomainError):
        rectangle_inlet_velocity(h + 0.1, 0.1, domain, RECTANGLE_FLOW)
    with pytest.raises(OutOfDomainError):
        rectangle_inlet_velocity(h / 2, t_end + 1.0, domain, RECTANGLE_FLOW)


def test_semicircle_inlet_profile():
    domain = SemiCircularDomain()
    d, t_end = domain.diameter, domain.final_time

    u, v = semicircle_inlet_velocity(d / 2, 0.0, domain, SEMICIRCLE_FLOW)
    assert math.hypot(float(u), float(v)) == 0.0
    u, v = semicircle_inlet_velocity(d / 2, t_end, domain, SEMICIRCLE_FLOW)
    assert_allclose([float(u), float(v)], [0.0, 1.5], atol=1e-12)
    u, v = semicircle_inlet_velocity(d, 2.0, domain, SEMICIRCLE_FLOW)
    assert_allclose(math.hypot(float(u), float(v)), 0.0, atol=1e-12)

    with pytest.raises(OutOfDomainError):
        semicircle_inlet_velocity(-0.1, 1.0, domain, SEMICIRCLE_FLOW)


def test_counts_resolution():
    assert CollocationCounts(3321, 244, 81).resolved() == (2752, 244, 81, 244)
    n_g, n_b, n_inout, n_ic = CollocationCounts(64561, 1124, 161).resolved()
    assert n_g + n_b + n_inout + n_ic == 64561
    assert CollocationCounts(500, 60, 20, 60).resolved() == (360, 60, 20, 60)

    with pytest.raises(ConfigurationError):
        CollocationCounts(100, 80, 30).resolved()
    with pytest.raises(ConfigurationError):
        CollocationCounts(100, 50, 10, 40).resolved()


def test_rectangle_training_collocation():
    domain = RectangleDomain()
    points = generate_collocation(domain, CollocationCounts(3321, 244, 81), RECTANGLE_FLOW, seed=0)

    assert points.n_total == 3321
    assert (points.n_g, points.n_bc, points.n_ic) == (2752, 325, 244)
    assert np.all(domain.contains(points.interior[:, 0], points.interior[:, 1]))
    assert np.all((points.interior[:, 2] >= 0) & (points.interior[:, 2] <= domain.final_time))
    assert np.all(points.initial[:, 2] == 0.0)
    assert np.all(points.initial_targets == 0.0)

    walls = points.boundary[points.boundary_kind == "wall"]
    assert len(walls) == 244
    assert np.all(domain.wall_residual(walls[:, 0], walls[:, 1]) <= 1e-12)

    inlet = points.boundary_kind == "inlet"
    outlet = points.boundary_kind == "outlet"
    assert (inlet.sum(), outlet.sum()) == (41, 40)
    assert np.all(points.boundary[inlet, 0] == 0.0)
    assert np.all(np.isnan(points.boundary_targets[inlet, 2]))
    assert np.all(np.isnan(points.boundary_targets[outlet, :2]))
    assert np.all(points.boundary_targets[outlet, 2] == 0.0)


def test_collocation_is_seeded():
    domain = RectangleDomain()
    counts = CollocationCounts(200, 40, 10)
    a = generate_collocation(domain, counts, RECTANGLE_FLOW, seed=4)
    b = generate_collocation(domain, counts, RECTANGLE_FLOW, seed=4)
    assert np.array_equal(a.interior, b.interior) and np.array_equal(a.boundary, b.boundary)
    c = generate_collocation(domain, counts, RECTANGLE_FLOW, seed=5)
    assert not np.array_equal(a.interior, c.interior)


def test_rectangle_prediction_grid_size():
    grid = generate_collocation(RectangleDomain(), CollocationCounts(64561, 1124, 161), RECTANGLE_FLOW, seed=1)
    assert grid.n_total == 64561
    assert len(grid.spatial_points()) == 64561


def test_semicircle_collocation_inside_domain():
    domain = SemiCircularDomain(stenosis_amplitude=0.8)
    points = generate_collocation(domain, CollocationCounts(800, 100, 40, 100), SEMICIRCLE_FLOW, seed=2)

    assert points.n_total == 800
    assert np.all(domain.strictly_inside(points.interior[:, 0], points.interior[:, 1]))
    walls = points.boundary[points.boundary_kind == "wall"]
    assert np.all(domain.wall_residual(walls[:, 0], walls[:, 1]) <= 1e-12)
    inlet = points.boundary[points.boundary_kind == "inlet"]
    assert np.all(inlet[:, 1] == 0.0) and np.all(inlet[:, 0] < 0)
    # the stenosis narrows the outer wall at the top of the bend
    assert float(domain.outer_radius(math.pi / 2)) == pytest.approx(2.9 + 1.6 - 0.8)


def test_collocation_frame_layout():
    points = generate_collocation(RectangleDomain(), CollocationCounts(60, 10, 4, 6), RECTANGLE_FLOW, seed=0)
    frame = points.to_frame()
    assert list(frame.columns) == ["x", "y", "t", "target_u", "target_v", "target_p"]
    assert len(frame) == 60
    assert frame.iloc[:points.n_g][["target_u", "target_v", "target_p"]].isna().all().all()


def test_boundary_points_need_a_target():
    with pytest.raises(ConfigurationError):
        CollocationSet(np.zeros((1, 3)), np.zeros((1, 3)), np.full((1, 3), np.nan), np.empty((0, 3)),
                       np.empty((0, 3)))


def test_rectangle_two_slabs():
    domain = RectangleDomain()
    collocation = generate_collocation(domain, CollocationCounts(500, 60, 20), RECTANGLE_FLOW, seed=0)
    first, second = partition_domain(domain, 2, collocation, n_interface=50, seed=1)

    assert first.region == pytest.approx((0.0, 0.55))
    assert second.region == pytest.approx((0.55, 1.1))
    assert first.neighbors == [1] and second.neighbors == [0]
    interface = first.interfaces[1]
    assert interface.count == 50
    assert_allclose(interface.points[:, 0], 0.55)
    assert second.interfaces[0].points is interface.points
    assert_allclose(second.interfaces[0].normal, -interface.normal)


def test_rectangle_three_slabs():
    domain = RectangleDomain()
    collocation = generate_collocation(domain, CollocationCounts(500, 60, 20), RECTANGLE_FLOW, seed=0)
    subdomains = partition_domain(domain, 3, collocation, n_interface=20, seed=1)

    assert subdomains[1].neighbors == [0, 2]
    assert_allclose(subdomains[0].interfaces[1].points[:, 0], 1.1 / 3)
    assert_allclose(subdomains[1].interfaces[2].points[:, 0], 2.2 / 3)


def test_single_subdomain_has_no_interfaces():
    domain = RectangleDomain()
    collocation = generate_collocation(domain, CollocationCounts(200, 40, 10), RECTANGLE_FLOW, seed=0)
    (only,) = partition_domain(domain, 1, collocation)
    assert only.interfaces == {} and only.neighbors == []
    assert only.collocation.n_total == collocation.n_total


@pytest.mark.parametrize("domain, flow, counts", [
    (RectangleDomain(), RECTANGLE_FLOW, CollocationCounts(600, 80, 20)),
    (SemiCircularDomain(stenosis_amplitude=0.8), SEMICIRCLE_FLOW, CollocationCounts(800, 100, 40)),
])
@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_partition_covers_every_point_once(domain, flow, counts, m):
    collocation = generate_collocation(domain, counts, flow, seed=7)
    subdomains = partition_domain(domain, m, collocation, n_interface=30, seed=8)

    assert sum(s.collocation.n_g for s in subdomains) == collocation.n_g
    assert sum(s.collocation.n_bc for s in subdomains) == collocation.n_bc
    assert sum(s.collocation.n_ic for s in subdomains) == collocation.n_ic

    for spec in subdomains:
        owners = assign_subdomains(domain, m, spec.collocation.interior[:, 0], spec.collocation.interior[:, 1])
        assert np.all(owners == spec.index)
        for j, side in spec.interfaces.items():
            other = subdomains[j].interfaces[spec.index]
            assert np.array_equal(side.points, other.points)
            assert_allclose(side.normal, -other.normal)
            k = max(spec.index, j)
            assert np.all(domain.interface_distance(side.points[:, 0], side.points[:, 1], k, m) <= 1e-12)
            assert np.all(domain.contains(side.points[:, 0], side.points[:, 1]))


def test_empty_subdomain_is_rejected():
    domain = RectangleDomain()
    left_only = CollocationSet(
        np.array([[0.1, 0.2, 0.1], [0.2, 0.1, 0.2]]),
        np.empty((0, 3)), np.empty((0, 3)), np.empty((0, 3)), np.empty((0, 3)),
    )
    with pytest.raises(PartitionError):
        partition_domain(domain, 2, left_only)
    with pytest.raises(PartitionError):
        partition_domain(domain, 0, left_only)


def test_snapshot_times_cover_the_horizon():
    assert_allclose(RectangleDomain().snapshot_times(6), [0.0, 0.1, 0.2, 0.3, 0.4, 0.5], atol=1e-12)
    assert len(RectangleDomain(final_time=0.05, time_step=0.01).snapshot_times(10)) == 6


def test_invalid_domains():
    with pytest.raises(ConfigurationError):
        RectangleDomain(length=-1.0)
    with pytest.raises(ConfigurationError):
        RectangleDomain(time_step=1.0)
    with pytest.raises(ConfigurationError):
        SemiCircularDomain(cross_radius=3.0, curvature_radius=2.9)
