import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.custom_exceptions import AtlasException, NotFoundException, ValidationException
from src.models.basis import DensityFunction
from src.services.chart_atlas import ChartAtlasService
from src.services.discretization import DiscretizationService
from src.services.lagrange_basis import LagrangeBasisService
from src.services.study import StudyService


@pytest.mark.parametrize("m", [1, 2])
def test_shape_functions_are_cardinal(m):
    for r in range(m + 1):
        for s in range(m + 1):
            expected = 1.0 if r == s else 0.0
            assert LagrangeBasisService.lagrange_shape_1d(m, r, s / m) == pytest.approx(expected, abs=1e-14)
    values = [LagrangeBasisService.lagrange_shape_1d(m, r, 0.37) for r in range(m + 1)]
    assert sum(values) == pytest.approx(1.0)


def test_shape_function_arguments():
    with pytest.raises(ValidationException):
        LagrangeBasisService.lagrange_shape_1d(0, 0, 0.5)
    with pytest.raises(ValidationException):
        LagrangeBasisService.lagrange_shape_1d(2, 3, 0.5)
    with pytest.raises(ValidationException):
        LagrangeBasisService.lagrange_shape_1d(1, 0, 1.5)


@pytest.mark.parametrize("n,m,expected", [(2, 1, 26), (3, 1, 56), (4, 2, 386), (3, 2, 218)])
def test_merged_node_count_on_the_cube(sphere, grid_factory, n, m, expected):
    basis = LagrangeBasisService.build_global_lagrange_basis(sphere, grid_factory(n, m), m)
    assert basis.size == expected
    assert_allclose(np.linalg.norm(basis.nodes.x, axis=1), 1.0)

    multiplicity = np.array([len(group) for group in basis.members])
    assert np.sum(multiplicity == 3) == 8
    assert np.sum(multiplicity == 2) == 12 * (m * n - 1)


def test_nodes_are_pairwise_distinct(sphere, grid_factory):
    basis = LagrangeBasisService.build_global_lagrange_basis(sphere, grid_factory(3, 2), 2)
    distances = np.linalg.norm(basis.nodes.x[:, None, :] - basis.nodes.x[None, :, :], axis=2)
    np.fill_diagonal(distances, np.inf)
    assert distances.min() > 1e-3


def test_global_functions_are_cardinal_at_the_nodes(sphere, grid_factory):
    basis = LagrangeBasisService.build_global_lagrange_basis(sphere, grid_factory(3, 2), 2)
    phi = DiscretizationService._interpolation_matrix(basis, basis.nodes)
    assert_allclose(phi, np.eye(basis.size), atol=1e-12)

    assert LagrangeBasisService.eval_global_lagrange(basis, 7, basis.nodes[7]) == pytest.approx(1.0)
    assert LagrangeBasisService.eval_global_lagrange(basis, 7, basis.nodes[8]) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(NotFoundException):
        LagrangeBasisService.eval_global_lagrange(basis, basis.size, basis.nodes[0])


@pytest.mark.parametrize("m", [1, 2])
def test_expansion_is_continuous_across_chart_edges(sphere, grid_factory, rng, m):
    basis = LagrangeBasisService.build_global_lagrange_basis(sphere, grid_factory(3, m), m)
    coefficients = rng.normal(size=basis.size)
    t = np.linspace(0.0, 1.0, 13)
    for pair in sphere.adjacency:
        chart_a, chart_b = sphere.charts[pair.chart_a], sphere.charts[pair.chart_b]
        side_a = ChartAtlasService.map_points(
            sphere, np.full(len(t), pair.chart_a), ChartAtlasService.edge_parameters(chart_a, pair.edge_a, t)
        )
        side_b = ChartAtlasService.map_points(
            sphere,
            np.full(len(t), pair.chart_b),
            ChartAtlasService.edge_parameters(chart_b, pair.edge_b, 1.0 - t if pair.reversed else t),
        )
        assert_allclose(side_a.x, side_b.x, atol=1e-12)
        assert_allclose(basis.expand(coefficients, side_a), basis.expand(coefficients, side_b), atol=1e-12)


def test_interpolating_constants(sphere, grid_factory, random_surface_points):
    basis = LagrangeBasisService.build_global_lagrange_basis(sphere, grid_factory(2, 1), 1)
    coefficients = LagrangeBasisService.interpolate_nodal(lambda x: np.full(len(x), 2.5), basis)
    assert_allclose(coefficients, 2.5)
    assert_allclose(basis.expand(coefficients, random_surface_points()), 2.5, atol=1e-13)


def test_interpolation_error_decreases(sphere, grid_factory, random_surface_points):
    points = random_surface_points()
    errors = []
    for n in (3, 6):
        basis = LagrangeBasisService.build_global_lagrange_basis(sphere, grid_factory(n, 2), 2)
        coefficients = LagrangeBasisService.interpolate_nodal(lambda x: np.exp(x[:, 2]), basis)
        errors.append(np.max(np.abs(basis.expand(coefficients, points) - np.exp(points.x[:, 2]))))
    assert errors[1] < errors[0] / 4


def test_non_conforming_neighbour_grids_are_rejected(sphere):
    grid = ChartAtlasService.build_grid(sphere, [(2, 2), (2, 2), (3, 3), (2, 2), (2, 2), (2, 2)], 1)
    with pytest.raises(AtlasException):
        LagrangeBasisService.build_global_lagrange_basis(sphere, grid, 1)


def test_degree_checks(sphere, grid_factory):
    with pytest.raises(ValidationException):
        LagrangeBasisService.build_global_lagrange_basis(sphere, grid_factory(2, 0), 0)
    with pytest.raises(ValidationException):
        LagrangeBasisService.build_global_lagrange_basis(sphere, grid_factory(3, 1), 2)


@pytest.mark.slow
@pytest.mark.parametrize("m,ns", [(1, (2, 4, 8)), (2, (3, 6, 12))])
def test_interpolation_converges_in_l2(sphere, grid_factory, m, ns):
    def f(x):
        return np.exp(x[:, 2]) * np.cos(x[:, 0])

    errors = []
    for n in ns:
        grid = grid_factory(n, m)
        basis = LagrangeBasisService.build_global_lagrange_basis(sphere, grid, m)
        interpolant = DensityFunction.discrete(basis, LagrangeBasisService.interpolate_nodal(f, basis))
        errors.append(StudyService.l2_surface_error(sphere, grid, interpolant, f, 6))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders >= m + 0.5)
