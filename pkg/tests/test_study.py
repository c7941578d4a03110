import csv
import io
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from rich.console import Console

from src.core.custom_exceptions import ValidationException
from src.models.basis import DensityFunction
from src.schemas.common import BasisFamily, Method, ProblemKind
from src.schemas.config import ProblemSection, StudyConfig
from src.schemas.report import CSV_COLUMNS, ConvergenceReport, ConvergenceRow
from src.services.bspline_basis import BSplineBasisService
from src.services.discretization import DiscretizationService
from src.services.single_layer import SingleLayerService
from src.services.study import StudyService


def report_with(errors, orders, surrogates=None, bound_ok=True, degree=0, reference_norm=1.0):
    surrogates = surrogates or [0.1] * len(errors)
    rows = [
        ConvergenceRow(
            level=level, h_edge=0.5 ** level, h_area=0.25 ** level, N=24 * 4 ** level,
            l2_density_err=e, order_edge=o, stability_surrogate=s, bound43_ok=bound_ok,
        )
        for level, (e, o, s) in enumerate(zip(errors, orders, surrogates))
    ]
    return ConvergenceReport(
        method=Method.GALERKIN, family=BasisFamily.BSPLINE, degree=degree,
        problem="constant", reference_norm=reference_norm, rows=rows,
    )


def test_constant_problem_on_the_sphere(sphere):
    problem = StudyService.manufactured_problem(ProblemKind.CONSTANT, sphere, ProblemSection(value=2.0))
    x = np.array([[0.0, 0.6, 0.8], [1.0, 0.0, 0.0]])
    assert_allclose(problem.boundary_data(x), 2.0)
    assert_allclose(problem.exact_density(x), 2.0)
    assert_allclose(problem.exterior_potential(np.array([[0.0, 0.0, 4.0]])), 0.5)


def test_point_source_image_matches_boundary_data(sphere, random_surface_points):
    problem = StudyService.manufactured_problem(
        ProblemKind.POINT_SOURCE, sphere, ProblemSection(kind="point_source", source_point=(0.1, -0.2, 0.3))
    )
    points = random_surface_points().x
    assert_allclose(problem.interior_potential(points), problem.boundary_data(points), rtol=1e-12)
    assert np.all(problem.exact_density(points) > 0)


def test_point_source_at_the_centre(sphere):
    problem = StudyService.manufactured_problem(ProblemKind.POINT_SOURCE, sphere, ProblemSection(kind="point_source"))
    assert_allclose(problem.interior_potential(np.array([[0.1, 0.1, 0.1]])), 1.0 / (4 * math.pi))
    assert_allclose(problem.exact_density(np.array([[0.0, 0.0, 1.0]])), 1.0 / (4 * math.pi))


def test_point_source_must_be_well_inside(sphere):
    with pytest.raises(ValidationException):
        StudyService.manufactured_problem(
            ProblemKind.POINT_SOURCE, sphere, ProblemSection(kind="point_source", source_point=(0.0, 0.0, 0.9))
        )
    with pytest.raises(ValidationException):
        StudyService.manufactured_problem(
            ProblemKind.POINT_SOURCE, sphere, ProblemSection(kind="point_source", source_point=(2.0, 0.0, 0.0))
        )


def test_harmonic_problem(sphere):
    problem = StudyService.manufactured_problem(ProblemKind.HARMONIC, sphere, ProblemSection(kind="harmonic", harmonic_n=2))
    x = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    assert_allclose(problem.boundary_data(x), [1.0, -0.5])
    assert_allclose(problem.exact_density(x), [5.0, -2.5])
    assert_allclose(problem.exterior_potential(np.array([[0.0, 0.0, 2.0]])), 1.0 / 8.0)


def test_ellipsoid_has_no_closed_form_density(ellipsoid):
    problem = StudyService.manufactured_problem(ProblemKind.CONSTANT, ellipsoid, ProblemSection())
    assert problem.exact_density is None
    assert_allclose(problem.interior_potential(np.zeros((1, 3))), 1.0)


def test_probe_points_are_off_the_surface(ellipsoid):
    interior, exterior = StudyService.probe_points(ellipsoid)
    semi = np.array([1.0, 0.8, 0.6])
    assert np.all(np.sum((interior / semi) ** 2, axis=1) < 1)
    assert np.all(np.sum((exterior / semi) ** 2, axis=1) > 1)


def test_l2_surface_error(sphere, grid_factory):
    grid = grid_factory(3)
    basis = BSplineBasisService.build_global_bspline_basis(grid, 0)
    ones = DensityFunction.discrete(basis, np.ones(basis.size))
    assert StudyService.l2_surface_error(sphere, grid, ones, lambda x: np.ones(len(x)), 6) == pytest.approx(0.0, abs=1e-12)
    twos = DensityFunction.discrete(basis, np.full(basis.size, 2.0))
    assert StudyService.l2_surface_error(sphere, grid, twos, ones, 6) == pytest.approx(math.sqrt(4 * math.pi), rel=1e-7)


def test_observed_order():
    assert StudyService._order(4e-2, 1e-2, 0.2, 0.1) == pytest.approx(2.0)
    assert math.isnan(StudyService._order(math.nan, 1e-2, 0.2, 0.1))
    assert math.isnan(StudyService._order(0.0, 1e-2, 0.2, 0.1))


def test_acceptance_passes_for_first_order_convergence():
    report = report_with([1e-1, 5e-2, 2.4e-2], [math.nan, 1.0, 1.06])
    assert StudyService.evaluate_acceptance(report) == []


def test_acceptance_failures():
    failures = StudyService.evaluate_acceptance(report_with([1e-1, 2e-1], [math.nan, -1.0]))
    assert any("did not decrease" in f for f in failures)
    assert any("outside" in f for f in failures)

    failures = StudyService.evaluate_acceptance(report_with([1e-1, 5e-2], [math.nan, 1.0], bound_ok=False))
    assert any("bound violated" in f for f in failures)

    failures = StudyService.evaluate_acceptance(report_with([1e-1, 5e-2], [math.nan, 1.0], surrogates=[1.0, 0.01]))
    assert any("drifts" in f for f in failures)


def test_acceptance_skips_orders_at_the_quadrature_floor():
    report = report_with([1e-9, 2e-9], [math.nan, -1.0])
    assert StudyService.evaluate_acceptance(report) == []


def test_emit_report_writes_csv(tmp_path):
    report = report_with([1e-1, 5e-2], [math.nan, 1.0])
    path = tmp_path / "out" / "study.csv"
    buffer = io.StringIO()
    failures = StudyService.emit_report(report, path, Console(file=buffer, width=200))
    assert failures == []
    assert "PASS" in buffer.getvalue()

    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 3
    assert rows[1][CSV_COLUMNS.index("bound43_ok")] == "true"
    assert rows[2][CSV_COLUMNS.index("N")] == "96"
    assert float(rows[2][CSV_COLUMNS.index("l2_density_err")]) == 5e-2


def test_emit_report_rejects_empty_reports():
    report = ConvergenceReport(method=Method.GALERKIN, family=BasisFamily.BSPLINE, degree=0, problem="constant")
    with pytest.raises(ValidationException):
        StudyService.emit_report(report, None)


def test_study_needs_two_levels():
    config = StudyConfig.model_validate({"grid": {"n": 2, "k": 2, "refinements": 1}})
    with pytest.raises(ValidationException):
        StudyService.run_convergence_study(config)


@pytest.mark.slow
def test_galerkin_study_on_the_sphere(tmp_path):
    config = StudyConfig.model_validate({
        "grid": {"n": 2, "k": 2, "refinements": 2},
        "problem": {"kind": "harmonic", "harmonic_n": 1},
    })
    report = StudyService.run_convergence_study(config)
    assert [row.N for row in report.rows] == [24, 96]
    assert report.reference_norm == pytest.approx(3 * math.sqrt(4 * math.pi / 3), rel=1e-6)
    errors = [row.l2_density_err for row in report.rows]
    assert errors[1] < errors[0]
    assert 0.5 < report.rows[1].order_edge < 2.0
    assert all(row.bound43_ok for row in report.rows)
    assert all(row.stability_surrogate > 0 for row in report.rows)
    assert report.rows[1].pot_err_exterior < report.rows[0].pot_err_exterior


@pytest.mark.slow
def test_self_convergence_study_on_the_ellipsoid():
    config = StudyConfig.model_validate({
        "surface": {"kind": "ellipsoid", "semi_axes": [1.0, 0.8, 0.6]},
        "grid": {"n": 2, "k": 2, "refinements": 2},
    })
    report = StudyService.run_convergence_study(config)
    assert np.isfinite(report.rows[0].l2_density_err)
    assert math.isnan(report.rows[1].l2_density_err)
    assert np.isfinite(report.rows[1].pot_err_interior)
    assert math.isnan(report.rows[1].pot_err_exterior)


def test_harmonic_density_for_the_first_zonal_function(sphere):
    problem = StudyService.manufactured_problem(ProblemKind.HARMONIC, sphere, ProblemSection(kind="harmonic", harmonic_n=1))
    x = np.array([[0.0, 0.6, 0.8], [0.6, 0.0, -0.8]])
    assert_allclose(problem.boundary_data(x), x[:, 2])
    assert_allclose(problem.exact_density(x), 3 * x[:, 2])


@pytest.fixture(scope="module")
def constant_levels():
    """Piecewise constants for f = 1 at n = 4, 8, 16 with both methods."""
    configs = {
        method: StudyConfig.model_validate({"grid": {"n": 4, "k": 4, "refinements": 3}, "method": {"kind": method.value}})
        for method in (Method.GALERKIN, Method.COLLOCATION)
    }
    atlas = StudyService.build_atlas(configs[Method.GALERKIN].surface)
    problem = StudyService.manufactured_problem(ProblemKind.CONSTANT, atlas, configs[Method.GALERKIN].problem)
    levels = {
        method: [StudyService.solve_level(atlas, config, problem, level) for level in range(3)]
        for method, config in configs.items()
    }
    return atlas, problem, configs, levels


def density_errors(atlas, problem, levels):
    return [
        StudyService.l2_surface_error(
            atlas, basis.grid, DensityFunction.discrete(basis, density.coefficients), problem.exact_density, 6
        )
        for basis, _, density in levels
    ]


@pytest.mark.slow
def test_piecewise_constant_galerkin_recovers_the_constant(constant_levels):
    _, _, _, levels = constant_levels
    assert [basis.size for basis, _, _ in levels[Method.GALERKIN]] == [96, 384, 1536]
    _, system, density = levels[Method.GALERKIN][-1]
    assert system.quadrature_asymmetry < 1e-2
    assert_allclose(density.coefficients, 1.0, atol=1e-2)


@pytest.mark.slow
def test_collocation_agrees_with_galerkin(constant_levels):
    atlas, problem, _, levels = constant_levels
    galerkin_errors = density_errors(atlas, problem, levels[Method.GALERKIN])
    collocation_errors = density_errors(atlas, problem, levels[Method.COLLOCATION])
    for (g_basis, _, g_density), (c_basis, _, c_density), e_g, e_c in zip(
        levels[Method.GALERKIN], levels[Method.COLLOCATION], galerkin_errors, collocation_errors
    ):
        gap = StudyService.l2_surface_error(
            atlas, g_basis.grid,
            DensityFunction.discrete(c_basis, c_density.coefficients),
            DensityFunction.discrete(g_basis, g_density.coefficients), 6,
        )
        assert gap <= 3 * max(e_g, e_c)


@pytest.mark.slow
@pytest.mark.parametrize("method", [Method.GALERKIN, Method.COLLOCATION])
def test_potential_error_stays_under_the_bound(constant_levels, method):
    atlas, problem, configs, levels = constant_levels
    interior, exterior = StudyService.probe_points(atlas)
    targets = np.vstack([interior, exterior])
    deltas = np.array([1.0 - 0.4] * 6 + [2.0 - 1.0] * 6)
    exact = np.concatenate([problem.interior_potential(interior), problem.exterior_potential(exterior)])

    for (basis, _, density), e in zip(levels[method], density_errors(atlas, problem, levels[method])):
        discrete = DensityFunction.discrete(basis, density.coefficients)
        values = SingleLayerService.potential_values(basis.grid, discrete, targets, configs[method].quadrature)
        bounds = np.array([SingleLayerService.potential_error_bound(4 * math.pi, d, e) for d in deltas])
        assert np.all(np.abs(values - exact) <= bounds)


@pytest.mark.slow
@pytest.mark.parametrize("method", [Method.GALERKIN, Method.COLLOCATION])
def test_stability_surrogate_plateaus(constant_levels, method):
    _, _, _, levels = constant_levels
    surrogates = np.array([
        DiscretizationService.diagnose_system(system).stability_surrogate for _, system, _ in levels[method]
    ])
    assert np.all(surrogates > 0)
    assert surrogates.max() / surrogates.min() < 10.0


@pytest.mark.slow
def test_default_nodes_are_hadamard_dominant_at_n4(constant_levels):
    atlas, _, _, levels = constant_levels
    _, system, _ = levels[Method.COLLOCATION][0]
    nodes = DiscretizationService.default_quadrature_nodes(atlas, system.collocation)
    report = DiscretizationService.diagnose_system(system, system.collocation, nodes)
    assert report.hadamard_dominant is True


@pytest.mark.slow
def test_linear_lagrange_galerkin_rate():
    config = StudyConfig.model_validate({
        "basis": {"family": "lagrange", "degree": 1},
        "grid": {"n": 2, "k": 2, "refinements": 3},
        "problem": {"kind": "harmonic", "harmonic_n": 1},
    })
    report = StudyService.run_convergence_study(config)
    errors = [row.l2_density_err for row in report.rows]
    assert errors[2] < errors[1] < errors[0]
    for row in report.rows[1:]:
        assert 1.5 <= row.order_edge <= 2.5
    assert all(row.bound43_ok for row in report.rows)
