# src/services/study.py
import logging
import math
import time
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from rich.console import Console
from rich.table import Table
from scipy.special import eval_legendre

from src.core.audit import audit_log
from src.core.config import settings
from src.core.custom_exceptions import ValidationException
from src.models.basis import DensityFunction, GlobalBasis
from src.models.geometry import ChartAtlas, MapKind, SurfaceGrid, SurfacePoints
from src.models.system import DenseSystem, DensityVector, ManufacturedProblem
from src.schemas.common import BasisFamily, Method, ProblemKind, SurfaceKind
from src.schemas.config import ProblemSection, StudyConfig, SurfaceSection
from src.schemas.report import CSV_COLUMNS, ConvergenceReport, ConvergenceRow
from src.services.bspline_basis import BSplineBasisService
from src.services.chart_atlas import ChartAtlasService
from src.services.discretization import DiscretizationService
from src.services.lagrange_basis import LagrangeBasisService
from src.services.quadrature import QuadratureService
from src.services.single_layer import SingleLayerService
from src.utils.file_io import write_csv

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
SOURCE_CLEARANCE = 0.2
EXTERIOR_PROBE_RADIUS = 2.0
INTERIOR_PROBE_RADIUS = 0.4
BOUND_MIN_DELTA = 0.5
ORDER_SLACK = (0.5, 1.8)
SURROGATE_DRIFT = 10.0

PointFunction = Callable[[np.ndarray], np.ndarray]


def _norms(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(x, dtype=float).reshape(-1, 3), axis=1)


class StudyService:

    # -------------------------------
    # BUILDING BLOCKS
    # -------------------------------
    @staticmethod
    def build_atlas(surface: SurfaceSection) -> ChartAtlas:
        rect = None
        if surface.rect_a is not None or surface.rect_b is not None:
            rect = (surface.rect_a or surface.rect_b, surface.rect_b or surface.rect_a)
        if surface.kind == SurfaceKind.ELLIPSOID:
            return ChartAtlasService.ellipsoid_atlas(surface.semi_axes, rect)
        return ChartAtlasService.unit_sphere_atlas(surface.radius, rect)

    @staticmethod
    def build_basis(atlas: ChartAtlas, config: StudyConfig, level: int = 0) -> GlobalBasis:
        factor = 2 ** level
        m = config.basis.degree
        grid = ChartAtlasService.build_grid(atlas, (config.grid.n * factor, config.grid.k * factor), m)
        if config.basis.family == BasisFamily.LAGRANGE:
            return LagrangeBasisService.build_global_lagrange_basis(atlas, grid, m)
        return BSplineBasisService.build_global_bspline_basis(grid, m)

    @staticmethod
    def assemble_system(basis: GlobalBasis, f: PointFunction, config: StudyConfig) -> DenseSystem:
        if config.method.kind == Method.GALERKIN:
            return DiscretizationService.assemble_galerkin(basis, f, config.pairing.measure, config.quadrature)
        colloc = DiscretizationService.choose_collocation_points(
            basis, config.collocation.restriction, config.collocation.delta
        )
        return DiscretizationService.assemble_collocation(basis, colloc, f, config.quadrature)

    @staticmethod
    def probe_points(atlas: ChartAtlas) -> Tuple[np.ndarray, np.ndarray]:
        """Six interior and six exterior points on the coordinate axes."""
        axes = np.vstack([np.eye(3), -np.eye(3)])
        semi = atlas.charts[0].semi_axes
        return INTERIOR_PROBE_RADIUS * semi.min() * axes, EXTERIOR_PROBE_RADIUS * semi.max() * axes

    # -------------------------------
    # MANUFACTURED PROBLEMS
    # -------------------------------
    @staticmethod
    def manufactured_problem(kind: ProblemKind, atlas: ChartAtlas, params: ProblemSection) -> ManufacturedProblem:
        sphere = atlas.charts[0].map_kind == MapKind.CUBED_SPHERE_FACE
        R = atlas.shape_scale

        if kind == ProblemKind.CONSTANT:
            c = params.value
            return ManufacturedProblem(
                kind=kind,
                boundary_data=lambda x: np.full(len(np.reshape(x, (-1, 3))), c),
                exact_density=(lambda x: np.full(len(np.reshape(x, (-1, 3))), c / R)) if sphere else None,
                interior_potential=lambda x: np.full(len(np.reshape(x, (-1, 3))), c),
                exterior_potential=(lambda x: c * R / _norms(x)) if sphere else None,
                params={"value": c},
            )

        if kind == ProblemKind.HARMONIC:
            n = params.harmonic_n

            def zonal(x):
                x = np.asarray(x, dtype=float).reshape(-1, 3)
                return eval_legendre(n, x[:, 2] / _norms(x))

            return ManufacturedProblem(
                kind=kind,
                boundary_data=zonal,
                exact_density=(lambda x: (2 * n + 1) * zonal(x) / R) if sphere else None,
                interior_potential=(lambda x: (_norms(x) / R) ** n * zonal(x)) if sphere else None,
                exterior_potential=(lambda x: (R / _norms(x)) ** (n + 1) * zonal(x)) if sphere else None,
                params={"harmonic_n": n},
            )

        source = np.asarray(params.source_point, dtype=float)
        semi = atlas.charts[0].semi_axes
        if np.linalg.norm(source / semi) >= 1.0:
            raise ValidationException(f"Source point {tuple(source)} is not inside the surface")
        clearance = ChartAtlasService.distance_to_surface(atlas, source)
        if clearance < SOURCE_CLEARANCE * R:
            raise ValidationException(
                f"Source point {tuple(source)} is {clearance:.3g} from the surface; needs >= {SOURCE_CLEARANCE * R:.3g}"
            )

        def free_space(x):
            return 1.0 / (FOUR_PI * _norms(np.asarray(x, dtype=float).reshape(-1, 3) - source))

        exact_density = interior = None
        if sphere:
            s2 = float(source @ source)

            def exact_density(x):
                distance = _norms(np.asarray(x, dtype=float).reshape(-1, 3) - source)
                return (R ** 2 - s2) / (FOUR_PI * R * distance ** 3)

            if s2 == 0.0:
                def interior(x):
                    return np.full(len(np.reshape(x, (-1, 3))), 1.0 / (FOUR_PI * R))
            else:
                image = R ** 2 * source / s2

                def interior(x):
                    distance = _norms(np.asarray(x, dtype=float).reshape(-1, 3) - image)
                    return (R / math.sqrt(s2)) / (FOUR_PI * distance)

        return ManufacturedProblem(
            kind=kind,
            boundary_data=free_space,
            exact_density=exact_density,
            interior_potential=interior,
            exterior_potential=free_space,
            params={"source_point": tuple(source)},
        )

    # -------------------------------
    # ERRORS
    # -------------------------------
    @staticmethod
    def l2_surface_error(
        atlas: ChartAtlas,
        grid: SurfaceGrid,
        approx: DensityFunction,
        exact: Union[DensityFunction, PointFunction],
        q: int,
    ) -> float:
        def squared(points: SurfacePoints) -> np.ndarray:
            reference = exact.values(points) if isinstance(exact, DensityFunction) else exact(points.x)
            return (approx.values(points) - np.asarray(reference, dtype=float).reshape(-1)) ** 2

        return math.sqrt(max(QuadratureService.surface_integral(atlas, grid, squared, q), 0.0))

    @staticmethod
    def _order(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> float:
        if not (np.isfinite(e_coarse) and np.isfinite(e_fine)) or e_coarse <= 0 or e_fine <= 0:
            return math.nan
        return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)

    # -------------------------------
    # STUDY
    # -------------------------------
    @staticmethod
    def solve_level(
        atlas: ChartAtlas, config: StudyConfig, problem: ManufacturedProblem, level: int
    ) -> Tuple[GlobalBasis, DenseSystem, DensityVector]:
        basis = StudyService.build_basis(atlas, config, level)
        system = StudyService.assemble_system(basis, problem.boundary_data, config)
        density = DiscretizationService.solve_dense(system)
        return basis, system, density

    @staticmethod
    def run_convergence_study(config: StudyConfig) -> ConvergenceReport:
        levels = config.grid.refinements
        if levels < 2:
            raise ValidationException("A convergence study needs at least two refinement levels")

        atlas = StudyService.build_atlas(config.surface)
        problem = StudyService.manufactured_problem(config.problem.kind, atlas, config.problem)
        interior, exterior = StudyService.probe_points(atlas)
        probes = np.vstack([interior, exterior])
        deltas = np.array([ChartAtlasService.distance_to_surface(atlas, p) for p in probes])
        q_error = config.quadrature.regular_order + 2

        rows: List[ConvergenceRow] = []
        densities: List[DensityFunction] = []
        grids: List[SurfaceGrid] = []
        potentials, areas = [], []
        for level in range(levels):
            basis, system, density = StudyService.solve_level(atlas, config, problem, level)
            discrete = DensityFunction.discrete(basis, density.coefficients)

            started = time.perf_counter()
            potentials.append(SingleLayerService.potential_values(basis.grid, discrete, probes, config.quadrature))
            evaluate_s = time.perf_counter() - started

            surrogate = DiscretizationService.diagnose_system(system).stability_surrogate
            areas.append(QuadratureService.surface_integral(atlas, basis.grid, lambda p: np.ones(len(p)), q_error))
            densities.append(discrete)
            grids.append(basis.grid)
            rows.append(
                ConvergenceRow(
                    level=level, h_edge=basis.grid.h_edge, h_area=basis.grid.h_area, N=basis.size,
                    assemble_s=system.assemble_s, solve_s=density.solve_s, evaluate_s=evaluate_s,
                    stability_surrogate=surrogate,
                )
            )
            logger.info(f"Level {level}: N={basis.size}, h_edge={basis.grid.h_edge:.4g}, mu={surrogate:.3e}")

        if problem.exact_density is not None:
            reference = problem.exact_density
            errors = [
                StudyService.l2_surface_error(atlas, g, d, reference, q_error) for g, d in zip(grids, densities)
            ]
            reference_norm = math.sqrt(
                QuadratureService.surface_integral(atlas, grids[-1], lambda p: reference(p.x) ** 2, q_error)
            )
        else:
            # self-convergence against the finest level
            errors = [
                StudyService.l2_surface_error(atlas, g, d, densities[-1], q_error)
                for g, d in zip(grids[:-1], densities[:-1])
            ] + [math.nan]
            reference_norm = math.sqrt(
                QuadratureService.surface_integral(
                    atlas, grids[-1], lambda p: densities[-1].values(p) ** 2, q_error
                )
            )

        for level, row in enumerate(rows):
            e = errors[level]
            values = potentials[level]
            row.l2_density_err = e
            misfit = np.full(len(probes), np.nan)
            if problem.interior_potential is not None:
                misfit[:6] = np.abs(problem.interior_potential(interior) - values[:6])
                row.pot_err_interior = float(np.max(misfit[:6]))
            if problem.exterior_potential is not None:
                misfit[6:] = np.abs(problem.exterior_potential(exterior) - values[6:])
                row.pot_err_exterior = float(np.max(misfit[6:]))

            checked = (deltas >= BOUND_MIN_DELTA) & np.isfinite(misfit)
            if np.isfinite(e) and np.any(checked):
                bounds = np.array([
                    SingleLayerService.potential_error_bound(areas[level], d, e, 0) for d in deltas[checked]
                ])
                row.bound43_ok = bool(np.all(misfit[checked] <= bounds))
                row.holder_bound = float(max(
                    SingleLayerService.holder_bound(areas[level], d, e) for d in deltas[checked]
                ))
                logger.info(
                    f"Level {level}: potential misfit {np.max(misfit[checked]):.3e}, "
                    f"bound {bounds.min():.3e}, Holder bound {row.holder_bound:.3e}"
                )
            else:
                logger.info(f"Level {level}: potential bound not checkable without a density error")

            if level > 0:
                previous = rows[level - 1]
                row.order_edge = StudyService._order(previous.l2_density_err, e, previous.h_edge, row.h_edge)
                row.order_area = StudyService._order(previous.l2_density_err, e, previous.h_area, row.h_area)

            audit_log("complete", "study_level", level, {"N": row.N, "l2_density_err": e})

        return ConvergenceReport(
            method=config.method.kind,
            family=config.basis.family,
            degree=config.basis.degree,
            problem=config.problem.kind.value,
            reference_norm=reference_norm,
            rows=rows,
        )

    # -------------------------------
    # ACCEPTANCE / REPORTING
    # -------------------------------
    @staticmethod
    def evaluate_acceptance(report: ConvergenceReport) -> List[str]:
        failures: List[str] = []
        measured = [(row.level, row.l2_density_err) for row in report.rows if np.isfinite(row.l2_density_err)]
        norm = report.reference_norm if np.isfinite(report.reference_norm) and report.reference_norm > 0 else 1.0
        floor = settings.QUADRATURE_FLOOR * norm

        if measured and all(e <= floor for _, e in measured):
            logger.info("Density errors are at the quadrature floor; orders are not judged")
        else:
            for (level_a, e_a), (level_b, e_b) in zip(measured, measured[1:]):
                if not e_b < e_a:
                    failures.append(f"density error did not decrease from level {level_a} to {level_b}")
            orders = [row.order_edge for row in report.rows if np.isfinite(row.order_edge)]
            if orders:
                low, high = report.degree + ORDER_SLACK[0], report.degree + ORDER_SLACK[1]
                if not low <= orders[-1] <= high:
                    failures.append(f"finest edge order {orders[-1]:.3f} outside [{low}, {high}]")

        for row in report.rows:
            if not row.bound43_ok:
                failures.append(f"potential error bound violated at level {row.level}")

        surrogates = np.array([row.stability_surrogate for row in report.rows])
        if np.any(~np.isfinite(surrogates)) or np.any(surrogates <= 0):
            failures.append("stability surrogate is not positive at every level")
        elif surrogates.max() / surrogates.min() >= SURROGATE_DRIFT:
            failures.append(f"stability surrogate drifts by {surrogates.max() / surrogates.min():.1f}x")

        return failures

    @staticmethod
    def emit_report(report: ConvergenceReport, path: Optional[Union[str, Path]], console: Optional[Console] = None) -> List[str]:
        if not report.rows:
            raise ValidationException("Cannot emit an empty convergence report")
        if path is not None:
            write_csv(path, CSV_COLUMNS, (row.csv_fields() for row in report.rows))
            logger.info(f"Wrote {len(report.rows)} report rows to {path}")

        console = console or Console()
        table = Table(title=f"{report.method.value} / {report.family.value} m={report.degree} / {report.problem}")
        for column in ("level", "N", "h_edge", "l2_density_err", "order_edge", "order_area",
                       "pot_err_interior", "pot_err_exterior", "bound43_ok"):
            table.add_column(column, justify="right")
        for row in report.rows:
            table.add_row(
                str(row.level), str(row.N), f"{row.h_edge:.4g}", f"{row.l2_density_err:.3e}",
                f"{row.order_edge:.3f}", f"{row.order_area:.3f}", f"{row.pot_err_interior:.3e}",
                f"{row.pot_err_exterior:.3e}", "true" if row.bound43_ok else "false",
            )
        console.print(table)

        failures = StudyService.evaluate_acceptance(report)
        if failures:
            for failure in failures:
                console.print(f"[red]FAIL[/red] {failure}")
        else:
            console.print("[green]PASS[/green] all acceptance thresholds met")
        return failures
