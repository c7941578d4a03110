# src/services/discretization.py
import logging
import math
import time
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lu_factor, lu_solve, svdvals
from scipy.spatial import cKDTree

from src.core.audit import audit_log
from src.core.config import settings
from src.core.custom_exceptions import SolverException, ValidationException
from src.models.basis import GlobalBasis, GlobalLagrangeBasis
from src.models.geometry import ChartAtlas, SurfacePoints
from src.models.system import CollocationSet, DenseSystem, DensityVector
from src.schemas.common import Method, Pairing, Restriction
from src.schemas.config import QuadratureSection
from src.schemas.report import SystemDiagnostics
from src.services.chart_atlas import ChartAtlasService
from src.services.quadrature import QuadratureService
from src.services.single_layer import SingleLayerService

logger = logging.getLogger(__name__)

BoundaryData = Callable[[np.ndarray], np.ndarray]

DISC_RINGS = 4
DISC_ANGLES = 8
CENTRE_FRACTION = 1.0 / 9.0
COINCIDENCE_TOLERANCE = 1e-10
INVERTIBILITY_TOLERANCE = 1e-12


class DiscretizationService:

    # -------------------------------
    # HELPERS
    # -------------------------------
    @staticmethod
    def _basis_norms(basis: GlobalBasis, q: int) -> np.ndarray:
        nodes = QuadratureService.panel_nodes(basis.grid, q)
        shapes = basis.local_shapes(nodes.local)
        squares = nodes.weights[:, :, None] * (shapes ** 2)[None]
        dofs = np.broadcast_to(basis.panel_dofs[:, None, :], squares.shape)
        return np.sqrt(np.bincount(dofs.ravel(), weights=squares.ravel(), minlength=basis.size))

    @staticmethod
    def _disc(atlas: ChartAtlas, points: SurfacePoints, delta: np.ndarray) -> Tuple[SurfacePoints, np.ndarray]:
        """Tangent-plane discs of radius delta projected onto the surface.

        Returns the projected points, 33 per centre, and normalized polar midpoint weights (33,) per radius.
        """
        _, dx1, _ = ChartAtlasService.tangents(atlas, points.chart_ids, points.xi)
        normals = ChartAtlasService.surface_normals(atlas, points.chart_ids, points.xi)
        t1 = dx1 / np.linalg.norm(dx1, axis=1, keepdims=True)
        t2 = np.cross(normals, t1)

        r0 = CENTRE_FRACTION
        edges = r0 + (1.0 - r0) * np.arange(DISC_RINGS + 1) / DISC_RINGS
        radii = 0.5 * (edges[:-1] + edges[1:])
        theta = 2 * math.pi * np.arange(DISC_ANGLES) / DISC_ANGLES
        rho = np.concatenate([[0.0], np.repeat(radii, DISC_ANGLES)])
        angle = np.concatenate([[0.0], np.tile(theta, DISC_RINGS)])
        weights = np.concatenate(
            [[r0 ** 2], np.repeat((edges[1:] ** 2 - edges[:-1] ** 2) / DISC_ANGLES, DISC_ANGLES)]
        )
        weights = weights / weights.sum()

        offsets = (
            rho[None, :, None] * delta[:, None, None]
            * (np.cos(angle)[None, :, None] * t1[:, None, :] + np.sin(angle)[None, :, None] * t2[:, None, :])
        )
        planar = points.x[:, None, :] + offsets
        projected = ChartAtlasService.locate_many(atlas, planar.reshape(-1, 3))
        return projected, weights

    @staticmethod
    def _check_distinct(points: SurfacePoints, scale: float):
        pairs = cKDTree(points.x).query_pairs(COINCIDENCE_TOLERANCE * scale, output_type="ndarray")
        if len(pairs):
            i, j = pairs[0]
            raise ValidationException(
                f"Collocation points {i} and {j} coincide at {tuple(points.x[i])}; "
                "choose a basis whose points are pairwise different on the closed surface"
            )

    @staticmethod
    def _check_separation(colloc: CollocationSet):
        distances, _ = cKDTree(colloc.points.x).query(colloc.points.x, k=2)
        overlapping = distances[:, 1] <= colloc.delta
        if np.any(overlapping):
            j = int(np.argmax(overlapping))
            raise ValidationException(
                f"Neighbourhood of collocation point {j} (delta={colloc.delta[j]:.4g}) "
                f"contains another point at distance {distances[j, 1]:.4g}"
            )

    # -------------------------------
    # GALERKIN
    # -------------------------------
    @staticmethod
    def assemble_galerkin(
        basis: GlobalBasis, f: BoundaryData, pairing: Pairing, quad: QuadratureSection
    ) -> DenseSystem:
        started = time.perf_counter()
        grid = basis.grid
        nodes = QuadratureService.panel_nodes(grid, quad.regular_order)
        P, G = nodes.weights.shape
        N = basis.size

        outer = nodes.weights if pairing == Pairing.SURFACE else nodes.param_weights
        shapes = basis.local_shapes(nodes.local)
        f_values = np.asarray(f(nodes.flat_x), dtype=float).reshape(P, G)
        moments = (outer * f_values)[:, :, None] * shapes[None]
        rhs = np.bincount(
            np.broadcast_to(basis.panel_dofs[:, None, :], moments.shape).ravel(),
            weights=moments.ravel(), minlength=N,
        )

        matrix = np.zeros((N, N))
        block = max(1, settings.ASSEMBLY_CHUNK_SIZE // (G * N))
        for start in range(0, P, block):
            panels = np.arange(start, min(P, start + block))
            rows = SingleLayerService._rows(grid, basis, nodes.x[panels].reshape(-1, 3), quad)
            contribution = np.einsum(
                "pg,ga,pgn->pan", outer[panels], shapes, rows.reshape(len(panels), G, N)
            )
            np.add.at(matrix, basis.panel_dofs[panels].ravel(), contribution.reshape(-1, N))
            logger.debug(f"Galerkin rows for panels {start}..{panels[-1]} of {P}")

        asymmetry = 0.0
        if pairing == Pairing.SURFACE:
            scale = np.max(np.abs(matrix)) or 1.0
            asymmetry = float(np.max(np.abs(matrix - matrix.T)) / scale)
            logger.info(f"Galerkin quadrature asymmetry {asymmetry:.2e} before symmetrization")
            matrix = 0.5 * (matrix + matrix.T)

        elapsed = time.perf_counter() - started
        system = DenseSystem(
            matrix=matrix, rhs=rhs, method=Method.GALERKIN, pairing=pairing, basis=basis,
            basis_norms=DiscretizationService._basis_norms(basis, quad.regular_order),
            quadrature_asymmetry=asymmetry, assemble_s=elapsed,
        )
        audit_log("assemble", "galerkin_system", N, {"pairing": pairing.value, "seconds": round(elapsed, 3)})
        return system

    # -------------------------------
    # COLLOCATION
    # -------------------------------
    @staticmethod
    def choose_collocation_points(
        basis: GlobalBasis,
        restriction: Restriction = Restriction.POINT,
        delta: Optional[float] = None,
    ) -> CollocationSet:
        grid = basis.grid
        atlas = grid.atlas
        if isinstance(basis, GlobalLagrangeBasis):
            points = basis.nodes
        else:
            m = basis.degree
            dims = np.array([c.rect_dims for c in atlas.charts])[basis.dof_chart]
            steps = np.array([grid.steps(l) for l in range(atlas.size)])[basis.dof_chart]
            greville = np.clip((basis.dof_index + (m + 1) / 2.0) * steps, 0.0, dims)
            points = ChartAtlasService.map_points(atlas, basis.dof_chart, greville)

        DiscretizationService._check_distinct(points, atlas.shape_scale)

        if delta is None:
            nodes = QuadratureService.panel_nodes(grid, 1)
            panel, _ = grid.locate_panels(points.chart_ids, points.xi)
            subcells = basis.degree if isinstance(basis, GlobalLagrangeBasis) else 1
            radii = 0.5 * nodes.diameters[panel] / subcells
        else:
            radii = np.full(len(points), float(delta))

        colloc = CollocationSet(points=points, delta=radii, restriction=restriction)
        logger.info(f"Chose {colloc.size} collocation points ({restriction.value})")
        return colloc

    @staticmethod
    def _minimizing_points(atlas: ChartAtlas, colloc: CollocationSet, f: BoundaryData) -> SurfacePoints:
        """Point of least |f| in every delta-neighbourhood: disc sampling, then a finer disc around the best."""
        disc, _ = DiscretizationService._disc(atlas, colloc.points, colloc.delta)
        per = len(disc) // colloc.size
        values = np.abs(np.asarray(f(disc.x), dtype=float)).reshape(colloc.size, per)
        best = np.argmin(values, axis=1)
        coarse = np.arange(colloc.size) * per + best
        centres = SurfacePoints(
            chart_ids=disc.chart_ids[coarse], xi=disc.xi[coarse], x=disc.x[coarse]
        )

        fine, _ = DiscretizationService._disc(atlas, centres, colloc.delta / DISC_RINGS)
        fine_values = np.abs(np.asarray(f(fine.x), dtype=float)).reshape(colloc.size, per)
        distance = np.linalg.norm(fine.x.reshape(colloc.size, per, 3) - colloc.points.x[:, None, :], axis=2)
        fine_values = np.where(distance <= colloc.delta[:, None], fine_values, np.inf)
        chosen = np.arange(colloc.size) * per + np.argmin(fine_values, axis=1)
        return SurfacePoints(chart_ids=fine.chart_ids[chosen], xi=fine.xi[chosen], x=fine.x[chosen])

    @staticmethod
    def assemble_collocation(
        basis: GlobalBasis, colloc: CollocationSet, f: BoundaryData, quad: QuadratureSection
    ) -> DenseSystem:
        started = time.perf_counter()
        grid = basis.grid
        atlas = grid.atlas
        N = basis.size
        if colloc.size != N:
            raise ValidationException(f"{colloc.size} collocation points for {N} basis functions")

        evaluation = None
        if colloc.restriction == Restriction.POINT:
            evaluation = colloc.points
        else:
            DiscretizationService._check_separation(colloc)

        if colloc.restriction == Restriction.MIN:
            evaluation = DiscretizationService._minimizing_points(atlas, colloc, f)

        if evaluation is not None:
            matrix = SingleLayerService._rows(grid, basis, evaluation.x, quad)
            rhs = np.asarray(f(evaluation.x), dtype=float).reshape(N)
        else:
            disc, weights = DiscretizationService._disc(atlas, colloc.points, colloc.delta)
            per = len(weights)
            disc_x = disc.x.reshape(N, per, 3)
            rhs = np.asarray(f(disc.x), dtype=float).reshape(N, per) @ weights
            matrix = np.zeros((N, N))
            block = max(1, settings.ASSEMBLY_CHUNK_SIZE // (per * N))
            for start in range(0, N, block):
                stop = min(N, start + block)
                rows = SingleLayerService._rows(grid, basis, disc_x[start:stop].reshape(-1, 3), quad)
                matrix[start:stop] = np.einsum("k,jkn->jn", weights, rows.reshape(stop - start, per, N))

        elapsed = time.perf_counter() - started
        system = DenseSystem(
            matrix=matrix, rhs=rhs, method=Method.COLLOCATION, pairing=None, basis=basis,
            collocation=colloc, evaluation_points=evaluation,
            basis_norms=DiscretizationService._basis_norms(basis, quad.regular_order), assemble_s=elapsed,
        )
        audit_log(
            "assemble", "collocation_system", N,
            {"restriction": colloc.restriction.value, "seconds": round(elapsed, 3)},
        )
        return system

    # -------------------------------
    # SOLVE
    # -------------------------------
    @staticmethod
    def solve_dense(system: DenseSystem) -> DensityVector:
        started = time.perf_counter()
        A, b = system.matrix, system.rhs
        if not np.all(np.isfinite(A)) or not np.all(np.isfinite(b)):
            raise SolverException("System contains non-finite entries")

        if system.method == Method.GALERKIN and system.pairing == Pairing.SURFACE:
            try:
                u = cho_solve(cho_factor(A), b)
            except LinAlgError as exc:
                raise SolverException(
                    f"Cholesky failed on the surface-measure Galerkin matrix: {exc}",
                    diagnostics=DiscretizationService.diagnose_system(system),
                )
        else:
            lu, piv = lu_factor(A, check_finite=False)
            if np.any(np.diag(lu) == 0):
                diagnostics = DiscretizationService.diagnose_system(system)
                raise SolverException(
                    f"Singular {system.method.value} matrix (condition estimate {diagnostics.condition_estimate:.3g})",
                    diagnostics=diagnostics,
                )
            u = lu_solve((lu, piv), b)

        residual = float(np.max(np.abs(A @ u - b))) if len(b) else 0.0
        scale = float(np.max(np.abs(b))) if len(b) else 0.0
        if not np.all(np.isfinite(u)) or residual > settings.RESIDUAL_TOLERANCE * scale:
            diagnostics = DiscretizationService.diagnose_system(system)
            raise SolverException(
                f"Residual {residual:.3e} exceeds tolerance (condition estimate {diagnostics.condition_estimate:.3g})",
                diagnostics=diagnostics,
            )

        elapsed = time.perf_counter() - started
        audit_log("solve", "dense_system", len(b), {"residual": residual, "seconds": round(elapsed, 3)})
        return DensityVector(
            basis=system.basis, coefficients=u,
            residual=residual / scale if scale else residual, solve_s=elapsed,
        )

    # -------------------------------
    # DIAGNOSTICS
    # -------------------------------
    @staticmethod
    def default_quadrature_nodes(atlas: ChartAtlas, colloc: CollocationSet) -> SurfacePoints:
        """One node per collocation point, displaced along the first chart direction toward the interior.

        The displacement d0 / (4 (N - 1)), d0 the least point separation, keeps the
        kernel matrix between nodes and points diagonally dominant.
        """
        points = colloc.points
        N = len(points)
        distances, _ = cKDTree(points.x).query(points.x, k=2)
        epsilon = distances[:, 1].min() / (4.0 * max(N - 1, 1))

        _, dx1, _ = ChartAtlasService.tangents(atlas, points.chart_ids, points.xi)
        dims = np.array([c.rect_dims for c in atlas.charts])[points.chart_ids]
        direction = np.where(points.xi[:, 0] < dims[:, 0] / 2, 1.0, -1.0)
        xi = points.xi.copy()
        xi[:, 0] += direction * epsilon / np.linalg.norm(dx1, axis=1)
        return ChartAtlasService.map_points(atlas, points.chart_ids, xi)

    @staticmethod
    def _interpolation_matrix(basis: GlobalBasis, nodes: SurfacePoints) -> np.ndarray:
        values, dofs = basis.values_at(nodes)
        phi = np.zeros((len(nodes), basis.size))
        np.add.at(phi, (np.repeat(np.arange(len(nodes)), values.shape[1]), dofs.ravel()), values.ravel())
        return phi

    @staticmethod
    def diagnose_system(
        system: DenseSystem,
        colloc: Optional[CollocationSet] = None,
        quadrature_nodes: Optional[SurfacePoints] = None,
    ) -> SystemDiagnostics:
        A = system.matrix
        largest = float(np.max(np.abs(A))) if A.size else 0.0
        symmetry_defect = float(np.max(np.abs(A - A.T))) / largest if largest else 0.0

        singular = svdvals(A)
        condition = float(singular[0] / singular[-1]) if singular[-1] > 0 else math.inf

        if system.basis_norms is None:
            surrogate = float(singular[-1])
        else:
            norms = system.basis_norms
            scaled = A / norms[None, :]
            # Galerkin rows pair against the same basis functions
            if system.method == Method.GALERKIN:
                scaled = scaled / norms[:, None]
            surrogate = float(svdvals(scaled)[-1])

        hadamard = spacing_epsilon = spacing_d = spacing_ok = psi = None
        colloc = colloc or system.collocation
        if colloc is not None and quadrature_nodes is not None:
            y = (system.evaluation_points if system.evaluation_points is not None else colloc.points).x
            x = quadrature_nodes.x
            distance = np.linalg.norm(y[:, None, :] - x[None, :, :], axis=2)
            R = 1.0 / distance
            diagonal = np.diag(R)
            hadamard = bool(np.all(diagonal > R.sum(axis=1) - diagonal))

            N = len(y)
            spacing_epsilon = float(np.max(np.diag(distance)))
            off = distance + np.diag(np.full(N, np.inf))
            spacing_d = float(off.min()) if N > 1 else math.inf
            spacing_ok = bool(spacing_epsilon < spacing_d / max(N - 1, 1))
            if not spacing_ok:
                logger.warning(
                    f"Quadrature node spacing {spacing_epsilon:.3g} is not below d/(N-1) = "
                    f"{spacing_d / max(N - 1, 1):.3g}"
                )

            if system.basis is not None:
                phi = svdvals(DiscretizationService._interpolation_matrix(system.basis, quadrature_nodes))
                psi = bool(hadamard and phi[-1] > INVERTIBILITY_TOLERANCE * phi[0])

        return SystemDiagnostics(
            hadamard_dominant=hadamard,
            symmetry_defect=symmetry_defect,
            condition_estimate=condition,
            stability_surrogate=surrogate,
            spacing_epsilon=spacing_epsilon,
            spacing_d=spacing_d,
            spacing_ok=spacing_ok,
            psi_system_independent=psi,
        )
