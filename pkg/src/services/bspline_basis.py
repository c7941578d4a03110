# src/services/bspline_basis.py
import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.interpolate import BSpline
from scipy.sparse.linalg import spsolve

from src.core.audit import audit_log
from src.core.custom_exceptions import NotFoundException, ValidationException
from src.models.basis import GlobalBSplineBasis, bspline_local_1d
from src.models.geometry import SurfaceGrid, SurfacePoint, SurfacePoints
from src.services.quadrature import QuadratureService

logger = logging.getLogger(__name__)

# v(chart_ids, xi) -> values, evaluated per chart on the parameter rectangle
ParameterFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


class BSplineBasisService:

    # -------------------------------
    # 1D SPLINES
    # -------------------------------
    @staticmethod
    def bspline_values(m: int, n: int, a: float, t) -> np.ndarray:
        """All n+m uniform B-splines of degree m on [0,a] at t; column c is B_{c-m}."""
        if m < 0 or n < m + 1 or a <= 0:
            raise ValidationException(f"Need m >= 0, n >= m + 1 and a > 0, got m={m}, n={n}, a={a}")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0) or np.any(t > a):
            raise ValidationException(f"Spline argument outside [0, {a}]")
        h = a / n
        knots = h * np.arange(-m, n + m + 1, dtype=float)
        t = np.minimum(t, np.nextafter(a, 0.0))
        return BSpline.design_matrix(t, knots, m).toarray()

    @staticmethod
    def bspline_1d(m: int, n: int, a: float, i: int, t: float) -> float:
        if not -m <= i <= n - 1:
            raise ValidationException(f"Spline index {i} outside {-m}..{n - 1}")
        return float(BSplineBasisService.bspline_values(m, n, a, t)[0, i + m])

    # -------------------------------
    # GLOBAL SYSTEM
    # -------------------------------
    @staticmethod
    def build_global_bspline_basis(grid: SurfaceGrid, m: int) -> GlobalBSplineBasis:
        if grid.degree != m:
            raise ValidationException(f"Grid was built for degree {grid.degree}, basis requested degree {m}")

        offsets, dof_chart, dof_index = [], [], []
        offset = 0
        for chart_id, (n, k) in enumerate(grid.subdivisions):
            offsets.append(offset)
            p, q = np.meshgrid(np.arange(n + m), np.arange(k + m), indexing="ij")
            dof_chart.append(np.full((n + m) * (k + m), chart_id))
            dof_index.append(np.column_stack([p.ravel() - m, q.ravel() - m]))
            offset += (n + m) * (k + m)

        k_per_panel = np.array([grid.subdivisions[c][1] for c in grid.panel_chart])
        r, s = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
        rows = grid.panel_index[:, :1] + r.ravel()[None, :]
        cols = grid.panel_index[:, 1:] + s.ravel()[None, :]
        panel_dofs = (
            np.asarray(offsets)[grid.panel_chart][:, None] + rows * (k_per_panel[:, None] + m) + cols
        )

        basis = GlobalBSplineBasis(
            grid=grid,
            degree=m,
            size=offset,
            panel_dofs=panel_dofs,
            chart_offsets=tuple(offsets),
            dof_chart=np.concatenate(dof_chart),
            dof_index=np.concatenate(dof_index),
        )
        logger.info(f"Built B-spline system of degree {m} with N={basis.size}")
        audit_log("build", "bspline_basis", basis.size, {"degree": m})
        return basis

    @staticmethod
    def dof_of(basis: GlobalBSplineBasis, chart_id: int, i: int, j: int) -> int:
        m = basis.degree
        n, k = basis.grid.subdivisions[chart_id]
        if not (-m <= i <= n - 1 and -m <= j <= k - 1):
            raise NotFoundException(f"No spline ({i}, {j}) on chart {chart_id}")
        return basis.chart_offsets[chart_id] + (i + m) * (k + m) + (j + m)

    @staticmethod
    def dof_location(basis: GlobalBSplineBasis, index: int) -> Tuple[int, int, int]:
        if not 0 <= index < basis.size:
            raise NotFoundException(f"Dof {index} not found")
        i, j = basis.dof_index[index]
        return int(basis.dof_chart[index]), int(i), int(j)

    @staticmethod
    def eval_global_bspline(basis: GlobalBSplineBasis, global_index: int, p: SurfacePoint) -> float:
        if not 0 <= global_index < basis.size:
            raise NotFoundException(f"Dof {global_index} not found")
        return float(basis.function_values(global_index, SurfacePoints.from_points([p]))[0])

    # -------------------------------
    # RESTRICTION / EXTENSION
    # -------------------------------
    @staticmethod
    def restrict_bspline(
        v: ParameterFunction, grid: SurfaceGrid, m: int, quad_order: Optional[int] = None
    ) -> np.ndarray:
        """Parameter-space moments of v against every spline of the system."""
        basis = BSplineBasisService.build_global_bspline_basis(grid, m)
        nodes = QuadratureService.panel_nodes(grid, quad_order or max(m + 1, 3))
        values = np.asarray(
            v(np.repeat(grid.panel_chart, nodes.per_panel), nodes.xi.reshape(-1, 2)), dtype=float
        ).reshape(nodes.param_weights.shape)
        contributions = (nodes.param_weights * values)[:, :, None] * basis.local_shapes(nodes.local)[None]
        dofs = np.broadcast_to(basis.panel_dofs[:, None, :], contributions.shape)
        return np.bincount(dofs.ravel(), weights=contributions.ravel(), minlength=basis.size)

    @staticmethod
    def _gram_1d(m: int, n: int, a: float) -> np.ndarray:
        h = a / n
        rule = QuadratureService.gauss_rule(m + 1)
        shapes = bspline_local_1d(m, rule.nodes)
        local = h * shapes.T @ (rule.weights[:, None] * shapes)
        gram = np.zeros((n + m, n + m))
        for i in range(n):
            gram[i:i + m + 1, i:i + m + 1] += local
        return gram

    @staticmethod
    def bspline_gram(grid: SurfaceGrid, m: int) -> sparse.csr_array:
        blocks = []
        for chart, (n, k) in zip(grid.atlas.charts, grid.subdivisions):
            a, b = chart.rect_dims
            blocks.append(np.kron(BSplineBasisService._gram_1d(m, n, a), BSplineBasisService._gram_1d(m, k, b)))
        return sparse.csr_array(sparse.block_diag(blocks))

    @staticmethod
    def project_bspline(
        v: ParameterFunction, grid: SurfaceGrid, m: int, quad_order: Optional[int] = None
    ) -> np.ndarray:
        """Coefficients of the parameter-space L2 projection onto the spline system."""
        moments = BSplineBasisService.restrict_bspline(v, grid, m, quad_order)
        return np.asarray(spsolve(sparse.csc_matrix(BSplineBasisService.bspline_gram(grid, m)), moments))
