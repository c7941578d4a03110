# src/services/single_layer.py
import logging
import math
from typing import Tuple, Union

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from src.core.config import settings
from src.core.custom_exceptions import ValidationException
from src.models.basis import AnalyticSpace, DensityFunction, GlobalBasis
from src.models.geometry import ChartAtlas, SurfaceGrid, SurfacePoint, SurfacePoints
from src.schemas.common import Side
from src.schemas.config import QuadratureSection
from src.schemas.report import PotentialSample
from src.services.chart_atlas import ChartAtlasService
from src.services.quadrature import QuadratureService

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
ON_SURFACE_TOLERANCE = 1e-12


def _kernel(x: np.ndarray, y: np.ndarray, gradient: bool) -> np.ndarray:
    """1/|x-y| or its x-gradient for all pairs, shape (C, len(x), len(y))."""
    if not gradient:
        return (1.0 / cdist(x, y))[None]
    diff = x[:, None, :] - y[None, :, :]
    r3 = np.linalg.norm(diff, axis=-1) ** 3
    return np.moveaxis(-diff / r3[..., None], -1, 0)


def _paired_kernel(x: np.ndarray, y: np.ndarray, gradient: bool) -> np.ndarray:
    """Kernel between x[t] and its own points y[t, :], shape (C, t, n)."""
    diff = x[:, None, :] - y
    r = np.linalg.norm(diff, axis=-1)
    if not gradient:
        return (1.0 / r)[None]
    return np.moveaxis(-diff / (r ** 3)[..., None], -1, 0)


class SingleLayerService:

    # -------------------------------
    # KERNEL ROWS
    # -------------------------------
    @staticmethod
    def _rows(
        grid: SurfaceGrid,
        space: GlobalBasis,
        targets: np.ndarray,
        quad: QuadratureSection,
        gradient: bool = False,
    ) -> np.ndarray:
        """Single layer of every function of the space at every target.

        Returns (T, N), or (T, N, 3) for the gradient. Panels closer than
        near_field_factor diameters to a target use the graded Duffy rule.
        """
        x = np.asarray(targets, dtype=float).reshape(-1, 3)
        T, N, nloc = len(x), space.size, space.nloc
        components = 3 if gradient else 1
        out = np.zeros((components, T, N))
        if T == 0:
            return out[0] if not gradient else np.moveaxis(out, 0, -1)

        nodes = QuadratureService.panel_nodes(grid, quad.regular_order)
        P, G = nodes.weights.shape
        scheme = QuadratureService.scheme(quad)

        panel_of_node = np.repeat(np.arange(P), G)
        shapes = space.shape_values(
            panel_of_node, np.tile(nodes.local, (P, 1)), nodes.flat_x
        ).reshape(P, G, nloc)
        weighted = nodes.weights[:, :, None] * shapes
        scatter = sparse.csr_array(
            (
                weighted.ravel(),
                (
                    np.repeat(np.arange(P * G), nloc),
                    np.broadcast_to(space.panel_dofs[:, None, :], (P, G, nloc)).ravel(),
                ),
            ),
            shape=(P * G, N),
        )

        near = cKDTree(x).query_ball_point(nodes.centres, r=scheme.near_field_factor * nodes.diameters)
        near_targets = np.concatenate([np.asarray(idx, dtype=int) for idx in near]) if P else np.empty(0, int)
        near_panels = np.repeat(np.arange(P), [len(idx) for idx in near])

        # far field, near pairs masked out
        y = nodes.flat_x
        block = max(1, settings.ASSEMBLY_CHUNK_SIZE // (P * G * components))
        offsets = np.arange(G)
        for start in range(0, T, block):
            stop = min(T, start + block)
            kernel = _kernel(x[start:stop], y, gradient)
            inside = (near_targets >= start) & (near_targets < stop)
            if np.any(inside):
                rows = (near_targets[inside] - start)[:, None]
                cols = near_panels[inside][:, None] * G + offsets[None, :]
                kernel[:, rows, cols] = 0.0
            for c in range(components):
                out[c, start:stop] = (scatter.T @ kernel[c].T).T

        # near field
        for panel, idx in enumerate(near):
            if not idx:
                continue
            idx = np.asarray(idx, dtype=int)
            t = len(idx)
            apex = QuadratureService.apex_coordinates(grid, np.full(t, panel), x[idx])
            local, w = QuadratureService.duffy_rule(apex, scheme)
            n = local.shape[1]
            points, jac = QuadratureService.panel_mapping(grid, panel)(local.reshape(-1, 2))
            local_shapes = space.shape_values(np.full(t * n, panel), local.reshape(-1, 2), points)
            kernel = _paired_kernel(x[idx], points.reshape(t, n, 3), gradient)
            contribution = np.einsum(
                "ctn,tn,tna->cta", kernel, w * jac.reshape(t, n), local_shapes.reshape(t, n, nloc)
            )
            out[:, idx[:, None], space.panel_dofs[panel][None, :]] += contribution

        out /= FOUR_PI
        return out[0] if not gradient else np.moveaxis(out, 0, -1)

    @staticmethod
    def _space(grid: SurfaceGrid, u: DensityFunction) -> Tuple[GlobalBasis, np.ndarray]:
        if u.is_discrete:
            return u.basis, u.coefficients
        return AnalyticSpace.over(grid, u.function), np.ones(1)

    @staticmethod
    def potential_values(grid: SurfaceGrid, u: DensityFunction, x, quad: QuadratureSection) -> np.ndarray:
        space, coefficients = SingleLayerService._space(grid, u)
        return SingleLayerService._rows(grid, space, x, quad) @ coefficients

    # -------------------------------
    # OPERATOR
    # -------------------------------
    @staticmethod
    def apply_single_layer(
        atlas: ChartAtlas,
        grid: SurfaceGrid,
        u: DensityFunction,
        x: Union[SurfacePoint, SurfacePoints],
        quad: QuadratureSection,
    ) -> Union[float, np.ndarray]:
        """(Au)(x) for surface points; a float for a single point."""
        if isinstance(x, SurfacePoint):
            return float(SingleLayerService.potential_values(grid, u, np.asarray(x.x)[None, :], quad)[0])
        return SingleLayerService.potential_values(grid, u, x.x, quad)

    @staticmethod
    def eval_potential(
        atlas: ChartAtlas, grid: SurfaceGrid, u: DensityFunction, x, quad: QuadratureSection
    ) -> PotentialSample:
        x = np.asarray(x, dtype=float).reshape(3)
        delta = ChartAtlasService.distance_to_surface(atlas, x)
        if delta <= ON_SURFACE_TOLERANCE * atlas.shape_scale:
            raise ValidationException(f"Point {tuple(x)} lies on the surface; the potential needs delta > 0")
        side = Side.INTERIOR if ChartAtlasService.is_interior(atlas, grid, x) else Side.EXTERIOR
        value = float(SingleLayerService.potential_values(grid, u, x[None, :], quad)[0])
        return PotentialSample(x=tuple(x), value=value, side=side, delta=delta)

    @staticmethod
    def eval_potential_gradient(
        atlas: ChartAtlas, grid: SurfaceGrid, u: DensityFunction, x, quad: QuadratureSection
    ) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(3)
        if ChartAtlasService.distance_to_surface(atlas, x) <= ON_SURFACE_TOLERANCE * atlas.shape_scale:
            raise ValidationException(f"Point {tuple(x)} lies on the surface")
        space, coefficients = SingleLayerService._space(grid, u)
        rows = SingleLayerService._rows(grid, space, x[None, :], quad, gradient=True)
        return np.einsum("tnc,n->tc", rows, coefficients)[0]

    # -------------------------------
    # ERROR BOUNDS
    # -------------------------------
    @staticmethod
    def potential_error_bound(area: float, delta: float, l2_density_error: float, alpha: int = 0) -> float:
        """area * e / delta^(alpha+1) bounds the alpha-th derivatives of the potential error."""
        if delta <= 0:
            raise ValidationException(f"Distance to the surface must be positive, got {delta}")
        if alpha < 0:
            raise ValidationException(f"Derivative order must be non-negative, got {alpha}")
        return area * l2_density_error / delta ** (alpha + 1)

    @staticmethod
    def holder_bound(area: float, delta: float, l2_density_error: float) -> float:
        if delta <= 0:
            raise ValidationException(f"Distance to the surface must be positive, got {delta}")
        return math.sqrt(area) * l2_density_error / (FOUR_PI * delta)
