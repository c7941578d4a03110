# src/services/quadrature.py
import logging
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy.special import roots_legendre

from src.core.custom_exceptions import NotFoundException, ValidationException
from src.models.geometry import ChartAtlas, SurfaceGrid, SurfacePoints
from src.models.quadrature import PanelNodes, QuadRule1D, SingularScheme
from src.schemas.config import QuadratureSection
from src.services.chart_atlas import ChartAtlasService

logger = logging.getLogger(__name__)

MAX_ORDER = 30
UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
FOOT_CLIP = (0.1, 0.9)


@lru_cache(maxsize=64)
def _gauss(q: int) -> QuadRule1D:
    x, w = roots_legendre(q)
    return QuadRule1D(order=q, nodes=(x + 1.0) / 2.0, weights=w / 2.0)


@lru_cache(maxsize=16)
def _panel_nodes(grid: SurfaceGrid, q: int) -> PanelNodes:
    local, local_w = QuadratureService.tensor_rule(q)
    P, G = grid.size, len(local_w)
    xi = grid.panel_origin[:, None, :] + local[None, :, :] * grid.panel_steps[:, None, :]
    chart_ids = np.repeat(grid.panel_chart, G)
    x, dx1, dx2 = ChartAtlasService.tangents(grid.atlas, chart_ids, xi.reshape(-1, 2))
    cross = np.cross(dx1, dx2)
    metric = np.linalg.norm(cross, axis=1)
    param_weights = local_w[None, :] * np.prod(grid.panel_steps, axis=1)[:, None]

    # centre and diameter from a 3x3 sample of each panel
    s = np.array([0.0, 0.5, 1.0])
    corners = np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1).reshape(-1, 2)
    samples_xi = grid.panel_origin[:, None, :] + corners[None] * grid.panel_steps[:, None, :]
    samples = ChartAtlasService._evaluate(
        grid.atlas, np.repeat(grid.panel_chart, len(corners)), samples_xi.reshape(-1, 2)
    ).reshape(P, len(corners), 3)
    spread = np.linalg.norm(samples[:, :, None, :] - samples[:, None, :, :], axis=-1)

    return PanelNodes(
        order=q,
        local=local,
        local_weights=local_w,
        xi=xi,
        x=x.reshape(P, G, 3),
        normals=(cross / metric[:, None]).reshape(P, G, 3),
        metric=metric.reshape(P, G),
        param_weights=param_weights,
        weights=param_weights * metric.reshape(P, G),
        centres=samples[:, 4, :],
        diameters=spread.max(axis=(1, 2)),
    )


class QuadratureService:

    # -------------------------------
    # REGULAR RULES
    # -------------------------------
    @staticmethod
    def gauss_rule(q: int) -> QuadRule1D:
        if not 1 <= int(q) <= MAX_ORDER:
            raise ValidationException(f"Gauss order must be between 1 and {MAX_ORDER}, got {q}")
        return _gauss(int(q))

    @staticmethod
    def tensor_rule(q: int) -> Tuple[np.ndarray, np.ndarray]:
        rule = QuadratureService.gauss_rule(q)
        u, v = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
        local = np.column_stack([u.ravel(), v.ravel()])
        weights = np.outer(rule.weights, rule.weights).ravel()
        return local, weights

    @staticmethod
    def panel_nodes(grid: SurfaceGrid, q: int) -> PanelNodes:
        QuadratureService.gauss_rule(q)
        return _panel_nodes(grid, int(q))

    @staticmethod
    def node_points(grid: SurfaceGrid, nodes: PanelNodes) -> SurfacePoints:
        return SurfacePoints(
            chart_ids=np.repeat(grid.panel_chart, nodes.per_panel),
            xi=nodes.xi.reshape(-1, 2),
            x=nodes.flat_x,
        )

    @staticmethod
    def surface_integral(
        atlas: ChartAtlas, grid: SurfaceGrid, f: Callable[[SurfacePoints], np.ndarray], q: int
    ) -> float:
        """Integral over the surface of a vectorized f(points) -> values."""
        nodes = QuadratureService.panel_nodes(grid, q)
        values = np.asarray(f(QuadratureService.node_points(grid, nodes)), dtype=float).reshape(-1)
        return float(np.sum(nodes.flat_weights * values))

    # -------------------------------
    # SINGULAR RULES
    # -------------------------------
    @staticmethod
    def scheme(quad: QuadratureSection) -> SingularScheme:
        QuadratureService.gauss_rule(quad.singular_order)
        return SingularScheme(
            order=quad.singular_order,
            subdivision=quad.subdivision,
            near_field_factor=quad.near_field_factor,
        )

    @staticmethod
    def duffy_rule(apex: np.ndarray, scheme: SingularScheme) -> Tuple[np.ndarray, np.ndarray]:
        """Graded Duffy rule on [0,1]^2 about each apex.

        Returns local points (t, n, 2) and weights (t, n); each weight set sums to 1.
        """
        apex = np.atleast_2d(np.asarray(apex, dtype=float))
        rule = QuadratureService.gauss_rule(scheme.order)
        g, gw = rule.nodes, rule.weights
        radial = np.concatenate([[0.0], 2.0 ** -np.arange(scheme.subdivision, -1, -1)])

        points, weights = [], []
        for k in range(4):
            a = UNIT_SQUARE[k] - apex
            e = UNIT_SQUARE[(k + 1) % 4] - UNIT_SQUARE[k]
            det = np.abs(a[:, 0] * e[1] - a[:, 1] * e[0])
            foot = np.clip(-(a @ e) / (e @ e), *FOOT_CLIP)

            for u0, u1 in zip(radial[:-1], radial[1:]):
                u = u0 + (u1 - u0) * g
                wu = (u1 - u0) * gw
                for lo, hi in ((np.zeros_like(foot), foot), (foot, np.ones_like(foot))):
                    w = lo[:, None] + (hi - lo)[:, None] * g[None, :]
                    ww = (hi - lo)[:, None] * gw[None, :]
                    direction = a[:, None, :] + w[:, :, None] * e          # (t, q, 2)
                    pts = apex[:, None, None, :] + u[None, :, None, None] * direction[:, None, :, :]
                    wts = det[:, None, None] * (u * wu)[None, :, None] * ww[:, None, :]
                    points.append(pts.reshape(len(apex), -1, 2))
                    weights.append(wts.reshape(len(apex), -1))

        return np.concatenate(points, axis=1), np.concatenate(weights, axis=1)

    @staticmethod
    def duffy_integral(
        mapping: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]],
        apex: Tuple[float, float],
        x: np.ndarray,
        g: Callable[[np.ndarray], np.ndarray],
        scheme: SingularScheme,
    ) -> float:
        """Integral of g(y)/|x - y| over a patch given by mapping(local) -> (y, jacobian)."""
        local, w = QuadratureService.duffy_rule(np.asarray(apex, dtype=float)[None, :], scheme)
        y, jac = mapping(local[0])
        r = np.linalg.norm(y - np.asarray(x, dtype=float), axis=1)
        return float(np.sum(w[0] * jac * np.asarray(g(y), dtype=float) / r))

    # -------------------------------
    # PANEL HELPERS
    # -------------------------------
    @staticmethod
    def _check_panel(grid: SurfaceGrid, panel: int):
        if not 0 <= int(panel) < grid.size:
            raise NotFoundException(f"Panel {panel} not found")

    @staticmethod
    def panel_mapping(grid: SurfaceGrid, panel: int):
        """local (n,2) -> (points, dGamma/dlocal) for one panel."""
        origin, steps = grid.panel_origin[panel], grid.panel_steps[panel]
        chart = int(grid.panel_chart[panel])
        area = float(np.prod(steps))

        def mapping(local: np.ndarray):
            xi = origin + np.asarray(local, dtype=float) * steps
            y, dx1, dx2 = ChartAtlasService.tangents(grid.atlas, np.full(len(xi), chart), xi)
            return y, np.linalg.norm(np.cross(dx1, dx2), axis=1) * area

        return mapping

    @staticmethod
    def apex_coordinates(grid: SurfaceGrid, panels: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Panel-local coordinates of the projection of x onto each panel's chart, clamped to the panel."""
        panels = np.asarray(panels, dtype=int).reshape(-1)
        xi, _ = ChartAtlasService.chart_coordinates_many(grid.atlas, grid.panel_chart[panels], x)
        local = (xi - grid.panel_origin[panels]) / grid.panel_steps[panels]
        return np.clip(local, 0.0, 1.0)

    @staticmethod
    def singular_panel_integral(
        atlas: ChartAtlas,
        grid: SurfaceGrid,
        panel: int,
        x,
        g: Callable[[np.ndarray], np.ndarray],
        scheme: SingularScheme,
    ) -> float:
        """Integral of g(y)/|x - y| over one panel with the Duffy rule about the preimage of x."""
        QuadratureService._check_panel(grid, panel)
        x = np.asarray(getattr(x, "x", x), dtype=float).reshape(3)
        apex = QuadratureService.apex_coordinates(grid, [panel], x[None, :])[0]
        return QuadratureService.duffy_integral(QuadratureService.panel_mapping(grid, panel), apex, x, g, scheme)

    @staticmethod
    def regular_panel_integral(
        atlas: ChartAtlas,
        grid: SurfaceGrid,
        panel: int,
        x,
        g: Callable[[np.ndarray], np.ndarray],
        q: int,
    ) -> float:
        QuadratureService._check_panel(grid, panel)
        x = np.asarray(getattr(x, "x", x), dtype=float).reshape(3)
        local, w = QuadratureService.tensor_rule(q)
        y, jac = QuadratureService.panel_mapping(grid, panel)(local)
        r = np.linalg.norm(y - x, axis=1)
        return float(np.sum(w * jac * np.asarray(g(y), dtype=float) / r))
