# src/services/chart_atlas.py
import logging
import math
from functools import lru_cache
from itertools import combinations
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from src.core.audit import audit_log
from src.core.custom_exceptions import AtlasException, NotFoundException, ValidationException
from src.models.geometry import (
    EDGE_BOTTOM, EDGE_LEFT, EDGE_RIGHT, EDGE_TOP,
    Chart, ChartAtlas, EdgePair, MapKind, SurfaceGrid, SurfacePoint, SurfacePoints,
)

logger = logging.getLogger(__name__)

QUARTER_TURN = math.pi / 2

# (c0, e1, e2) per cube face, e1 x e2 = c0; order +x, -x, +y, -y, +z, -z
FACE_FRAMES = (
    ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
    ((-1.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 1.0, 0.0)),
    ((0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (1.0, 0.0, 0.0)),
    ((0.0, -1.0, 0.0), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
    ((0.0, 0.0, -1.0), (0.0, 1.0, 0.0), (1.0, 0.0, 0.0)),
)

EDGES = (EDGE_BOTTOM, EDGE_RIGHT, EDGE_TOP, EDGE_LEFT)
PARAMETER_SLACK = 1e-12
EDGE_MATCH_TOLERANCE = 1e-9


@lru_cache(maxsize=64)
def _frames(atlas: ChartAtlas):
    c0 = np.array([c.face_axis for c in atlas.charts], dtype=float)
    e1 = np.array([c.face_e1 for c in atlas.charts], dtype=float)
    e2 = np.array([c.face_e2 for c in atlas.charts], dtype=float)
    semi = np.array([c.semi_axes for c in atlas.charts], dtype=float)
    dims = np.array([c.rect_dims for c in atlas.charts], dtype=float)
    return c0, e1, e2, semi, dims


class ChartAtlasService:

    # -------------------------------
    # ATLAS CONSTRUCTION
    # -------------------------------
    @staticmethod
    def unit_sphere_atlas(radius: float, rect_dims: Optional[Tuple[float, float]] = None) -> ChartAtlas:
        if not np.isfinite(radius) or radius <= 0:
            raise ValidationException(f"Sphere radius must be positive, got {radius}")
        return ChartAtlasService._cubed_atlas(MapKind.CUBED_SPHERE_FACE, (float(radius),), rect_dims)

    @staticmethod
    def ellipsoid_atlas(
        semi_axes: Sequence[float], rect_dims: Optional[Tuple[float, float]] = None
    ) -> ChartAtlas:
        semi_axes = tuple(float(s) for s in semi_axes)
        if len(semi_axes) != 3 or not all(np.isfinite(s) and s > 0 for s in semi_axes):
            raise ValidationException(f"Ellipsoid needs three positive semi-axes, got {semi_axes}")
        return ChartAtlasService._cubed_atlas(MapKind.ELLIPSOID_PATCH, semi_axes, rect_dims)

    @staticmethod
    def _cubed_atlas(kind: MapKind, params: Tuple[float, ...], rect_dims) -> ChartAtlas:
        rect = (QUARTER_TURN, QUARTER_TURN) if rect_dims is None else tuple(float(d) for d in rect_dims)
        if len(rect) != 2 or min(rect) <= 0:
            raise ValidationException(f"Chart rectangle dimensions must be positive, got {rect}")

        charts = tuple(
            Chart(
                chart_id=l, rect_dims=rect, map_kind=kind, shape_params=params,
                face_axis=frame[0], face_e1=frame[1], face_e2=frame[2],
            )
            for l, frame in enumerate(FACE_FRAMES)
        )
        scale = max(params)
        adjacency = ChartAtlasService._match_edges(ChartAtlas(charts=charts, adjacency=(), shape_scale=scale))
        if len(adjacency) != 12:
            raise AtlasException(f"Expected 12 identified edges on a closed six-chart atlas, found {len(adjacency)}")

        atlas = ChartAtlas(charts=charts, adjacency=adjacency, shape_scale=scale)
        logger.info(f"Built {kind.value} atlas with {atlas.size} charts, rect {rect}, params {params}")
        return atlas

    @staticmethod
    def edge_parameters(chart: Chart, edge: int, t: np.ndarray) -> np.ndarray:
        """Parameter points at fractions t along an edge of the chart rectangle."""
        a, b = chart.rect_dims
        t = np.asarray(t, dtype=float)
        zeros = np.zeros_like(t)
        if edge == EDGE_BOTTOM:
            return np.column_stack([t * a, zeros])
        if edge == EDGE_RIGHT:
            return np.column_stack([zeros + a, t * b])
        if edge == EDGE_TOP:
            return np.column_stack([t * a, zeros + b])
        if edge == EDGE_LEFT:
            return np.column_stack([zeros, t * b])
        raise ValidationException(f"Unknown edge {edge}")

    @staticmethod
    def edge_points(atlas: ChartAtlas, pair: EdgePair, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Points of an identified edge pair, sampled from both sides in matching order."""
        t = np.asarray(t, dtype=float)
        chart_a, chart_b = atlas.charts[pair.chart_a], atlas.charts[pair.chart_b]
        xi_a = ChartAtlasService.edge_parameters(chart_a, pair.edge_a, t)
        xi_b = ChartAtlasService.edge_parameters(chart_b, pair.edge_b, 1.0 - t if pair.reversed else t)
        x_a = ChartAtlasService._evaluate(atlas, np.full(len(t), pair.chart_a), xi_a)
        x_b = ChartAtlasService._evaluate(atlas, np.full(len(t), pair.chart_b), xi_b)
        return x_a, x_b

    @staticmethod
    def _match_edges(atlas: ChartAtlas) -> Tuple[EdgePair, ...]:
        t = np.array([0.25, 0.5, 0.75])
        tolerance = EDGE_MATCH_TOLERANCE * atlas.shape_scale
        samples = {
            (l, e): ChartAtlasService._evaluate(
                atlas, np.full(len(t), l), ChartAtlasService.edge_parameters(atlas.charts[l], e, t)
            )
            for l in range(atlas.size) for e in EDGES
        }
        pairs = []
        for (la, ea), (lb, eb) in combinations(samples, 2):
            if la == lb:
                continue
            xa, xb = samples[(la, ea)], samples[(lb, eb)]
            if np.allclose(xa, xb, rtol=0.0, atol=tolerance):
                pairs.append(EdgePair(la, ea, lb, eb, reversed=False))
            elif np.allclose(xa, xb[::-1], rtol=0.0, atol=tolerance):
                pairs.append(EdgePair(la, ea, lb, eb, reversed=True))
        return tuple(pairs)

    # -------------------------------
    # CHART MAPS
    # -------------------------------
    @staticmethod
    def _chart(atlas: ChartAtlas, chart_id: int) -> Chart:
        if not 0 <= int(chart_id) < atlas.size:
            raise NotFoundException(f"Chart {chart_id} not found")
        return atlas.charts[int(chart_id)]

    @staticmethod
    def _check_parameters(atlas: ChartAtlas, chart_ids: np.ndarray, xi: np.ndarray):
        if np.any(chart_ids < 0) or np.any(chart_ids >= atlas.size):
            bad = chart_ids[(chart_ids < 0) | (chart_ids >= atlas.size)][0]
            raise NotFoundException(f"Chart {bad} not found")
        dims = _frames(atlas)[4][chart_ids]
        slack = PARAMETER_SLACK * dims
        outside = np.any((xi < -slack) | (xi > dims + slack), axis=1)
        if np.any(outside):
            index = int(np.argmax(outside))
            raise ValidationException(
                f"Parameter point {tuple(xi[index])} lies outside the rectangle of chart {chart_ids[index]}"
            )

    @staticmethod
    def _evaluate(atlas: ChartAtlas, chart_ids: np.ndarray, xi: np.ndarray, derivatives: bool = False):
        c0, e1, e2, semi, dims = (a[chart_ids] for a in _frames(atlas))
        scale = QUARTER_TURN / dims
        st = np.tan(xi * scale - math.pi / 4)
        F = c0 + st[:, :1] * e1 + st[:, 1:] * e2
        norm_f = np.linalg.norm(F, axis=1, keepdims=True)
        P = F / norm_f
        x = semi * P
        if not derivatives:
            return x

        def partial(k, direction):
            dF = (scale[:, k] * (1.0 + st[:, k] ** 2))[:, None] * direction
            return semi * (dF - P * np.sum(P * dF, axis=1, keepdims=True)) / norm_f

        return x, partial(0, e1), partial(1, e2)

    @staticmethod
    def map_points(atlas: ChartAtlas, chart_ids, xi) -> SurfacePoints:
        chart_ids = np.asarray(chart_ids, dtype=int).reshape(-1)
        xi = np.asarray(xi, dtype=float).reshape(-1, 2)
        ChartAtlasService._check_parameters(atlas, chart_ids, xi)
        return SurfacePoints(chart_ids=chart_ids, xi=xi, x=ChartAtlasService._evaluate(atlas, chart_ids, xi))

    @staticmethod
    def map_point(atlas: ChartAtlas, chart_id: int, xi: Tuple[float, float]) -> SurfacePoint:
        ChartAtlasService._chart(atlas, chart_id)
        return ChartAtlasService.map_points(atlas, [chart_id], [xi])[0]

    @staticmethod
    def tangents(atlas: ChartAtlas, chart_ids, xi) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        chart_ids = np.asarray(chart_ids, dtype=int).reshape(-1)
        xi = np.asarray(xi, dtype=float).reshape(-1, 2)
        return ChartAtlasService._evaluate(atlas, chart_ids, xi, derivatives=True)

    @staticmethod
    def metric_factors(atlas: ChartAtlas, chart_ids, xi) -> np.ndarray:
        _, dx1, dx2 = ChartAtlasService.tangents(atlas, chart_ids, xi)
        return np.linalg.norm(np.cross(dx1, dx2), axis=1)

    @staticmethod
    def metric_factor(atlas: ChartAtlas, chart_id: int, xi: Tuple[float, float]) -> float:
        ChartAtlasService._chart(atlas, chart_id)
        ChartAtlasService._check_parameters(atlas, np.array([chart_id]), np.asarray(xi, dtype=float).reshape(1, 2))
        return float(ChartAtlasService.metric_factors(atlas, [chart_id], [xi])[0])

    @staticmethod
    def surface_normals(atlas: ChartAtlas, chart_ids, xi) -> np.ndarray:
        _, dx1, dx2 = ChartAtlasService.tangents(atlas, chart_ids, xi)
        n = np.cross(dx1, dx2)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @staticmethod
    def surface_normal(atlas: ChartAtlas, chart_id: int, xi: Tuple[float, float]) -> np.ndarray:
        ChartAtlasService._chart(atlas, chart_id)
        return ChartAtlasService.surface_normals(atlas, [chart_id], [xi])[0]

    # -------------------------------
    # INVERSE MAPS
    # -------------------------------
    @staticmethod
    def chart_coordinates_many(atlas: ChartAtlas, chart_ids, x) -> Tuple[np.ndarray, np.ndarray]:
        """Parameters of the central projection of x into each chart, and whether it exists.

        Points behind a chart get the rectangle centre and valid=False.
        """
        chart_ids = np.asarray(chart_ids, dtype=int).reshape(-1)
        x = np.asarray(x, dtype=float).reshape(-1, 3)
        c0, e1, e2, semi, dims = (a[chart_ids] for a in _frames(atlas))
        d = x / semi
        along = np.sum(d * c0, axis=1)
        valid = along > 0
        safe = np.where(valid, along, 1.0)
        st = np.column_stack([np.sum(d * e1, axis=1), np.sum(d * e2, axis=1)]) / safe[:, None]
        xi = (np.arctan(st) + math.pi / 4) * dims / QUARTER_TURN
        xi = np.where(valid[:, None], xi, dims / 2)
        return xi, valid

    @staticmethod
    def chart_coordinates(atlas: ChartAtlas, chart_id: int, x) -> Tuple[float, float]:
        ChartAtlasService._chart(atlas, chart_id)
        xi, valid = ChartAtlasService.chart_coordinates_many(atlas, [chart_id], x)
        if not valid[0]:
            raise ValidationException(f"Point {tuple(np.ravel(x))} does not project onto chart {chart_id}")
        return float(xi[0, 0]), float(xi[0, 1])

    @staticmethod
    def locate_many(atlas: ChartAtlas, x) -> SurfacePoints:
        """Central projection of nonzero points onto the surface."""
        x = np.asarray(x, dtype=float).reshape(-1, 3)
        c0, _, _, semi, dims = _frames(atlas)
        d = x / semi[0]
        if np.any(np.linalg.norm(d, axis=1) == 0):
            raise ValidationException("Cannot project the origin onto the surface")
        chart_ids = np.argmax(d @ c0.T, axis=1)
        xi, _ = ChartAtlasService.chart_coordinates_many(atlas, chart_ids, x)
        xi = np.clip(xi, 0.0, dims[chart_ids])
        return SurfacePoints(chart_ids=chart_ids, xi=xi, x=ChartAtlasService._evaluate(atlas, chart_ids, xi))

    @staticmethod
    def locate(atlas: ChartAtlas, x) -> SurfacePoint:
        return ChartAtlasService.locate_many(atlas, x)[0]

    @staticmethod
    def distance_to_surface(atlas: ChartAtlas, x) -> float:
        x = np.asarray(x, dtype=float).reshape(3)
        dims = _frames(atlas)[4]
        best = math.inf

        for chart in atlas.charts:
            ids = np.array([chart.chart_id])
            start, _ = ChartAtlasService.chart_coordinates_many(atlas, ids, x)
            start = np.clip(start[0], 0.0, dims[chart.chart_id])

            def objective(xi):
                y, dy1, dy2 = ChartAtlasService._evaluate(atlas, ids, xi.reshape(1, 2), derivatives=True)
                r = y[0] - x
                return float(r @ r), np.array([2.0 * r @ dy1[0], 2.0 * r @ dy2[0]])

            result = minimize(
                objective, start, jac=True, method="L-BFGS-B",
                bounds=[(0.0, dims[chart.chart_id, 0]), (0.0, dims[chart.chart_id, 1])],
                options={"ftol": 1e-15, "gtol": 1e-12},
            )
            best = min(best, float(result.fun))

        return math.sqrt(max(best, 0.0))

    @staticmethod
    def is_interior_many(atlas: ChartAtlas, grid: SurfaceGrid, x) -> np.ndarray:
        """Gauss solid-angle test: about 4*pi inside, 0 outside."""
        from src.services.quadrature import QuadratureService

        x = np.asarray(x, dtype=float).reshape(-1, 3)
        nodes = QuadratureService.panel_nodes(grid, 4)
        y = nodes.flat_x
        n = nodes.normals.reshape(-1, 3)
        w = nodes.flat_weights
        angles = np.empty(len(x))
        for k, point in enumerate(x):
            r = y - point
            dist = np.linalg.norm(r, axis=1)
            angles[k] = np.sum(w * np.sum(r * n, axis=1) / dist ** 3)
        return angles > 2 * math.pi

    @staticmethod
    def is_interior(atlas: ChartAtlas, grid: SurfaceGrid, x) -> bool:
        return bool(ChartAtlasService.is_interior_many(atlas, grid, x)[0])

    # -------------------------------
    # GRIDS
    # -------------------------------
    @staticmethod
    def build_grid(atlas: ChartAtlas, subdivisions, degree: int) -> SurfaceGrid:
        if degree not in (0, 1, 2):
            raise ValidationException(f"Basis degree must be 0, 1 or 2, got {degree}")

        if np.ndim(subdivisions) == 1:
            subdivisions = [tuple(subdivisions)] * atlas.size
        subdivisions = tuple((int(n), int(k)) for n, k in subdivisions)
        if len(subdivisions) != atlas.size:
            raise ValidationException(f"Expected subdivisions for {atlas.size} charts, got {len(subdivisions)}")

        for l, (n, k) in enumerate(subdivisions):
            if n < degree + 1 or k < degree + 1:
                raise ValidationException(
                    f"Grid ({n}, {k}) on chart {l} is too coarse for basis degree {degree}: "
                    f"needs n, k >= m + 1 = {degree + 1}"
                )

        charts, index, origin, steps, offsets = [], [], [], [], []
        h_edge, h_area, offset = 0.0, 0.0, 0
        for chart, (n, k) in zip(atlas.charts, subdivisions):
            a, b = chart.rect_dims
            h1, h2 = a / n, b / k
            ii, jj = np.meshgrid(np.arange(n), np.arange(k), indexing="ij")
            ij = np.column_stack([ii.ravel(), jj.ravel()])
            charts.append(np.full(n * k, chart.chart_id))
            index.append(ij)
            origin.append(ij * np.array([h1, h2]))
            steps.append(np.tile([h1, h2], (n * k, 1)))
            offsets.append(offset)
            offset += n * k
            h_edge = max(h_edge, h1, h2)
            h_area = max(h_area, h1 * h2)

        grid = SurfaceGrid(
            atlas=atlas,
            degree=degree,
            subdivisions=subdivisions,
            panel_chart=np.concatenate(charts),
            panel_index=np.concatenate(index),
            panel_origin=np.concatenate(origin).astype(float),
            panel_steps=np.concatenate(steps).astype(float),
            panel_offsets=tuple(offsets),
            h_edge=h_edge,
            h_area=h_area,
        )
        audit_log("build", "grid", grid.size, {"degree": degree, "h_edge": h_edge, "h_area": h_area})
        return grid
