# src/services/lagrange_basis.py
import logging
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from src.core.audit import audit_log
from src.core.config import settings
from src.core.custom_exceptions import AtlasException, NotFoundException, ValidationException
from src.models.basis import GlobalLagrangeBasis, lagrange_local_1d
from src.models.geometry import ChartAtlas, SurfaceGrid, SurfacePoint, SurfacePoints
from src.services.chart_atlas import ChartAtlasService

logger = logging.getLogger(__name__)


class LagrangeBasisService:

    @staticmethod
    def lagrange_shape_1d(m: int, r: int, t: float) -> float:
        """Degree-m Lagrange polynomial on the unit cell peaking at node r/m."""
        if m < 1:
            raise ValidationException("Lagrange elements need m >= 1; use B-splines of degree 0 for piecewise constants")
        if not 0 <= r <= m:
            raise ValidationException(f"Node index {r} outside 0..{m}")
        if not 0.0 <= t <= 1.0:
            raise ValidationException(f"Cell coordinate {t} outside [0, 1]")
        return float(lagrange_local_1d(m, np.array([t]))[0, r])

    @staticmethod
    def _raw_nodes(atlas: ChartAtlas, grid: SurfaceGrid, m: int):
        chart_ids, lattice, offsets = [], [], []
        offset = 0
        for chart, (n, k) in zip(atlas.charts, grid.subdivisions):
            p, t = np.meshgrid(np.arange(m * n + 1), np.arange(m * k + 1), indexing="ij")
            offsets.append(offset)
            chart_ids.append(np.full(p.size, chart.chart_id))
            lattice.append(np.column_stack([p.ravel(), t.ravel()]))
            offset += p.size
        chart_ids = np.concatenate(chart_ids)
        lattice = np.concatenate(lattice)
        steps = np.array([grid.steps(l) for l in range(atlas.size)])[chart_ids] / m
        xi = lattice * steps
        x = ChartAtlasService._evaluate(atlas, chart_ids, xi)
        return chart_ids, lattice, xi, x, offsets

    @staticmethod
    def _validate_merge(atlas: ChartAtlas, grid: SurfaceGrid, m: int, chart_ids, lattice, labels):
        limits = np.array([(m * n, m * k) for n, k in grid.subdivisions])[chart_ids]
        on_boundary = np.any((lattice == 0) | (lattice == limits), axis=1)
        sizes = np.bincount(labels)

        if np.any(on_boundary & (sizes[labels] < 2)):
            raise AtlasException("Boundary node without a partner on a neighbouring chart")
        if np.any(~on_boundary & (sizes[labels] > 1)):
            raise AtlasException("Interior chart nodes collide within the merge tolerance")

        adjacent = {frozenset((e.chart_a, e.chart_b)) for e in atlas.adjacency}
        order = np.argsort(labels, kind="stable")
        groups = np.split(order, np.cumsum(sizes)[:-1])
        for group in groups:
            if len(group) < 2:
                continue
            charts = chart_ids[group]
            if len(set(charts.tolist())) != len(charts):
                raise AtlasException(f"Nodes of one chart merged together: charts {charts.tolist()}")
            if len(group) == 2 and frozenset(charts.tolist()) not in adjacent:
                raise AtlasException(f"Edge nodes merged across non-adjacent charts {charts.tolist()}")

    @staticmethod
    def build_global_lagrange_basis(atlas: ChartAtlas, grid: SurfaceGrid, m: int) -> GlobalLagrangeBasis:
        if m < 1:
            raise ValidationException("Lagrange elements need m >= 1; use B-splines of degree 0 for piecewise constants")
        if grid.degree != m:
            raise ValidationException(f"Grid was built for degree {grid.degree}, basis requested degree {m}")

        chart_ids, lattice, xi, x, offsets = LagrangeBasisService._raw_nodes(atlas, grid, m)
        raw = len(chart_ids)

        tolerance = settings.MERGE_TOLERANCE * atlas.shape_scale
        pairs = cKDTree(x).query_pairs(tolerance, output_type="ndarray")
        graph = sparse.coo_array(
            (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(raw, raw)
        ) if len(pairs) else sparse.coo_array((raw, raw))
        _, labels = connected_components(graph, directed=False)
        LagrangeBasisService._validate_merge(atlas, grid, m, chart_ids, lattice, labels)

        # number merged nodes by first appearance
        _, first = np.unique(labels, return_index=True)
        order = np.argsort(first)
        renumber = np.empty(len(order), dtype=int)
        renumber[order] = np.arange(len(order))
        global_of_raw = renumber[labels]
        representative = first[order]

        members = [[] for _ in range(len(order))]
        for raw_index, g in enumerate(global_of_raw):
            members[g].append((int(chart_ids[raw_index]), int(lattice[raw_index, 0]), int(lattice[raw_index, 1])))

        k_per_panel = np.array([grid.subdivisions[c][1] for c in grid.panel_chart])
        r, s = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
        rows = m * grid.panel_index[:, :1] + r.ravel()[None, :]
        cols = m * grid.panel_index[:, 1:] + s.ravel()[None, :]
        raw_dofs = np.asarray(offsets)[grid.panel_chart][:, None] + rows * (m * k_per_panel[:, None] + 1) + cols

        basis = GlobalLagrangeBasis(
            grid=grid,
            degree=m,
            size=len(order),
            panel_dofs=global_of_raw[raw_dofs],
            nodes=SurfacePoints(
                chart_ids=chart_ids[representative], xi=xi[representative], x=x[representative]
            ),
            members=tuple(tuple(group) for group in members),
        )
        logger.info(f"Merged {raw} chart nodes into N={basis.size} Lagrange nodes (degree {m})")
        audit_log("build", "lagrange_basis", basis.size, {"degree": m, "raw_nodes": raw})
        return basis

    @staticmethod
    def eval_global_lagrange(basis: GlobalLagrangeBasis, p_index: int, point: SurfacePoint) -> float:
        if not 0 <= p_index < basis.size:
            raise NotFoundException(f"Node {p_index} not found")
        return float(basis.function_values(p_index, SurfacePoints.from_points([point]))[0])

    @staticmethod
    def interpolate_nodal(f: Callable[[np.ndarray], np.ndarray], basis: GlobalLagrangeBasis) -> np.ndarray:
        """Coefficients f(x_p) at the merged nodes."""
        return np.asarray(f(basis.nodes.x), dtype=float).reshape(basis.size)
