# src/models/geometry.py
from dataclasses import dataclass
from typing import Tuple
import enum

import numpy as np


class MapKind(str, enum.Enum):
    CUBED_SPHERE_FACE = "cubed_sphere_face"
    ELLIPSOID_PATCH = "ellipsoid_patch"


# Edge numbering of a parameter rectangle [0,a]x[0,b]
EDGE_BOTTOM, EDGE_RIGHT, EDGE_TOP, EDGE_LEFT = 0, 1, 2, 3


@dataclass(frozen=True)
class Chart:
    chart_id: int
    rect_dims: Tuple[float, float]
    map_kind: MapKind
    shape_params: Tuple[float, ...]       # radius, or semi-axes (a, b, c)
    face_axis: Tuple[float, float, float]  # c0: outward face direction
    face_e1: Tuple[float, float, float]
    face_e2: Tuple[float, float, float]   # e1 x e2 = c0

    @property
    def semi_axes(self) -> np.ndarray:
        if len(self.shape_params) == 1:
            return np.full(3, self.shape_params[0])
        return np.asarray(self.shape_params, dtype=float)

    def __repr__(self):
        return f"<Chart {self.chart_id} {self.map_kind.value} {self.rect_dims}>"


@dataclass(frozen=True)
class EdgePair:
    chart_a: int
    edge_a: int
    chart_b: int
    edge_b: int
    reversed: bool


@dataclass(frozen=True, eq=False)
class ChartAtlas:
    charts: Tuple[Chart, ...]
    adjacency: Tuple[EdgePair, ...]
    shape_scale: float

    @property
    def size(self) -> int:
        return len(self.charts)

    def __repr__(self):
        return f"<ChartAtlas M={self.size} scale={self.shape_scale}>"


@dataclass(frozen=True)
class SurfacePoint:
    chart_id: int
    xi: Tuple[float, float]
    x: Tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class SurfacePoints:
    """A batch of surface points sharing one representation."""
    chart_ids: np.ndarray  # (n,)
    xi: np.ndarray         # (n, 2)
    x: np.ndarray          # (n, 3)

    def __len__(self) -> int:
        return len(self.chart_ids)

    def __getitem__(self, index) -> SurfacePoint:
        return SurfacePoint(
            chart_id=int(self.chart_ids[index]),
            xi=(float(self.xi[index, 0]), float(self.xi[index, 1])),
            x=tuple(float(c) for c in self.x[index]),
        )

    @classmethod
    def from_points(cls, points) -> "SurfacePoints":
        return cls(
            chart_ids=np.array([p.chart_id for p in points], dtype=int),
            xi=np.array([p.xi for p in points], dtype=float).reshape(-1, 2),
            x=np.array([p.x for p in points], dtype=float).reshape(-1, 3),
        )


@dataclass(frozen=True, eq=False)
class SurfaceGrid:
    atlas: ChartAtlas
    degree: int
    subdivisions: Tuple[Tuple[int, int], ...]  # (n_l, k_l) per chart
    panel_chart: np.ndarray    # (P,)
    panel_index: np.ndarray    # (P, 2) -> (i, j)
    panel_origin: np.ndarray   # (P, 2)
    panel_steps: np.ndarray    # (P, 2)
    panel_offsets: Tuple[int, ...]  # first panel of each chart
    h_edge: float
    h_area: float

    @property
    def size(self) -> int:
        return len(self.panel_chart)

    @property
    def panels(self) -> list[tuple[int, int, int]]:
        return [
            (int(c), int(ij[0]), int(ij[1]))
            for c, ij in zip(self.panel_chart, self.panel_index)
        ]

    def steps(self, chart_id: int) -> Tuple[float, float]:
        a, b = self.atlas.charts[chart_id].rect_dims
        n, k = self.subdivisions[chart_id]
        return a / n, b / k

    def panel_of(self, chart_id: int, i: int, j: int) -> int:
        return self.panel_offsets[chart_id] + i * self.subdivisions[chart_id][1] + j

    def locate_panels(self, chart_ids: np.ndarray, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Panel index and panel-local coordinates in [0,1]^2 of parameter points."""
        chart_ids = np.asarray(chart_ids, dtype=int)
        subdivisions = np.asarray(self.subdivisions, dtype=int)[chart_ids]
        dims = np.array([c.rect_dims for c in self.atlas.charts], dtype=float)[chart_ids]
        steps = dims / subdivisions
        scaled = np.asarray(xi, dtype=float) / steps
        cell = np.clip(np.floor(scaled).astype(int), 0, subdivisions - 1)
        local = scaled - cell
        offsets = np.asarray(self.panel_offsets, dtype=int)[chart_ids]
        panel = offsets + cell[:, 0] * subdivisions[:, 1] + cell[:, 1]
        return panel, local

    def __repr__(self):
        return f"<SurfaceGrid panels={self.size} m={self.degree} h_edge={self.h_edge:.4g}>"
