# src/models/basis.py
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.interpolate import BSpline, BarycentricInterpolator

from src.models.geometry import SurfaceGrid, SurfacePoints


# -------------------------------
# PANEL-LOCAL 1D SHAPES
# -------------------------------
def bspline_local_1d(m: int, u: np.ndarray) -> np.ndarray:
    """Values of the m+1 uniform B-splines living on one cell, at local u in [0,1].

    Column r is B_{i-m+r} for the cell of index i.
    """
    u = np.clip(np.asarray(u, dtype=float).reshape(-1), 0.0, np.nextafter(1.0, 0.0))
    knots = np.arange(-m, 2 * m + 2, dtype=float)
    design = BSpline.design_matrix(m + u, knots, m).toarray()
    return design[:, m:2 * m + 1]


def lagrange_local_1d(m: int, u: np.ndarray) -> np.ndarray:
    """Equispaced Lagrange polynomials of degree m on [0,1]; column r peaks at r/m."""
    u = np.asarray(u, dtype=float).reshape(-1)
    interpolator = BarycentricInterpolator(np.linspace(0.0, 1.0, m + 1), np.eye(m + 1))
    return np.atleast_2d(interpolator(u)).reshape(len(u), m + 1)


def tensor_shapes(shapes_u: np.ndarray, shapes_v: np.ndarray) -> np.ndarray:
    # local dof r*(m+1)+s  <->  (r, s)
    return (shapes_u[:, :, None] * shapes_v[:, None, :]).reshape(len(shapes_u), -1)


# -------------------------------
# GLOBAL SYSTEMS
# -------------------------------
@dataclass(frozen=True, eq=False)
class GlobalBasis:
    grid: SurfaceGrid
    degree: int
    size: int
    panel_dofs: np.ndarray  # (P, (m+1)^2) global index of each panel-local shape

    @property
    def nloc(self) -> int:
        return self.panel_dofs.shape[1]

    def local_shapes(self, local: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def shape_values(self, panel: np.ndarray, local: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.local_shapes(local)

    def values_at(self, points: SurfacePoints) -> Tuple[np.ndarray, np.ndarray]:
        """Nonzero shape values (n, nloc) at the points and their global dofs (n, nloc)."""
        panel, local = self.grid.locate_panels(points.chart_ids, points.xi)
        return self.local_shapes(local), self.panel_dofs[panel]

    def expand(self, coefficients: np.ndarray, points: SurfacePoints) -> np.ndarray:
        values, dofs = self.values_at(points)
        return np.sum(values * np.asarray(coefficients, dtype=float)[dofs], axis=1)

    def function_values(self, index: int, points: SurfacePoints) -> np.ndarray:
        values, dofs = self.values_at(points)
        return np.sum(np.where(dofs == index, values, 0.0), axis=1)


@dataclass(frozen=True, eq=False)
class GlobalBSplineBasis(GlobalBasis):
    chart_offsets: Tuple[int, ...] = ()
    dof_chart: Optional[np.ndarray] = None  # (N,)
    dof_index: Optional[np.ndarray] = None  # (N, 2) spline indices in -m .. n-1

    def local_shapes(self, local: np.ndarray) -> np.ndarray:
        local = np.atleast_2d(local)
        m = self.degree
        return tensor_shapes(bspline_local_1d(m, local[:, 0]), bspline_local_1d(m, local[:, 1]))

    def __repr__(self):
        return f"<GlobalBSplineBasis m={self.degree} N={self.size}>"


@dataclass(frozen=True, eq=False)
class GlobalLagrangeBasis(GlobalBasis):
    nodes: Optional[SurfacePoints] = None         # merged nodes x_p
    members: Tuple[Tuple[Tuple[int, int, int], ...], ...] = ()  # (chart, p, t) per merged node

    def local_shapes(self, local: np.ndarray) -> np.ndarray:
        local = np.atleast_2d(local)
        m = self.degree
        return tensor_shapes(lagrange_local_1d(m, local[:, 0]), lagrange_local_1d(m, local[:, 1]))

    def __repr__(self):
        return f"<GlobalLagrangeBasis m={self.degree} N={self.size}>"


@dataclass(frozen=True, eq=False)
class AnalyticSpace(GlobalBasis):
    """A single closed-form density seen through the panel machinery."""
    function: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def over(cls, grid: SurfaceGrid, function: Callable[[np.ndarray], np.ndarray]) -> "AnalyticSpace":
        return cls(
            grid=grid, degree=0, size=1,
            panel_dofs=np.zeros((grid.size, 1), dtype=int), function=function,
        )

    def local_shapes(self, local: np.ndarray) -> np.ndarray:
        raise TypeError("an analytic density has no parameter-only shapes")

    def shape_values(self, panel: np.ndarray, local: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.function(np.asarray(x, dtype=float).reshape(-1, 3)), dtype=float).reshape(-1, 1)


# -------------------------------
# DENSITIES
# -------------------------------
@dataclass(frozen=True, eq=False)
class DensityFunction:
    """Closed-form density of x in R^3, or coefficients over a global basis."""
    function: Optional[Callable[[np.ndarray], np.ndarray]] = None
    basis: Optional[GlobalBasis] = None
    coefficients: Optional[np.ndarray] = None

    @classmethod
    def analytic(cls, function: Callable[[np.ndarray], np.ndarray]) -> "DensityFunction":
        return cls(function=function)

    @classmethod
    def discrete(cls, basis: GlobalBasis, coefficients: np.ndarray) -> "DensityFunction":
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (basis.size,):
            raise ValueError(f"expected {basis.size} coefficients, got {coefficients.shape}")
        return cls(basis=basis, coefficients=coefficients)

    @property
    def is_discrete(self) -> bool:
        return self.basis is not None

    def values(self, points: SurfacePoints) -> np.ndarray:
        if self.is_discrete:
            return self.basis.expand(self.coefficients, points)
        return np.asarray(self.function(points.x), dtype=float).reshape(-1)
