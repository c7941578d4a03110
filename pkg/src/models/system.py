# src/models/system.py
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from src.models.basis import GlobalBasis
from src.models.geometry import SurfacePoints
from src.schemas.common import Method, Pairing, ProblemKind, Restriction


@dataclass(frozen=True, eq=False)
class CollocationSet:
    points: SurfacePoints          # y_j
    delta: np.ndarray              # (N,) neighbourhood radius per point
    restriction: Restriction = Restriction.POINT

    @property
    def size(self) -> int:
        return len(self.points)

    def __repr__(self):
        return f"<CollocationSet N={self.size} {self.restriction.value}>"


@dataclass(frozen=True, eq=False)
class DenseSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    method: Method
    pairing: Optional[Pairing]
    basis: GlobalBasis
    collocation: Optional[CollocationSet] = None
    evaluation_points: Optional[SurfacePoints] = None  # rows of a collocation system
    basis_norms: Optional[np.ndarray] = None           # L2(Gamma) norm of every basis function
    quadrature_asymmetry: float = 0.0                  # max|A - A^T| / max|A| before symmetrization
    assemble_s: float = 0.0

    @property
    def size(self) -> int:
        return len(self.rhs)

    def __repr__(self):
        return f"<DenseSystem {self.method.value} N={self.size}>"


@dataclass(frozen=True, eq=False)
class DensityVector:
    basis: GlobalBasis
    coefficients: np.ndarray
    residual: float = 0.0
    solve_s: float = 0.0

    @property
    def size(self) -> int:
        return len(self.coefficients)

    def __repr__(self):
        return f"<DensityVector N={self.size} residual={self.residual:.2e}>"


@dataclass(frozen=True, eq=False)
class ManufacturedProblem:
    kind: ProblemKind
    boundary_data: Callable[[np.ndarray], np.ndarray]
    exact_density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    interior_potential: Optional[Callable[[np.ndarray], np.ndarray]] = None
    exterior_potential: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    def __repr__(self):
        return f"<ManufacturedProblem {self.kind.value} {self.params}>"
