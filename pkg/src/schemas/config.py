# src/schemas/config.py
from typing import Optional, Tuple
from pydantic import BaseModel, Field, ConfigDict, model_validator

from src.core.config import settings
from src.schemas.common import (
    SurfaceKind, BasisFamily, Method, Pairing, Restriction, ProblemKind,
)


# -------------------------------
# SURFACE / BASIS / GRID
# -------------------------------
class SurfaceSection(BaseModel):
    kind: SurfaceKind = SurfaceKind.SPHERE
    radius: float = Field(1.0, gt=0)
    semi_axes: Optional[Tuple[float, float, float]] = None
    rect_a: Optional[float] = Field(None, gt=0)
    rect_b: Optional[float] = Field(None, gt=0)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_semi_axes(self):
        if self.kind == SurfaceKind.ELLIPSOID:
            if self.semi_axes is None:
                raise ValueError("ellipsoid surface needs semi_axes")
            if min(self.semi_axes) <= 0:
                raise ValueError("semi_axes must be positive")
        return self


class BasisSection(BaseModel):
    family: BasisFamily = BasisFamily.BSPLINE
    degree: int = Field(0, ge=0, le=2)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_degree(self):
        if self.family == BasisFamily.LAGRANGE and self.degree == 0:
            raise ValueError("lagrange elements need degree >= 1; use bspline degree 0 for piecewise constants")
        return self


class GridSection(BaseModel):
    n: int = Field(4, ge=1)
    k: int = Field(4, ge=1)
    refinements: int = Field(3, ge=1)

    model_config = ConfigDict(extra="forbid")


# -------------------------------
# METHOD / PAIRING / COLLOCATION
# -------------------------------
class MethodSection(BaseModel):
    kind: Method = Method.GALERKIN

    model_config = ConfigDict(extra="forbid")


class PairingSection(BaseModel):
    measure: Pairing = Pairing.SURFACE

    model_config = ConfigDict(extra="forbid")


class CollocationSection(BaseModel):
    restriction: Restriction = Restriction.POINT
    delta: Optional[float] = Field(None, gt=0)

    model_config = ConfigDict(extra="forbid")


class QuadratureSection(BaseModel):
    regular_order: int = Field(default_factory=lambda: settings.REGULAR_ORDER, ge=1, le=30)
    singular_order: int = Field(default_factory=lambda: settings.SINGULAR_ORDER, ge=1, le=30)
    subdivision: int = Field(default_factory=lambda: settings.SUBDIVISION, ge=0, le=8)
    near_field_factor: float = Field(default_factory=lambda: settings.NEAR_FIELD_FACTOR, gt=0)

    model_config = ConfigDict(extra="forbid", frozen=True)


# -------------------------------
# PROBLEM / OUTPUT
# -------------------------------
class ProblemSection(BaseModel):
    kind: ProblemKind = ProblemKind.CONSTANT
    value: float = 1.0
    source_point: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    harmonic_n: int = Field(1, ge=0, le=8)

    model_config = ConfigDict(extra="forbid")


class OutputSection(BaseModel):
    csv_path: Optional[str] = None

    model_config = ConfigDict(extra="forbid")


class StudyConfig(BaseModel):
    """Sectioned run configuration, read from a TOML file"""
    surface: SurfaceSection = Field(default_factory=SurfaceSection)
    basis: BasisSection = Field(default_factory=BasisSection)
    grid: GridSection = Field(default_factory=GridSection)
    method: MethodSection = Field(default_factory=MethodSection)
    pairing: PairingSection = Field(default_factory=PairingSection)
    collocation: CollocationSection = Field(default_factory=CollocationSection)
    quadrature: QuadratureSection = Field(default_factory=QuadratureSection)
    problem: ProblemSection = Field(default_factory=ProblemSection)
    output: OutputSection = Field(default_factory=OutputSection)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_grid_against_degree(self):
        minimum = self.basis.degree + 1
        if self.grid.n < minimum or self.grid.k < minimum:
            raise ValueError(f"grid n, k must be >= degree + 1 = {minimum}")
        return self
