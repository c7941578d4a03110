# src/schemas/report.py
import math
from typing import Optional, List, Tuple
from pydantic import BaseModel, Field, ConfigDict

from src.schemas.common import Side, Method, BasisFamily


# -------------------------------
# DIAGNOSTICS
# -------------------------------
class SystemDiagnostics(BaseModel):
    hadamard_dominant: Optional[bool] = None
    symmetry_defect: float
    condition_estimate: float
    stability_surrogate: float = Field(..., description="smallest singular value of the scaled matrix")
    spacing_epsilon: Optional[float] = None
    spacing_d: Optional[float] = None
    spacing_ok: Optional[bool] = None
    psi_system_independent: Optional[bool] = None

    model_config = ConfigDict(frozen=True)


# -------------------------------
# POTENTIAL SAMPLES
# -------------------------------
class PotentialSample(BaseModel):
    x: Tuple[float, float, float]
    value: float
    side: Side
    delta: float = Field(..., gt=0)

    model_config = ConfigDict(frozen=True)


# -------------------------------
# CONVERGENCE REPORT
# -------------------------------
CSV_COLUMNS = (
    "level", "h_edge", "h_area", "N", "l2_density_err", "order_edge", "order_area",
    "pot_err_interior", "pot_err_exterior", "bound43_ok", "assemble_s", "solve_s",
)


class ConvergenceRow(BaseModel):
    level: int
    h_edge: float
    h_area: float
    N: int
    l2_density_err: float = math.nan
    order_edge: float = math.nan
    order_area: float = math.nan
    pot_err_interior: float = math.nan
    pot_err_exterior: float = math.nan
    bound43_ok: bool = True
    assemble_s: float = 0.0
    solve_s: float = 0.0
    evaluate_s: float = 0.0
    stability_surrogate: float = math.nan
    holder_bound: float = math.nan

    def csv_fields(self) -> List[str]:
        values = []
        for column in CSV_COLUMNS:
            value = getattr(self, column)
            if isinstance(value, bool):
                values.append("true" if value else "false")
            elif isinstance(value, int):
                values.append(str(value))
            else:
                values.append(repr(float(value)))
        return values


class ConvergenceReport(BaseModel):
    method: Method
    family: BasisFamily
    degree: int
    problem: str
    reference_norm: float = math.nan  # L2 norm of the exact density when known
    rows: List[ConvergenceRow] = Field(default_factory=list)
