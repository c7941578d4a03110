# src/models/quadrature.py
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class QuadRule1D:
    order: int
    nodes: np.ndarray    # in [0, 1]
    weights: np.ndarray  # sum to 1

    def __repr__(self):
        return f"<QuadRule1D q={self.order}>"


@dataclass(frozen=True)
class SingularScheme:
    order: int              # Gauss points per direction on every Duffy piece
    subdivision: int        # geometric radial splits toward the apex
    near_field_factor: float = 2.0

    @property
    def points_per_target(self) -> int:
        return 4 * (self.subdivision + 1) * 2 * self.order ** 2


@dataclass(frozen=True, eq=False)
class PanelNodes:
    """Regular tensor Gauss nodes of every panel of a grid."""
    order: int
    local: np.ndarray          # (G, 2) panel-local coordinates, shared by all panels
    local_weights: np.ndarray  # (G,) sum to 1
    xi: np.ndarray             # (P, G, 2)
    x: np.ndarray              # (P, G, 3)
    normals: np.ndarray        # (P, G, 3)
    metric: np.ndarray         # (P, G)
    param_weights: np.ndarray  # (P, G) dS weights
    weights: np.ndarray        # (P, G) dGamma weights
    centres: np.ndarray        # (P, 3)
    diameters: np.ndarray      # (P,)

    @property
    def per_panel(self) -> int:
        return len(self.local_weights)

    @property
    def flat_x(self) -> np.ndarray:
        return self.x.reshape(-1, 3)

    @property
    def flat_weights(self) -> np.ndarray:
        return self.weights.reshape(-1)

    def __repr__(self):
        return f"<PanelNodes q={self.order} panels={len(self.centres)}>"
