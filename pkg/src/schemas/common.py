import enum


class SurfaceKind(str, enum.Enum):
    SPHERE = "sphere"
    ELLIPSOID = "ellipsoid"


class BasisFamily(str, enum.Enum):
    BSPLINE = "bspline"
    LAGRANGE = "lagrange"


class Method(str, enum.Enum):
    GALERKIN = "galerkin"
    COLLOCATION = "collocation"


class Pairing(str, enum.Enum):
    SURFACE = "surface"
    PARAMETER = "parameter"


class Restriction(str, enum.Enum):
    POINT = "point"
    MIN = "min"
    MEAN = "mean"


class ProblemKind(str, enum.Enum):
    CONSTANT = "constant"
    POINT_SOURCE = "point_source"
    HARMONIC = "harmonic"


class Side(str, enum.Enum):
    INTERIOR = "interior"
    EXTERIOR = "exterior"


# 64-bit codes written in the header of binary system dumps
METHOD_CODES = {Method.GALERKIN: 1, Method.COLLOCATION: 2}
