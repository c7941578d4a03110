# ================================
# CUSTOM EXCEPTIONS
# ================================
from typing import Any, Optional


class BoundaryElementException(Exception):
    """Base exception for solver operations"""
    def __init__(self, message: str, exit_code: int = 1):
        self.message = message
        self.exit_code = exit_code
        super().__init__(self.message)


class NotFoundException(BoundaryElementException):
    """Raised when a chart, panel or dof does not exist"""
    def __init__(self, message: str = "Resource not found"):
        super().__init__(message, exit_code=2)


class ValidationException(BoundaryElementException):
    """Raised when an input violates an operation's precondition"""
    def __init__(self, message: str = "Validation failed"):
        super().__init__(message, exit_code=2)


class ConfigurationException(BoundaryElementException):
    """Raised when a study configuration cannot be read or validated"""
    def __init__(self, message: str = "Invalid configuration"):
        super().__init__(message, exit_code=2)


class AtlasException(BoundaryElementException):
    """Raised when charts, grids or merged nodes are inconsistent"""
    def __init__(self, message: str = "Inconsistent atlas"):
        super().__init__(message, exit_code=2)


class SolverException(BoundaryElementException):
    """Raised when a discrete system cannot be solved"""
    def __init__(self, message: str = "Solver failure", diagnostics: Optional[Any] = None):
        self.diagnostics = diagnostics
        super().__init__(message, exit_code=3)


class AcceptanceException(BoundaryElementException):
    """Raised when a convergence study misses its acceptance thresholds"""
    def __init__(self, message: str = "Acceptance thresholds not met", failures: Optional[list[str]] = None):
        self.failures = failures or []
        super().__init__(message, exit_code=4)
