import csv
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Iterable, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from src.core.custom_exceptions import ConfigurationException, ValidationException
from src.models.system import DenseSystem, DensityVector
from src.schemas.common import METHOD_CODES
from src.schemas.config import StudyConfig


def load_config(path: str | Path) -> StudyConfig:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigurationException(f"Config file {path} not found")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationException(f"Config file {path} is not valid TOML: {exc}")

    try:
        return StudyConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationException(f"Invalid config {path}: {exc}")


def _writable(path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationException(f"Cannot write to {path}: {exc}")
    return path


# -------------------------------
# SYSTEM DUMPS
# -------------------------------
def dump_system(system: DenseSystem, path: str | Path) -> Path:
    """Header of two <u8 (N, method code), then A row-major and f, all <f8."""
    path = _writable(path)
    header = np.array([system.size, METHOD_CODES[system.method]], dtype="<u8")
    try:
        with open(path, "wb") as f:
            f.write(header.tobytes())
            f.write(np.ascontiguousarray(system.matrix, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(system.rhs, dtype="<f8").tobytes())
    except OSError as exc:
        raise ValidationException(f"Cannot write system dump {path}: {exc}")
    return path


def read_system_dump(path: str | Path) -> Tuple[int, int, np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    n, code = np.frombuffer(data[:16], dtype="<u8")
    values = np.frombuffer(data[16:], dtype="<f8")
    n = int(n)
    if len(values) != n * n + n:
        raise ValidationException(f"System dump {path} is truncated")
    return n, int(code), values[:n * n].reshape(n, n), values[n * n:]


# -------------------------------
# DENSITIES AND POINTS
# -------------------------------
def save_density(path: str | Path, density: DensityVector, config: StudyConfig, level: int = 0) -> Path:
    path = _writable(path)
    try:
        with open(path, "wb") as f:
            np.savez(f, coefficients=density.coefficients, config=config.model_dump_json(), level=level)
    except OSError as exc:
        raise ValidationException(f"Cannot write density file {path}: {exc}")
    return path


def load_density(path: str | Path) -> Tuple[np.ndarray, StudyConfig, int]:
    try:
        with np.load(Path(path)) as data:
            coefficients = np.asarray(data["coefficients"], dtype=float)
            config = StudyConfig.model_validate_json(data["config"].item())
            level = int(data["level"])
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigurationException(f"Cannot read density file {path}: {exc}")
    return coefficients, config, level


def load_points(path: str | Path) -> np.ndarray:
    try:
        points = np.loadtxt(Path(path), ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigurationException(f"Cannot read points file {path}: {exc}")
    if points.shape[1] != 3:
        raise ValidationException(f"Points file {path} must have three columns, got {points.shape[1]}")
    return points


# -------------------------------
# CSV
# -------------------------------
def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    path = _writable(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise ValidationException(f"Cannot write report {path}: {exc}")
    return path
