import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.custom_exceptions import ConfigurationException, ValidationException
from src.models.system import DenseSystem, DensityVector
from src.schemas.common import BasisFamily, Method, Pairing, Restriction
from src.schemas.config import StudyConfig
from src.utils.file_io import (
    dump_system, load_config, load_density, load_points, read_system_dump, save_density, write_csv,
)


def test_load_config(config_file):
    config = load_config(config_file(n=3, refinements=4, method="collocation"))
    assert config.grid.n == 3
    assert config.grid.refinements == 4
    assert config.method.kind == Method.COLLOCATION
    assert config.basis.family == BasisFamily.BSPLINE
    assert config.pairing.measure == Pairing.SURFACE
    assert config.collocation.restriction == Restriction.POINT
    assert config.quadrature.regular_order == 4


def test_quadrature_section_overrides_settings(config_file):
    config = load_config(config_file(extra="\n[quadrature]\nregular_order = 7\nsubdivision = 4\n"))
    assert config.quadrature.regular_order == 7
    assert config.quadrature.subdivision == 4
    assert config.quadrature.singular_order == 6


def test_missing_config(tmp_path):
    with pytest.raises(ConfigurationException) as exc:
        load_config(tmp_path / "missing.toml")
    assert exc.value.exit_code == 2


@pytest.mark.parametrize("text", [
    "[grid\nn = 2",
    "[grid]\nn = 2\nk = 2\nbogus = 1\n",
    "[basis]\nfamily = \"lagrange\"\ndegree = 0\n",
    "[basis]\ndegree = 2\n[grid]\nn = 2\nk = 2\n",
    "[surface]\nkind = \"ellipsoid\"\n",
    "[method]\nkind = \"least_squares\"\n",
])
def test_invalid_configs(tmp_path, text):
    path = tmp_path / "bad.toml"
    path.write_text(text)
    with pytest.raises(ConfigurationException):
        load_config(path)


def test_system_dump_layout(tmp_path):
    matrix = np.array([[2.0, -1.0], [0.5, 3.0]])
    system = DenseSystem(matrix=matrix, rhs=np.array([1.0, 4.0]), method=Method.COLLOCATION, pairing=None, basis=None)
    path = dump_system(system, tmp_path / "dumps" / "system.bin")

    raw = path.read_bytes()
    assert len(raw) == 16 + 8 * 6
    assert np.frombuffer(raw[:16], dtype="<u8").tolist() == [2, 2]

    n, code, read_matrix, rhs = read_system_dump(path)
    assert (n, code) == (2, 2)
    assert_allclose(read_matrix, matrix)
    assert_allclose(rhs, [1.0, 4.0])


def test_truncated_dump(tmp_path):
    path = tmp_path / "short.bin"
    path.write_bytes(np.array([3, 1], dtype="<u8").tobytes() + np.zeros(4).tobytes())
    with pytest.raises(ValidationException):
        read_system_dump(path)


def test_density_file(tmp_path):
    config = StudyConfig.model_validate({"basis": {"degree": 1}, "grid": {"n": 3, "k": 3}})
    density = DensityVector(basis=None, coefficients=np.linspace(0.0, 1.0, 5))
    path = save_density(tmp_path / "density.npz", density, config, level=2)

    coefficients, loaded, level = load_density(path)
    assert_allclose(coefficients, density.coefficients)
    assert loaded == config
    assert level == 2

    with pytest.raises(ConfigurationException):
        load_density(tmp_path / "missing.npz")


def test_points_file(tmp_path):
    path = tmp_path / "points.txt"
    path.write_text("0 0 0\n2.0 0.5 -1\n")
    assert load_points(path).shape == (2, 3)

    path.write_text("0 0\n")
    with pytest.raises(ValidationException):
        load_points(path)
    with pytest.raises(ConfigurationException):
        load_points(tmp_path / "missing.txt")


def test_write_csv(tmp_path):
    path = write_csv(tmp_path / "nested" / "table.csv", ("a", "b"), [("1", "x"), ("2", "y")])
    assert path.read_text() == "a,b\n1,x\n2,y\n"
