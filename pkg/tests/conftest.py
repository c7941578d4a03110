import numpy as np
import pytest

from src.schemas.config import QuadratureSection
from src.services.chart_atlas import ChartAtlasService


@pytest.fixture(scope="session")
def sphere():
    return ChartAtlasService.unit_sphere_atlas(1.0)


@pytest.fixture(scope="session")
def ellipsoid():
    return ChartAtlasService.ellipsoid_atlas((1.0, 0.8, 0.6))


@pytest.fixture(scope="session")
def quad():
    return QuadratureSection()


@pytest.fixture(scope="session")
def grid_factory(sphere):
    grids = {}

    def build(n: int, degree: int = 0, atlas=None):
        atlas = atlas or sphere
        key = (id(atlas), n, degree)
        if key not in grids:
            grids[key] = ChartAtlasService.build_grid(atlas, (n, n), degree)
        return grids[key]

    return build


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_surface_points(sphere, rng):
    """Interior parameter points of every chart, mapped onto the unit sphere."""
    def sample(atlas=None, per_chart: int = 5):
        atlas = atlas or sphere
        a, b = atlas.charts[0].rect_dims
        chart_ids = np.repeat(np.arange(atlas.size), per_chart)
        xi = rng.uniform(0.05, 0.95, size=(len(chart_ids), 2)) * np.array([a, b])
        return ChartAtlasService.map_points(atlas, chart_ids, xi)

    return sample


STUDY_TOML = """
[surface]
kind = "sphere"
radius = 1.0

[basis]
family = "bspline"
degree = 0

[grid]
n = {n}
k = {n}
refinements = {refinements}

[method]
kind = "{method}"

[problem]
kind = "constant"
value = 1.0
"""


@pytest.fixture
def config_file(tmp_path):
    def write(n: int = 2, refinements: int = 2, method: str = "galerkin", extra: str = "") -> str:
        path = tmp_path / f"run_{method}_{n}_{refinements}.toml"
        path.write_text(STUDY_TOML.format(n=n, refinements=refinements, method=method) + extra)
        return str(path)

    return write
