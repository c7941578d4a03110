import math

import numpy as np
import pytest
from typer.testing import CliRunner

from src.main import app
from src.schemas.common import BasisFamily, Method
from src.schemas.report import ConvergenceReport, ConvergenceRow
from src.services.study import StudyService
from src.utils.file_io import load_density, read_system_dump

runner = CliRunner()


def failing_report(config):
    rows = [
        ConvergenceRow(level=level, h_edge=0.5 ** level, h_area=0.25 ** level, N=24 * 4 ** level,
                       l2_density_err=e, stability_surrogate=0.1)
        for level, e in enumerate([1e-2, 2e-2])
    ]
    return ConvergenceReport(
        method=Method.GALERKIN, family=BasisFamily.BSPLINE, degree=0, problem="constant",
        reference_norm=1.0, rows=rows,
    )


def test_solve_writes_density_and_dump(config_file, tmp_path):
    density = tmp_path / "density.npz"
    dump = tmp_path / "system.bin"
    result = runner.invoke(app, ["solve", config_file(), "--output", str(density), "--dump", str(dump)])
    assert result.exit_code == 0, result.output

    coefficients, config, level = load_density(density)
    assert len(coefficients) == 24
    assert level == 0
    assert config.grid.n == 2

    n, code, matrix, rhs = read_system_dump(dump)
    assert (n, code) == (24, 1)
    assert np.allclose(matrix, matrix.T)


def test_solve_with_missing_config(tmp_path):
    result = runner.invoke(app, ["solve", str(tmp_path / "missing.toml")])
    assert result.exit_code == 2


def test_solve_with_invalid_config(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[basis]\ndegree = 2\n[grid]\nn = 2\nk = 2\n")
    result = runner.invoke(app, ["solve", str(path)])
    assert result.exit_code == 2


def test_eval_potential(config_file, tmp_path):
    density = tmp_path / "density.npz"
    assert runner.invoke(app, ["solve", config_file(method="collocation"), "-o", str(density)]).exit_code == 0

    points = tmp_path / "points.txt"
    points.write_text("0 0 0\n0 0 3\n")
    result = runner.invoke(app, ["eval-potential", str(density), str(points)])
    assert result.exit_code == 0, result.output
    assert "interior" in result.output
    assert "exterior" in result.output


def test_eval_potential_rejects_surface_points(config_file, tmp_path):
    density = tmp_path / "density.npz"
    assert runner.invoke(app, ["solve", config_file(), "-o", str(density)]).exit_code == 0
    points = tmp_path / "points.txt"
    points.write_text("1 0 0\n")
    assert runner.invoke(app, ["eval-potential", str(density), str(points)]).exit_code == 2


def test_study_check_exit_codes(config_file, tmp_path, monkeypatch):
    monkeypatch.setattr(StudyService, "run_convergence_study", staticmethod(failing_report))
    csv_path = tmp_path / "report.csv"

    result = runner.invoke(app, ["study", config_file(), "--csv", str(csv_path)])
    assert result.exit_code == 0
    assert csv_path.exists()

    result = runner.invoke(app, ["study", config_file(), "--check"])
    assert result.exit_code == 4


@pytest.mark.slow
def test_study_runs_end_to_end(config_file, tmp_path):
    csv_path = tmp_path / "report.csv"
    result = runner.invoke(app, ["study", config_file(n=2, refinements=2), "--csv", str(csv_path)])
    assert result.exit_code == 0, result.output
    lines = csv_path.read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("level,h_edge,h_area,N,")
