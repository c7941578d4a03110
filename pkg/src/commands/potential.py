import logging
from pathlib import Path

import typer
from rich.console import Console
from rich.table import Table

from src.core.custom_exceptions import BoundaryElementException, ValidationException
from src.models.basis import DensityFunction
from src.services.single_layer import SingleLayerService
from src.services.study import StudyService
from src.utils.file_io import load_density, load_points

logger = logging.getLogger(__name__)
console = Console()


def eval_potential(
    density: Path = typer.Argument(..., help="Density file written by `solve --output`"),
    points: Path = typer.Argument(..., help="Whitespace-separated x y z per line"),
):
    """Evaluate the single layer potential of a stored density off the surface."""
    try:
        coefficients, run, level = load_density(density)
        atlas = StudyService.build_atlas(run.surface)
        basis = StudyService.build_basis(atlas, run, level)
        if basis.size != len(coefficients):
            raise ValidationException(
                f"Density has {len(coefficients)} coefficients, its configuration builds {basis.size}"
            )
        u = DensityFunction.discrete(basis, coefficients)

        table = Table()
        for column in ("x", "y", "z", "value", "side", "delta"):
            table.add_column(column, justify="right")
        for x in load_points(points):
            sample = SingleLayerService.eval_potential(atlas, basis.grid, u, x, run.quadrature)
            table.add_row(
                *(f"{c:.6g}" for c in sample.x), f"{sample.value:.12g}", sample.side.value, f"{sample.delta:.6g}"
            )
        console.print(table)
    except BoundaryElementException as e:
        logger.error(e.message)
        raise typer.Exit(code=e.exit_code)
