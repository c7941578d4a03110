import logging
from pathlib import Path
from typing import Optional

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

from src.core.custom_exceptions import BoundaryElementException
from src.services.discretization import DiscretizationService
from src.services.study import StudyService
from src.utils.file_io import dump_system, load_config, save_density

logger = logging.getLogger(__name__)
console = Console()


def solve(
    config: Path = typer.Argument(..., help="TOML run configuration"),
    level: int = typer.Option(0, min=0, help="Refinement level; the grid is n*2^level by k*2^level"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Write the density coefficients (.npz)"),
    dump: Optional[Path] = typer.Option(None, "--dump", help="Write the binary matrix and right-hand side"),
):
    """Assemble and solve one discrete system, print density statistics."""
    try:
        run = load_config(config)
        atlas = StudyService.build_atlas(run.surface)
        problem = StudyService.manufactured_problem(run.problem.kind, atlas, run.problem)
        basis, system, density = StudyService.solve_level(atlas, run, problem, level)
        diagnostics = DiscretizationService.diagnose_system(system)

        table = Table(title=f"{run.method.kind.value} / {run.basis.family.value} m={run.basis.degree}")
        table.add_column("quantity")
        table.add_column("value", justify="right")
        u = density.coefficients
        for name, value in (
            ("N", str(density.size)),
            ("min coefficient", f"{u.min():.6g}"),
            ("max coefficient", f"{u.max():.6g}"),
            ("mean coefficient", f"{np.mean(u):.6g}"),
            ("relative residual", f"{density.residual:.3e}"),
            ("condition estimate", f"{diagnostics.condition_estimate:.3e}"),
            ("stability surrogate", f"{diagnostics.stability_surrogate:.3e}"),
            ("symmetry defect", f"{diagnostics.symmetry_defect:.3e}"),
            ("assemble [s]", f"{system.assemble_s:.2f}"),
            ("solve [s]", f"{density.solve_s:.2f}"),
        ):
            table.add_row(name, value)
        console.print(table)

        if dump is not None:
            dump_system(system, dump)
            logger.info(f"System written to {dump}")
        if output is not None:
            save_density(output, density, run, level)
            logger.info(f"Density written to {output}")
    except BoundaryElementException as e:
        logger.error(e.message)
        raise typer.Exit(code=e.exit_code)
