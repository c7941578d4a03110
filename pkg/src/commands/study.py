import logging
from pathlib import Path
from typing import Optional

import typer

from src.core.custom_exceptions import AcceptanceException, BoundaryElementException
from src.services.study import StudyService
from src.utils.file_io import load_config

logger = logging.getLogger(__name__)


def study(
    config: Path = typer.Argument(..., help="TOML run configuration"),
    csv: Optional[Path] = typer.Option(None, "--csv", help="Report path; overrides [output] csv_path"),
    check: bool = typer.Option(False, "--check", help="Exit with code 4 when acceptance thresholds fail"),
):
    """Run a convergence study over grid refinements and write the CSV report."""
    try:
        run = load_config(config)
        report = StudyService.run_convergence_study(run)
        failures = StudyService.emit_report(report, csv or run.output.csv_path)
        if check and failures:
            raise AcceptanceException(failures=failures)
    except BoundaryElementException as e:
        logger.error(e.message)
        for failure in getattr(e, "failures", []):
            logger.error(f"  {failure}")
        raise typer.Exit(code=e.exit_code)
