import logging

import typer
from rich.logging import RichHandler

from src.commands import register_commands
from src.core.config import settings


def configure_logging():
    logging.basicConfig(
        level=settings.LOG_LEVEL.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True)],
        force=True,
    )


app = typer.Typer(
    name="single-layer-bem",
    help="Galerkin and collocation solvers for the single layer equation on closed surfaces.",
    no_args_is_help=True,
)


@app.callback()
def main():
    configure_logging()


register_commands(app)


if __name__ == "__main__":
    app()
