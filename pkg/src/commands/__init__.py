import typer

from .solve import solve
from .study import study
from .potential import eval_potential


def register_commands(app: typer.Typer):
    app.command("solve")(solve)
    app.command("study")(study)
    app.command("eval-potential")(eval_potential)
