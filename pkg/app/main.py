import logging
from typing import Optional

import typer

from app.core.config import settings
from app.routers import mesh_router, study_router

app = typer.Typer(
    name="pnp-vem",
    help="Elementos virtuales para Poisson–Nernst–Planck en mallas poligonales",
    no_args_is_help=True,
)


@app.callback()
def configure(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Registro a nivel DEBUG"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Nivel de registro (por defecto LOG_LEVEL)"),
):
    level = "DEBUG" if verbose else (log_level or settings.LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


# Registrar los subcomandos
app.add_typer(mesh_router.router, name="mesh")
app.command("study")(study_router.study)


if __name__ == "__main__":
    app()
