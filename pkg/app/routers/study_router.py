from pathlib import Path

import typer
from pydantic import ValidationError

from app.core.config import settings
from app.core.constants import MESH_KINDS
from app.core.exceptions import VemError
from app.schemas.study_schema import StudyConfig
from app.services.study_service import run_study, summarize


def _parse_levels(raw: str) -> list:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise typer.BadParameter(f"niveles inválidos '{raw}'", param_hint="--levels")


def _parse_tau(raw: str):
    if raw == "h2":
        return raw
    try:
        return float(raw)
    except ValueError:
        raise typer.BadParameter(f"τ debe ser 'h2' o un número, no '{raw}'", param_hint="--tau")


def study(
    mesh: str = typer.Option("square", "--mesh", help=f"Familia: {', '.join(MESH_KINDS)}"),
    levels: str = typer.Option("8,16,32,64", "--levels", help="Niveles n separados por comas"),
    order: int = typer.Option(settings.VEM_ORDER, "--order", help="Orden k del espacio VEM (1 o 2)"),
    T: float = typer.Option(1.0, "--T", help="Tiempo final"),
    tau: str = typer.Option("h2", "--tau", help="'h2' (τ = h²) o un paso fijo"),
    seed: int = typer.Option(7, "--seed", help="Semilla de las mallas Voronoi"),
    out: Path = typer.Option(Path(settings.OUTPUT_DIR), "--out", help="Directorio de resultados"),
    relative: bool = typer.Option(False, "--relative", help="Errores relativos a la norma exacta"),
    timings: bool = typer.Option(True, "--timings/--no-timings", help="Registrar segundos por nivel"),
    table: bool = typer.Option(True, "--table/--no-table", help="Imprimir la tabla de errores"),
):
    """Estudio de convergencia con la solución manufacturada; código 0 sólo si todos los niveles terminan."""
    try:
        config = StudyConfig(
            mesh_kind=mesh,
            levels=_parse_levels(levels),
            k=order,
            T=T,
            tau_rule=_parse_tau(tau),
            rng_seed=seed,
            out_dir=out,
            relative=relative,
            timings=timings,
        )
    except ValidationError as exc:
        typer.echo(str(exc), err=True)
        raise typer.Exit(code=2)

    try:
        result = run_study(config)
    except VemError as exc:
        typer.echo(str(exc), err=True)
        raise typer.Exit(code=1)

    if table and result.records:
        typer.echo(summarize(result.records).to_string(index=False))
    typer.echo(f"resultados en {result.csv_path} y {result.plot_path}")
    for failure in result.failures:
        typer.echo(f"nivel {failure.level} falló ({failure.stage}): {failure.detail}", err=True)
    if not result.completed:
        raise typer.Exit(code=1)
