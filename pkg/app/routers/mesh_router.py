from pathlib import Path
from typing import Optional

import typer

from app.core.config import settings
from app.core.constants import MESH_KINDS, VORONOI_KINDS
from app.core.exceptions import VemError
from app.schemas.mesh_schema import QualityReport
from app.services.mesh_service import (
    euler_characteristic, generate_structured, read_mesh, validate, write_mesh
)
from app.services.plot_service import plot_mesh
from app.services.voronoi_service import generate_voronoi

router = typer.Typer(help="Generación y validación de mallas poligonales", no_args_is_help=True)


def _echo_report(report: QualityReport, euler: int) -> None:
    typer.echo(f"elementos: {report.n_elements}  h: {report.h:.6g}  V-E+F: {euler}")
    typer.echo(
        f"estrelladas: {report.all_star_shaped}  "
        f"min ρ/h: {report.min_inradius_ratio:.4f}  "
        f"media ρ/h: {report.mean_inradius_ratio:.4f}  "
        f"min arista/h: {report.min_edge_ratio:.4f}"
    )
    for message in report.warnings:
        typer.echo(f"aviso: {message}")
    for message in report.diagnostics:
        typer.echo(f"defecto: {message}", err=True)


# ─────────────────────────── mesh gen ────────────────────────────────────
@router.command("gen")
def generate(
    kind: str = typer.Option("square", "--kind", help=f"Familia: {', '.join(MESH_KINDS)}"),
    n: int = typer.Option(8, "--n", min=1, help="Celdas por lado (o √semillas en Voronoi)"),
    seeds: Optional[int] = typer.Option(None, "--seeds", min=1, help="Número de semillas Voronoi (por defecto n²)"),
    lloyd: Optional[int] = typer.Option(None, "--lloyd", min=0, help="Iteraciones de Lloyd"),
    seed: int = typer.Option(7, "--seed", help="Semilla del generador aleatorio"),
    out: Optional[Path] = typer.Option(None, "--out", help="Archivo polymesh de salida"),
    plot: Optional[Path] = typer.Option(None, "--plot", help="SVG con el dibujo de la malla"),
):
    """Genera una malla de una de las seis familias y reporta su calidad."""
    if kind not in MESH_KINDS:
        raise typer.BadParameter(f"familia desconocida '{kind}'", param_hint="--kind")
    try:
        if kind in VORONOI_KINDS:
            default_lloyd = settings.SMOOTH_LLOYD_ITERS if kind == "voronoi-smooth" else 0
            mesh = generate_voronoi(seeds or n * n, default_lloyd if lloyd is None else lloyd, seed)
        else:
            mesh = generate_structured(kind, n)
    except VemError as exc:
        typer.echo(str(exc), err=True)
        raise typer.Exit(code=1)

    _echo_report(validate(mesh), euler_characteristic(mesh))
    if out is not None:
        write_mesh(mesh, out)
        typer.echo(f"malla escrita en {out}")
    if plot is not None:
        plot_mesh(mesh, plot, title=f"{kind}, NE={mesh.n_elements}")
        typer.echo(f"dibujo escrito en {plot}")


# ─────────────────────────── mesh check ──────────────────────────────────
@router.command("check")
def check(file: Path = typer.Argument(..., exists=True, dir_okay=False, help="Archivo polymesh")):
    """Lee una malla y valida estructura y forma; código ≠ 0 ante defectos."""
    try:
        mesh = read_mesh(file)
    except VemError as exc:
        typer.echo(str(exc), err=True)
        raise typer.Exit(code=2)

    report = validate(mesh)
    _echo_report(report, euler_characteristic(mesh))
    if not report.structurally_valid:
        raise typer.Exit(code=1)
