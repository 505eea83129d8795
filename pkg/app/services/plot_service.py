# app/services/plot_service.py
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import PolyCollection  # noqa: E402

from app.core.constants import FIELDS  # noqa: E402
from app.schemas.mesh_schema import PolygonalMesh  # noqa: E402
from app.schemas.study_schema import ErrorRecord  # noqa: E402

logger = logging.getLogger(__name__)

# ids estables en el SVG para reproducir archivos idénticos
plt.rcParams["svg.hashsalt"] = "pnp-vem"
SVG_METADATA = {"Date": None}

FIELD_LABELS = {"phi": r"$\phi$", "p1": r"$p^1$", "p2": r"$p^2$"}


def _series(records: Sequence[ErrorRecord]) -> Dict[str, Dict[str, List[float]]]:
    out: Dict[str, Dict[str, List[float]]] = {f: {"h": [], "eL2": [], "eH1": []} for f in FIELDS}
    for r in records:
        if r.field in out:
            out[r.field]["h"].append(r.h)
            out[r.field]["eL2"].append(r.eL2)
            out[r.field]["eH1"].append(r.eH1)
    return out


def plot_study(records: Sequence[ErrorRecord], path: Path | str, title: str = "") -> Path:
    """Seis paneles log-log (L² arriba, H¹ abajo) con rectas de pendiente 1 y 2."""
    path = Path(path)
    series = _series(records)
    fig, axes = plt.subplots(2, len(FIELDS), figsize=(13, 7), squeeze=False)

    for col, field in enumerate(FIELDS):
        data = series[field]
        h = np.array(data["h"])
        for row, norm in enumerate(("eL2", "eH1")):
            ax = axes[row][col]
            err = np.array(data[norm])
            positive = err > 0
            if positive.any():
                ax.loglog(h[positive], err[positive], "o-", linewidth=1.5, markersize=5,
                          label=f"{FIELD_LABELS[field]} {'$L^2$' if norm == 'eL2' else '$H^1$'}")
                h0, e0 = h[positive][0], err[positive][0]
                h_ref = np.array([h.max(), h.min()])
                for slope, style in ((1, "k-."), (2, "k:")):
                    ax.loglog(h_ref, e0 * (h_ref / h0) ** slope, style, linewidth=0.8,
                              label=f"pendiente {slope}")
                ax.legend(fontsize=7, loc="lower right")
            ax.set_xlabel("$h$")
            ax.set_ylabel("error")
            ax.grid(True, alpha=0.3, which="both")
            ax.set_title(f"{FIELD_LABELS[field]}, {'L²' if norm == 'eL2' else 'H¹'}", fontsize=10)

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.info("Gráfico de convergencia escrito en %s", path)
    return path


def plot_mesh(mesh: PolygonalMesh, path: Path | str, title: str = "") -> Path:
    path = Path(path)
    polygons = [mesh.element_vertices(e) for e in range(mesh.n_elements)]
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.add_collection(PolyCollection(polygons, facecolors="none", edgecolors="k", linewidths=0.6))
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_aspect("equal")
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=SVG_METADATA, bbox_inches="tight")
    plt.close(fig)
    logger.info("Malla dibujada en %s", path)
    return path
