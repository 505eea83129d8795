import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

from app.core.constants import STUDY_COLUMNS
from app.core.exceptions import ProjectorSingularError, SourceGateError
from app.main import app
from app.schemas.study_schema import StudyConfig
from app.schemas.system_schema import PNPState
from app.services import study_service
from app.services.assembly_service import build_discrete_space
from app.services.manufactured_service import ManufacturedCase, dof_interpolate
from app.services.mesh_service import generate_structured
from app.services.study_service import (
    compute_errors, make_mesh, observed_order, run_study, summarize, time_step_for,
)
from tests.test_manufactured import ShiftedSourceCase

runner = CliRunner()


class LinearCase(ManufacturedCase):
    """Los tres campos valen 1 + x − 2y."""

    def value(self, field, t, x, y):
        return 1.0 + np.asarray(x) - 2.0 * np.asarray(y)

    def gradient(self, field, t, x, y):
        ones = np.ones_like(np.asarray(x, dtype=float))
        return ones, -2.0 * ones


def _quick_config(tmp_path, **overrides):
    values = dict(mesh_kind="square", levels=[2, 4], k=1, T=0.1, tau_rule=0.05, out_dir=tmp_path, timings=False)
    values.update(overrides)
    return StudyConfig(**values)


# ───────────────────────── piezas ─────────────────────────
def test_observed_order():
    assert observed_order(0.04, 0.01, 0.2, 0.1) == pytest.approx(2.0)
    assert observed_order(0.0, 0.01, 0.2, 0.1) is None
    assert observed_order(0.04, 0.0, 0.2, 0.1) is None
    assert observed_order(0.04, 0.01, 0.1, 0.1) is None


@pytest.mark.parametrize(("rule", "h", "expected"), [
    ("h2", 0.1, 0.01),
    ("h2", 0.3, 1.0 / 11.0),
    (0.3, 0.1, 1.0 / 3.0),
    (5.0, 0.1, 1.0),
])
def test_time_step_for(tmp_path, rule, h, expected):
    config = StudyConfig(levels=[1, 2], tau_rule=rule, out_dir=tmp_path)
    assert time_step_for(config, h) == pytest.approx(expected)


def test_make_mesh_levels():
    assert make_mesh("square", 3).n_elements == 9
    assert make_mesh("voronoi", 3, rng_seed=7).n_elements == 9
    assert make_mesh("voronoi-smooth", 2, rng_seed=7).n_elements == 4
    with pytest.raises(ValueError):
        make_mesh("hexagon", 3)


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        StudyConfig(levels=[4], out_dir=tmp_path)
    with pytest.raises(ValueError):
        StudyConfig(k=3, out_dir=tmp_path)
    with pytest.raises(ValueError):
        StudyConfig(mesh_kind="hexagon", out_dir=tmp_path)
    with pytest.raises(ValueError):
        StudyConfig(tau_rule=-0.1, out_dir=tmp_path)


# ───────────────────────── normas de error ─────────────────────────
@pytest.mark.parametrize("k", [1, 2])
def test_errors_vanish_for_fields_in_the_space(k):
    space = build_discrete_space(make_mesh("voronoi", 3, rng_seed=7), k)
    case = LinearCase()
    u = dof_interpolate(space, case.field("phi"), 0.0)
    errors = compute_errors(space, PNPState(phi=u, p=(u, u)), case, 0.0)
    for e in errors.values():
        assert e.eL2 < 1e-12
        assert e.eH1 < 1e-10


def test_zero_state_errors_are_the_exact_norms():
    space = build_discrete_space(generate_structured("square", 16), 1)
    zero = np.zeros(space.n_dofs)
    errors = compute_errors(space, PNPState(phi=zero, p=(zero, zero)), ManufacturedCase(), 1.0)
    assert errors["p2"].eL2 == pytest.approx(abs(np.sin(2.0)) / 2.0, rel=2e-3)
    assert errors["p2"].eH1 == pytest.approx(abs(np.sin(2.0)) * 3.0 * np.pi / np.sqrt(2.0), rel=2e-3)

    relative = compute_errors(space, PNPState(phi=zero, p=(zero, zero)), ManufacturedCase(), 1.0, relative=True)
    for e in relative.values():
        assert e.eL2 == pytest.approx(1.0)
        assert e.eH1 == pytest.approx(1.0)


# ───────────────────────── estudio completo ─────────────────────────
def test_quick_study_writes_outputs(tmp_path):
    result = run_study(_quick_config(tmp_path))
    assert result.completed
    assert result.csv_path == tmp_path / "study.csv"
    assert result.plot_path.exists()
    assert (tmp_path / "steps_square_2.csv").exists()
    assert (tmp_path / "steps_square_4.csv").exists()
    _assert_gummel_logs(tmp_path, "square", [2, 4])

    frame = pd.read_csv(result.csv_path)
    assert list(frame.columns) == STUDY_COLUMNS
    assert len(frame) == 6
    assert frame.loc[frame["level"] == 2, "order_L2"].isna().all()
    assert frame.loc[frame["level"] == 4, "order_L2"].notna().all()
    assert frame["seconds"].isna().all()
    assert "seconds" not in summarize(result.records).columns


def test_study_outputs_are_reproducible(tmp_path):
    first = run_study(_quick_config(tmp_path / "a"))
    second = run_study(_quick_config(tmp_path / "b"))
    assert first.csv_path.read_bytes() == second.csv_path.read_bytes()
    assert first.plot_path.read_bytes() == second.plot_path.read_bytes()


def test_failed_level_is_recorded_and_study_continues(tmp_path, monkeypatch):
    original = study_service.run_level

    def flaky(config, level, case):
        if level == 4:
            raise ProjectorSingularError("elemento degenerado")
        return original(config, level, case)

    monkeypatch.setattr(study_service, "run_level", flaky)
    result = run_study(_quick_config(tmp_path, levels=[2, 4, 3]))
    assert not result.completed
    assert [(f.level, f.stage) for f in result.failures] == [(4, "ProjectorSingularError")]
    assert sorted({r.level for r in result.records}) == [2, 3]


def test_wrong_sources_stop_the_study(tmp_path):
    with pytest.raises(SourceGateError):
        run_study(_quick_config(tmp_path), case=ShiftedSourceCase())
    assert not (tmp_path / "study.csv").exists()


# ───────────────────────── línea de comandos ─────────────────────────
def test_cli_study(tmp_path):
    result = runner.invoke(app, [
        "study", "--mesh", "square", "--levels", "2,4", "--T", "0.1", "--tau", "0.05",
        "--out", str(tmp_path), "--no-timings",
    ])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "study.csv").exists()
    assert "eL2" in result.output


@pytest.mark.parametrize("args", [
    ["--levels", "4"],
    ["--order", "3"],
    ["--mesh", "hexagon"],
])
def test_cli_study_rejects_bad_configuration(tmp_path, args):
    result = runner.invoke(app, ["study", "--out", str(tmp_path), *args])
    assert result.exit_code == 2


def test_cli_study_rejects_bad_tau(tmp_path):
    result = runner.invoke(app, ["study", "--out", str(tmp_path), "--tau", "fast"])
    assert result.exit_code == 2


def test_cli_mesh_gen_and_check(tmp_path):
    path = tmp_path / "m.mesh"
    plot = tmp_path / "m.svg"
    result = runner.invoke(app, ["mesh", "gen", "--kind", "voronoi", "--n", "3", "--out", str(path), "--plot", str(plot)])
    assert result.exit_code == 0, result.output
    assert path.exists() and plot.exists()

    checked = runner.invoke(app, ["mesh", "check", str(path)])
    assert checked.exit_code == 0
    assert "elementos: 9" in checked.output


def test_cli_mesh_check_reports_defects(tmp_path):
    bad = tmp_path / "bad.mesh"
    bad.write_text("polymesh v1 4 1\n0 0\n1 1\n1 0\n0 1\n4 0 1 2 3\n")
    assert runner.invoke(app, ["mesh", "check", str(bad)]).exit_code == 1

    broken = tmp_path / "broken.mesh"
    broken.write_text("polymesh v1 4 1\n0 0\n")
    assert runner.invoke(app, ["mesh", "check", str(broken)]).exit_code == 2


def test_cli_mesh_gen_unknown_kind():
    assert runner.invoke(app, ["mesh", "gen", "--kind", "hexagon"]).exit_code == 2


# ───────────────────────── convergencia (lento) ─────────────────────────
def _assert_gummel_logs(out_dir, kind, levels):
    """Cada paso converge en ≤ 20 iteraciones con residuos relativos ≤ 1e−8."""
    for level in levels:
        frame = pd.read_csv(out_dir / f"steps_{kind}_{level}.csv")
        assert len(frame) > 0
        assert (frame["gummel_iters"] <= 20).all(), (kind, level)
        residuals = frame[["poisson_residual", "np1_residual", "np2_residual"]]
        assert (residuals.max(axis=1) <= 1e-8).all(), (kind, level)


@pytest.mark.slow
def test_square_convergence_orders(tmp_path):
    result = run_study(StudyConfig(mesh_kind="square", levels=[8, 16, 32, 64], k=1, out_dir=tmp_path))
    assert result.completed
    finest = [r for r in result.records if r.level == 64]
    for r in finest:
        assert 1.7 <= r.order_L2 <= 2.3, r
        assert 0.8 <= r.order_H1 <= 1.2, r
    _assert_gummel_logs(tmp_path, "square", [8, 16, 32, 64])


@pytest.mark.slow
@pytest.mark.parametrize(("kind", "h1_bracket"), [
    ("triangle", (0.8, 1.2)),
    ("voronoi", (0.8, 1.2)),
    ("voronoi-smooth", (0.8, 1.2)),
    ("nonconvex", (0.7, 1.3)),
    ("mixed", (0.7, 1.3)),
])
def test_other_families_converge(tmp_path, kind, h1_bracket):
    result = run_study(StudyConfig(mesh_kind=kind, levels=[8, 16, 32], k=1, out_dir=tmp_path))
    assert result.completed
    for r in result.records:
        if r.level == 32:
            assert 1.7 <= r.order_L2 <= 2.3, r
            assert h1_bracket[0] <= r.order_H1 <= h1_bracket[1], r
    _assert_gummel_logs(tmp_path, kind, [8, 16, 32])
