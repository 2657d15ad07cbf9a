import os

import numpy as np
import pytest

from aggupwind import cli, experiments as ex
from aggupwind.grid import Atoms

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")

BASE = """
dimension = 1
domain.1 = -0.5, 0.5
n_cells = 100
cfl_ratio = 0.45
t_final = 0.1
potential.kind = quad_linear
initial.kind = atoms
initial.positions = -0.25; 0.25
initial.masses = 0.5, 0.5
scheme = upwind
reference = two_dirac_quadlinear
"""


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def cfg_from(text):
    return ex.ExperimentConfig.from_dict(ex.parse_config_text(text))


def test_parse_base_config():
    cfg = cfg_from(BASE)
    assert cfg.dimension == 1 and cfg.n_cells == [100] and cfg.cfl_ratio == 0.45
    assert isinstance(cfg.datum, Atoms) and cfg.datum.masses == (0.5, 0.5)
    assert cfg.potential.kind == "quad_linear"


@pytest.mark.parametrize("edit,field", [
    ("cfl_ratio = 0.5", "cfl_ratio"),
    ("potential.kind = nope", "potential"),
    ("scheme = magic", "scheme"),
    ("initial.kind = smoke", "initial.kind"),
    ("reference = exact", "reference"),
    ("n_cells = 0", "n_cells"),
    ("output.picture = x.png", "output.picture"),
])
def test_invalid_configs_name_the_field(edit, field):
    key = edit.split("=")[0].strip()
    lines = [l for l in BASE.splitlines() if not l.startswith(key + " ")] + [edit]
    with pytest.raises(ex.ConfigError, match=field.replace(".", r"\.")):
        cfg_from("\n".join(lines))


def test_explicit_dt_violating_cfl_is_rejected():
    cfg = cfg_from(BASE.replace("cfl_ratio = 0.45", "dt = 0.01"))
    g = cfg.grid()
    from aggupwind.grid import discretize
    with pytest.raises(ex.ConfigError, match="dt"):
        cfg.time_step(g, discretize(cfg.datum, g))


def test_t_final_zero_gives_single_row(tmp_path):
    text = BASE.replace("t_final = 0.1", "t_final = 0").replace("reference = two_dirac_quadlinear", "reference = none")
    rec = ex.run_experiment(ex.load_config(write(tmp_path, text)))
    assert len(rec.rows) == 1 and rec.rows[0]["n"] == 0


def test_outputs_are_written_and_deterministic(tmp_path):
    text = BASE + ("output.run_csv = out/run.csv\noutput.error_csv = out/err.csv\n"
                   "output.field_dump = out/field_{n}.csv\noutput.field_dump.times = 0, 0.05\n")
    path = write(tmp_path, text)
    rec = ex.run_experiment(ex.load_config(path))
    first = {f: (tmp_path / "out" / f).read_bytes() for f in os.listdir(tmp_path / "out")}
    n_dump = round(0.05 / rec.dt)
    assert set(first) == {"run.csv", "err.csv", "field_0.csv", f"field_{n_dump}.csv", "field.gp"}
    assert rec.error.e_max > 0
    err_lines = first["err.csv"].decode().splitlines()
    assert err_lines[0].startswith("# ") and "n,t,e_w2,e_w1" in err_lines
    assert b"\r" not in first["run.csv"]
    ex.run_experiment(ex.load_config(path))
    second = {f: (tmp_path / "out" / f).read_bytes() for f in os.listdir(tmp_path / "out")}
    assert first == second


def test_sticky_reference_matches_closed_form(tmp_path):
    text = BASE.replace("reference = two_dirac_quadlinear", "reference = sticky\nreference.dt_fine = 1e-5")
    rec = ex.run_experiment(ex.load_config(write(tmp_path, text + "output.particles_csv = p.csv\n")))
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "t,k,x1,mass" and len(rows) == 1 + 2 * len(rec.rows)
    exact = ex.run_experiment(ex.load_config(write(tmp_path, BASE, "b.cfg")))
    np.testing.assert_allclose(rec.error.e, exact.error.e, atol=2e-4)


def test_study_with_synthetic_errors(tmp_path):
    cfg = ex.load_config(write(tmp_path, BASE + "output.rate_csv = rate.csv\n"))
    levels = [50, 100, 200, 400]
    errors = {n: (0.3 * (1.0 / n) ** 0.5, 0.2 * (1.0 / n) ** 0.5) for n in levels}
    res = ex.convergence_study(cfg, levels, errors=errors)
    assert abs(res.fit.slope - 0.5) <= 1e-12
    lines = (tmp_path / "rate.csv").read_text().splitlines()
    assert "n_cells,dx,dt,e_max_w2,e_max_w1,slope_running" in lines
    assert len([l for l in lines if not l.startswith("#")]) == 5


def test_study_newtonian_before_collapse():
    # point masses under |x| behave like shocks and converge at first order
    cfg = ex.load_config(os.path.join(CONFIGS, "two_dirac_newtonian.cfg"))
    cfg.t_final = 0.3
    res = ex.convergence_study(cfg, [50, 100, 200, 400, 800])
    assert res.fit.slope >= 0.4
    assert 0.9 <= res.fit.slope <= 1.3


def test_study_needs_three_levels():
    with pytest.raises(ex.ConfigError):
        ex.convergence_study(cfg_from(BASE), [50, 100])


def test_every_shipped_config_parses():
    names = sorted(f for f in os.listdir(CONFIGS) if f.endswith(".cfg"))
    assert len(names) >= 8
    for name in names:
        ex.load_config(os.path.join(CONFIGS, name))


def test_cli_run_and_exit_codes(tmp_path, capsys):
    assert cli.main(["run", write(tmp_path, BASE)]) == 0
    assert "e_max_w2=" in capsys.readouterr().out
    assert cli.main(["run", write(tmp_path, BASE.replace("n_cells = 100", "n_cells = x"), "bad.cfg")]) == 2
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == 2
    runtime = """
dimension = 2
domain.1 = 0, 1
domain.2 = 0, 1
n_cells = 6
dt = 0.15
t_final = 1
potential.kind = quadratic_radial
potential.mu = 4
initial.kind = atoms
initial.positions = 0.1, 0.1; 0.9, 0.9
scheme = simplicial
"""
    assert cli.main(["run", write(tmp_path, runtime, "rt.cfg")]) == 3


def test_cli_counterexample(capsys):
    assert cli.main(["counterexample", "--p", "0.75", "--dts", "1e-3,5e-4,2.5e-4"]) == 0
    out = capsys.readouterr().out
    assert "closed_form=0.11649756441" in out


def test_cli_burgers_check(capsys):
    assert cli.main(["burgers-check", os.path.join(CONFIGS, "burgers.cfg"), "--steps", "50"]) == 0
    assert "max_abs_diff=" in capsys.readouterr().out


def test_cli_validate_mesh(tmp_path, capsys):
    from aggupwind.simplicial import structured_mesh, write_mesh
    good = tmp_path / "good.txt"
    write_mesh(structured_mesh(((0, 1), (0, 1)), (3, 3)), good)
    assert cli.main(["validate-mesh", str(good)]) == 0
    bad = tmp_path / "bad.txt"
    bad.write_text("v 0 0\nv 2 0\nv 0 2\nv 1 0\nv 2 2\nt 0 3 2\nt 0 1 4\n")
    assert cli.main(["validate-mesh", str(bad)]) == 2
    assert "open edge" in capsys.readouterr().out


def test_cli_study(tmp_path, capsys):
    path = write(tmp_path, BASE)
    assert cli.main(["study", path, "--levels", "20,40,80"]) == 0
    assert "slope=" in capsys.readouterr().out
