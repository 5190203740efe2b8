import json
import subprocess
import sys

import numpy as np
import pytest

from robin_acoustic import cli

SIM = """
[experiment]
kind = simulate
seed = 4

[mesh]
n_cells = 20

[problem]
kind = A
eps = 0.5

[time]
T = 0.5
dt = 0.01
stride = 5
"""


def test_parse_and_hash():
    a = cli.parse_config(SIM)
    b = cli.parse_config(SIM.replace("dt = 0.01", "dt = 1e-2").replace("seed = 4", "seed=4"))
    assert a.digest() == b.digest()
    c = cli.parse_config(SIM.replace("eps = 0.5", "eps = 0.25"))
    assert c.digest() != a.digest()
    out = cli.parse_config(SIM.replace("seed = 4", "seed = 4\nout = elsewhere"))
    assert out.digest() == a.digest()


@pytest.mark.parametrize("text,needle", [
    (SIM.replace("dt = 0.01\n", ""), "[time] dt is required"),
    (SIM.replace("kind = simulate", "kind = teleport"), "kind must be one of"),
    (SIM.replace("eps = 0.5", "eps = 2"), "eps must lie in"),
    (SIM.replace("n_cells = 20", "n_cells = many"), "[mesh] n_cells: cannot parse"),
    (SIM + "\n[mesh]\nn_cells = 3\n", "section 'mesh' already exists"),
    (SIM + "\n[colour]\nx = 1\n", "unknown section [colour]"),
    (SIM.replace("stride = 5", "stride = 5\nwobble = 1"), "unknown field [time] wobble"),
    (SIM.replace("T = 0.5", "T = 0.505"), "multiple of dt"),
    (SIM + "\n[nonlinearity]\nname = quartic\n", "unknown nonlinearity"),
], ids=["no-dt", "bad-kind", "eps-range", "bad-int", "duplicate", "section", "field", "multiple",
        "nonlinearity"])
def test_config_errors(text, needle):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(text)
    assert needle in str(info.value)


def test_missing_dt_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text(SIM.replace("dt = 0.01\n", ""))
    assert cli.main(["--out", str(tmp_path / "o"), "run", str(p)]) == 1
    assert "dt is required" in capsys.readouterr().err


def test_simulate_run(tmp_path):
    p = tmp_path / "sim.ini"
    p.write_text(SIM)
    out = tmp_path / "out"
    assert cli.main(["--out", str(out), "--dump-matrices", "run", str(p)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pass"] is True and summary["kind"] == "simulate"
    assert summary["metrics"]["max_balance_residual"] <= 1e-10
    assert "generator_A.txt" in summary["files"]
    head = (out / "trajectory.csv").read_text().splitlines()[0]
    assert head == "t,E_total,E_quadratic,E_potential,E_boundary,dissipation,balance_residual,norm"
    rows = (out / "energy.dat").read_text().splitlines()
    assert rows[0] == "# t E dissipation residual"
    assert len(rows) == 1 + 11
    assert list(json.loads((out / "summary.json").read_text())) == sorted(summary)


def test_seed_override_changes_output(tmp_path):
    p = tmp_path / "sim.ini"
    p.write_text(SIM)
    cli.main(["--out", str(tmp_path / "a"), "run", str(p)])
    cli.main(["--out", str(tmp_path / "b"), "--seed", "5", "run", str(p)])
    ja = json.loads((tmp_path / "a" / "summary.json").read_text())
    jb = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert ja["config_hash"] != jb["config_hash"]
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() != (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_check_default(tmp_path):
    assert cli.main(["--out", str(tmp_path), "check"]) == 0
    rows = (tmp_path / "check.csv").read_text().splitlines()
    assert rows[0] == "check,value,threshold,pass"
    assert all(r.endswith("True") for r in rows[1:])
    names = {r.split(",")[0] for r in rows[1:]}
    assert {"energy_identity_R", "energy_identity_A", "adjoint_R", "adjoint_A",
            "poincare_excess", "project_lift_identity"} <= names


def test_threshold_failure_exit_2(tmp_path):
    # chi starts at zero and is still growing at T, so its running max cannot settle
    p = tmp_path / "dec.ini"
    p.write_text("""
[experiment]
kind = decompose
[mesh]
n_cells = 10
[problem]
kind = A
eps = 1.0
[time]
T = 0.2
dt = 0.01
fit_start = 0
""")
    assert cli.main(["--out", str(tmp_path / "o"), "run", str(p)]) == 2
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["pass"] is False and summary["error"] is None
    assert summary["metrics"]["k_running_max_end"] > summary["metrics"]["k_running_max_half"]


def test_step_failure_exit_1(tmp_path):
    p = tmp_path / "fail.ini"
    p.write_text(SIM.replace("stride = 5", "stride = 5\n[solver]\nmax_iter = 1\ntol = 1e-300"))
    assert cli.main(["--out", str(tmp_path / "o"), "run", str(p)]) == 1
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["error"].startswith("step failure")


def test_emit_plot_styles(tmp_path, mesh32):
    from robin_acoustic import dynamics as dyn
    from robin_acoustic.integrate import random_state_R
    from robin_acoustic.model import Problem, builtin
    n = mesh32.n_nodes
    phi = random_state_R(mesh32, np.random.default_rng(0))
    g = dyn.trajectory_gap(phi.u, phi.v, np.zeros(2), np.zeros(2), 0.1, 0.1, 0.01, mesh32, builtin("cubic"))
    p = cli.emit_plot_data(g, "gap", tmp_path / "gap.dat")
    lines = p.read_text().splitlines()
    assert lines[0] == "# t gap_Heps gap_H0" and len(lines) == 12
    c = dyn.Cloud([phi, phi], Problem("R"), 0.0, 1)
    lines = cli.emit_plot_data(c, "cloud", tmp_path / "c.dat", mesh32).read_text().splitlines()
    assert lines[0] == "# norm u_mid v_mid" and len(lines) == 3
    assert float(lines[1].split()[1]) == phi.u[n // 2]
    with pytest.raises(ValueError):
        cli.emit_plot_data(c, "scatter", tmp_path / "x.dat")


def test_csv_quoting(tmp_path):
    p = cli.write_csv(tmp_path / "q.csv", ["a", "b"], [("x,y", 1.5), ('say "hi"', 2)])
    assert p.read_bytes() == b'a,b\r\n"x,y",1.5\r\n"say ""hi""",2\r\n'


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "robin_acoustic", "--out", str(tmp_path), "check"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "check: PASS" in r.stdout


@pytest.mark.parametrize("fmt", ["csv", "npy"])
def test_snapshots(tmp_path, fmt):
    p = tmp_path / "sim.ini"
    p.write_text(SIM + f"\n[output]\nsnapshots = {fmt}\n")
    out = tmp_path / "out"
    assert cli.main(["--out", str(out), "run", str(p)]) == 0
    if fmt == "npy":
        arr = np.load(out / "states.npy")
    else:
        arr = np.loadtxt(out / "states.csv", delimiter=",", skiprows=1)
    # 11 samples; t plus u, v on 21 nodes and delta, gamma on 2 ends
    assert arr.shape == (11, 1 + 2 * 21 + 4)
    np.testing.assert_allclose(arr[:, 0], np.linspace(0, 0.5, 11))
