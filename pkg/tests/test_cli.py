import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from safestab import build_scenario, read_trajectory_csv
from safestab.cli import main
from safestab.verify import run_checks


def test_simulate_writes_csv_and_metrics(tmp_path):
    rc = main(["simulate", "--scenario", "linear2d", "--controller", "hybrid",
               "--t-final", "1.0", "--out", str(tmp_path)])
    assert rc == 0
    traj = read_trajectory_csv(tmp_path / "linear2d_hybrid_traj.csv")
    assert traj.n_samples == 1001
    summary = json.loads((tmp_path / "linear2d_hybrid_metrics.json").read_text())
    assert summary["status"] == "ok"
    assert summary["metrics"]["min_h"] > 0.0


def test_simulate_tumor_keeps_barriers_positive(tmp_path):
    rc = main(["simulate", "--scenario", "tumor3d", "--controller", "hybrid",
               "--gamma", "1", "--t-final", "6.0", "--x0", "9.0,5.0,2.0",
               "--record-every", "10", "--out", str(tmp_path)])
    assert rc == 0
    traj = read_trajectory_csv(tmp_path / "tumor3d_hybrid_traj.csv")
    assert traj.h_values.min() >= 0.0


def test_simulate_missing_scenario_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--controller", "hybrid"])
    assert exc.value.code == 2


def test_simulate_unknown_scenario_exits_2(tmp_path):
    rc = main(["simulate", "--scenario", "does-not-exist", "--out", str(tmp_path)])
    assert rc == 2


def test_simulate_bad_x0_exits_2(tmp_path):
    rc = main(["simulate", "--scenario", "linear2d", "--x0", "4.0,4.0",
               "--t-final", "1.0", "--out", str(tmp_path)])
    assert rc == 2


def test_sweep_single_value_exits_2(tmp_path):
    rc = main(["sweep", "--scenario", "linear2d", "--param", "gamma",
               "--values", "1.0", "--out", str(tmp_path)])
    assert rc == 2


def test_sweep_writes_table_and_cell_csvs(tmp_path):
    rc = main(["sweep", "--scenario", "linear2d", "--controller", "hybrid",
               "--param", "gamma", "--values", "0.5,2.0", "--t-final", "2.0",
               "--record-every", "5", "--out", str(tmp_path)])
    assert rc == 0
    table = tmp_path / "linear2d_hybrid_gamma_sweep.csv"
    with open(table) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["gamma"] for r in rows] == ["0.5", "2.0"]
    for r in rows:
        assert (tmp_path / r["csv"]).exists()
        assert r["status"] == "ok"


def test_sweep_gamma_speeds_up_tumor_convergence(tmp_path):
    # rate gain ordering on the stable range: convergence time strictly
    # decreasing in gamma (gamma > 1 destabilizes the sampled loop at this
    # dt: the rate-tuned formula loses boundedness near the b = 0 surface)
    rc = main(["sweep", "--scenario", "tumor3d", "--controller", "hybrid",
               "--param", "gamma", "--values", "0.25,0.5,0.75,1.0",
               "--t-final", "40.0", "--x0", "9.0,5.0,2.0",
               "--record-every", "20", "--out", str(tmp_path)])
    assert rc == 0
    with open(tmp_path / "tumor3d_hybrid_gamma_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    convs = [float(r["convergence_time"]) for r in rows]
    assert all(r["status"] == "ok" for r in rows)
    assert all(a > b for a, b in zip(convs, convs[1:])), convs


def test_sweep_p_input_tv_trendline(tmp_path):
    # from a start whose runs all converge, input oscillation trends upward
    # with the slack weight (log-log regression slope >= 0)
    rc = main(["sweep", "--scenario", "linear2d", "--controller", "clf-cbf-qp",
               "--param", "p", "--values", "1,10,100,1000", "--t-final", "10.0",
               "--x0", "1.7,-1.7", "--record-every", "10", "--out", str(tmp_path)])
    assert rc == 0
    with open(tmp_path / "linear2d_clf-cbf-qp_p_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    ps = np.array([float(r["p"]) for r in rows])
    tvs = np.array([float(r["input_tv"]) for r in rows])
    slope = np.polyfit(np.log(ps), np.log(tvs), 1)[0]
    assert slope >= 0.0, tvs.tolist()


def test_sweep_thread_cap_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SAFESTAB_THREADS", "1")
    rc = main(["sweep", "--scenario", "linear2d", "--controller", "sontag",
               "--param", "gamma", "--values", "1.0,2.0", "--t-final", "0.5",
               "--x0", "0.5,-0.4", "--out", str(tmp_path)])
    assert rc == 0


def test_doa_reports_c_star(tmp_path, capsys):
    rc = main(["doa", "--scenario", "linear2d", "--grid", "21,21",
               "--c-lo", "0.5", "--c-hi", "60.0", "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "c* =" in out
    report = json.loads((tmp_path / "linear2d_doa.json").read_text())
    assert report["c_star"] > report["c_trivial"]
    with open(tmp_path / "linear2d_awc_boundary.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x_1", "x_2"]
    assert len(rows) > 100


def test_verify_passes_for_bundled_scenarios(capsys):
    for name in ("linear2d", "tumor3d"):
        rc = main(["verify", "--scenario", name, "--seed", "0"])
        out = capsys.readouterr().out
        assert rc == 0, out
        assert "FAIL" not in out


def test_verify_detects_corrupted_clf_matrix(linear):
    bundle = build_scenario("linear2d")
    bundle.clf.P = np.array([[3.4142, -2.4142], [-2.0, 2.4142]])  # injected fault
    results = run_checks(bundle, seed=0)
    failed = {r.name for r in results if not r.passed}
    assert "clf_matrix" in failed


def test_verify_corrupted_scenario_file_nonzero_exit(tmp_path):
    bad = {
        "name": "bad",
        "dynamics": {"kind": "linear2d", "params": {}},
        "equilibrium": {"x": [0.0, 0.0], "u": [0.0]},
        "clf": {"P": [[3.4142, -2.4142], [-2.0, 2.4142]]},
        "barriers": [{"kind": "quadratic", "offset": 1.0,
                      "quad": [[-0.1, -0.075], [-0.075, -0.1]],
                      "alpha": {"lambda": 1.0}}],
        "domain": [[-5, 5], [-5, 5]],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    rc = main(["verify", "--scenario", str(path)])
    assert rc != 0


def test_plot_emits_script(tmp_path):
    assert main(["simulate", "--scenario", "linear2d", "--t-final", "1.0",
                 "--record-every", "10", "--out", str(tmp_path)]) == 0
    rc = main(["plot", str(tmp_path / "linear2d_hybrid_traj.csv"),
               "--scenario", "linear2d", "--out", str(tmp_path)])
    assert rc == 0
    script = (tmp_path / "plot_linear2d.py").read_text()
    assert "matplotlib" in script
    assert "BOUNDARY" in script
    compile(script, "plot_linear2d.py", "exec")  # emitted script parses


def test_plot_empty_csv_exits_1(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    rc = main(["plot", str(empty), "--scenario", "linear2d", "--out", str(tmp_path)])
    assert rc == 1


def test_plot_schema_mismatch_exits_1(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    rc = main(["plot", str(bad), "--scenario", "linear2d", "--out", str(tmp_path)])
    assert rc == 1


def test_determinism_same_manifest_identical_csv(tmp_path):
    for sub in ("one", "two"):
        rc = main(["simulate", "--scenario", "tumor3d", "--t-final", "1.0",
                   "--seed", "3", "--out", str(tmp_path / sub)])
        assert rc == 0
    a = (tmp_path / "one" / "tumor3d_hybrid_traj.csv").read_bytes()
    b = (tmp_path / "two" / "tumor3d_hybrid_traj.csv").read_bytes()
    assert a == b


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "safestab.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "safestab" in proc.stdout
