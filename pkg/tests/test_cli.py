import json
import subprocess
import sys

import numpy as np
import pytest

from adiaspeed.cli import main
from adiaspeed.hamiltonians import landau_zener, save
from adiaspeed.scheduler import load_points


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def summary(tmp_path):
    return json.loads((tmp_path / "summary.json").read_text())


def test_schedule_build(tmp_path):
    assert run(tmp_path, "schedule", "build", "--system", "grover", "--n", "8") == 0
    pts = load_points(tmp_path / "points.csv")
    assert pts.s[-1] == 1.0 and pts.segments == 8
    s = summary(tmp_path)
    assert s["T_p"] == 0.0 and s["total_samples"] == 0 and s["segments"] == 8


def test_evolve_points_schedule(tmp_path):
    run(tmp_path, "schedule", "build", "--system", "landau-zener", "--delta", "0.1")
    out = tmp_path / "evolve"
    assert main(["evolve", "--system", "landau-zener", "--delta", "0.1", "--schedule", str(tmp_path / "points.csv"), "--out", str(out)]) == 0
    s = summary(out)
    assert s["fidelity"] >= 0.75 and s["T"] > 0


def test_evolve_fixed_time(tmp_path):
    assert run(tmp_path, "evolve", "--system", "grover", "--n", "2", "--schedule", "linear", "--time", "500") == 0
    assert summary(tmp_path)["fidelity"] >= 0.999


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"system": "landau-zener", "delta": 0.2, "schedule": "css", "target-fidelity": 0.9}))
    assert run(tmp_path, "evolve", "--config", str(cfg)) == 0
    first = summary(tmp_path)
    assert first["system"] == "landau-zener delta=0.2"
    assert run(tmp_path, "evolve", "--config", str(cfg), "--target-fidelity", "0.75") == 0
    assert summary(tmp_path)["T"] < first["T"]


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(SystemExit):
        run(tmp_path, "evolve", "--config", str(cfg))


def test_sweep_synthetic(tmp_path):
    assert run(tmp_path, "sweep", "synthetic", "--deltas", "0.2", "0.1", "0.05") == 0
    s = summary(tmp_path)
    assert s["fits"]["linear"]["slope"] < -1.7 and -1.3 < s["fits"]["css"]["slope"] < -0.7
    assert (tmp_path / "sweep_synthetic.csv").exists()


def test_sweep_grover_full(tmp_path):
    assert run(tmp_path, "sweep", "grover", "--exponents", "3", "4", "--schedules", "linear", "--full") == 0
    assert "grover-full:linear" in summary(tmp_path)["fits"]


def test_curve(tmp_path):
    assert run(tmp_path, "curve", "--system", "grover", "--n", "6", "--schedule", "optimal", "--times", "1", "10", "100") == 0
    rows = np.loadtxt(tmp_path / "curve.csv", delimiter=",", skiprows=1)
    assert rows.shape == (3, 2) and np.all((rows[:, 1] >= 0) & (rows[:, 1] <= 1))


def test_geometry_file_system(tmp_path):
    save(landau_zener(1.0), tmp_path / "lz.ham")
    assert run(tmp_path, "geometry", "--system", "file", "--hamiltonian", str(tmp_path / "lz.ham")) == 0
    s = summary(tmp_path)
    assert s["path_length"] == pytest.approx(np.pi / 4, rel=1e-4)
    assert s["segments_estimate"] == pytest.approx(3.927, abs=1e-3)
    assert s["c_constant_speed"] < s["c_linear"]
    assert (tmp_path / "path.csv").read_text().startswith("s,energy,gap,excited_energy")


def test_bad_hamiltonian_file(tmp_path, capsys):
    (tmp_path / "bad.ham").write_text("not a hamiltonian\n")
    assert run(tmp_path, "geometry", "--system", "file", "--hamiltonian", str(tmp_path / "bad.ham")) == 2
    assert "line 1" in capsys.readouterr().err


def test_optimal_needs_grover(tmp_path):
    with pytest.raises(SystemExit):
        run(tmp_path, "evolve", "--system", "landau-zener", "--schedule", "optimal")


def test_certify_small(tmp_path):
    assert run(tmp_path, "certify", "--trials", "5", "--repetitions", "20", "--samples", "2000") == 0
    assert summary(tmp_path)["energy_error"]["passed"] == 5


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "adiaspeed", "--help"], capture_output=True, text=True, check=True)
    for cmd in ("schedule", "evolve", "sweep", "curve", "geometry", "certify"):
        assert cmd in out.stdout
