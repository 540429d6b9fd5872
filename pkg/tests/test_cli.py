import csv
import subprocess
import sys

import numpy as np
import pytest

from ccmpath import cli
from ccmpath.chebdiff import chebgrid
from ccmpath.geodesic import static_control
from ccmpath.plant import benchmark_certificate

SHORT = """\
name: short
realizations: [forward, nominal, robust, static]
x0: [1.0, -1.0, 0.5]
horizon: 0.01
log_stride: 5
controller:
  tau_s: 0.001
disturbance:
  kind: constant
  vector: [0.5, 0.0, 0.0]
geodesic:
  x_from: [0.0, 0.0, 0.0]
  x_to: [3.0, -1.0, 2.0]
  N: 6
  metric: euclidean
verify:
  samples: 200
"""


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def read_summary(path):
    return dict(line.split(" = ", 1) for line in path.read_text().splitlines())


@pytest.fixture
def short_cfg(tmp_path):
    p = tmp_path / "short.yaml"
    p.write_text(SHORT)
    return p


class TestExitCodes:
    def test_missing_arguments(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["simulate"])
        assert info.value.code == 1

    def test_no_command(self):
        with pytest.raises(SystemExit) as info:
            cli.main([])
        assert info.value.code == 1

    def test_bad_realization(self, short_cfg):
        with pytest.raises(SystemExit) as info:
            cli.main(["simulate", "--config", str(short_cfg), "--realization", "sideways"])
        assert info.value.code == 1

    def test_missing_config(self, tmp_path, capsys):
        assert cli.main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 1
        assert "cannot read" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        p = tmp_path / "bad.yaml"
        p.write_text(SHORT + "bogus: 1\n")
        assert cli.main(["verify", "--config", str(p), "--out", str(tmp_path)]) == 1
        err = capsys.readouterr().err
        assert f"{p}:{SHORT.count(chr(10)) + 1}:" in err and "bogus" in err

    def test_verify_benchmark_fails_at_unit_rate(self, tmp_path):
        assert cli.main(["verify", "--config", "nominal_fig34", "--out", str(tmp_path)]) == 2
        s = read_summary(tmp_path / "verify" / "summary.txt")
        assert s["passed"] == "false" and int(s["violations"]) > 0

    def test_verify_passes_at_half_rate(self, tmp_path):
        p = tmp_path / "half.yaml"
        p.write_text(SHORT + "  lam: 0.5\n")
        assert cli.main(["verify", "--config", str(p), "--out", str(tmp_path)]) == 0

    def test_verify_corrupted_rate(self, tmp_path):
        p = tmp_path / "ten.yaml"
        p.write_text(SHORT + "  lam: 10.0\n")
        assert cli.main(["verify", "--config", str(p), "--out", str(tmp_path)]) == 2

    def test_module_entry_point(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "ccmpath", "verify", "--config", "nominal_fig34",
                            "--out", str(tmp_path)], capture_output=True, text=True)
        assert r.returncode == 2 and "violations=" in r.stdout


class TestSimulate:
    def test_outputs(self, short_cfg, tmp_path):
        out = tmp_path / "o"
        assert cli.main(["simulate", "--config", str(short_cfg), "--out", str(out)]) == 0
        for kind in ("forward", "nominal", "robust", "static"):
            d = out / kind
            head, rows = read_csv(d / "trajectory.csv")
            assert head == ["t", "x1", "x2", "x3", "u1", "err_norm", "xtilde_norm"]
            assert rows.shape == (11, 7)
            head, rows = read_csv(d / "energy.csv")
            assert head == ["t", "E", "geodesic_residual"] and np.all(rows[:, 1] > 0)
            head, rows = read_csv(d / "path_snapshots.csv")
            assert head == ["t", "node", "s", "x1", "x2", "x3"]
            assert rows.shape[0] == 3 * 5
            for name in ("plot_results.py", "energy.png", "trajectory.png", "paths.png"):
                assert (d / name).stat().st_size > 0
            s = read_summary(d / "summary.txt")
            assert s["realization"] == kind and s["diverged"] == "false"

    def test_single_realization_and_seed(self, short_cfg, tmp_path):
        out = tmp_path / "o"
        assert cli.main(["simulate", "--config", str(short_cfg), "--out", str(out),
                         "--realization", "nominal", "--seed", "7", "--no-figures"]) == 0
        assert [p.name for p in out.iterdir()] == ["nominal"]
        assert not (out / "nominal" / "energy.png").exists()
        assert (out / "nominal" / "plot_results.py").exists()

    def test_plot_script_runs_standalone(self, short_cfg, tmp_path):
        cli.main(["simulate", "--config", str(short_cfg), "--out", str(tmp_path),
                  "--realization", "forward", "--no-figures"])
        d = tmp_path / "forward"
        r = subprocess.run([sys.executable, str(d / "plot_results.py"), str(d)],
                           capture_output=True, text=True, env={"MPLBACKEND": "Agg", "PATH": ""})
        assert r.returncode == 0, r.stderr
        assert (d / "energy.png").exists()

    def test_output_root_env(self, short_cfg, tmp_path, monkeypatch):
        monkeypatch.setenv("CCMPATH_OUT", str(tmp_path / "root"))
        assert cli.main(["simulate", "--config", str(short_cfg), "--realization", "forward",
                         "--no-figures"]) == 0
        assert (tmp_path / "root" / "short" / "forward" / "trajectory.csv").exists()

    def test_diverged_run_exits_zero(self, tmp_path):
        cfg = tmp_path / "blow.yaml"
        cfg.write_text("name: blow\nx0: [9, 9, 9]\nhorizon: 10\nrealizations: [forward]\n"
                       "disturbance:\n  kind: constant\n  vector: [2, 0, 0]\n")
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path),
                         "--no-figures"]) == 0
        s = read_summary(tmp_path / "forward" / "summary.txt")
        assert s["diverged"] == "true" and float(s["t_final"]) < 10


class TestGeodesic:
    def test_euclidean_is_straight(self, short_cfg, tmp_path):
        assert cli.main(["geodesic", "--config", str(short_cfg), "--out", str(tmp_path)]) == 0
        head, rows = read_csv(tmp_path / "geodesic" / "geodesic.csv")
        assert head == ["node", "s", "x1", "x2", "x3"] and rows.shape == (7, 5)
        s = rows[:, 1]
        np.testing.assert_allclose(s, chebgrid(6).nodes)
        line = np.outer(0.5 * (1 + s), [3.0, -1.0, 2.0])
        np.testing.assert_allclose(rows[:, 2:], line, atol=1e-9)
        assert float(read_summary(tmp_path / "geodesic" / "summary.txt")["energy"]) == pytest.approx(14.0)

    def test_benchmark_matches_static_first_step(self, tmp_path):
        assert cli.main(["geodesic", "--config", "nominal_fig34", "--out", str(tmp_path)]) == 0
        E = float(read_summary(tmp_path / "geodesic" / "summary.txt")["energy"])
        _, sol = static_control(benchmark_certificate(), np.full(3, 9.0), np.zeros(3), [0.0])
        assert E == pytest.approx(sol.energy, rel=1e-6)
        head, trace = read_csv(tmp_path / "geodesic" / "geodesic_trace.csv")
        assert head == ["iteration", "energy", "residual"]
        assert trace[-1, 1] == pytest.approx(E)

    def test_swapped_endpoints(self, tmp_path):
        cfgs = []
        for a, b in (("[0, 0, 0]", "[9, 9, 9]"), ("[9, 9, 9]", "[0, 0, 0]")):
            p = tmp_path / f"g{len(cfgs)}.yaml"
            p.write_text(f"x0: [9, 9, 9]\ngeodesic:\n  x_from: {a}\n  x_to: {b}\n")
            out = tmp_path / f"o{len(cfgs)}"
            assert cli.main(["geodesic", "--config", str(p), "--out", str(out)]) == 0
            cfgs.append(float(read_summary(out / "geodesic" / "summary.txt")["energy"]))
        assert cfgs[0] == pytest.approx(cfgs[1], rel=1e-8)

    def test_dimension_mismatch(self, tmp_path):
        p = tmp_path / "g.yaml"
        p.write_text("x0: [1, 1]\ngeodesic:\n  x_from: [0, 0]\n  x_to: [1, 1]\n")
        assert cli.main(["geodesic", "--config", str(p), "--out", str(tmp_path)]) == 1
