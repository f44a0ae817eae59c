import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from factorbreak.cli import main, parse_matrix, read_panel_csv
from factorbreak.errors import ParameterError


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def panel_300(tmp_path_factory):
    path = tmp_path_factory.mktemp("sim") / "p300.csv"
    assert main(["simulate", "--n", "300", "--t", "300", "--seed", "7", "--out", str(path)]) == 0
    return path


class TestSimulate:
    def test_line_count_and_header(self, tmp_path, capsys):
        out = tmp_path / "small.csv"
        code, _, _ = run(["simulate", "--n", 3, "--t", 4, "--out", out], capsys)
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 5
        assert lines[0] == "series_1,series_2,series_3"

    def test_round_trip_exact(self, tmp_path, capsys):
        from factorbreak.dgp import DgpConfig, gen_panel

        out = tmp_path / "rt.csv"
        run(["simulate", "--n", 20, "--t", 30, "--scenario", "1B", "--seed", 5, "--out", out], capsys)
        x = read_panel_csv(out)
        expected = gen_panel(DgpConfig(20, 30, scenario="1B", seed=5)).panel.values
        assert np.array_equal(x, expected)

    def test_byte_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            run(["simulate", "--n", 10, "--t", 12, "--seed", 3, "--out", p], capsys)
        assert a.read_bytes() == b.read_bytes()

    def test_sidecar(self, tmp_path, capsys):
        out = tmp_path / "d.csv"
        run(["simulate", "--n", 10, "--t", 20, "--scenario", "1D", "--seed", 9, "--out", out], capsys)
        truth = json.loads((tmp_path / "d.truth.json").read_text())
        assert truth["k0"] == 10 and truth["r_pseudo"] == 5
        assert truth["seed"] == 9 and truth["scenario"] == "1D"

    def test_env_seed_and_flag_precedence(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("FACTORBREAK_SEED", "42")
        env, flag, other = tmp_path / "e.csv", tmp_path / "f.csv", tmp_path / "o.csv"
        run(["simulate", "--n", 5, "--t", 6, "--out", env], capsys)
        run(["simulate", "--n", 5, "--t", 6, "--seed", 42, "--out", flag], capsys)
        run(["simulate", "--n", 5, "--t", 6, "--seed", 1, "--out", other], capsys)
        assert env.read_bytes() == flag.read_bytes() != other.read_bytes()
        assert json.loads((tmp_path / "o.truth.json").read_text())["seed"] == 1

    def test_bad_env_seed(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("FACTORBREAK_SEED", "abc")
        code, _, err = run(["simulate", "--n", 5, "--t", 6, "--out", tmp_path / "x.csv"], capsys)
        assert code == 2 and "FACTORBREAK_SEED" in err

    def test_invalid_config(self, tmp_path, capsys):
        code, _, err = run(["simulate", "--n", 5, "--t", 6, "--rho", 1.2, "--out", tmp_path / "x.csv"], capsys)
        assert code == 2 and "rho" in err

    def test_unwritable(self, tmp_path, capsys):
        target = tmp_path / "missing_dir" / "x.csv"
        code, _, err = run(["simulate", "--n", 5, "--t", 6, "--out", target], capsys)
        assert code == 3 and str(target) in err


class TestEstimate:
    def test_recovers_break(self, panel_300, capsys):
        code, out, _ = run(["estimate", panel_300, "--r", 3], capsys)
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "method,r,k_hat,objective,floor_activations"
        k_hat = int(lines[1].split(",")[2])
        k0 = json.loads(panel_300.with_suffix(".truth.json").read_text())["k0"]
        assert abs(k_hat - k0) <= 3

    def test_both_methods(self, panel_300, capsys):
        code, out, _ = run(["estimate", panel_300, "--method", "both"], capsys)
        rows = out.strip().splitlines()[1:]
        assert code == 0 and [r.split(",")[0] for r in rows] == ["qml", "ls"]

    def test_curve_files(self, panel_300, tmp_path, capsys):
        single = tmp_path / "curve.csv"
        run(["estimate", panel_300, "--out", single], capsys)
        with open(single) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["k", "U"]
        assert int(rows[1][0]) == 45 and int(rows[-1][0]) == 255

        sweep = tmp_path / "sweep.csv"
        code, out, _ = run(["estimate", panel_300, "--r", 2, "--r", 3, "--method", "both", "--out", sweep], capsys)
        assert code == 0 and len(out.strip().splitlines()) == 5
        for name in ("sweep_qml_r2.csv", "sweep_ls_r2.csv", "sweep_qml_r3.csv", "sweep_ls_r3.csv"):
            assert (tmp_path / name).is_file()

    def test_auto_r(self, panel_300, capsys):
        code, out, _ = run(["estimate", panel_300, "--auto-r"], capsys)
        assert code == 0
        assert "selected r=3" in out

    def test_r_too_large(self, tmp_path, capsys):
        p = tmp_path / "s.csv"
        run(["simulate", "--n", 5, "--t", 20, "--out", p], capsys)
        code, _, err = run(["estimate", p, "--r", 9], capsys)
        assert code == 2
        assert "min(T, N)" in err

    def test_malformed_csv(self, tmp_path, capsys):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1,2\n3,4\n5,x\n6,7\n")
        code, _, err = run(["estimate", p, "--r", 1], capsys)
        assert code == 2 and "line 4" in err
        p.write_text("a,b\n1,2\n3\n")
        code, _, err = run(["estimate", p, "--r", 1], capsys)
        assert code == 2 and "line 3" in err

    def test_infeasible_window(self, tmp_path, capsys):
        p = tmp_path / "s.csv"
        run(["simulate", "--n", 6, "--t", 8, "--out", p], capsys)
        code, _, err = run(["estimate", p, "--r", 1, "--tau1", 0.1, "--tau2", 0.2], capsys)
        assert code == 2 and "window" in err.lower()

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["estimate", tmp_path / "nope.csv"], capsys)
        assert code == 3 and "nope.csv" in err

    def test_transpose(self, panel_300, tmp_path, capsys):
        x = read_panel_csv(panel_300)
        p = tmp_path / "t.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"t{i}" for i in range(x.shape[0])])
            w.writerows([[repr(v) for v in row] for row in x.T.tolist()])
        _, a, _ = run(["estimate", panel_300], capsys)
        _, b, _ = run(["estimate", p, "--transpose"], capsys)
        assert a == b


class TestIc:
    def test_noiseless_rank(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((40, 3)) @ rng.standard_normal((3, 30))
        p = tmp_path / "r3.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"s{i}" for i in range(30)])
            w.writerows([[repr(v) for v in row] for row in x.tolist()])
        code, out, _ = run(["ic", p, "--rmax", 6], capsys)
        assert code == 0
        assert out.splitlines()[0] == "r_hat=3 criterion=IC1"
        assert len(out.strip().splitlines()) == 2 + 6

    def test_simulated(self, panel_300, tmp_path, capsys):
        curve = tmp_path / "ic.csv"
        code, out, _ = run(["ic", panel_300, "--ic", 2, "--out", curve], capsys)
        assert code == 0 and out.startswith("r_hat=3 criterion=IC2")
        assert curve.read_text().startswith("r,criterion,V\n")

    def test_bad_rmax(self, panel_300, capsys):
        code, _, err = run(["ic", panel_300, "--rmax", 0], capsys)
        assert code == 2 and "r_max" in err


class TestExperiment:
    def spec(self, tmp_path, data):
        p = tmp_path / "spec.json"
        p.write_text(json.dumps(data))
        return p

    def test_minimal(self, tmp_path, capsys):
        spec = self.spec(tmp_path, {"grid": [{"n_len": 30, "t_len": 40}], "replications": 2, "estimators": ["qml", "ls"]})
        out = tmp_path / "out"
        code, stdout, _ = run(["experiment", spec, "--threads", 2, "--out", out], capsys)
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert [c["replications_used"] for c in report["cells"]] == [2, 2]
        for c in report["cells"]:
            hist = out / f"hist_cell00_{c['label']}_{c['method']}.csv"
            with open(hist) as fh:
                rows = list(csv.reader(fh))
            assert rows[0] == ["deviation", "count"]
            assert sum(int(n) for _, n in rows[1:]) == c["replications_used"]
        assert "1A_N30_T40" in stdout

    def test_seed_override(self, tmp_path, capsys):
        spec = self.spec(tmp_path, {"grid": [{"n_len": 30, "t_len": 40}], "replications": 3, "base_seed": 1})
        run(["experiment", spec, "--seed", 8, "--out", tmp_path / "o"], capsys)
        assert json.loads((tmp_path / "o" / "report.json").read_text())["base_seed"] == 8

    def test_invalid_spec(self, tmp_path, capsys):
        spec = self.spec(tmp_path, {"grid": [{"n_len": 30}], "replications": 0, "estimators": ["x"]})
        code, _, err = run(["experiment", spec, "--out", tmp_path / "o"], capsys)
        assert code == 2
        for frag in ("t_len", "replications", "estimators"):
            assert frag in err

    def test_bad_json(self, tmp_path, capsys):
        p = tmp_path / "spec.json"
        p.write_text('{"grid": [\n oops]}')
        code, _, err = run(["experiment", p], capsys)
        assert code == 2 and "line 2" in err

    def test_fixed_r_too_large(self, tmp_path, capsys):
        spec = self.spec(tmp_path, {"grid": [{"n_len": 30, "t_len": 40}], "replications": 2, "r_policy": {"kind": "fixed", "r": 40}})
        code, _, err = run(["experiment", spec, "--out", tmp_path / "o"], capsys)
        assert code == 2 and "exceeds min(T, N)" in err


def test_rank_deficient_panel_exit(tmp_path, capsys):
    x = np.outer(np.arange(1.0, 21.0), np.linspace(-1.0, 1.0, 8)).tolist()
    p = tmp_path / "rank1.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"s{i}" for i in range(8)])
        w.writerows([[repr(v) for v in row] for row in x])
    code, _, err = run(["estimate", p, "--r", 3], capsys)
    assert code == 4 and "eigenvalue" in err


class TestLimitDist:
    def test_zero_sampler(self, tmp_path, capsys):
        out = tmp_path / "ld.csv"
        code, stdout, _ = run(
            ["limit-dist", "--sigma1", "2,0;0,1", "--sigma2", "1,0;0,1", "--sampler", "zero",
             "--ell-max", 4, "--draws", 25, "--out", out],
            capsys,
        )
        assert code == 0
        assert stdout.strip().splitlines() == ["ell,count", "0,25"]
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 9 and ["0", "25"] in rows

    def test_deterministic_with_seed(self, tmp_path, capsys):
        argv = ["limit-dist", "--sigma1", "[[2,0.3],[0.3,1]]", "--sigma2", "1,0;0,2", "--draws", 100, "--seed", 4]
        _, a, _ = run(argv, capsys)
        _, b, _ = run(argv, capsys)
        assert a == b

    def test_matrix_from_file(self, tmp_path, capsys):
        f = tmp_path / "s1.json"
        f.write_text("[[3, 0], [0, 1]]")
        code, _, _ = run(["limit-dist", "--sigma1", f, "--sigma2", "1,0;0,1", "--draws", 10], capsys)
        assert code == 0

    def test_degenerate(self, capsys):
        code, _, err = run(["limit-dist", "--sigma1", "1,0;0,1", "--sigma2", "1,0;0,1"], capsys)
        assert code == 2 and err

    def test_parse_matrix_errors(self):
        with pytest.raises(ParameterError):
            parse_matrix("1,2;3")
        with pytest.raises(ParameterError):
            parse_matrix("1,2,3")


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "factorbreak.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "factorbreak" in res.stdout
