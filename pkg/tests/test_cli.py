import json

import numpy as np
import pytest

from oodpac import io
from oodpac.cli import dispatch, parse_alphas, parse_int_list, UsageError


def run(tmp_path, *argv):
    return dispatch([*argv, "--out", str(tmp_path), "--jobs", "1"])


def manifest(tmp_path):
    return json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))


class TestParsing:
    def test_alphas(self):
        assert parse_alphas("0,0.5,1").tolist() == [0, 0.5, 1]
        assert len(parse_alphas("linspace:0:1:101")) == 101
        for bad in ("", "a,b", "0,2", "linspace:0:1"):
            with pytest.raises(UsageError):
                parse_alphas(bad)

    def test_int_list(self):
        assert parse_int_list("10,50") == [10, 50]
        with pytest.raises(UsageError):
            parse_int_list("1.5")


class TestExitCodes:
    def test_no_subcommand(self, capsys):
        assert dispatch([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self):
        assert dispatch(["inf-risk", "--bogus"]) == 2

    def test_unknown_domain(self, tmp_path, capsys):
        assert run(tmp_path, "inf-risk", "--domain", "nowhere.json") == 2
        assert capsys.readouterr().err.count("\n") == 1

    def test_capacity(self, tmp_path):
        assert run(tmp_path, "inf-risk", "--domain", "random_finite", "--x-size", "40", "--n-id", "20") == 2

    def test_continuous_domain_needs_tables(self, tmp_path):
        assert run(tmp_path, "inf-risk", "--domain", "benchmark") == 2

    def test_overlap_conditions_fail(self, tmp_path, capsys):
        code = run(tmp_path, "check-conditions", "--domain", "overlap_two_atom", "--space", "all_tables")
        assert code == 3
        rep = json.loads((tmp_path / "conditions.json").read_text())
        assert rep["linear"]["violating_alpha"] == 0.5 and not rep["linear"]["holds"]
        assert "violating_alpha=0.5" in capsys.readouterr().out

    def test_separate_conditions_hold(self, tmp_path):
        assert run(tmp_path, "check-conditions", "--domain", "separate_two_atom") == 0
        rep = json.loads((tmp_path / "conditions.json").read_text())
        assert rep["realizability"]["holds"] and rep["realizability"]["witness"] == [1, 2]

    def test_divergence_is_runtime_error(self, tmp_path, capsys):
        cfg = tmp_path / "f.yaml"
        cfg.write_text("train:\n  widths: [2, 4, 10]\n  learning_rate: 1.0e+300\n", encoding="utf-8")
        code = dispatch(["figure1", "--config", str(cfg), "--gap-io", "100", "--n-list", "40", "--seed-count", "1",
                         "--iterations", "5", "--alphas", "0,1", "--out", str(tmp_path), "--jobs", "1"])
        assert code == 4
        assert "runtime error" in capsys.readouterr().err


class TestCommands:
    def test_inf_risk_curve(self, tmp_path):
        assert run(tmp_path, "inf-risk", "--domain", "overlap_two_atom", "--alphas", "0,0.25,0.5,1") == 0
        lines = (tmp_path / "inf_risk.csv").read_text().splitlines()
        values = [float(line.split(",")[1]) for line in lines[1:]]
        assert values == [0.0, 0.25, 0.5, 0.0]
        argmin = json.loads((tmp_path / "inf_argmin.json").read_text())
        assert argmin[2]["argmin"] == [[1], [2]]

    def test_gen_domain_round_trip(self, tmp_path):
        assert run(tmp_path, "gen-domain", "--domain", "random_finite", "--x-size", "6", "--n-id", "3", "--seed", "4") == 0
        out2 = tmp_path / "again"
        assert run(out2, "inf-risk", "--domain", str(tmp_path / "domain.json"), "--alphas", "0.5") == 0
        assert manifest(tmp_path)["seeds"] == [4]

    def test_eval_risk_constant(self, tmp_path, capsys):
        assert run(tmp_path, "eval-risk", "--domain", "separate_two_atom", "--constant", "2", "--alphas", "0,1") == 0
        assert "r_in=1 r_out=0" in capsys.readouterr().out

    def test_eval_risk_table(self, tmp_path):
        h = io.write_json(tmp_path / "h.json", {"type": "table", "feature_set": [[0.0], [1.0]], "labels": [1, 2]})
        assert run(tmp_path, "eval-risk", "--domain", "separate_two_atom", "--hypothesis", str(h)) == 0
        vals = [float(r.split(",")[1]) for r in (tmp_path / "risk_curve.csv").read_text().splitlines()[1:]]
        assert vals == [0.0] * 101

    def test_sweep(self, tmp_path, capsys):
        code = run(tmp_path, "sweep", "--domain", "random_finite", "--x-size", "10", "--n-id", "4",
                   "--algorithm", "nn_threshold", "--n-list", "5,50", "--seed-count", "4", "--alphas", "0,1")
        assert code == 0
        assert (tmp_path / "convergence.csv").read_text().splitlines()[0] == "n,alpha,mean,std"
        assert manifest(tmp_path)["seeds"] == [0, 1, 2, 3]
        assert capsys.readouterr().out.count("sup_alpha_mean_risk") == 2

    def test_nn_threshold_needs_k1(self, tmp_path):
        assert run(tmp_path, "sweep", "--domain", "random_finite", "--k", "2", "--algorithm", "nn_threshold") == 2

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("domain: overlap_two_atom\nalphas: '0,1'\nseed: 3\n", encoding="utf-8")
        assert dispatch(["inf-risk", "--config", str(cfg), "--domain", "separate_two_atom", "--out", str(tmp_path)]) == 0
        man = manifest(tmp_path)
        assert man["config"]["domain"] == "separate_two_atom" and man["config"]["seed"] == 3
        assert man["config_hash"] == io.config_hash(man["config"])

    def test_bad_config_root(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("- 1\n- 2\n", encoding="utf-8")
        assert dispatch(["inf-risk", "--config", str(cfg), "--domain", "overlap_two_atom", "--out", str(tmp_path)]) == 2

    def test_byte_identical(self, tmp_path):
        for d in ("a", "b"):
            assert run(tmp_path / d, "run-algorithm", "--domain", "random_finite", "--algorithm", "erm",
                       "--k", "2", "--x-size", "6", "--n-id", "3", "--n", "30") == 0
        for name in ("hypothesis.json", "risk.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        ma, mb = manifest(tmp_path / "a"), manifest(tmp_path / "b")
        assert ma == mb and "version" in ma

    def test_demo(self, tmp_path):
        assert run(tmp_path, "demo", "impossibility-overlap", "--alphas", "0,0.5,1") == 0
        assert manifest(tmp_path)["experiment"] == "impossibility_overlap"

    def test_figure1_small(self, tmp_path):
        cfg = tmp_path / "f.yaml"
        cfg.write_text("train:\n  widths: [2, 8, 10]\n", encoding="utf-8")
        code = dispatch(["figure1", "--config", str(cfg), "--gap-io", "100", "--desk-scale", "--n-list", "40",
                         "--seed-count", "1", "--iterations", "5", "--alphas", "0,1", "--out", str(tmp_path),
                         "--jobs", "1"])
        assert code == 0
        assert (tmp_path / "figure1_gap100.csv").exists() and (tmp_path / "manifest_gap100.json").exists()
        vals = io.read_json(tmp_path / "manifest_gap100.json")["config"]
        assert vals["n_list"] == [40] and vals["train"]["iterations"] == 5


@pytest.mark.slow
def test_figure1_desk_command(tmp_path):
    assert dispatch(["figure1", "--gap-io", "100", "--desk-scale", "--out", str(tmp_path), "--jobs", "1"]) == 0
    curves = (tmp_path / "figure1_gap100.csv").read_text().splitlines()
    assert curves[0] == "alpha,curve_id,value,std" and len(curves) == 1 + 4 * 101
    assert np.isfinite([float(r.split(",")[2]) for r in curves[1:]]).all()
