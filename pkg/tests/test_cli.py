import hashlib
import json

import numpy as np
import pytest

from vaxsignal.cli import main
from vaxsignal.registry import write_cohorts_csv, write_vaccinations_csv
from vaxsignal.synth import demo_registry, planted_regime_pair
from vaxsignal.timeseries import MonthlyTimeSeries, YearMonth, read_series_csv, write_series_csv


def run(*argv):
    return main([str(a) for a in argv])


def report(path):
    return json.loads(path.read_text())


@pytest.fixture
def demo(tmp_path):
    d = demo_registry(seed=5, n_records=1000)
    write_vaccinations_csv(d.records, tmp_path / "vacc.csv")
    write_cohorts_csv(d.cohorts, tmp_path / "coh.csv")
    return d, tmp_path


def series_file(path, values, start="2010-01"):
    write_series_csv(MonthlyTimeSeries(start, values), path)
    return path


class TestDerive:
    def test_demo_activity_matches_counts(self, demo):
        d, tmp = demo
        assert run("derive", "--vaccinations", tmp / "vacc.csv", "--cohorts", tmp / "coh.csv",
                   "--out", tmp / "out") == 0
        s = read_series_csv(tmp / "out" / "activity_dose1.csv")
        assert s.window == d.window
        expected = [100.0 * d.doses_per_month[m] / d.eligible_per_month[m] for m in d.window.months()]
        assert np.allclose(s.values, expected, rtol=1e-12)
        rep = report(tmp / "out" / "derive.json")
        assert rep["inputs"]["vaccinations"]["sha256"] == hashlib.sha256((tmp / "vacc.csv").read_bytes()).hexdigest()
        assert rep["config"]["schedule"] == [{"dose": 1, "target_age_months": 144}]

    def test_empty_article_file(self, demo, capsys):
        _, tmp = demo
        (tmp / "art.csv").write_text("")
        code = run("derive", "--vaccinations", tmp / "vacc.csv", "--cohorts", tmp / "coh.csv",
                   "--articles", tmp / "art.csv", "--out", tmp / "out")
        assert code == 1
        assert "art.csv" in capsys.readouterr().err

    def test_missing_cohort_names_month(self, demo, capsys):
        d, tmp = demo
        gone = d.window.start - 144
        write_cohorts_csv([c for c in d.cohorts if c.birth_month != gone], tmp / "coh.csv")
        code = run("derive", "--vaccinations", tmp / "vacc.csv", "--cohorts", tmp / "coh.csv", "--out", tmp / "o")
        assert code == 2
        assert str(gone) in capsys.readouterr().err

    def test_missing_input(self, tmp_path):
        assert run("derive", "--vaccinations", tmp_path / "nope.csv", "--cohorts", tmp_path / "nope.csv",
                   "--out", tmp_path) == 1


class TestTipping:
    def test_planted_fixture(self, tmp_path, capsys):
        x, y, plant = planted_regime_pair(seed=3)
        write_series_csv(x, tmp_path / "x.csv")
        write_series_csv(y, tmp_path / "y.csv")
        assert run("tipping", "--x", tmp_path / "x.csv", "--y", tmp_path / "y.csv", "--out", tmp_path / "o",
                   "--delta-x", "0.5") == 0
        res = report(tmp_path / "o" / "tipping.json")["result"]
        assert abs(YearMonth.parse(res["split"]) - plant) <= 2
        assert res["before"]["r"] > 0.8 and res["after"]["r"] < -0.8
        assert "regression" in res
        assert (tmp_path / "o" / "tipping_scan.csv").exists()
        assert res["split"] in capsys.readouterr().out

    def test_identical_inputs(self, tmp_path):
        f = series_file(tmp_path / "x.csv", np.random.default_rng(0).standard_normal(40))
        assert run("tipping", "--x", f, "--y", f, "--out", tmp_path / "o") == 0
        res = report(tmp_path / "o" / "tipping.json")["result"]
        assert res["before"]["r"] == pytest.approx(1.0) and res["after"]["r"] == pytest.approx(1.0)
        assert res["delta"] == pytest.approx(0.0, abs=1e-12)

    def test_too_short(self, tmp_path, capsys):
        f = series_file(tmp_path / "x.csv", np.random.default_rng(0).standard_normal(20))
        assert run("tipping", "--x", f, "--y", f, "--out", tmp_path / "o") == 2
        assert capsys.readouterr().err.strip()


class TestSeasonalCommands:
    def test_deseason_periodic(self, tmp_path):
        pattern = np.random.default_rng(1).standard_normal(12)
        f = series_file(tmp_path / "s.csv", np.tile(pattern, 10) + 4.0)
        assert run("deseason", "--series", f, "--p", 12, "--out", tmp_path / "o") == 0
        resid = read_series_csv(tmp_path / "o" / "deseasonalized.csv")
        assert len(resid) == 108
        assert np.max(np.abs(resid.values)) < 1e-8

    def test_ccf_peak(self, tmp_path):
        z = np.random.default_rng(2).standard_normal(63)
        fx = series_file(tmp_path / "x.csv", z[3:])
        fy = series_file(tmp_path / "y.csv", z[:60])
        assert run("ccf", "--x", fx, "--y", fy, "--max-lag", 6, "--out", tmp_path / "o") == 0
        rep = report(tmp_path / "o" / "ccf.json")
        assert rep["result"]["peak"]["lag"] == 3
        assert len((tmp_path / "o" / "ccf.csv").read_text().splitlines()) == 14


class TestFitPredict:
    def test_gp_rerun_is_byte_identical(self, tmp_path):
        f = series_file(tmp_path / "y.csv", np.sin(np.arange(40) / 4))
        for out in ("a", "b"):
            assert run("fit", "gp", "--y", f, "--kernels", 2, "--seed", 7, "--n-starts", 3, "--out", tmp_path / out) == 0
        assert (tmp_path / "a" / "model.json").read_bytes() == (tmp_path / "b" / "model.json").read_bytes()

    def test_stochastic_needs_seed(self, tmp_path, capsys):
        f = series_file(tmp_path / "y.csv", np.sin(np.arange(40) / 4))
        assert run("fit", "gp", "--y", f, "--out", tmp_path / "o") == 2
        assert "--seed" in capsys.readouterr().err
        assert run("fit", "forest", "--y", f, "--exog", f"q={f}", "--out", tmp_path / "o") == 2

    def test_predict_one_row_per_month(self, tmp_path):
        rng = np.random.default_rng(3)
        q = rng.standard_normal(60)
        fq = series_file(tmp_path / "q.csv", q)
        fy = series_file(tmp_path / "y.csv", 1.0 + 2.0 * q + 0.1 * rng.standard_normal(60))
        assert run("fit", "ar-exog", "--y", fy, "--exog", f"q={fq}", "--p", 1, "--window", "2010-01..2013-12",
                   "--out", tmp_path / "m") == 0
        assert run("predict", "--model", tmp_path / "m" / "model.json", "--y", fy, "--exog", f"q={fq}",
                   "--window", "2014-01..2014-12", "--out", tmp_path / "p") == 0
        pred = read_series_csv(tmp_path / "p" / "predictions.csv")
        assert pred.window.start == YearMonth(2014, 1) and len(pred) == 12
        assert np.sqrt(np.mean((pred.values - 1.0 - 2.0 * q[48:]) ** 2)) < 0.2

    def test_gp_and_forest_predict(self, tmp_path):
        rng = np.random.default_rng(4)
        q = rng.standard_normal(48)
        fq = series_file(tmp_path / "q.csv", q)
        fy = series_file(tmp_path / "y.csv", np.sin(q))
        for fam in ("gp", "forest"):
            assert run("fit", fam, "--y", fy, "--exog", f"q={fq}", "--seed", 1, "--n-starts", 2, "--n-trees", 10,
                       "--out", tmp_path / fam) == 0
            assert run("predict", "--model", tmp_path / fam / "model.json", "--exog", f"q={fq}",
                       "--window", "2012-01..2012-06", "--out", tmp_path / (fam + "p")) == 0
            assert len(read_series_csv(tmp_path / (fam + "p") / "predictions.csv")) == 6
        assert (tmp_path / "gpp" / "predictive_sd.csv").exists()

    def test_config_and_flag_precedence(self, tmp_path):
        f = series_file(tmp_path / "y.csv", np.cumsum(np.random.default_rng(5).standard_normal(60)))
        cfg = tmp_path / "c.yaml"
        cfg.write_text("fit:\n  p: 3\n  reg: lasso\n  lam: 0.5\n")
        assert run("fit", "ar-exog", "--y", f, "--config", cfg, "--out", tmp_path / "a") == 0
        a = report(tmp_path / "a" / "model.json")
        assert a["config"]["p"] == 3 and a["config"]["reg"] == "lasso"
        assert run("fit", "ar-exog", "--y", f, "--config", cfg, "--p", 2, "--out", tmp_path / "b") == 0
        assert report(tmp_path / "b" / "model.json")["config"]["p"] == 2
        cfg.write_text("fit:\n  colour: red\n")
        assert run("fit", "ar-exog", "--y", f, "--config", cfg, "--out", tmp_path / "c") == 1

    def test_not_converged_exit_code(self, tmp_path, capsys):
        rng = np.random.default_rng(6)
        q = rng.standard_normal(60)
        fq = series_file(tmp_path / "q.csv", q)
        fq2 = series_file(tmp_path / "q2.csv", q + 1e-4 * rng.standard_normal(60))
        fy = series_file(tmp_path / "y.csv", q + rng.standard_normal(60))
        code = run("fit", "ar-exog", "--y", fy, "--exog", f"a={fq}", "--exog", f"b={fq2}", "--p", 1,
                   "--reg", "elastic_net", "--lam", 0.01, "--eta", 0.0, "--max-iter", 2, "--out", tmp_path / "o")
        assert code == 3
        assert "converge" in capsys.readouterr().err


class TestSelectAndSynth:
    def test_select_queries(self, tmp_path, capsys):
        rng = np.random.default_rng(7)
        yv = rng.standard_normal(144)
        fy = series_file(tmp_path / "y.csv", yv, "2000-01")
        fa = series_file(tmp_path / "a.csv", yv + 0.1 * rng.standard_normal(144), "2000-01")
        fb = series_file(tmp_path / "b.csv", rng.standard_normal(144), "2000-01")
        assert run("select-queries", "--y", fy, "--exog", f"a={fa}", "--exog", f"b={fb}",
                   "--train", "2000-01..2007-12", "--validate", "2008-01..2011-12", "--out", tmp_path / "o") == 0
        assert report(tmp_path / "o" / "selection.json")["result"]["chosen"] == ["a"]
        assert "a" in capsys.readouterr().out

    def test_synth_demo_roundtrip(self, tmp_path):
        assert run("synth", "demo-registry", "--seed", 2, "--n-records", 200, "--out", tmp_path / "s") == 0
        assert run("derive", "--vaccinations", tmp_path / "s" / "vaccinations.csv",
                   "--cohorts", tmp_path / "s" / "cohorts.csv", "--out", tmp_path / "d") == 0
        assert run("synth", "demo-registry", "--out", tmp_path / "t") == 2
