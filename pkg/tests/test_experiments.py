import csv
import json
import math

import numpy as np
import pytest

from explasso.design import write_matrix_csv
from explasso.experiments import (ScenarioConfig, eta0_threshold, run_detection_edge, run_efficiency,
                                  run_oracle_rates, run_study, run_variable_selection)
from explasso.noise import fisher_info


def small(**kw):
    base = dict(n=60, p=20, s_star=2, replications=12, calib_reps=300, seed=5)
    base.update(kw)
    return ScenarioConfig(**base)


def _same_records(a, b):
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.keys() == y.keys()
        for k in x:
            assert x[k] == y[k], k


# ---------------------------------------------------------------- configuration

@pytest.mark.parametrize("kw", [dict(s_star=30), dict(replications=0), dict(sigma_star=0.0), dict(alpha=0.7),
                                dict(eta=1.0), dict(model="cauchy"), dict(n=1.5), dict(calib_reps=50)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        small(**kw)


def test_config_from_file(tmp_path):
    path = tmp_path / "scenario.txt"
    path.write_text("# a scenario\nn = 80\np = 30  # dimension\nmodel = logistic\nsigma_star = 2.5\n", encoding="utf-8")
    cfg = ScenarioConfig.from_file(path, seed=3)
    assert (cfg.n, cfg.p, cfg.model, cfg.sigma_star, cfg.seed) == (80, 30, "logistic", 2.5, 3)
    path.write_text("n = 80\nbogus = 1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        ScenarioConfig.from_file(path)
    path.write_text("n = eighty\np = 3\n", encoding="utf-8")
    with pytest.raises(ValueError):
        ScenarioConfig.from_file(path)


def test_threshold_formula():
    assert eta0_threshold(0.5) == pytest.approx(1 / 3)
    assert eta0_threshold(0.0) == 0.0


# ---------------------------------------------------------------- rates

def test_rates_reproducible_and_self_consistent():
    cfg = small()
    a = run_oracle_rates(cfg)
    b = run_oracle_rates(cfg)
    _same_records(a.records, b.records)
    assert a.aggregates == b.aggregates
    assert a.recompute() == a.aggregates
    assert a.aggregates["nonconverged"] == 0 and a.aggregates["all_traces_monotone"]


def test_rates_parallel_matches_serial():
    cfg = small(replications=6)
    serial = run_oracle_rates(cfg)
    parallel = run_oracle_rates(ScenarioConfig(**{**cfg.__dict__, "n_jobs": 2}))
    _same_records(serial.records, parallel.records)


def test_rates_null_model_bounded_by_lambda():
    # reference runs gave an upper 95% quantile of exactly 0; C = 1 is the frozen bound
    rep = run_oracle_rates(small(n=100, p=50, s_star=0, replications=40))
    row = rep.aggregates["by_n"]["100"]
    assert row["l2_error_quantile"] <= 1.0 * row["mean_lambda"]


def test_rates_equivariant_in_noise_level():
    a = run_oracle_rates(small(sigma_star=1.0, beta_magnitude=1.0, intercept_value=0.5))
    b = run_oracle_rates(small(sigma_star=10.0, beta_magnitude=10.0, intercept_value=5.0))
    for x, y in zip(a.records, b.records):
        assert y["l2_error"] == pytest.approx(10 * x["l2_error"], rel=1e-6, abs=1e-9)
        assert y["sigma_rel_error"] == pytest.approx(x["sigma_rel_error"], rel=1e-6, abs=1e-9)
        assert y["active_size"] == x["active_size"]


def test_rates_n_grid_slope():
    rep = run_oracle_rates(small(p=30, s_star=3, replications=15), n_grid=[100, 400])
    by_n = rep.aggregates["by_n"]
    assert set(by_n) == {"100", "400"}
    ratio = by_n["100"]["l2_error_median"] / by_n["400"]["l2_error_median"]
    assert 1.2 < ratio < 3.5
    assert "log_log_slope" in rep.aggregates


def test_rates_csv_and_json(tmp_path):
    rep = run_oracle_rates(small(replications=4))
    rep.to_csv(tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv", encoding="utf-8")))
    assert len(rows) == 4 and "l2_error" in rows[0]
    d = json.loads(rep.to_json(tmp_path / "r.json"))
    assert d["schema"] == "explasso/1" and d["study"] == "rates"
    assert json.loads((tmp_path / "r.json").read_text()) == d


# ---------------------------------------------------------------- detection edge

def test_edge_large_multiplier_retains_everything():
    rep = run_detection_edge(small(s_star=0, replications=10), lambda_grid=(3.0,))
    row = rep.aggregates["by_multiplier"]["3.0"]
    assert row["retention"] == 1.0


def test_edge_curve_and_bound():
    rep = run_detection_edge(small(n=80, p=100, s_star=0, replications=30, calib_reps=1000), lambda_grid=(0.3, 1.5))
    rows = rep.aggregates["by_multiplier"]
    R = 30
    assert rows["1.5"]["retention"] >= 0.95 - 3 * math.sqrt(0.05 * 0.95 / R)
    low = rows["0.3"]
    # activity is at least the exceedance probability of the calibration sample, up to MC error
    assert low["retention"] <= 1 - low["activity_lower_bound"] + 3 * max(low["se"], 1 / R)
    assert rows["0.3"]["retention"] <= rows["1.5"]["retention"]
    assert rep.recompute() == rep.aggregates


def test_edge_requires_null():
    with pytest.raises(ValueError):
        run_detection_edge(small(s_star=1))
    with pytest.raises(ValueError):
        run_detection_edge(small(s_star=0), lambda_grid=(0.0,))


def test_edge_csv_schema(tmp_path):
    rep = run_detection_edge(small(s_star=0, replications=3), lambda_grid=(0.5, 1.0))
    rep.to_csv(tmp_path / "edge.csv")
    rows = list(csv.reader(open(tmp_path / "edge.csv", encoding="utf-8")))
    assert rows[0] == ["multiplier", "replication", "retained_null"]
    assert len(rows) == 1 + 6


# ---------------------------------------------------------------- selection

def test_selection_orthogonal_design_at_least_as_good(tmp_path):
    n, p = 200, 20
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((n, p)))
    Q -= Q.mean(axis=0)
    Q, _ = np.linalg.qr(Q)
    path = tmp_path / "orth.csv"
    write_matrix_csv(path, Q * math.sqrt(n))
    common = dict(n=n, p=p, s_star=2, beta_magnitude=1.0, eta=0.5, replications=40, calib_reps=500, seed=2)
    orth = run_variable_selection(ScenarioConfig(design=str(path), **common))
    gen = run_variable_selection(ScenarioConfig(**common))
    assert all(r["eta0"] < 1e-10 for r in orth.records)
    assert all(r["stratum"] == "below" for r in orth.records)
    a, b = orth.aggregates["no_false_positive"], gen.aggregates["no_false_positive"]
    assert a["rate"] >= b["rate"] - 3 * math.sqrt((a["se"] ** 2 + b["se"] ** 2) or 1 / 40)
    assert orth.recompute() == orth.aggregates


def test_selection_degenerate_stratum():
    rep = run_variable_selection(small(p=4, s_star=4, replications=3))
    assert all(r["stratum"] == "degenerate" and r["no_false_positive"] for r in rep.records)
    assert set(rep.aggregates["strata"]) == {"degenerate"}


def test_selection_requires_signal():
    with pytest.raises(ValueError):
        run_variable_selection(small(s_star=0))


# ---------------------------------------------------------------- efficiency

def test_efficiency_report():
    rep = run_efficiency(small(n=300, p=10, s_star=1, replications=40, design="fixed"), n_grid=[300, 1200])
    agg = rep.aggregates
    assert np.allclose(agg["target_covariance"], fisher_info("gaussian").inverse)
    for key in ("300", "1200"):
        row = agg["by_n"][key]
        assert np.all(np.isfinite(row["covariance"]))
        assert 0.4 < row["var_ratio"][0] < 2.0 and 0.4 < row["var_ratio"][1] < 2.0
    # distance to the oracle MLE shrinks faster than 1 / sqrt(n)
    assert agg["by_n"]["1200"]["median_paired_scale_diff"] < agg["by_n"]["300"]["median_paired_scale_diff"]
    assert rep.recompute() == agg


def test_efficiency_warns_outside_regime():
    with pytest.warns(RuntimeWarning):
        run_efficiency(small(n=30, p=10, s_star=5, replications=2))


def test_run_study_dispatch():
    with pytest.raises(ValueError):
        run_study("nonsense", small())
    assert run_study("rates", small(replications=2)).study == "rates"
