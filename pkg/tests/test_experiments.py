import json

import numpy as np
import pytest

from semidet.errors import BadEpsilon, BadParameter
from semidet.experiments import (HIT_LEVELS, EXPERIMENTS, ExperimentReport, Verdict, exp_fluid_limit,
                                 exp_gronwall_scaling, exp_hitting, exp_key_exceedance, exp_linearization,
                                 exp_main_theorem, exp_max_exceedance, exp_three_stages, level_chain_probability,
                                 load_thresholds, reference_law, restart_gap, run_experiment, threshold)
from semidet.models import builtin_model
from semidet.stats import wasserstein1


@pytest.fixture(scope="module")
def lf():
    return builtin_model("logistic_feller")


@pytest.fixture(scope="module")
def kfw():
    return builtin_model("kimura_fisher_wright")


def test_thresholds_have_provenance():
    table = load_thresholds()["thresholds"]
    assert table
    for key, entry in table.items():
        assert entry["provenance"] in ("paper", "calibrated", "derived"), key
        assert entry["source"]
    with pytest.raises(BadParameter):
        threshold("no.such.key")


def test_report_ignores_informational_verdicts(tmp_path):
    rep = ExperimentReport("x", {}, {"a": 1.0}, [Verdict("ok", True, 1.0, None, "analytic"),
                                                  Verdict("info", None, 0.0, None, "informational")])
    assert rep.passed
    rep.runtime = 12.3
    rep.write(tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert "runtime" not in json.dumps(data) and data["passed"] is True
    assert json.loads((tmp_path / "timing.json").read_text())["runtime_s"] == 12.3
    rep.verdicts.append(Verdict("bad", False, 1.0, 0.5, "analytic"))
    assert not rep.passed


def test_fluid_limit_trend(kfw):
    rep = exp_fluid_limit(kfw, n_paths=500, seed=1)
    freqs = rep.metrics["exceedance"]
    assert freqs[0] > freqs[-1] and rep.passed


def test_fluid_limit_degenerate(kfw):
    zero = exp_fluid_limit(kfw, eps_grid=(0.0,), n_paths=20, seed=1)
    assert zero.metrics["exceedance"] == [0.0]
    wide = exp_fluid_limit(kfw, eps_grid=(0.1,), n_paths=200, seed=1, delta=1e6)
    assert wide.metrics["exceedance"] == [0.0]


def test_logistic_reference_is_w_over_one_plus_w(lf):
    from semidet.limit_law import WLaw, sample_W

    w = sample_W(WLaw(1.0, 1.0), 20_000, seed=4)
    ref = reference_law(lf, 20_000, seed=4)
    np.testing.assert_allclose(ref, w / (1 + w), atol=1e-6)


def test_main_theorem_small(lf):
    rep = exp_main_theorem(lf, eps_grid=(0.1, 0.01), n_paths=2000, seed=3, n_reference=100_000, n_boot=10)
    w1 = rep.metrics["w1"]
    assert w1[0] > w1[1]
    assert rep.verdict("w1_decreasing").passed
    # n = 2000 is well below the calibrated size, so only the trend is asserted
    assert rep.verdict("w1_final_below_threshold").threshold == threshold(
        "main_theorem.w1.logistic_feller.eps0.01")[0]


def test_kfw_and_logistic_nearly_indistinguishable(lf, kfw):
    eps = 0.01
    a = exp_main_theorem(lf, eps_grid=(eps,), n_paths=2000, seed=5, n_reference=50_000, n_boot=2,
                         return_samples=True)
    b = exp_main_theorem(kfw, eps_grid=(eps,), n_paths=2000, seed=5, n_reference=50_000, n_boot=2,
                         return_samples=True)
    between = wasserstein1(a.samples[eps], b.samples[eps])
    # reference of a logistic model with twice the noise slope: a different phi~(W) law
    wrong = reference_law(builtin_model("logistic_feller", {"sigma2": 2.0}), 50_000, seed=5)
    assert between < 0.5 * wasserstein1(a.samples[eps], wrong)
    assert between < 0.5 * wasserstein1(b.samples[eps], wrong)


def test_gronwall_larger_c_smaller_gap(lf):
    lo = restart_gap(lf, 0.01, 0.51, 2000, seed=2).mean()
    hi = restart_gap(lf, 0.01, 0.9, 2000, seed=2).mean()
    assert hi < lo
    assert np.all(restart_gap(lf, 0.0, 0.75, 10, seed=2) == 0.0)


def test_gronwall_experiment_small(lf):
    rep = exp_gronwall_scaling(lf, eps_grid=(0.1, 0.01), n_paths=2000, seed=2)
    assert rep.passed, rep.verdicts


def test_gronwall_kfw_wall(kfw):
    # restarts above x_c are clipped so the flow stays on the wall
    g = restart_gap(kfw, 0.1, 0.75, 2000, seed=2)
    assert np.all(np.isfinite(g))


def test_linearization_small(lf):
    rep = exp_linearization(lf, eps_grid=(0.1, 0.01), n_paths=2000, seed=4)
    assert rep.passed
    assert rep.verdict("linear_model_pathwise").value < 1e-9


def test_three_stages_outputs(tmp_path, kfw, lf):
    rep = exp_three_stages(kfw, n_paths=400, seed=1, n_points=101, compare_model=lf, out_dir=tmp_path)
    assert rep.verdict("early_plateau").passed
    assert rep.verdict("paths_split_after_T").passed
    traces = (tmp_path / "traces.csv").read_text()
    assert "t_c" in traces and "stage_traces" in traces
    assert (tmp_path / "bands.csv").exists()
    with pytest.raises(BadEpsilon):
        exp_three_stages(kfw, epsilon=0.0, n_paths=2)


def test_level_chain_probability():
    # fair walk on levels 0..4 started at 1 reaches 4 first with probability 1/4
    assert level_chain_probability([0.5, 0.5, 0.5]) == pytest.approx(0.25)
    assert level_chain_probability([1.0, 1.0]) == pytest.approx(1.0)


def test_hitting_small(lf):
    rep = exp_hitting(lf, n_paths=1000, seed=3)
    assert rep.config["levels"] == list(HIT_LEVELS)
    assert abs(rep.metrics["z"]) < 4
    with pytest.raises(BadParameter):
        exp_hitting(lf, levels=(0.0, 0.1, 2.0), n_paths=10)


def test_max_exceedance(lf):
    rep = exp_max_exceedance(lf, n_paths=1000, seed=2)
    assert rep.passed
    a = rep.metrics["analytic"]
    assert a[0] > a[1] > a[2]


def test_key_exceedance_is_informational(lf):
    rep = exp_key_exceedance(lf, eps_grid=(0.1,), n_paths=200, seed=2)
    assert rep.verdicts[0].informational and rep.passed


def test_run_experiment_dispatch(lf):
    assert set(EXPERIMENTS) >= {"main-theorem", "gronwall", "linearization", "hitting"}
    rep = run_experiment("linearization", {"model": "logistic_feller", "eps_grid": [0.1, 0.05],
                                           "n_paths": 200}, seed=1)
    assert rep.config["eps_grid"] == [0.1, 0.05]
    with pytest.raises(BadParameter):
        run_experiment("nope", {}, seed=1)


def test_reports_are_pure_functions(tmp_path):
    cfg = {"model": "logistic_feller", "eps_grid": [0.1, 0.05], "n_paths": 300}
    a = run_experiment("gronwall", cfg, seed=9, workers=1)
    b = run_experiment("gronwall", cfg, seed=9, workers=2)
    assert a.to_json() == b.to_json()
