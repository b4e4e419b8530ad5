"""Acceptance criteria 1-10, each with its tolerance and runtime bound.

Every test records a one-line verdict that the terminal summary prints as
``criterion N PASS|FAIL``. Monte-Carlo criteria use seed 7.
"""
import json
import math
import time
from pathlib import Path

import numpy as np

from semidet.branching import (geometric_theta_residual, mechanism, solve_csb_kappa, solve_ct_phi,
                               theta_inverse_csb, theta_inverse_ct)
from semidet.cli import main as cli_main
from semidet.experiments import exp_gronwall_scaling, exp_hitting, exp_linearization, exp_main_theorem
from semidet.flow import compute_rescaled_flow, invert_w, poincare_residual
from semidet.limit_law import WLaw, laplace_W, sample_W
from semidet.models import builtin_model
from semidet.scale import classify_boundaries

SEED = 7
CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _fmt(x):
    return f"{x:.3g}"


def test_c01_rescaled_flow_golden(record_criterion):
    t0 = time.perf_counter()
    y = np.linspace(0.0, 20.0, 2001)
    lf = compute_rescaled_flow(builtin_model("logistic_feller"))
    ga = compute_rescaled_flow(builtin_model("gilpin_ayala_pow", {"theta": 2.0}))
    err_lf = float(np.max(np.abs(lf(y) - y / (1 + y))))
    err_ga = float(np.max(np.abs(ga(y) - y / np.sqrt(1 + y * y))))
    rt = time.perf_counter() - t0
    ok = err_lf < 1e-6 and err_ga < 1e-6 and rt < 10
    record_criterion(1, "rescaled flow golden values", ok,
                     f"logistic {_fmt(err_lf)}, Gilpin-Ayala {_fmt(err_ga)} (< 1e-6), {rt:.1f}s")
    assert ok


def test_c02_inverse_round_trip(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst_rt = worst_pc = 0.0
    for name, params in (("logistic_feller", {}), ("gilpin_ayala_pow", {"theta": 2.0})):
        model = builtin_model(name, params)
        rf = compute_rescaled_flow(model)
        ys = np.linspace(0.01, 20.0, 200)
        w = np.array([invert_w(model, float(v)) for v in rf(ys)])
        worst_rt = max(worst_rt, float(np.max(np.abs(w - ys))))
        pairs = np.column_stack([rng.uniform(0, 20, 500), rng.uniform(0, 5, 500)])
        worst_pc = max(worst_pc, poincare_residual(rf), poincare_residual(rf, pairs))
    rt = time.perf_counter() - t0
    ok = worst_rt < 1e-6 and worst_pc < 1e-6 and rt < 10
    record_criterion(2, "inverse round trip and Poincare residual", ok,
                     f"|w(phi~(y)) - y| {_fmt(worst_rt)}, Poincare {_fmt(worst_pc)} (< 1e-6), {rt:.1f}s")
    assert ok


def test_c03_w_law(record_criterion):
    t0 = time.perf_counter()
    law = WLaw(1.0, 1.0)
    w = sample_W(law, 1_000_000, SEED)
    n = w.size
    mean, var = w.mean(), w.var(ddof=1)
    se_mean = math.sqrt(var / n)
    se_var = math.sqrt((np.mean((w - mean) ** 4) - var ** 2) / n)
    atom = float(np.mean(w == 0))
    se_atom = math.sqrt(law.atom * (1 - law.atom) / n)
    z = {"mean": (mean - 1) / se_mean, "var": (var - 1) / se_var, "atom": (atom - math.exp(-2)) / se_atom}
    for s in (0.5, 1.0, 2.0, 4.0):
        e = np.exp(-s * w)
        z[f"L({s:g})"] = (e.mean() - laplace_W(law, s)) / (e.std(ddof=1) / math.sqrt(n))
    rt = time.perf_counter() - t0
    ok = all(abs(v) <= 3 for v in z.values()) and rt < 30
    record_criterion(3, "exact W law moments, atom, Laplace transform", ok,
                     ", ".join(f"{k} z={v:+.2f}" for k, v in z.items()) + f", {rt:.1f}s")
    assert ok


def test_c04_branching_solvers(record_criterion):
    t0 = time.perf_counter()
    g = 1.0
    feller = mechanism("feller_csb", gamma=g, a_prime0=1.0)
    s = np.linspace(0.0, 20.0, 401)
    err_k = float(np.max(np.abs(solve_csb_kappa(feller, s).values - 2 * g * s / (2 * g + s))))
    st = np.linspace(0.0, 1.9, 96)
    err_t = float(np.max(np.abs(theta_inverse_csb(feller, st).values - 2 * g * st / (2 * g - st))))
    phi1 = float(solve_ct_phi(mechanism("binary"), np.linspace(0, 2, 21))(1.0)[0])
    u = 0.3
    th = theta_inverse_ct(mechanism("geometric_ct", u=u), np.linspace(0.01, 1.0, 100))
    geo_as_stated = geometric_theta_residual(u, th, form="1m2u")
    geo_consistent = geometric_theta_residual(u, th, form="inv_u")
    rt = time.perf_counter() - t0
    clauses = {"kappa": err_k < 1e-6, "theta": err_t < 1e-6, "phi(1)": abs(phi1 - 0.5) < 1e-6,
               "geometric": geo_as_stated < 1e-6, "runtime": rt < 10}
    ok = all(clauses.values())
    record_criterion(4, "branching transform solvers", ok,
                     f"kappa {_fmt(err_k)}, theta {_fmt(err_t)}, |phi(1)-0.5| {_fmt(abs(phi1 - 0.5))}, "
                     f"geometric relation (exponent 1-2u) {_fmt(geo_as_stated)} vs 1e-6"
                     f" [exponent 1/u form: {_fmt(geo_consistent)}], {rt:.1f}s; failing: "
                     + (", ".join(k for k, v in clauses.items() if not v) or "none"))
    assert ok


def test_c05_boundary_classification(record_criterion):
    t0 = time.perf_counter()
    left, right = classify_boundaries(builtin_model("logistic_feller"), 0.1)
    _, kright = classify_boundaries(builtin_model("kimura_fisher_wright"), 0.1)
    rt = time.perf_counter() - t0
    ok = (left.label == "attracting+exit" and right.label == "unattracting+entrance"
          and kright.point == 1.0 and kright.feller_class == "exit" and rt < 10)
    record_criterion(5, "boundary classification", ok,
                     f"logistic 0: {left.label}, inf: {right.label}; KFW x_c=1: {kright.feller_class}, {rt:.1f}s")
    assert ok


def test_c06_hitting_probability(record_criterion):
    t0 = time.perf_counter()
    rep = exp_hitting(builtin_model("logistic_feller"), 0.1, 0.05, 2.0, n_paths=10_000, seed=SEED)
    rt = time.perf_counter() - t0
    m = rep.metrics
    ok = rep.passed and rt < 60
    record_criterion(6, "hitting probability vs Monte Carlo", ok,
                     f"analytic {m['analytic']:.6f}, MC {m['monte_carlo']:.6f} +- {m['stderr']:.6f}, "
                     f"z={m['z']:+.2f}, {rt:.1f}s")
    assert ok


def test_c07_main_theorem_trend(record_criterion):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("kimura_fisher_wright", "logistic_feller"):
        rep = exp_main_theorem(builtin_model(name), n_paths=10_000, seed=SEED, dt=1e-3)
        v = rep.verdict("w1_final_below_threshold")
        ok &= rep.passed
        parts.append(f"{name} W1 " + "/".join(f"{x:.4f}" for x in rep.metrics["w1"])
                     + f" (final < {v.threshold:g}: {v.passed}, trend: {rep.verdict('w1_decreasing').passed})")
    rt = time.perf_counter() - t0
    ok = bool(ok) and rt < 300
    record_criterion(7, "main-theorem W1 trend", ok, "; ".join(parts) + f", {rt:.0f}s")
    assert ok


def test_c08_gronwall_scaling(record_criterion):
    t0 = time.perf_counter()
    rep = exp_gronwall_scaling(builtin_model("logistic_feller"), c=0.75, n_paths=10_000, seed=SEED)
    rt = time.perf_counter() - t0
    ok = rep.passed and rt < 300
    record_criterion(8, "Gronwall restart-gap scaling", ok,
                     f"ratio spread {rep.metrics['ratio_spread']:.2f} (< 10), gaps "
                     + "/".join(f"{g:.2e}" for g in rep.metrics["gap"]) + f", {rt:.0f}s")
    assert ok


def test_c09_linearization(record_criterion):
    t0 = time.perf_counter()
    rep = exp_linearization(builtin_model("logistic_feller"), n_paths=10_000, seed=SEED)
    rt = time.perf_counter() - t0
    ok = rep.passed and rt < 120
    m = rep.metrics
    record_criterion(9, "linearisation near 0", ok,
                     "mean gap " + "/".join(f"{g:.3e}" for g in m["mean_abs_gap"])
                     + f", linear model {rep.verdict('linear_model_pathwise').value:.1e}, {rt:.0f}s")
    assert ok


def test_c10_determinism(record_criterion, tmp_path):
    blobs, codes = [], []
    for i, workers in enumerate(("1", "3")):
        out = tmp_path / f"run{i}"
        codes.append(cli_main(["verify", "main-theorem", "--config", str(CONFIGS / "lf.toml"), "--seed", str(SEED),
                               "--workers", workers, "--out-dir", str(out)]))
        blobs.append((out / "report.json").read_bytes())
    same = blobs[0] == blobs[1]
    passed = json.loads(blobs[0])["passed"]
    record_criterion(10, "determinism across runs and worker counts", same,
                     f"verify main-theorem workers 1 vs 3: byte-identical={same}, exit codes {codes}, "
                     f"report passed={passed}")
    assert same and codes[0] == codes[1]
