"""Command line entry point: ``semidet <command> [options]``.

Exit codes: 0 success, 2 when a verdict fails, 1 on errors and usage errors.
Every command writes ``report.json`` into ``--out-dir``.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .errors import SemidetError
from .experiments import EXPERIMENTS, ExperimentReport, Verdict, run_experiment

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover
    import tomli as _toml


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    text = p.read_bytes()
    if p.suffix.lower() == ".json":
        return json.loads(text)
    return _toml.loads(text.decode())


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--workers", type=int, default=None)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = _Parser(prog="semidet", description="Small-noise diffusions leaving an unstable equilibrium.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="simulate paths of the small-noise SDE")
    s.add_argument("--model")
    s.add_argument("--epsilon", type=float)
    s.add_argument("--x0", type=float)
    s.add_argument("--horizon", type=float, help="default 2 T^eps")
    s.add_argument("--dt", type=float)
    s.add_argument("--n-paths", type=int)

    f = sub.add_parser("flow", parents=[common], help="tabulate the rescaled flow and its inverse")
    f.add_argument("--model")
    f.add_argument("--y-max", type=float)
    f.add_argument("--grid-size", type=int)

    w = sub.add_parser("limit-law", parents=[common], help="exact samples of W and of phi~(W)")
    w.add_argument("--model")
    w.add_argument("--n", type=int)

    b = sub.add_parser("branching", parents=[common], help="solve a branching transform equation")
    b.add_argument("--family")
    b.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    b.add_argument("--s-max", type=float)
    b.add_argument("--points", type=int)

    c = sub.add_parser("classify", parents=[common], help="scale/speed tables and boundary classes")
    c.add_argument("--model")
    c.add_argument("--epsilon", type=float)

    v = sub.add_parser("verify", parents=[common], help="run a named experiment")
    v.add_argument("experiment", choices=EXPERIMENTS)

    r = sub.add_parser("report", parents=[common], help="summarise report files under --out-dir")
    r.add_argument("paths", nargs="*")
    return ap


def _settings(args, cfg):
    """Command-line values override config values; returns (cfg, seed, workers)."""
    cfg = dict(cfg)
    for k, val in vars(args).items():
        if k in ("command", "config", "seed", "out_dir", "format", "workers", "experiment", "param", "paths"):
            continue
        if val is not None:
            cfg[k] = val
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    workers = args.workers if args.workers is not None else int(cfg.get("workers", 1))
    cfg.pop("seed", None)
    cfg.pop("workers", None)
    return cfg, seed, workers


def _model_cfg(cfg, default="logistic_feller"):
    from .experiments import _model

    return _model({"model": cfg.get("model", default), "model_params": cfg.get("model_params", {})})


def _table(out, name, cols, meta, fmt):
    from .io import write_csv, write_json

    if fmt == "json":
        write_json(out / f"{name}.json", {"meta": meta, "columns": {k: np.asarray(v).tolist() for k, v in cols.items()}})
        return f"{name}.json"
    write_csv(out / f"{name}.csv", cols, meta)
    return f"{name}.csv"


def cmd_simulate(cfg, seed, workers, out, fmt):
    from .models import ModelParams
    from .sde import critical_time, simulate_paths

    model = _model_cfg(cfg)
    eps = float(cfg.get("epsilon", 0.01))
    horizon = float(cfg.get("horizon", 2 * critical_time(model, eps) if 0 < eps < 1 else 10.0))
    n = int(cfg.get("n_paths", 1000))
    ens = simulate_paths(model, ModelParams(eps, cfg.get("x0")), cfg.get("dt"), horizon, n, seed, workers=workers)
    meta = {"kind": "paths", "model": model.name, "model_hash": model.model_hash(), "seed": seed, "epsilon": eps,
            "dt": ens.dt}
    k = ens.n_paths
    art = _table(out, "paths", {"path": np.repeat(np.arange(k), ens.times.size), "t": np.tile(ens.times, k),
                                "x": ens.states.ravel()}, meta, fmt)
    metrics = {"absorbed_fraction": ens.absorbed_fraction(), "final_mean": float(ens.states[:, -1].mean()),
               "n_steps": ens.n_steps}
    return ExperimentReport("simulate", {**_echo(cfg, model), "seed": seed}, metrics, [], artifacts=[art])


def cmd_flow(cfg, seed, workers, out, fmt):
    from .flow import compute_rescaled_flow, ode_residual, poincare_residual

    model = _model_cfg(cfg)
    rf = compute_rescaled_flow(model, y_max=float(cfg.get("y_max", 50.0)), grid_size=int(cfg.get("grid_size", 2001)))
    pr = poincare_residual(rf)
    od = ode_residual(rf)
    meta = {"kind": "rescaled_flow", "model": model.name, "model_hash": model.model_hash()}
    art = _table(out, "flow", {"y": rf.grid, "phi_tilde": rf.phi_tilde}, meta, fmt)
    verdicts = [Verdict("poincare_residual", pr < 1e-6, pr, 1e-6, "analytic")]
    return ExperimentReport("flow", _echo(cfg, model), {"poincare_residual": pr, "ode_residual": od,
                                                        "cross_check": rf.cross_check_residual}, verdicts,
                            artifacts=[art])


def cmd_limit_law(cfg, seed, workers, out, fmt):
    from .flow import compute_rescaled_flow
    from .limit_law import WLaw, sample_W

    model = _model_cfg(cfg)
    law = WLaw.for_model(model)
    n = int(cfg.get("n", 100_000))
    w = sample_W(law, n, seed)
    rf = compute_rescaled_flow(model)
    x = rf(w)
    x[w == 0] = 0.0
    meta = {"kind": "samples", "lambda": law.lam, "seed": seed, "n": n, "model": model.name}
    art = _table(out, "limit_law", {"W": w, "phi_tilde_W": x}, meta, fmt)
    metrics = {"lambda": law.lam, "mean_W": float(w.mean()), "var_W": float(w.var(ddof=1)),
               "atom": float(np.mean(w == 0)), "atom_exact": law.atom}
    return ExperimentReport("limit-law", {**_echo(cfg, model), "seed": seed}, metrics, [], artifacts=[art])


def cmd_branching(cfg, seed, workers, out, fmt, params):
    from . import branching as br

    family = cfg.get("family", "feller_csb")
    extra = dict(cfg.get("params", {}))
    for item in params:
        key, _, val = item.partition("=")
        extra[key] = float(val)
    mech = br.mechanism(family, **extra)
    n = int(cfg.get("points", 201))
    if mech.kind == "gw_generating_function":
        s = np.linspace(0.0, float(cfg.get("s_max", 10.0)), n)
        sol = br.solve_gw_phi(mech, s)
    elif mech.kind == "ct_mechanism":
        s = np.linspace(0.0, float(cfg.get("s_max", 10.0)), n)
        sol = br.solve_ct_phi(mech, s)
    else:
        s = np.linspace(0.0, float(cfg.get("s_max", 20.0)), n)
        sol = br.solve_csb_kappa(mech, s)
    meta = {"kind": sol.kind, "family": family, "params": mech.params}
    art = _table(out, "transform", {"s": sol.grid, "value": sol.values}, meta, fmt)
    return ExperimentReport("branching", {"family": family, "params": mech.params, "points": n},
                            {"residual": sol.residual, **{k: v for k, v in sol.diagnostics.items()
                                                          if isinstance(v, (int, float, str))}}, [],
                            artifacts=[art])


def cmd_classify(cfg, seed, workers, out, fmt):
    from .scale import scale_profile

    model = _model_cfg(cfg)
    eps = float(cfg.get("epsilon", 0.1))
    prof = scale_profile(model, eps)
    art = []
    if fmt == "csv":
        prof.to_csv(out / "scale_profile.csv", model.model_hash())
        art = ["scale_profile.csv"]
    summary = {"left": prof.left.feller_class, "right": prof.right.feller_class,
               "left_label": prof.left.label, "right_label": prof.right.label}
    print(json.dumps(summary, sort_keys=True))
    metrics = {**summary, "verdicts": prof.verdicts()}
    return ExperimentReport("classify", {**_echo(cfg, model), "epsilon": eps}, metrics, [], artifacts=art)


def _echo(cfg, model):
    return {**{k: v for k, v in cfg.items() if k != "model"}, "model": model.spec()}


def cmd_report(paths, out):
    files = [Path(p) for p in paths] or sorted(Path(out).rglob("report*.json"))
    rows = []
    for fpath in files:
        data = json.loads(fpath.read_text())
        if data.get("experiment") == "report":
            continue
        failed = [v["name"] for v in data.get("verdicts", []) if v.get("passed") is False]
        rows.append({"file": str(fpath), "experiment": data.get("experiment"), "passed": data.get("passed"),
                     "failed": failed})
        print(f"{'PASS' if data.get('passed') else 'FAIL'}  {data.get('experiment')}  {fpath}"
              + (f"  failed: {', '.join(failed)}" if failed else ""))
    verdicts = [Verdict(r["file"], bool(r["passed"]), float(bool(r["passed"])), None, "analytic") for r in rows]
    return ExperimentReport("report", {"files": [r["file"] for r in rows]}, {"reports": rows}, verdicts)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    t0 = time.perf_counter()
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg, seed, workers = _settings(args, load_config(args.config))
        fmt = args.format
        if args.command == "verify":
            report = run_experiment(args.experiment, cfg, seed=seed, workers=workers, out_dir=out)
        elif args.command == "simulate":
            report = cmd_simulate(cfg, seed, workers, out, fmt)
        elif args.command == "flow":
            report = cmd_flow(cfg, seed, workers, out, fmt)
        elif args.command == "limit-law":
            report = cmd_limit_law(cfg, seed, workers, out, fmt)
        elif args.command == "branching":
            report = cmd_branching(cfg, seed, workers, out, fmt, args.param)
        elif args.command == "classify":
            report = cmd_classify(cfg, seed, workers, out, fmt)
        else:
            report = cmd_report(args.paths, out)
    except (SemidetError, OSError, ValueError, KeyError, _toml.TOMLDecodeError) as exc:
        print(f"semidet: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    report.runtime = time.perf_counter() - t0
    report.write(out)
    if args.command == "verify":
        print(json.dumps({"experiment": report.name, "passed": report.passed,
                          "verdicts": {v.name: v.passed for v in report.verdicts}}, sort_keys=True))
    return 0 if report.passed else 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
