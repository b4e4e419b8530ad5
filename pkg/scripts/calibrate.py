"""Freeze the calibrated main-theorem thresholds into semidet/data/thresholds.json.

For each model, the main-theorem experiment is run once at three times the
acceptance sample size with a calibration seed that the acceptance tests do
not use. The frozen threshold for the final W1 distance is

    value + 3 * stderr * sqrt(3)

where stderr is the bootstrap error at the calibration size, rescaled to
the acceptance size. The same rule freezes the distances between the scaled
Feller tail exp(-gamma t) Y_t (t = 10 and 15) and exact draws of W.
"""
import argparse
import json
import math
from datetime import date
from pathlib import Path

import semidet
from semidet.experiments import exp_main_theorem
from semidet.limit_law import WLaw, sample_W
from semidet.models import builtin_model
from semidet.sde import simulate_feller
from semidet.stats import EmpiricalLaw, bootstrap_se, ks_w1

TABLE = Path(semidet.__file__).parent / "data" / "thresholds.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--models", nargs="+", default=["logistic_feller", "kimura_fisher_wright"])
    ap.add_argument("--n-paths", type=int, default=30_000, help="3x the acceptance size")
    ap.add_argument("--seed", type=int, default=20261018)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", choices=("main", "feller"), default=None)
    ap.add_argument("--dry-run", action="store_true")
    args = ap.parse_args()

    table = json.loads(TABLE.read_text())
    scale = math.sqrt(args.n_paths / 10_000)
    if args.only != "main":
        ref = EmpiricalLaw.from_sample(sample_W(WLaw(1.0, 1.0), 1_000_000, args.seed))
        for t, metric in ((10.0, 0), (15.0, 1)):
            ens = simulate_feller(1.0, 1.0, 1.0, 1e-3, t, args.n_paths, args.seed, checkpoints=[t],
                                  workers=args.workers)
            tail = math.exp(-t) * ens.at(t)
            vals = ks_w1(tail, ref)
            ses = bootstrap_se(tail, lambda x: ks_w1(x, ref), 30, args.seed)
            label = ("ks", "w1")[metric]
            key = f"feller_tail.{label}.t{t:g}"
            table["thresholds"][key] = {
                "value": round(vals[metric] + 3.0 * ses[metric] * scale, 6), "provenance": "calibrated",
                "source": (f"simulate_feller gamma=a'(0)=1, dt=1e-3, n={args.n_paths}, seed={args.seed} vs 1e6 "
                           f"exact W: {label}={vals[metric]:.6f}, bootstrap se={ses[metric]:.6f}; "
                           "value + 3 se scaled to n=1e4"),
                "date": date.today().isoformat(),
            }
            print(json.dumps({"key": key, "ks_w1": list(vals), "se": list(ses)}))
    for name in (args.models if args.only != "feller" else []):
        model = builtin_model(name)
        rep = exp_main_theorem(model, n_paths=args.n_paths, seed=args.seed, workers=args.workers)
        w1, se = rep.metrics["w1"][-1], rep.metrics["w1_se"][-1]
        value = w1 + 3.0 * se * scale
        key = f"main_theorem.w1.{name}.eps0.01"
        table["thresholds"][key] = {
            "value": round(value, 6), "provenance": "calibrated",
            "source": (f"main-theorem oracle run n={args.n_paths}, seed={args.seed}, dt=1e-3: "
                       f"W1={w1:.6f}, bootstrap se={se:.6f}; value + 3 se scaled to n=1e4"),
            "date": date.today().isoformat(),
        }
        print(json.dumps({"model": name, "w1": rep.metrics["w1"], "w1_se": rep.metrics["w1_se"],
                          "threshold": value}))
    if not args.dry_run:
        TABLE.write_text(json.dumps(table, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
