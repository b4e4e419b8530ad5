"""Trace and quantile-band data for the three-stage pictures (KFW and logistic Feller).

Writes <out>/<model>/traces.csv and bands.csv for each model with a shared
seed, so the traces of the two models can be overlaid.
"""
import argparse
from pathlib import Path

from semidet.experiments import exp_three_stages
from semidet.models import builtin_model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=float, default=0.01)
    ap.add_argument("--n-paths", type=int, default=1000)
    ap.add_argument("--traces", type=int, default=6)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="stage_traces")
    args = ap.parse_args()
    for name in ("kimura_fisher_wright", "logistic_feller"):
        rep = exp_three_stages(builtin_model(name), args.epsilon, args.n_paths, args.seed, n_traces=args.traces,
                               out_dir=Path(args.out) / name)
        rep.write(Path(args.out) / name)
        print(name, rep.metrics)


if __name__ == "__main__":
    main()
