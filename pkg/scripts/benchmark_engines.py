#!/usr/bin/env python3
"""Sweep the three discovery engines over random linear SCMs.

Prints per-engine F1 / NHD across sizes and densities, plus the hybrid vote
with composite-normalized weights. Useful for eyeballing where each engine
wins before trusting the hybrid combination on real data.
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "src"))

import numpy as np

from alcm.data import ScmSpec, sample_scm
from alcm.hybrid import combine, method_outputs, normalize_weights, run_engines
from alcm.metrics import evaluate


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[5, 8, 10])
    ap.add_argument("--densities", type=float, nargs="+", default=[0.2, 0.4])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--noise", choices=["gaussian", "uniform"], default="uniform")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'d':>3} {'p':>5} {'engine':>8} {'f1':>7} {'nhd':>7} {'sec':>6}")
    for d in args.sizes:
        for p in args.densities:
            sums: dict[str, list[float]] = {}
            times: dict[str, float] = {}
            for _ in range(args.trials):
                spec = ScmSpec(d=d, edge_probability=p, noise_kind=args.noise,
                               seed=int(rng.integers(0, 2**31)))
                ds, truth = sample_scm(spec, args.n)
                t0 = time.time()
                graphs = run_engines(ds, seed=int(rng.integers(0, 2**31)))
                outputs = method_outputs(graphs, truth)
                weights = normalize_weights([o.report.composite for o in outputs])
                graphs["hybrid"] = combine(outputs, weights)
                elapsed = time.time() - t0
                for name, g in graphs.items():
                    rep = evaluate(g, truth)
                    sums.setdefault(name, []).append((rep.f1, rep.nhd))
                    times[name] = times.get(name, 0.0) + elapsed / len(graphs)
            for name, vals in sums.items():
                f1s = np.mean([v[0] for v in vals])
                nhds = np.mean([v[1] for v in vals])
                print(f"{d:>3} {p:>5.2f} {name:>8} {f1s:>7.3f} {nhds:>7.3f} "
                      f"{times[name] / args.trials:>6.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
