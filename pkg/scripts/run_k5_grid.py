"""K=5 Gaussian/Q1 grid: composite SHD by DAG and N at f(N)=N, next to reference means."""

import argparse
import json
import os
import time

from dcrl.pipeline import BenchSpec, bench, spec_to_dict

REFERENCE = {
    "Chain-5": {1000: 0.38, 5000: 0.02, 10000: 0.0},
    "Tree-5": {1000: 0.47, 5000: 0.07, 10000: 0.0},
    "Model-5": {1000: 1.42, 5000: 0.06, 10000: 0.0},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dags", nargs="+", default=list(REFERENCE))
    ap.add_argument("--ns", nargs="+", type=int, default=[1000, 5000, 10000])
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--n-jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out-dir", default="results/k5_grid")
    a = ap.parse_args()

    spec = BenchSpec(dags=tuple(a.dags), ns=tuple(a.ns), replicates=a.replicates, seed=a.seed, n_jobs=a.n_jobs)
    t0 = time.perf_counter()
    _, summary = bench(spec, a.out_dir)
    with open(os.path.join(a.out_dir, "spec.json"), "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2, default=str)

    print(f"{'dag':9s} {'N':>6s} {'mean SHD':>9s} {'ref':>6s} {'Q match':>8s} {'failed':>6s}")
    for s in summary:
        ref = REFERENCE.get(s["dag"], {}).get(s["n"], float("nan"))
        print(f"{s['dag']:9s} {s['n']:6d} {s['mean_shd']:9.3f} {ref:6.2f} {s['q_match_rate']:8.2f} {s['failures']:6d}")
    print(f"total {time.perf_counter() - t0:.0f}s -> {a.out_dir}")


if __name__ == "__main__":
    main()
