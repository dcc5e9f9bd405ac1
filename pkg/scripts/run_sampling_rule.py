"""Sensitivity of composite SHD to the resample size f(N) in {N, 2N, 3N}."""

import argparse
import os

from dcrl.pipeline import BenchSpec, SamplingRule, bench


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dag", default="Chain-5")
    ap.add_argument("--q", default="Q1")
    ap.add_argument("--family", default="gaussian")
    ap.add_argument("--ns", nargs="+", type=int, default=[1000, 5000])
    ap.add_argument("--multiples", nargs="+", type=float, default=[1.0, 2.0, 3.0])
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--n-jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out-dir", default="results/sampling_rule")
    a = ap.parse_args()

    print(f"{'f(N)':>6s} {'N':>6s} {'mean SHD':>9s} {'Q match':>8s}")
    for c in a.multiples:
        spec = BenchSpec(dags=(a.dag,), q_kinds=(a.q,), families=(a.family,), ns=tuple(a.ns),
                         replicates=a.replicates, seed=a.seed, n_jobs=a.n_jobs,
                         sampling=SamplingRule("multiple", c))
        _, summary = bench(spec, os.path.join(a.out_dir, f"c{c:g}"))
        for s in summary:
            print(f"{c:5g}N {s['n']:6d} {s['mean_shd']:9.3f} {s['q_match_rate']:8.2f}")


if __name__ == "__main__":
    main()
