"""Larger designs (K = 7..13) across families, Q kinds and N, next to reference means.

The full grid is 90 cells; use --dags/--fams/--qs/--ns to run a slice.
"""

import argparse
import os
import time

from dcrl.pipeline import BenchSpec, bench

NS = (3000, 5000, 7000)
# (dag, q) -> family -> means at NS
REFERENCE = {
    ("Chain-10", "Q1"): {"bernoulli": (5.55, 3.294, 2.938), "poisson": (2.248, 1.362, 0.638),
                         "gaussian": (0.412, 0.254, 0.122)},
    ("Chain-10", "Q2"): {"bernoulli": (5.664, 3.258, 3.042), "poisson": (2.174, 0.704, 0.488),
                         "gaussian": (0.406, 0.208, 0.146)},
    ("Tree-10", "Q1"): {"bernoulli": (4.372, 2.308, 1.308), "poisson": (1.85, 1.692, 1.36),
                        "gaussian": (0.94, 0.51, 0.308)},
    ("Tree-10", "Q2"): {"bernoulli": (4.3, 1.936, 1.26), "poisson": (2.676, 1.556, 1.146),
                        "gaussian": (1.14, 0.618, 0.346)},
    ("Model-7", "Q1"): {"bernoulli": (7.692, 6.334, 5.798), "poisson": (5.838, 5.422, 4.892),
                        "gaussian": (0.196, 0.042, 0.0)},
    ("Model-7", "Q2"): {"bernoulli": (7.554, 6.304, 5.68), "poisson": (5.848, 5.526, 5.082),
                        "gaussian": (0.262, 0.054, 0.004)},
    ("Model-8", "Q1"): {"bernoulli": (4.336, 2.682, 2.19), "poisson": (2.106, 1.916, 1.878),
                        "gaussian": (0.132, 0.048, 0.0)},
    ("Model-8", "Q2"): {"bernoulli": (4.342, 2.72, 2.374), "poisson": (2.264, 1.9, 1.782),
                        "gaussian": (0.202, 0.052, 0.002)},
    ("Model-13", "Q1"): {"bernoulli": (22.37, 16.454, 14.062), "poisson": (24.65, 16.472, 14.162),
                         "gaussian": (3.206, 1.646, 1.008)},
    ("Model-13", "Q2"): {"bernoulli": (22.252, 16.29, 14.606), "poisson": (25.134, 15.626, 12.934),
                         "gaussian": (3.032, 1.872, 0.994)},
}


def reference(dag, q, fam, n):
    try:
        return REFERENCE[(dag, q)][fam][NS.index(n)]
    except (KeyError, ValueError):
        return float("nan")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dags", nargs="+", default=["Chain-10", "Tree-10", "Model-7", "Model-8", "Model-13"])
    ap.add_argument("--qs", nargs="+", default=["Q1", "Q2"])
    ap.add_argument("--fams", nargs="+", default=["gaussian", "poisson", "bernoulli"])
    ap.add_argument("--ns", nargs="+", type=int, default=list(NS))
    ap.add_argument("--replicates", type=int, default=10)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--n-jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out-dir", default="results/large_grid")
    a = ap.parse_args()

    spec = BenchSpec(dags=tuple(a.dags), q_kinds=tuple(a.qs), families=tuple(a.fams), ns=tuple(a.ns),
                     replicates=a.replicates, seed=a.seed, n_jobs=a.n_jobs)
    t0 = time.perf_counter()
    _, summary = bench(spec, a.out_dir)
    print(f"{'dag':9s} {'Q':3s} {'family':10s} {'N':>5s} {'mean SHD':>9s} {'ref':>7s} {'Q match':>8s} {'failed':>6s}")
    for s in summary:
        ref = reference(s["dag"], s["q"], s["family"], s["n"])
        print(f"{s['dag']:9s} {s['q']:3s} {s['family']:10s} {s['n']:5d} {s['mean_shd']:9.3f} {ref:7.3f} "
              f"{s['q_match_rate']:8.2f} {s['failures']:6d}")
    print(f"total {time.perf_counter() - t0:.0f}s -> {a.out_dir}")


if __name__ == "__main__":
    main()
