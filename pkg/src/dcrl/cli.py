"""Command line entry point: ``dcrl {simulate,fit,discover,pipeline,bench,check-q}``.

Every subcommand accepts ``--config file.json``; keys use the long flag names
with dashes replaced by underscores, and flags given on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import graphs
from .ges import run_ges
from .identcheck import check_q
from .model import as_families, params_to_json
from .pipeline import BenchSpec, PipelineConfig, SamplingRule, bench, evaluate, run_pipeline
from .saem import SaemConfig, fit
from .spectral import InitConfig
from .synth import SimDesign, make_rng, simulate

DEFAULTS = {
    "dag": "Chain-5", "q": "Q1", "family": "gaussian", "n": 1000, "seed": 0,
    "out_prefix": "sim_", "out_dir": ".", "k": None, "families": None,
    "penalty": "scad", "lambda_": None, "tau": None, "max_iter": 600, "tol": 1e-4,
    "burn_in": 100, "init": "spectral", "eps": 1e-2, "delta": None,
    "score": "bdeu", "ess": 1.0, "sampling": "identity", "sampling_c": 1.0,
    "dags": ["Chain-5"], "qs": ["Q1"], "fams": ["gaussian"], "ns": [1000],
    "replicates": 5, "n_jobs": 1, "out": None,
}


# ---------------------------------------------------------------- io helpers

def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def read_matrix(path: str, with_header: bool = False):
    """CSV to float matrix. A non-numeric first row is treated as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    header = None
    if rows and not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    m = np.array(rows, dtype=float).reshape(len(rows), -1)
    return (m, header) if with_header else m


def write_matrix(path: str, m, header=None, fmt="%.10g"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in np.asarray(m):
            w.writerow([fmt % v for v in row])


def _dump(path: str, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _resolve(args) -> dict:
    conf = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            conf = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
        if "lambda" in conf:
            conf["lambda_"] = conf.pop("lambda")
    out = dict(DEFAULTS)
    out.update(conf)
    out.update({k: v for k, v in vars(args).items() if v is not None and k not in ("config", "func")})
    return out


def _saem_config(o) -> SaemConfig:
    return SaemConfig(penalty=o["penalty"], lam=o["lambda_"], tau=o["tau"], max_iter=int(o["max_iter"]),
                      tol=float(o["tol"]), burn_in=int(o["burn_in"]), init=o["init"],
                      init_config=InitConfig(eps=float(o["eps"]), delta=o["delta"]))


def _families_for(o, header, j):
    if o.get("families"):
        with open(o["families"]) as fh:
            schema = json.load(fh)
        fams = schema["families"] if isinstance(schema, dict) else schema
    elif header is not None:
        fams = header
    else:
        fams = o["family"]
    return as_families(fams, j)


def _write_fit(out_dir, params, q, diagnostics):
    os.makedirs(out_dir, exist_ok=True)
    _dump(os.path.join(out_dir, "params.json"), params_to_json(params))
    write_matrix(os.path.join(out_dir, "q.csv"), q, fmt="%d")
    _dump(os.path.join(out_dir, "diagnostics.json"), _json_safe(diagnostics))


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    o = _resolve(args)
    sim = simulate(SimDesign(o["dag"], o["q"], o["family"], int(o["n"]), int(o["seed"])))
    pre = o["out_prefix"]
    write_matrix(pre + "X.csv", sim.x, header=[f.value for f in sim.params.families])
    write_matrix(pre + "Z.csv", sim.z, header=[f"Z{k + 1}" for k in range(sim.dag.k)], fmt="%d")
    write_matrix(pre + "Q.csv", sim.q, fmt="%d")
    _dump(pre + "params.json", params_to_json(sim.params))
    _dump(pre + "truth.json", {
        "dag": graphs.to_json(sim.dag),
        "composite": graphs.to_json(graphs.composite_graph(graphs.dag_to_cpdag(sim.dag), sim.q)),
        "design": vars(sim.design),
    })
    print(f"wrote {pre}X.csv ({sim.x.shape[0]} x {sim.x.shape[1]}), Z.csv, Q.csv, params.json, truth.json")
    return 0


def cmd_fit(args):
    o = _resolve(args)
    x, header = read_matrix(o["data"], with_header=True)
    if o["k"] is None:
        raise SystemExit("fit needs --k")
    fams = _families_for(o, header, x.shape[1])
    res = fit(x, int(o["k"]), fams, _saem_config(o), make_rng(int(o["seed"]), 1))
    _write_fit(o["out_dir"], res.params, res.q, res.diagnostics)
    d = res.diagnostics
    print(f"converged={d['converged']} iterations={d['n_iter']} init={d['init']} "
          f"nonzeros={int(res.q.sum())} -> {o['out_dir']}")
    return 0


def cmd_discover(args):
    o = _resolve(args)
    z = read_matrix(o["data"]).astype(np.int64)
    res = run_ges(z, o["score"], float(o["ess"]))
    obj = graphs.to_json(res.cpdag)
    obj["score"] = res.score
    text = json.dumps(obj, indent=2)
    if o["out"]:
        with open(o["out"], "w") as fh:
            fh.write(text)
    print(text)
    return 0


def _sampling(o) -> SamplingRule:
    return SamplingRule(o["sampling"], float(o["sampling_c"]))


def cmd_pipeline(args):
    o = _resolve(args)
    cfg = PipelineConfig(_saem_config(o), _sampling(o), o["score"], float(o["ess"]), int(o["seed"]))
    sim = None
    if o.get("data"):
        x, header = read_matrix(o["data"], with_header=True)
        if o["k"] is None:
            raise SystemExit("pipeline with --data needs --k")
        fams, k = _families_for(o, header, x.shape[1]), int(o["k"])
    else:
        sim = simulate(SimDesign(o["dag"], o["q"], o["family"], int(o["n"]), int(o["seed"])))
        x, fams, k = sim.x, sim.params.families, sim.dag.k
    res = run_pipeline(x, k, fams, cfg)
    _write_fit(o["out_dir"], res.params, res.q, res.fit.diagnostics)
    _dump(os.path.join(o["out_dir"], "cpdag.json"), graphs.to_json(res.cpdag))
    summary = {"timings": res.timings, "seed": res.seed}
    if sim is not None:
        summary["metrics"] = evaluate(res, sim.params, sim.dag, sim.q)
    _dump(os.path.join(o["out_dir"], "run.json"), _json_safe(summary))
    print(json.dumps(_json_safe(summary), indent=2))
    return 0


def cmd_bench(args):
    o = _resolve(args)
    spec = BenchSpec(dags=tuple(o["dags"]), q_kinds=tuple(o["qs"]), families=tuple(o["fams"]),
                     ns=tuple(int(n) for n in o["ns"]), replicates=int(o["replicates"]),
                     seed=int(o["seed"]), n_jobs=int(o["n_jobs"]), saem=_saem_config(o),
                     sampling=_sampling(o), score=o["score"], ess=float(o["ess"]))
    _, summary = bench(spec, o["out_dir"])
    for s in summary:
        print(f"{s['dag']:9s} {s['q']} {s['family']:9s} N={s['n']:6d}  mean SHD {s['mean_shd']:.3f}  "
              f"Q match {s['q_match_rate']:.2f}  ok {s['successes']}  failed {s['failures']}")
    return 0


def cmd_check_q(args):
    q = read_matrix(args.q).astype(np.int64)
    print(json.dumps(check_q(q).to_json(), indent=2))
    return 0


# ---------------------------------------------------------------- parser

def _tuning(p):
    p.add_argument("--penalty", choices=["scad", "tlp"])
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--init", choices=["spectral", "random"])
    p.add_argument("--eps", type=float, help="truncation margin of the spectral start")
    p.add_argument("--delta", type=float, help="loading threshold of the spectral start")


def _design(p):
    p.add_argument("--dag")
    p.add_argument("--q")
    p.add_argument("--family", choices=["gaussian", "poisson", "bernoulli", "lognormal"])
    p.add_argument("--n", type=int)


def _discovery(p):
    p.add_argument("--score", choices=["bdeu", "bic"])
    p.add_argument("--ess", type=float)


def _sampling_flags(p):
    p.add_argument("--sampling", choices=["identity", "multiple"])
    p.add_argument("--sampling-c", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dcrl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a benchmark model and dataset")
    _design(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="penalized Gibbs-SAEM on X.csv")
    p.add_argument("--data", required=True)
    p.add_argument("--families", help="JSON list, or object with a 'families' list")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    _tuning(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("discover", help="GES on a binary latent matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    _discovery(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("pipeline", help="estimate, resample, discover (simulates when --data is absent)")
    p.add_argument("--data")
    p.add_argument("--families")
    p.add_argument("--k", type=int)
    _design(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    _tuning(p)
    _discovery(p)
    _sampling_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bench", help="replicate grid; writes results.csv and summary.csv")
    p.add_argument("--dags", nargs="+")
    p.add_argument("--qs", nargs="+")
    p.add_argument("--fams", nargs="+")
    p.add_argument("--ns", nargs="+", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-jobs", type=int)
    p.add_argument("--out-dir")
    _tuning(p)
    _discovery(p)
    _sampling_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check-q", help="identifiability report for a headerless 0/1 CSV")
    p.add_argument("q")
    p.set_defaults(func=cmd_check_q)

    for name, sp in sub.choices.items():
        if name != "check-q":
            sp.add_argument("--config", help="JSON file of defaults; flags override")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
