"""Command-line harness: experiments in, CSV plus manifest out.

Every subcommand resolves its configuration (defaults, then --config JSON,
then explicit flags), writes one CSV of results into --out, and records the
fully resolved configuration with its hash in manifest.json so any run can
be repeated exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import adversarial as adv
from . import bench
from .complexity import bound_diagnostics, estimate_rademacher
from .distributions import JointDistribution, SampleSet, make_uniform, sample, transductive_split
from .solvers import LossSpec, SolverConfig, fit_factored_sgd, fit_proximal
from .weighting import (
    MarginalWeights,
    NormBudget,
    SmoothingConfig,
    from_distribution,
    smooth,
)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="base seed for all randomness")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file of option overrides (explicit flags win)")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel workers for independent grid points")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    if args.config is None:
        return
    overrides = json.loads(Path(args.config).read_text())
    for key, value in overrides.items():
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise SystemExit(f"unknown config key {key!r}")
        # Explicit command-line flags beat the config file.
        if getattr(args, key) == parser.get_default(key):
            setattr(args, key, value)


def _write_manifest(outdir: Path, command: str, config: dict, seed: int) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "config": config,
                "config_hash": bench.config_hash(config), "seed": seed}
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))


def _cmd_samplecomplexity(args) -> int:
    config = dict(ns=args.n, target_error=args.target_error,
                  weightings=args.weightings.split(","), seeds=args.trials,
                  base_seed=args.seed, solver_max_iters=args.solver_iters)
    reports = bench.run_sample_complexity(n_jobs=args.jobs, **config)
    _write_manifest(args.out, "simulate samplecomplexity", config, args.seed)
    bench.reports_to_csv(reports, args.out / "sample_complexity.csv")
    for r in reports:
        if r.scenario == "sample_complexity_summary":
            print(f"n={r.params['n']} weighting={r.params['weighting']} "
                  f"required_s={r.metrics['required_s']}")
    return 0


def _cmd_excesserror(args) -> int:
    config = dict(n=args.n, nu_grid=args.nu, s_grid=args.s_grid,
                  weightings=args.weightings.split(","), seeds=args.trials,
                  base_seed=args.seed, solver_max_iters=args.solver_iters)
    reports = bench.run_excess_error(n_jobs=args.jobs, **config)
    _write_manifest(args.out, "simulate excesserror", config, args.seed)
    bench.reports_to_csv(reports, args.out / "excess_error.csv")
    for r in reports:
        print(f"nu={r.params['nu']} weighting={r.params['weighting']} "
              f"s={r.params['s']} error={r.mean:.4g}+-{r.std_error:.2g}")
    return 0


def _cmd_sweep_smoothing(args) -> int:
    config = dict(n=args.n, alpha_grid=args.alphas, k_grid=args.k, s=args.s,
                  seeds=args.trials, base_seed=args.seed,
                  test_size=args.test_size, obs_noise=args.obs_noise)
    reports = bench.run_smoothing_sweep(n_jobs=args.jobs, **config)
    _write_manifest(args.out, "sweep smoothing", config, args.seed)
    bench.reports_to_csv(reports, args.out / "smoothing_sweep.csv")
    for r in reports:
        print(f"alpha={r.params['alpha']} k={r.params['k']} "
              f"test_rmse={r.mean:.4f}+-{r.std_error:.4f}")
    return 0


def _cmd_transductive(args) -> int:
    config = dict(n=args.n, pool=args.pool, r=args.r, loss=args.loss,
                  seeds=args.trials, base_seed=args.seed)
    n = args.n
    M = bench.make_signal(bench.SignalSpec(n=n, seed=args.seed))
    rng = np.random.default_rng(args.seed + 1)
    flat = rng.choice(n * n, size=args.pool, replace=False)
    pool_idx = np.stack(np.divmod(flat, n), axis=1)
    pool = transductive_split(pool_idx, M, args.seed + 2)
    loss = getattr(LossSpec, args.loss)()
    report = bench.run_transductive(pool, n, n, NormBudget(args.r), loss,
                                    seeds=args.trials, base_seed=args.seed,
                                    n_jobs=args.jobs)
    _write_manifest(args.out, "transductive", config, args.seed)
    bench.reports_to_csv([report], args.out / "transductive.csv")
    print(f"held-out loss {report.mean:.4g} +- {report.std_error:.2g} "
          f"over {report.count} splits")
    return 0


def _cmd_fit(args) -> int:
    S = SampleSet.load_csv(args.samples)
    w = MarginalWeights.from_json_dict(json.loads(Path(args.weights).read_text()))
    cfg = SolverConfig(lam=args.lam, rank_cap=args.rank, max_iters=args.iters,
                       step_size=args.step, seed=args.seed)
    loss = LossSpec.squared()
    if args.solver == "proximal":
        model = fit_proximal(S, w, loss, cfg)
    else:
        if args.rank is None:
            raise SystemExit("--rank is required for the sgd solver")
        model = fit_factored_sgd(S, w, loss, cfg)
    config = dict(samples=str(args.samples), weights=str(args.weights),
                  solver=args.solver, lam=args.lam, rank=args.rank,
                  iters=args.iters, step=args.step)
    _write_manifest(args.out, "fit", config, args.seed)
    out_path = args.out / "model.json"
    out_path.write_text(json.dumps(model.to_json_dict()))
    print(f"wrote {out_path}")
    return 0


def _cmd_rademacher(args) -> int:
    if args.dist is not None:
        dist = JointDistribution.load(args.dist)
    else:
        dist = make_uniform(args.n)
    w = from_distribution(dist)
    if args.alpha is not None:
        w = smooth(w, SmoothingConfig(args.alpha))
    budget = NormBudget(args.r)
    truth = np.zeros((dist.n, dist.m))
    config = dict(dist=str(args.dist), n=dist.n, m=dist.m, s_grid=args.s,
                  r=args.r, draws=args.draws, alpha=args.alpha)
    _write_manifest(args.out, "rademacher", config, args.seed)
    rows = []
    for s in args.s:
        S = sample(dist, s, truth, args.seed + s)
        est = estimate_rademacher(S, w, budget, num_draws=args.draws, seed=args.seed)
        diag = bound_diagnostics(dist, w, s, budget)
        rows.append([s, est.mean, est.std_error, diag.R_value, diag.sigma_sq,
                     diag.predicted_rate])
        print(f"s={s} estimate={est.mean:.4g}+-{est.std_error:.2g} "
              f"predicted={diag.predicted_rate:.4g}")
    with open(args.out / "rademacher.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "mean", "std_error", "R_value", "sigma_sq",
                         "predicted_rate"])
        writer.writerows(rows)
    return 0


def _cmd_adversarial(args) -> int:
    config = dict(example=args.example, n=args.n, s=args.s, trials=args.trials)
    if args.example == 1:
        inst = adv.build_example1(args.n, args.s, args.seed)
        values = adv.run_example1_trials(inst, args.trials, args.seed + 1)
        closed = adv.example1_expected_loss(inst)
        paper_bound = adv.example1_lower_bound(args.n, args.s)
    else:
        inst = adv.build_example2(args.n, args.s)
        values = adv.run_example2_trials(inst, args.trials, args.seed + 1)
        closed = adv.example2_miss_probability(args.s)
        paper_bound = 0.25
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    _write_manifest(args.out, "adversarial", config, args.seed)
    with open(args.out / f"adversarial_example{args.example}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "Lp"])
        for t, v in enumerate(values):
            writer.writerow([t, repr(float(v))])
        writer.writerow(["summary",
                         json.dumps({"mean": mean, "std_error": se,
                                     "closed_form": closed,
                                     "paper_bound": paper_bound})])
    print(f"example {args.example}: mean Lp {mean:.4f} +- {se:.4f} "
          f"(closed form {closed:.4f}, bound {paper_bound:.4f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wtnorm",
                                     description="weighted trace-norm completion harness")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="reconstruction simulations")
    simsub = sim.add_subparsers(dest="subcommand", required=True)

    sc = simsub.add_parser("samplecomplexity",
                           help="samples needed to hit a target error")
    sc.add_argument("--n", type=_int_list, default=[60, 120])
    sc.add_argument("--target-error", type=float, default=0.1)
    sc.add_argument("--weightings", default="uniform,smoothed_empirical")
    sc.add_argument("--trials", type=int, default=100)
    sc.add_argument("--solver-iters", type=int, default=500)
    _common_flags(sc)
    sc.set_defaults(func=_cmd_samplecomplexity, parser=sc)

    ee = simsub.add_parser("excesserror", help="error across sample sizes and noise")
    ee.add_argument("--n", type=int, default=200)
    ee.add_argument("--nu", type=_float_list, default=[0.05, 0.1])
    ee.add_argument("--s-grid", type=_int_list, default=[800, 1600, 3200, 6400])
    ee.add_argument("--weightings", default="uniform,smoothed_empirical")
    ee.add_argument("--trials", type=int, default=20)
    ee.add_argument("--solver-iters", type=int, default=500)
    _common_flags(ee)
    ee.set_defaults(func=_cmd_excesserror, parser=ee)

    sw = sub.add_parser("sweep", help="hyperparameter sweeps")
    swsub = sw.add_subparsers(dest="subcommand", required=True)
    sm = swsub.add_parser("smoothing", help="test RMSE across smoothing levels")
    sm.add_argument("--n", type=int, default=64)
    sm.add_argument("--alphas", type=_float_list, default=[1.0, 0.9, 0.5, 0.3, 0.0])
    sm.add_argument("--k", type=_int_list, default=[10])
    sm.add_argument("--s", type=int, default=None)
    sm.add_argument("--trials", type=int, default=10)
    sm.add_argument("--test-size", type=int, default=10000)
    sm.add_argument("--obs-noise", type=float, default=0.35)
    _common_flags(sm)
    sm.set_defaults(func=_cmd_sweep_smoothing, parser=sm)

    tr = sub.add_parser("transductive", help="pool-split evaluation of in-ball ERM")
    tr.add_argument("--n", type=int, default=40)
    tr.add_argument("--pool", type=int, default=800)
    tr.add_argument("--r", type=float, default=4.0)
    tr.add_argument("--loss", choices=["squared", "absolute", "clipped_absolute"],
                    default="squared")
    tr.add_argument("--trials", type=int, default=20)
    _common_flags(tr)
    tr.set_defaults(func=_cmd_transductive, parser=tr)

    ft = sub.add_parser("fit", help="fit one model from a sample CSV and weights JSON")
    ft.add_argument("--samples", type=Path, required=True)
    ft.add_argument("--weights", type=Path, required=True)
    ft.add_argument("--solver", choices=["proximal", "sgd"], default="proximal")
    ft.add_argument("--lam", type=float, default=0.0)
    ft.add_argument("--rank", type=int, default=None)
    ft.add_argument("--iters", type=int, default=200)
    ft.add_argument("--step", type=float, default=0.005)
    _common_flags(ft)
    ft.set_defaults(func=_cmd_fit, parser=ft)

    rd = sub.add_parser("rademacher", help="Monte-Carlo complexity estimates")
    rd.add_argument("--dist", type=Path, default=None,
                    help="distribution JSON; omit for uniform --n")
    rd.add_argument("--n", type=int, default=50)
    rd.add_argument("--s", type=_int_list, default=[250, 500, 1000, 2000, 4000])
    rd.add_argument("--r", type=float, default=1.0)
    rd.add_argument("--draws", type=int, default=64)
    rd.add_argument("--alpha", type=float, default=None,
                    help="smooth the weights before estimating")
    _common_flags(rd)
    rd.set_defaults(func=_cmd_rademacher, parser=rd)

    ad = sub.add_parser("adversarial", help="lower-bound construction trials")
    ad.add_argument("--example", type=int, choices=[1, 2], required=True)
    ad.add_argument("--n", type=int, default=60)
    ad.add_argument("--s", type=int, default=1800)
    ad.add_argument("--trials", type=int, default=200)
    _common_flags(ad)
    ad.set_defaults(func=_cmd_adversarial, parser=ad)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_config(args, args.parser)
    args.out.mkdir(parents=True, exist_ok=True)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
