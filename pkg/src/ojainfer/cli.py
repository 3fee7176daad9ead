"""Command-line surface.

Exit codes: 0 success, 1 validation error (bad flags, bad inputs, violated
preconditions), 2 runtime failure. All randomness is keyed by --seed, with
the environment variable OJA_INFER_SEED as a fallback.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments
from ._parallel import default_threads
from .asymvar import build_r0_v, ck_diagnostic, empirical_hajek_covariance, estimate_mtilde, with_rn
from .bootstrap import BootstrapConfig, bootstrap_run, bootstrap_variance
from .core import DegenerateGapError, SeedSpec, eigendecompose, sample_covariance
from .hoeffding import residual_decomposition
from .inference import build_ci
from .io import (
    RunManifest,
    content_hash_config,
    content_hash_file,
    read_csv,
    write_csv,
    write_results,
)
from .oja import OjaConfig, estimate_gap, gaussian_unit, learning_rate, oja_boosted, oja_run
from .synth import SynthSpec, build_sigma, mask_missing, sample, vector_sampler
from .varest import VarEstConfig, ojavarest
from .core import psd_sqrt

SUBCOMMANDS = ("synth", "oja", "varest", "bootstrap", "coverage", "bench", "oracle", "asymvar")


def _default_seed() -> int:
    env = os.environ.get("OJA_INFER_SEED")
    return int(env) if env else 0


def _progress(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ojainfer",
        description="Streaming PCA with per-coordinate uncertainty estimates.",
    )
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (default: $OJA_INFER_SEED or 0)")
    parser.add_argument("--threads", type=int, default=default_threads(),
                        help="worker cap for parallel trials (results are identical for any value)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress messages")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset as CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--c", type=float, default=0.01)
    p.add_argument("--scale", type=float, default=5.0)
    p.add_argument("--mask-rate", type=float, default=0.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("oja", help="single streaming pass over a CSV dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--center", action="store_true")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("varest", help="per-coordinate variance estimates for a CSV dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--center", action="store_true")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--m1", type=int, default=None)
    p.add_argument("--m2", type=int, default=None)
    p.add_argument("--preset", choices=["paper-experiments"], default=None)
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--boosted", action="store_true",
                   help="compute the proxy vector by batched aggregation instead of one pass")
    p.add_argument("--level", type=float, default=None,
                   help="also emit confidence intervals at this level")
    p.add_argument("--ci-scale", choices=["batch", "full"], default="full",
                   help="interval width scale; 'full' matches the proxy vector's own fluctuation scale")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bootstrap", help="multiplier-bootstrap variance for a CSV dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--center", action="store_true")
    p.add_argument("--b", type=int, default=20)
    p.add_argument("--law", choices=["exponential", "normal"], default="exponential")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out", required=True)

    p = sub.add_parser("coverage", help="repeated-trial coverage experiment on synthetic data")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--methods", default="ojavarest,bootstrap:1,bootstrap:20")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--preset", choices=["paper-experiments"], default="paper-experiments")
    p.add_argument("--m1", type=int, default=None)
    p.add_argument("--m2", type=int, default=None)
    p.add_argument("--ci-scale", choices=["batch", "full"], default="full",
                   help="interval width scale; 'full' matches the proxy vector's own fluctuation scale")
    p.add_argument("--tracked", default="1,2", help="1-based coordinates to track in records")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="wall-clock comparison of the variance estimators")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--methods", default="ojavarest,bootstrap:1,bootstrap:10,bootstrap:20")
    p.add_argument("--out", required=True)

    p = sub.add_parser("oracle", help="exact residual decomposition on a small synthetic instance")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("asymvar", help="limit covariance of the synthetic family")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--mc-samples", type=int, default=200000)
    p.add_argument("--n", type=int, default=None,
                   help="also include the finite-horizon block at this length")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--trials", type=int, default=0,
                   help="Monte-Carlo trials for the empirical covariance check (0 to skip)")
    p.add_argument("--out", required=True)
    return parser


def _load_dataset(args):
    data = read_csv(args.input, center=args.center)
    return data, content_hash_file(args.input)


def _resolve_gap(args, data) -> float:
    if args.gap is not None:
        if args.gap <= 0:
            raise ValueError(f"--gap must be positive (got {args.gap})")
        return args.gap
    return estimate_gap(data)


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _cmd_synth(args, seed: SeedSpec) -> dict:
    spec = SynthSpec(d=args.d, beta=args.beta, c=args.c, scale=args.scale, seed=seed)
    sigma, eigen = build_sigma(spec)
    root = psd_sqrt(sigma)
    data = sample(spec, root, args.n)
    if args.mask_rate > 0.0:
        data = mask_missing(data, args.mask_rate, seed.child(1))
    write_csv(data, args.out)
    return {"n": args.n, "d": args.d, "beta": args.beta, "c": args.c,
            "scale": args.scale, "mask_rate": args.mask_rate,
            "gap": eigen.gap}


def _cmd_oja(args, seed: SeedSpec) -> dict:
    data, digest = _load_dataset(args)
    gap = _resolve_gap(args, data)
    eta = learning_rate(data.n, gap, args.alpha)
    u0 = gaussian_unit(seed.rng(), data.d)
    result = oja_run(data, eta, u0)
    _write_json(args.out, {
        "estimate": result.estimate.tolist(),
        "eta": result.eta_used,
        "gap": gap,
        "alpha": args.alpha,
        "samples_consumed": result.samples_consumed,
    })
    return {"input": args.input, "input_sha256": digest, "gap": gap,
            "alpha": args.alpha, "center": args.center}


def _compute_vtilde(args, data, gap, seed: SeedSpec):
    eta_n = learning_rate(data.n, gap, args.alpha)
    if getattr(args, "boosted", False):
        cfg = OjaConfig(alpha=args.alpha, gap=gap, seed=seed.child(1))
        return oja_boosted(data, args.delta, cfg).estimate, eta_n
    u0 = gaussian_unit(seed.child(1).rng(), data.d)
    return oja_run(data, eta_n, u0).estimate, eta_n


def _cmd_varest(args, seed: SeedSpec, threads) -> dict:
    data, digest = _load_dataset(args)
    gap = _resolve_gap(args, data)
    m1 = 3 if args.preset == "paper-experiments" and args.m1 is None else args.m1
    vtilde, eta_n = _compute_vtilde(args, data, gap, seed)
    cfg = VarEstConfig(delta=args.delta, m1=m1, m2=args.m2, alpha=args.alpha, seed=seed.child(2))
    result = ojavarest(data, args.delta, vtilde, gap, cfg, threads=threads)
    if args.format == "csv":
        rows = result.csv_rows()
        write_results(rows, "csv", args.out)
    else:
        payload = result.to_dict()
        if args.level is not None:
            band = build_ci(vtilde, result.batch_scale_sigma2(), args.level,
                            scale_mode=args.ci_scale, eta_b=result.eta_b,
                            eta_n=eta_n, gap=gap)
            payload["ci"] = {
                "level": args.level,
                "scale_mode": args.ci_scale,
                "lower": band.lower().tolist(),
                "upper": band.upper().tolist(),
            }
        _write_json(args.out, payload)
    return {"input": args.input, "input_sha256": digest, "gap": gap,
            "delta": args.delta, "m1": m1, "m2": args.m2, "alpha": args.alpha,
            "boosted": args.boosted, "ci_scale": args.ci_scale, "samples_unused": result.samples_unused}


def _cmd_bootstrap(args, seed: SeedSpec) -> dict:
    data, digest = _load_dataset(args)
    gap = _resolve_gap(args, data)
    eta = learning_rate(data.n, gap, args.alpha)
    u0_t = gaussian_unit(seed.child(1).rng(), data.d)
    vtilde = oja_run(data, eta, u0_t).estimate
    cfg = BootstrapConfig(b=args.b, law=args.law, eta=eta, seed=seed.child(2))
    u0 = gaussian_unit(seed.child(3).rng(), data.d)
    replicas = bootstrap_run(data, cfg, u0)
    sigma2 = bootstrap_variance(replicas, vtilde)
    if args.format == "csv":
        rows = [{"coordinate": k + 1, "sigma2": float(sigma2[k])} for k in range(data.d)]
        write_results(rows, "csv", args.out)
    else:
        _write_json(args.out, {"sigma2": sigma2.tolist(), "b": args.b,
                               "law": args.law, "eta": eta, "gap": gap,
                               "vtilde": vtilde.tolist()})
    return {"input": args.input, "input_sha256": digest, "b": args.b,
            "law": args.law, "gap": gap, "alpha": args.alpha}


def _cmd_coverage(args, seed: SeedSpec, threads) -> dict:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    tracked = tuple(int(c) for c in args.tracked.split(","))
    m1 = 3 if args.preset == "paper-experiments" and args.m1 is None else args.m1
    vcfg = VarEstConfig(delta=args.delta, m1=m1, m2=args.m2)
    outcome = experiments.run_coverage_experiment(
        n=args.n, d=args.d, beta=args.beta, trials=args.trials, methods=methods,
        level=args.level, delta=args.delta, seed=seed, varest_config=vcfg,
        ci_scale=args.ci_scale, tracked=tracked, threads=threads,
    )
    write_results(outcome.table_rows(tracked), "csv", args.out)
    records_path = str(args.out) + ".records.csv"
    write_results([r.to_row() for r in outcome.records], "csv", records_path)
    return outcome.config


def _cmd_bench(args, seed: SeedSpec) -> dict:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    records = experiments.run_bench(n=args.n, d=args.d, methods=methods,
                                    beta=args.beta, seed=seed)
    write_results([r.to_row() for r in records], "csv", args.out)
    return {"n": args.n, "d": args.d, "beta": args.beta, "methods": list(methods)}


def _cmd_oracle(args, seed: SeedSpec) -> dict:
    spec = SynthSpec(d=args.d, beta=args.beta, seed=seed)
    sigma, eigen = build_sigma(spec)
    root = psd_sqrt(sigma)
    data = sample(spec, root, args.n, rng=seed.child(0).rng())
    mats = data.samples[:, :, None] * data.samples[:, None, :]
    u0 = gaussian_unit(seed.child(1).rng(), args.d)
    vtilde = eigendecompose(sample_covariance(data)).leading
    report = residual_decomposition(mats, sigma, eigen, args.eta, u0, vtilde)
    report.validate()
    _write_json(args.out, report.to_dict())
    return {"n": args.n, "d": args.d, "eta": args.eta, "beta": args.beta}


def _cmd_asymvar(args, seed: SeedSpec) -> dict:
    spec = SynthSpec(d=args.d, beta=args.beta, seed=seed)
    sigma, eigen = build_sigma(spec)
    root = psd_sqrt(sigma)
    sampler = vector_sampler(spec, root)
    moments = estimate_mtilde(sampler, eigen, args.mc_samples, seed.child(1))
    asym = build_r0_v(moments, eigen)
    payload = {"moments": moments.to_dict(), "asymptotic": asym.to_dict(),
               "eigenvalues": eigen.eigenvalues.tolist()}
    if args.n is not None:
        gap = eigen.require_gap()
        eta = learning_rate(args.n, gap, args.alpha)
        asym = with_rn(asym, moments, eigen, args.n, eta)
        payload["asymptotic"] = asym.to_dict()
        if args.trials > 0:
            emp = empirical_hajek_covariance(sampler, eigen, args.n, eta,
                                             args.trials, seed.child(2))
            payload["empirical"] = emp.to_dict()
            payload["ck"] = ck_diagnostic(np.diag(emp.matrix), eta, gap, moments.m2).tolist()
    _write_json(args.out, payload)
    return {"d": args.d, "beta": args.beta, "mc_samples": args.mc_samples,
            "n": args.n, "trials": args.trials}


def cli_dispatch(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    seed_value = args.seed if args.seed is not None else _default_seed()
    seed = SeedSpec(seed_value)
    handlers = {
        "synth": lambda: _cmd_synth(args, seed),
        "oja": lambda: _cmd_oja(args, seed),
        "varest": lambda: _cmd_varest(args, seed, args.threads),
        "bootstrap": lambda: _cmd_bootstrap(args, seed),
        "coverage": lambda: _cmd_coverage(args, seed, args.threads),
        "bench": lambda: _cmd_bench(args, seed),
        "oracle": lambda: _cmd_oracle(args, seed),
        "asymvar": lambda: _cmd_asymvar(args, seed),
    }
    config_echo = {k: v for k, v in vars(args).items() if k not in ("quiet", "threads")}
    try:
        if getattr(args, "input", None):
            digest = content_hash_file(args.input)
        else:
            digest = content_hash_config(config_echo)
        manifest = RunManifest(subcommand=args.subcommand, config=config_echo,
                               seed=seed_value, content_hash=digest).start()
        _progress(args, f"ojainfer {args.subcommand}: starting (seed={seed_value})")
        extra = handlers[args.subcommand]()
        manifest.config.update(extra or {})
        manifest.finish()
        if getattr(args, "out", None):
            manifest.write_beside(args.out)
        _progress(args, f"ojainfer {args.subcommand}: done -> {getattr(args, 'out', '')}")
        return 0
    except (ValueError, DegenerateGapError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
