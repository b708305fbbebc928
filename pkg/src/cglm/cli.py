"""Command-line entry point: ``cglm <subcommand> [--config PATH] [--seed U64] [--out DIR] [--threads N]``.

Exit codes: 0 success, 1 internal error, 2 configuration error,
3 theorem-check failure (``contract`` only).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .clipping import (CertificationError, ClipConfigError, NotAnIntervalError, certify_clipping,
                       eval_clip, ia_interval)
from .config import ConfigError, load_config, parse_config
from .expfam import (cgf_centered, kl_divergence, log_normalizer_check, log_partition, mean_var,
                     sample)
from .prior import OrderViolation

__all__ = ["main", "family_invariants"]

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_THEOREM = 0, 1, 2, 3


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cglm", description="Clipped GLM posterior toolkit")
    sub = p.add_subparsers(dest="command", required=True, metavar="subcommand")
    helps = {
        "validate-family": "run the exponential-family invariant suite",
        "check-clipping": "certify the configured clipping function",
        "constants": "print constants and compatibility estimates per sample size",
        "simulate": "one dataset, one posterior run, summaries and a trace plot",
        "contract": "full replicated experiment with verdicts",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", type=Path, help="JSON config (defaults apply when omitted)")
        s.add_argument("--seed", type=_u64, help="override master_seed")
        s.add_argument("--out", type=Path, help="override output_dir")
        s.add_argument("--threads", type=_positive, help="worker processes (falls back to CGLM_THREADS)")
    return p


def _load(args):
    cfg = load_config(args.config) if args.config else parse_config({})
    return cfg.with_overrides(seed=args.seed, output_dir=None if args.out is None else str(args.out))


def _probe_points(member, rng, count):
    lo, hi = member.theta_domain
    if math.isfinite(hi):
        return hi - 0.1 - 3.0 * rng.random(count)
    return rng.uniform(-3.0, 3.0, size=count)


def family_invariants(member, rng: np.random.Generator, count: int = 1000) -> list[tuple[str, bool, str]]:
    """Bregman identity, cgf bound, mean as derivative of ``A``, normalisation and
    the sample mean of the sufficient statistic."""
    out = []
    ts, tt = _probe_points(member, rng, count), _probe_points(member, rng, count)
    mean_s = mean_var(member, ts)[0]
    breg = log_partition(member, tt) - log_partition(member, ts) - (tt - ts) * mean_s
    kl = kl_divergence(member, ts, tt)
    err = float(np.max(np.abs(kl - breg) / np.maximum(1.0, np.abs(breg))))
    out.append(("kl_equals_bregman", err < 1e-8, f"max relative gap {err:.2e}"))
    alpha = rng.uniform(0.01, 0.99, size=count)
    slack = float(np.max(cgf_centered(member, ts, tt, alpha) - alpha * kl))
    out.append(("cgf_below_alpha_kl", slack <= 1e-12, f"max excess {slack:.2e}"))
    h = 1e-5
    num = (log_partition(member, ts + h) - log_partition(member, ts - h)) / (2 * h)
    err = float(np.max(np.abs(num - mean_s) / np.maximum(1.0, np.abs(mean_s))))
    out.append(("mean_is_derivative", err < 1e-5, f"max relative gap {err:.2e}"))
    t0 = float(ts[0])
    if member.is_discrete:
        z = log_normalizer_check(member, t0)
        out.append(("density_normalised", abs(z) < 1e-9, f"log total mass {z:.2e} at t = {t0:.3f}"))
    m, v = mean_var(member, t0)
    stats = member.sufficient_stat(sample(member, np.full(20000, t0), rng))
    if math.isfinite(v):
        z = abs(float(np.mean(stats)) - m) / math.sqrt(v / stats.size)
        out.append(("sample_mean", z < 5.0, f"|z| = {z:.2f} at t = {t0:.3f}"))
    return out


def _cmd_validate_family(cfg, args) -> int:
    rng = np.random.default_rng(cfg.master_seed)
    results = family_invariants(cfg.member, rng)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {cfg.member.kind:<12} {name:<22} {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_INTERNAL


def _cmd_check_clipping(cfg, args) -> int:
    cert = certify_clipping(cfg.clip, cfg.member)
    target = ia_interval(cfg.member, cert.m0_squared / 2.0) if math.isfinite(cert.m0_squared) else None
    rng = np.random.default_rng(cfg.master_seed)
    t = (cfg.clip.upper if cfg.clip.kind == "soft" else 0.0) + 20.0 * rng.standard_normal(10_000)
    eta = eval_clip(cfg.clip, t)
    contained = bool(np.all(target.contains(eta))) if target is not None else False
    report = {"family": cfg.member.kind, "clip": cfg.clip.kind, "clip_upper": cfg.clip.upper,
              "range": str(cfg.clip.range), "m0": cert.m0, "log_m0": cert.log_m0,
              "m0_squared": cert.m0_squared, "checked_on": cert.checked_on,
              "sublevel_set": str(target), "range_inside_sublevel_set": contained}
    from .report import json_safe
    print(json.dumps(json_safe(report), indent=2))
    return EXIT_OK if contained else EXIT_INTERNAL


def _cmd_constants(cfg, args) -> int:
    from .experiment import build_truth, validate_orders
    from .report import json_safe
    validate_orders(cfg)
    setups = [build_truth(cfg, i).info for i in range(len(cfg.n_grid))]
    text = json.dumps(json_safe(setups), indent=2, sort_keys=True)
    print(text)
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "constants.json").write_text(text + "\n")
    return EXIT_OK


def _cmd_simulate(cfg, args) -> int:
    from .experiment import build_truth, validate_orders
    from .model import generate_dataset, write_dataset_csv, write_design_csv
    from .plotting import plot_chain_trace
    from .posterior import merge_chains, posterior_summaries, run_chains, write_chain_csv
    from .report import json_safe
    validate_orders(cfg)
    setup = build_truth(cfg, 0)
    if not setup.ok:
        print(f"cannot simulate: {setup.diagnostic}", file=sys.stderr)
        return EXIT_CONFIG
    ss = np.random.SeedSequence(cfg.master_seed, spawn_key=(0,))
    data_ss, chain_ss, _ = ss.spawn(3)
    data = generate_dataset(setup.model, setup.beta_star, np.random.default_rng(data_ss))
    chain = merge_chains(run_chains(setup.model, data, setup.prior, cfg.chain_settings,
                                    chain_ss, cfg.chains))
    thr = setup.thresholds
    dim_thr = thr.dim_threshold if math.isfinite(thr.dim_threshold) else math.inf
    summ = posterior_summaries(chain, setup.beta_star, thr.radius_l1, dim_thr)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_design_csv(setup.model.design, out / "design.csv")
    write_dataset_csv(data, out / "dataset.csv")
    write_chain_csv(chain, setup.beta_star, out / "chain.csv")
    plot_chain_trace(chain, setup.beta_star, out / "chain_trace.png")
    doc = {"setup": setup.info, "summary": summ.__dict__, "acceptance": chain.acceptance_rates(),
           "walk_scale": chain.walk_scale}
    text = json.dumps(json_safe(doc), indent=2, sort_keys=True)
    (out / "summary.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_contract(cfg, args) -> int:
    from .experiment import run_experiment
    from .report import emit_outputs
    report = run_experiment(cfg, threads=args.threads,
                            log=lambda m: print(m, file=sys.stderr))
    emit_outputs(report, cfg.output_dir)
    for v in report.verdicts:
        state = "SKIP" if v["passed"] is None else ("PASS" if v["passed"] else "FAIL")
        print(f"{state}  {v['check']:<14} {v['detail']}")
    print(f"outputs in {cfg.output_dir}")
    return EXIT_OK if report.passed else EXIT_THEOREM


COMMANDS = {
    "validate-family": _cmd_validate_family,
    "check-clipping": _cmd_check_clipping,
    "constants": _cmd_constants,
    "simulate": _cmd_simulate,
    "contract": _cmd_contract,
}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, OrderViolation, ClipConfigError, CertificationError,
            NotAnIntervalError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # surfaced, not swallowed: message plus nonzero exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
