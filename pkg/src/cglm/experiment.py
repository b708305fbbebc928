"""Replicated theorem-check experiments over a grid of sample sizes.

For every ``n`` the design and the truth are fixed (seeded by the design
seed), the identifiability constants and thresholds are computed once, and
each replication draws fresh data, runs the sampler and records the
indicator outcomes.  Cells are seeded from ``(master_seed, cell index)`` so
results do not depend on the number of worker processes.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ExperimentConfig
from .icgeom import default_radius, lemma3_check, membership
from .model import CglmModel, SparseCoef, generate_dataset, make_design
from .posterior import marginal_likelihood_mc, merge_chains, posterior_summaries, run_chains
from .prior import (an_rules, build_prior, choose_lambda, constants, order_failures,
                    thresholds)

__all__ = [
    "TruthSetup",
    "ExperimentReport",
    "ROW_SCHEMA",
    "build_truth",
    "run_cell",
    "run_experiment",
    "compute_aggregates",
    "compute_verdicts",
    "resolve_threads",
]

ROW_SCHEMA = [
    ("cell", int), ("n", int), ("replication", int), ("seed", str), ("status", str),
    ("d", int), ("s_star", int), ("b_n", int), ("a", float), ("lambda", float),
    ("beta_star_l1", float), ("in_bn", int), ("lemma3_ok", int),
    ("phi1_star", float), ("phibar0_3b", float), ("m_ax", float), ("e1", float), ("e2", float),
    ("dim_threshold", float), ("radius_l1", float), ("thm1_log_bound", float),
    ("log_marginal", float), ("log_marginal_se", float),
    ("p_dim_exceeds", float), ("p_strict_superset", float), ("p_outside_radius", float),
    ("posterior_mean_l1_error", float), ("mean_l1_error", float), ("mean_size", float),
    ("modal_model", str), ("T1", int), ("T2", int), ("C1", int), ("T3", int),
]
ROW_FIELDS = [k for k, _ in ROW_SCHEMA]


@dataclass
class TruthSetup:
    n_index: int
    n: int
    d: int
    b_n: int
    model: CglmModel
    beta_star: SparseCoef
    ok: bool
    diagnostic: str
    info: dict = field(default_factory=dict)
    prior: object = None
    thresholds: object = None


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list
    setups: list
    aggregates: dict
    verdicts: list
    timings: list

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts if v["passed"] is not None)


def _truth_rng(cfg: ExperimentConfig, n: int, d: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(cfg.design["seed"]), n, d, stream]))


def make_truth(cfg: ExperimentConfig, n: int, d: int) -> tuple[CglmModel, SparseCoef]:
    """Design plus a truth on the first ``s*`` indices of a seeded permutation,
    magnitudes uniform on the configured range with random signs."""
    rng = _truth_rng(cfg, n, d, 0)
    design = make_design(cfg.design["kind"], n, d, rng, float(cfg.design.get("scale", 1.0)))
    model = CglmModel(cfg.member, cfg.clip, design)
    lo, hi = cfg.raw["beta_star"]["magnitude"]
    support = rng.permutation(d)[:cfg.s_star]
    mags = rng.uniform(lo, hi, size=cfg.s_star)
    signs = rng.choice(np.array([-1.0, 1.0]), size=cfg.s_star)
    return model, SparseCoef(d, tuple(int(j) for j in support), mags * signs)


def resolve_a(rule, e1: float | None, b_n: int, offset) -> float:
    if not isinstance(rule, str):
        return float(rule)
    if rule == "thm2":
        return 1.0 + (1.0 if offset is None else float(offset))
    if e1 is None:
        raise ConfigError(f"prior.a rule {rule!r} needs a compatibility estimate")
    a2, a_cor1, a_thm3 = an_rules(e1, b_n)
    base = a_cor1 if rule == "cor1" else a_thm3
    return base + (0.0 if offset is None else float(offset))


def build_truth(cfg: ExperimentConfig, n_index: int) -> TruthSetup:
    n, d, b_n = cfg.n_grid[n_index], cfg.d_values[n_index], cfg.b_n_values[n_index]
    model, beta_star = make_truth(cfg, n, d)
    s = cfg.s_star
    base = constants(model, b_n, s, enforce_paper_regime=cfg.raw["enforce_paper_regime"])
    ic = cfg.ic
    radius = ic["radius"] if ic["radius"] is not None else default_radius(base.b_n_star, d)
    mem = membership(model, beta_star, b_n, radius, ic["restarts"], _truth_rng(cfg, n, d, 1),
                     ic["tolerance"])
    lem = lemma3_check(model, beta_star, s, n, d, ic["lemma3_grid"])
    phi1 = mem.phi1_star.value if mem.phi1_star is not None else math.nan
    phib = mem.phibar0_3s.value if mem.phibar0_3s is not None else math.nan
    info = {"n": n, "d": d, "b_n": b_n, "ic_radius": radius, "in_b1": mem.in_b1,
            "in_b2": mem.in_b2, "in_bn": mem.in_bn, "phi1_star": phi1, "phibar0_3b": phib,
            "lemma3_ok": bool(lem), "lemma3_detail": lem.reason,
            "beta_star": {"support": list(beta_star.support),
                          "values": [float(v) for v in beta_star.values]}}
    if not mem.in_bn:
        why = "support size outside (0, b_n]" if not mem.in_b2 else "compatibility estimate not positive"
        return TruthSetup(n_index, n, d, b_n, model, beta_star, False,
                          f"truth outside the identifiable class: {why}", info)
    # the candidate class is the truth itself, so phi_B is the estimate at S*
    bundle = constants(model, b_n, s, phi=phi1, phibar0=phib, phi1_star=phi1,
                       enforce_paper_regime=cfg.raw["enforce_paper_regime"])
    a = resolve_a(cfg.prior["a"], bundle.e1, b_n, cfg.prior.get("a_offset"))
    lam = choose_lambda(bundle, cfg.prior["lambda_rule"])
    prior = build_prior(d, a, lam)
    thr = thresholds(bundle, prior, s, phi1, n, d, beta_star.l1)
    info.update({"constants": bundle.as_dict(), "a": a, "lambda": lam, "log_cn": prior.log_cn,
                 "thresholds": thr.__dict__.copy()})
    return TruthSetup(n_index, n, d, b_n, model, beta_star, True, "", info, prior, thr)


def _empty_row(cfg: ExperimentConfig, setup: TruthSetup, rep: int, cell: int) -> dict:
    row = dict.fromkeys(ROW_FIELDS)
    row.update({"cell": cell, "n": setup.n, "replication": rep,
                "seed": f"{cfg.master_seed}:{cell}", "d": setup.d, "s_star": cfg.s_star,
                "b_n": setup.b_n, "beta_star_l1": setup.beta_star.l1,
                "in_bn": int(setup.info.get("in_bn", False)),
                "lemma3_ok": int(setup.info.get("lemma3_ok", False)),
                "phi1_star": setup.info.get("phi1_star"), "phibar0_3b": setup.info.get("phibar0_3b")})
    return row


def run_cell(cfg: ExperimentConfig, setup: TruthSetup, rep: int, cell: int) -> tuple[dict, float]:
    start = time.perf_counter()
    row = _empty_row(cfg, setup, rep, cell)
    if not setup.ok:
        row["status"] = "aborted: " + setup.diagnostic
        return row, time.perf_counter() - start
    info, thr = setup.info, setup.thresholds
    row.update({"a": info["a"], "lambda": info["lambda"], "m_ax": info["constants"]["m_ax"],
                "e1": info["constants"]["e1"], "e2": info["constants"]["e2"],
                "dim_threshold": thr.dim_threshold, "radius_l1": thr.radius_l1,
                "thm1_log_bound": thr.thm1_log_bound})
    ss = np.random.SeedSequence(cfg.master_seed, spawn_key=(cell,))
    data_ss, chain_ss, mc_ss = ss.spawn(3)
    data = generate_dataset(setup.model, setup.beta_star, np.random.default_rng(data_ss),
                            seed_record=row["seed"])
    checks = cfg.checks
    thr_p = cfg.verdicts["prob_threshold"]
    if "T1" in checks:
        est = marginal_likelihood_mc(setup.model, data, setup.prior, setup.beta_star,
                                     cfg.raw["mc_draws"], np.random.default_rng(mc_ss))
        row["log_marginal"] = est.log_estimate
        row["log_marginal_se"] = est.log_standard_error
        row["T1"] = int(est.log_estimate >= thr.thm1_log_bound - cfg.raw["log_slack"])
    if any(c in checks for c in ("T2", "C1", "T3")):
        chain = merge_chains(run_chains(setup.model, data, setup.prior, cfg.chain_settings,
                                        chain_ss, cfg.chains))
        dim_thr = thr.dim_threshold if math.isfinite(thr.dim_threshold) else math.inf
        summ = posterior_summaries(chain, setup.beta_star, thr.radius_l1, dim_thr)
        row.update({"p_dim_exceeds": summ.prob_dim_exceeds,
                    "p_strict_superset": summ.prob_strict_superset,
                    "p_outside_radius": summ.prob_outside_radius,
                    "posterior_mean_l1_error": summ.posterior_mean_l1_error,
                    "mean_l1_error": summ.mean_l1_error, "mean_size": summ.mean_size,
                    "modal_model": ";".join(str(j) for j in summ.modal_model)})
        if "T2" in checks:
            row["T2"] = int(summ.prob_dim_exceeds <= thr_p)
        if "C1" in checks:
            row["C1"] = int(summ.prob_strict_superset <= thr_p)
        if "T3" in checks:
            row["T3"] = int(summ.prob_outside_radius <= thr_p)
    row["status"] = "ok"
    return row, time.perf_counter() - start


def _quartiles(x: np.ndarray) -> tuple[float, float, float]:
    if x.size == 0:
        return math.nan, math.nan, math.nan
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return float(q1), float(med), float(q3)


def _mean(x: np.ndarray) -> float:
    return float(np.mean(x)) if x.size else math.nan


def compute_aggregates(rows: list[dict], margin: float) -> dict:
    """Per-``n`` frequencies, means and quartiles, computed from rows alone."""
    out = {}
    for n in sorted({r["n"] for r in rows}):
        rs = [r for r in rows if r["n"] == n]
        ok = [r for r in rs if r["status"] == "ok"]

        def col(key):
            return np.array([r[key] for r in ok if r[key] is not None and not
                             (isinstance(r[key], float) and math.isnan(r[key]))], dtype=float)

        d, s = rs[0]["d"], rs[0]["s_star"]
        agg = {"n": n, "d": d, "rows": len(rs), "completed": len(ok)}
        for c in ("T1", "T2", "C1", "T3"):
            agg[f"freq_{c}"] = _mean(col(c))
        agg["t1_required"] = 1.0 - 1.0 / (s * math.log(d)) - margin
        for key in ("p_dim_exceeds", "p_strict_superset", "p_outside_radius", "log_marginal"):
            agg[f"mean_{key}"] = _mean(col(key))
        for key in ("posterior_mean_l1_error", "mean_size"):
            q1, med, q3 = _quartiles(col(key))
            agg[f"{key}_q1"], agg[f"{key}_median"], agg[f"{key}_q3"] = q1, med, q3
        out[str(n)] = agg
    return out


def compute_verdicts(aggregates: dict, checks, verdict_cfg: dict) -> list[dict]:
    thr = verdict_cfg["prob_threshold"]
    tol = verdict_cfg["trend_tolerance"]
    ns = sorted(int(k) for k in aggregates)
    agg = [aggregates[str(n)] for n in ns]
    out = []

    def ok(x, bound):
        return x is not None and not math.isnan(x) and x <= bound

    if "T1" in checks:
        good = all(a["freq_T1"] >= a["t1_required"] for a in agg if not math.isnan(a["freq_T1"]))
        good = good and all(not math.isnan(a["freq_T1"]) for a in agg)
        out.append({"check": "T1_frequency", "passed": good,
                    "detail": "frequency of log marginal >= bound meets 1 - 1/(s* log d) - margin at every n",
                    "values": {str(a["n"]): [a["freq_T1"], a["t1_required"]] for a in agg}})
    if "T2" in checks:
        vals = [a["mean_p_dim_exceeds"] for a in agg]
        level = all(ok(v, thr) for v in vals)
        trend = all(ok(b, a + tol) for a, b in zip(vals, vals[1:]))
        out.append({"check": "T2_dimension", "passed": level and trend,
                    "detail": f"mean P(|supp| > threshold) <= {thr} at every n and nonincreasing in n",
                    "values": dict(zip(map(str, ns), vals))})
    if "C1" in checks:
        v = agg[-1]["mean_p_strict_superset"]
        out.append({"check": "C1_superset", "passed": ok(v, thr),
                    "detail": f"mean P(supp strictly contains S*) <= {thr} at the largest n",
                    "values": {str(ns[-1]): v}})
    if "T3" in checks:
        vals = [a["mean_p_outside_radius"] for a in agg]
        out.append({"check": "T3_radius", "passed": all(ok(v, thr) for v in vals),
                    "detail": f"mean P(||beta - beta*||_1 > radius) <= {thr} at every n",
                    "values": dict(zip(map(str, ns), vals))})
        ratio = verdict_cfg["trend_ratio"]
        if len(ns) >= 2:
            first, last = agg[0]["posterior_mean_l1_error_median"], agg[-1]["posterior_mean_l1_error_median"]
            passed = ok(last, ratio * first)
            detail = f"median posterior-mean l1 error at n = {ns[-1]} <= {ratio} x that at n = {ns[0]}"
        else:
            first = last = agg[0]["posterior_mean_l1_error_median"]
            passed, detail = None, "trend needs at least two sample sizes"
        out.append({"check": "T3_trend", "passed": passed, "detail": detail,
                    "values": {"first": first, "last": last,
                               "ratio": (last / first) if first else math.nan}})
    return out


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("CGLM_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    return threads


_WORKER_SETUPS: list = []
_WORKER_CFG = None


def _init_worker(cfg, setups):
    global _WORKER_CFG, _WORKER_SETUPS
    _WORKER_CFG, _WORKER_SETUPS = cfg, setups


def _worker(task):
    n_index, rep, cell = task
    return run_cell(_WORKER_CFG, _WORKER_SETUPS[n_index], rep, cell)


def validate_orders(cfg: ExperimentConfig) -> None:
    """Fail fast on order violations at any grid point."""
    problems = []
    for n, d, b in zip(cfg.n_grid, cfg.d_values, cfg.b_n_values):
        for f in order_failures(n, d, b, cfg.s_star, cfg.raw["enforce_paper_regime"]):
            problems.append(f"n = {n}: {f}")
    if problems:
        raise ConfigError("; ".join(problems))


def run_experiment(cfg: ExperimentConfig, threads: int | None = None, log=None) -> ExperimentReport:
    validate_orders(cfg)
    threads = resolve_threads(threads)
    setups = []
    for i in range(len(cfg.n_grid)):
        setups.append(build_truth(cfg, i))
        if log:
            log(f"n = {cfg.n_grid[i]}: setup {'ok' if setups[-1].ok else setups[-1].diagnostic}")
    tasks = [(i, r, i * cfg.replications + r)
             for i in range(len(cfg.n_grid)) for r in range(cfg.replications)]
    if threads == 1:
        results = [run_cell(cfg, setups[i], r, c) for i, r, c in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker,
                                 initargs=(cfg, setups)) as pool:
            results = list(pool.map(_worker, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    rows = [r for r, _ in results]
    timings = [(row["cell"], t) for row, (_, t) in zip(rows, results)]
    aggregates = compute_aggregates(rows, cfg.verdicts["t1_margin"])
    verdicts = compute_verdicts(aggregates, cfg.checks, cfg.verdicts)
    return ExperimentReport(cfg, rows, [s.info for s in setups], aggregates, verdicts, timings)
