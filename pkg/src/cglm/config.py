"""Experiment configuration: JSON in, fully resolved and validated settings out.

Every rule is resolved before any cell runs, so a bad key fails the whole
experiment up front rather than half-way through.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .clipping import ClipConfigError, make_clip
from .expfam import FAMILIES, make_family
from .posterior import ChainSettings

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "DEFAULTS"]

CHECKS = ("T1", "T2", "C1", "T3")
A_RULES = ("thm2", "cor1", "thm3")
LAMBDA_RULES = ("lo", "hi", "geomean")
DESIGN_KINDS = ("gaussian", "rademacher", "identity_blocks")

DEFAULTS = {
    "name": "experiment",
    "family": {"kind": "bernoulli"},
    "clip": {"kind": "default"},
    "design": {"kind": "gaussian", "seed": 0, "scale": 1.0},
    "n_grid": [50],
    "d_rule": {"factor": 2.0},
    "s_star": 2,
    "beta_star": {"magnitude": [1.0, 2.0]},
    "budget": {"b_n": None},
    "prior": {"a": "thm2", "a_offset": None, "lambda_rule": "geomean"},
    "ic": {"radius": None, "restarts": 8, "tolerance": 1e-6, "lemma3_grid": 101},
    "sampler": {"iters": 4000, "burn_in": 1000, "thin": 1, "walk_scale": 0.5, "chains": 1,
                "moves": {"add": 0.2, "delete": 0.2, "swap": 0.1, "walk": 0.5}},
    "mc_draws": 10000,
    "replications": 2,
    "master_seed": 0,
    "output_dir": "out",
    "enforce_paper_regime": True,
    "checks": list(CHECKS),
    "log_slack": 0.0,
    "verdicts": {"prob_threshold": 0.1, "t1_margin": 0.1, "trend_ratio": 0.85, "trend_tolerance": 0.0},
}


class ConfigError(ValueError):
    """Invalid or unresolvable configuration."""


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and k not in ("family", "clip", "d_rule", "budget"):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {path + k!r} must be an object")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    member: object
    clip: object
    n_grid: tuple
    d_values: tuple
    b_n_values: tuple
    s_star: int
    chain_settings: ChainSettings
    chains: int
    checks: tuple
    replications: int
    master_seed: int
    output_dir: str
    extra: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def design(self) -> dict:
        return self.raw["design"]

    @property
    def prior(self) -> dict:
        return self.raw["prior"]

    @property
    def ic(self) -> dict:
        return self.raw["ic"]

    @property
    def verdicts(self) -> dict:
        return self.raw["verdicts"]

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw["master_seed"] = seed
        if output_dir is not None:
            raw["output_dir"] = output_dir
        return parse_config(raw)


def _positive_int(x, key: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int) or x < 1:
        raise ConfigError(f"{key} must be a positive integer, got {x!r}")
    return x


def parse_config(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    raw = _merge(DEFAULTS, obj)

    fam = dict(raw["family"])
    unknown = set(fam) - {"kind", "q", "sigma", "q_min"}
    if unknown:
        raise ConfigError(f"unknown family keys {sorted(unknown)}")
    kind = fam.pop("kind", None)
    if kind not in FAMILIES:
        raise ConfigError(f"family.kind must be one of {FAMILIES}, got {kind!r}")
    try:
        member = make_family(kind, **fam)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"family: {exc}") from exc
    clip_cfg = dict(raw["clip"])
    unknown = set(clip_cfg) - {"kind", "c0", "delta"}
    if unknown:
        raise ConfigError(f"unknown clip keys {sorted(unknown)}")
    try:
        clip = make_clip(member, clip_cfg.get("kind"), clip_cfg.get("c0"), clip_cfg.get("delta"))
    except (ClipConfigError, ValueError) as exc:
        raise ConfigError(f"clip: {exc}") from exc

    if raw["design"]["kind"] not in DESIGN_KINDS:
        raise ConfigError(f"design.kind must be one of {DESIGN_KINDS}")
    n_grid = raw["n_grid"]
    if not isinstance(n_grid, list) or not n_grid:
        raise ConfigError("n_grid must be a nonempty list")
    n_grid = tuple(_positive_int(n, "n_grid entry") for n in n_grid)

    d_rule = raw["d_rule"]
    if "values" in d_rule:
        d_values = tuple(_positive_int(d, "d_rule.values entry") for d in d_rule["values"])
        if len(d_values) != len(n_grid):
            raise ConfigError("d_rule.values must have one entry per n")
    elif "factor" in d_rule:
        c = float(d_rule["factor"])
        if not c > 0:
            raise ConfigError("d_rule.factor must be positive")
        d_values = tuple(int(math.ceil(c * n)) for n in n_grid)
    else:
        raise ConfigError("d_rule needs 'values' or 'factor'")

    s_star = _positive_int(raw["s_star"], "s_star")
    b_rule = raw["budget"].get("b_n")
    if b_rule is None:
        b_n_values = (s_star,) * len(n_grid)
    elif isinstance(b_rule, list):
        b_n_values = tuple(_positive_int(b, "budget.b_n entry") for b in b_rule)
        if len(b_n_values) != len(n_grid):
            raise ConfigError("budget.b_n list must have one entry per n")
    else:
        b_n_values = (_positive_int(b_rule, "budget.b_n"),) * len(n_grid)
    mag = raw["beta_star"]["magnitude"]
    if not (isinstance(mag, list) and len(mag) == 2 and 0 < mag[0] <= mag[1]):
        raise ConfigError("beta_star.magnitude must be [lo, hi] with 0 < lo <= hi")

    a = raw["prior"]["a"]
    if isinstance(a, str):
        if a not in A_RULES:
            raise ConfigError(f"prior.a must be a number or one of {A_RULES}")
    elif isinstance(a, bool) or not isinstance(a, (int, float)) or not a > 0:
        raise ConfigError("prior.a must be positive")
    lam = raw["prior"].get("lambda_rule")
    if isinstance(lam, str):
        if lam not in LAMBDA_RULES:
            raise ConfigError(f"prior.lambda_rule must be a number or one of {LAMBDA_RULES}")
    elif isinstance(lam, bool) or not isinstance(lam, (int, float)) or not lam > 0:
        raise ConfigError("prior.lambda_rule must be positive when numeric")

    checks = tuple(raw["checks"])
    if not checks or any(c not in CHECKS for c in checks):
        raise ConfigError(f"checks must be a nonempty subset of {CHECKS}")
    s = raw["sampler"]
    moves = s["moves"]
    if set(moves) != {"add", "delete", "swap", "walk"}:
        raise ConfigError("sampler.moves needs add, delete, swap and walk")
    try:
        settings = ChainSettings(iters=s["iters"], burn_in=s["burn_in"], thin=s["thin"],
                                 moves=(moves["add"], moves["delete"], moves["swap"], moves["walk"]),
                                 walk_scale=s["walk_scale"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sampler: {exc}") from exc
    chains = _positive_int(s["chains"], "sampler.chains")
    if "T1" in checks:
        mc = raw["mc_draws"]
        if isinstance(mc, bool) or not isinstance(mc, int) or mc < 1000:
            raise ConfigError("mc_draws must be an integer >= 1000 when T1 is checked")
    ic = raw["ic"]
    _positive_int(ic["restarts"], "ic.restarts")
    if ic["radius"] is not None and not ic["radius"] > 0:
        raise ConfigError("ic.radius must be positive")
    if _positive_int(ic["lemma3_grid"], "ic.lemma3_grid") < 2:
        raise ConfigError("ic.lemma3_grid must be at least 2")
    if isinstance(ic["tolerance"], bool) or not isinstance(ic["tolerance"], (int, float)):
        raise ConfigError("ic.tolerance must be numeric")
    reps = _positive_int(raw["replications"], "replications")
    seed = raw["master_seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError("master_seed must be an unsigned 64-bit integer")
    for k in ("prob_threshold", "t1_margin", "trend_ratio", "trend_tolerance"):
        if not isinstance(raw["verdicts"][k], (int, float)):
            raise ConfigError(f"verdicts.{k} must be numeric")
    return ExperimentConfig(raw=raw, member=member, clip=clip, n_grid=n_grid, d_values=d_values,
                            b_n_values=b_n_values, s_star=s_star, chain_settings=settings,
                            chains=chains, checks=checks, replications=reps, master_seed=seed,
                            output_dir=str(raw["output_dir"]))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(obj)
