"""Canonical rank-one exponential families.

Every member is written as ``f(y | t) = h(y) exp(t T(y) - A(t))`` with the
log-partition ``A`` in closed form.  Means and variances of the sufficient
statistic are ``A'(t)`` and ``A''(t)``; the KL divergence between two members
of the same family is the Bregman divergence of ``A``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, gammaln, log1p, log_expit, logsumexp

__all__ = [
    "FAMILIES",
    "DomainError",
    "SupportError",
    "ExpFamilyMember",
    "make_family",
    "log_partition",
    "mean_var",
    "log_var",
    "log_density",
    "kl_divergence",
    "sample",
    "sample_one",
    "cgf_centered",
]

FAMILIES = ("bernoulli", "poisson", "negbinomial", "exponential", "gaussian",
            "pareto", "laplace")

LOG_2PI = math.log(2.0 * math.pi)


class DomainError(ValueError):
    """Canonical parameter outside the domain of the log-partition."""


class SupportError(ValueError):
    """Observation outside the support of the family."""


@dataclass(frozen=True)
class ExpFamilyMember:
    """One canonical exponential family.

    Parameters
    ----------
    kind : str
        One of :data:`FAMILIES`.
    q : int
        Known number of failures (negative binomial only).
    sigma : float
        Known standard deviation (gaussian only).  Observations are rescaled
        by ``sigma`` so the log-partition stays ``t**2 / 2``.
    q_min : float
        Known minimum (pareto only).
    """

    kind: str
    q: int = 1
    sigma: float = 1.0
    q_min: float = 1.0

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown family {self.kind!r}; expected one of {FAMILIES}")
        if self.kind == "negbinomial" and (int(self.q) != self.q or self.q < 1):
            raise ValueError("negbinomial needs a positive integer q")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.q_min <= 0:
            raise ValueError("q_min must be positive")

    @property
    def pole(self) -> Optional[float]:
        """Finite singularity of ``A``, or None when ``A`` is entire."""
        if self.kind in ("negbinomial", "exponential", "laplace"):
            return 0.0
        if self.kind == "pareto":
            return -1.0
        return None

    @property
    def theta_domain(self) -> tuple[float, float]:
        """Open canonical domain ``(lo, hi)``."""
        pole = self.pole
        return (-math.inf, math.inf if pole is None else pole)

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("bernoulli", "poisson", "negbinomial")

    def in_domain(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        lo, hi = self.theta_domain
        return (t > lo) & (t < hi) if math.isfinite(hi) else np.isfinite(t)

    def check_domain(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        ok = self.in_domain(t)
        if not np.all(ok):
            bad = np.asarray(t)[~ok].ravel()[0]
            if self.pole is None:
                raise DomainError(f"{self.kind}: canonical parameter {bad} is not finite")
            raise DomainError(f"{self.kind}: canonical parameter {bad} is at or beyond "
                              f"the pole r0 = {self.pole}")
        return t

    def sufficient_stat(self, y) -> np.ndarray:
        y = self.check_support(y)
        if self.kind == "gaussian":
            return y / self.sigma
        if self.kind == "pareto":
            return np.log(y)
        if self.kind == "laplace":
            return np.abs(y)
        return y.astype(float)

    def log_base_measure(self, y) -> np.ndarray:
        y = self.check_support(y)
        if self.kind == "poisson":
            return -gammaln(y + 1.0)
        if self.kind == "negbinomial":
            return gammaln(y + self.q) - gammaln(y + 1.0) - gammaln(self.q)
        if self.kind == "gaussian":
            z = y / self.sigma
            return -0.5 * z * z - 0.5 * LOG_2PI - math.log(self.sigma)
        return np.zeros_like(y, dtype=float)

    def in_support(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        finite = np.isfinite(y)
        if self.kind == "bernoulli":
            return (y == 0) | (y == 1)
        if self.kind in ("poisson", "negbinomial"):
            return finite & (y >= 0) & (np.floor(y) == y)
        if self.kind == "exponential":
            return finite & (y >= 0)
        if self.kind == "pareto":
            return finite & (y >= self.q_min)
        return finite

    def check_support(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        ok = self.in_support(y)
        if not np.all(ok):
            bad = y[~ok].ravel()[0]
            raise SupportError(f"{self.kind}: observation {bad} outside the support")
        return y


def make_family(kind: str, **params) -> ExpFamilyMember:
    """Build a member from its config name, ignoring irrelevant parameters."""
    kind = kind.lower()
    keep = {"negbinomial": ("q",), "gaussian": ("sigma",), "pareto": ("q_min",)}
    kwargs = {k: params[k] for k in keep.get(kind, ()) if params.get(k) is not None}
    return ExpFamilyMember(kind, **kwargs)


def _log1mexp(t):
    # log(1 - exp(t)) for t < 0
    t = np.asarray(t, dtype=float)
    return np.where(t > -math.log(2.0), np.log(-np.expm1(t)), log1p(-np.exp(t)))


def _result(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def log_partition(member: ExpFamilyMember, t):
    """Log-partition ``A(t)``."""
    t = member.check_domain(t)
    k = member.kind
    if k == "bernoulli":
        out = np.logaddexp(0.0, t)
    elif k == "poisson":
        out = np.exp(t)
    elif k == "gaussian":
        out = 0.5 * t * t
    elif k == "negbinomial":
        out = -member.q * _log1mexp(t)
    elif k == "exponential":
        out = -np.log(-t)
    elif k == "laplace":
        out = -np.log(-t / 2.0)
    else:
        out = -np.log(-1.0 - t) + (1.0 + t) * math.log(member.q_min)
    return _result(out)


def mean_var(member: ExpFamilyMember, t):
    """Closed-form ``(A'(t), A''(t))``."""
    t = member.check_domain(t)
    k = member.kind
    if k == "bernoulli":
        p = expit(t)
        mean, var = p, p * expit(-t)
    elif k == "poisson":
        mean = var = np.exp(t)
    elif k == "gaussian":
        mean, var = t * 1.0, np.ones_like(t)
    elif k == "negbinomial":
        u = np.exp(t)
        om = -np.expm1(t)
        mean, var = member.q * u / om, member.q * u / (om * om)
    elif k in ("exponential", "laplace"):
        mean, var = -1.0 / t, 1.0 / (t * t)
    else:
        s = -1.0 - t
        mean, var = 1.0 / s + math.log(member.q_min), 1.0 / (s * s)
    return _result(mean), _result(var)


def log_var(member: ExpFamilyMember, t):
    """``log A''(t)``, finite even where ``A''`` overflows."""
    t = member.check_domain(t)
    k = member.kind
    if k == "bernoulli":
        out = log_expit(t) + log_expit(-t)
    elif k == "poisson":
        out = t * 1.0
    elif k == "gaussian":
        out = np.zeros_like(t)
    elif k == "negbinomial":
        out = math.log(member.q) + t - 2.0 * _log1mexp(t)
    elif k in ("exponential", "laplace"):
        out = -2.0 * np.log(-t)
    else:
        out = -2.0 * np.log(-1.0 - t)
    return _result(out)


def log_density(member: ExpFamilyMember, y, t):
    """``log h(y) + T(y) t - A(t)``."""
    t = member.check_domain(t)
    out = member.log_base_measure(y) + member.sufficient_stat(y) * t - log_partition(member, t)
    return _result(out)


def kl_divergence(member: ExpFamilyMember, t_star, t):
    """KL divergence ``D(t_star || t)`` of ``f(.|t)`` from the truth ``f(.|t_star)``.

    Evaluated in a cancellation-free form per family; equals
    ``A(t) - A(t_star) - (t - t_star) A'(t_star)``.
    """
    t_star = member.check_domain(t_star)
    t = member.check_domain(t)
    k = member.kind
    delta = t - t_star
    if k == "gaussian":
        out = 0.5 * delta * delta
    elif k == "poisson":
        out = np.exp(t_star) * (np.expm1(delta) - delta)
    elif k == "bernoulli":
        # softplus(t) - softplus(t*) - delta * sigmoid(t*)
        p = expit(t_star)
        out = (np.logaddexp(0.0, t) - np.logaddexp(0.0, t_star)) - delta * p
        # p log(p/p') + (1-p) log((1-p)/(1-p')) is nonnegative termwise-safe
        alt = p * (log_expit(t_star) - log_expit(t)) + (1.0 - p) * (log_expit(-t_star) - log_expit(-t))
        out = np.where(np.abs(delta) < 1.0, alt, out)
    elif k in ("exponential", "laplace", "pareto"):
        shift = 1.0 if k == "pareto" else 0.0
        r_minus_1 = (t - t_star) / (t_star + shift)
        out = r_minus_1 - log1p(r_minus_1)
    else:
        q = member.q
        # -q[log(1-e^t) - log(1-e^t*)] - q delta e^t*/(1-e^t*)
        lt, ls = _log1mexp(t), _log1mexp(t_star)
        out = -q * (lt - ls) - q * delta * np.exp(t_star - ls)
    out = np.maximum(out, 0.0)
    return _result(out)


def sample(member: ExpFamilyMember, t, rng: np.random.Generator):
    """Draw one observation per entry of ``t``."""
    t = member.check_domain(t)
    shape = np.shape(t)
    k = member.kind
    if k == "bernoulli":
        y = (rng.random(shape) < expit(t)).astype(float)
    elif k == "poisson":
        y = rng.poisson(np.exp(t)).astype(float)
    elif k == "gaussian":
        y = member.sigma * (t + rng.standard_normal(shape))
    elif k == "negbinomial":
        odds = np.exp(t) / -np.expm1(t)
        y = rng.poisson(rng.gamma(member.q, odds)).astype(float)
    elif k == "exponential":
        y = -np.log1p(-rng.random(shape)) / (-t)
    elif k == "laplace":
        u = rng.random(shape) - 0.5
        y = np.sign(u) * np.log1p(-2.0 * np.abs(u)) / t
    else:
        alpha = -1.0 - t
        y = member.q_min * np.exp(-np.log1p(-rng.random(shape)) / alpha)
    return float(y) if y.ndim == 0 else y


def sample_one(member: ExpFamilyMember, t: float, rng: np.random.Generator) -> float:
    return float(sample(member, float(t), rng))


def cgf_centered(member: ExpFamilyMember, t_star, t, alpha):
    """Cumulant generating function of the centered log-likelihood term.

    For ``Z = (T - A'(t_star)) (t - t_star)`` under ``f(.|t_star)``,
    ``log E exp(alpha Z) = D(t_star || t_star + alpha (t - t_star))``.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any((alpha <= 0) | (alpha >= 1)):
        raise ValueError("alpha must lie in (0, 1)")
    t_star = np.asarray(t_star, dtype=float)
    mix = t_star + alpha * (np.asarray(t, dtype=float) - t_star)
    return kl_divergence(member, t_star, mix)


def log_normalizer_check(member: ExpFamilyMember, t: float, tol: float = 1e-16) -> float:
    """``log sum_y f(y|t)`` for a discrete family, truncated once terms drop
    below ``tol`` times the running sum past the mode."""
    if not member.is_discrete:
        raise ValueError("summation check applies to discrete families")
    if member.kind == "bernoulli":
        return float(logsumexp(log_density(member, np.array([0.0, 1.0]), t)))
    mean = mean_var(member, t)[0]
    block = 256
    start = 0
    total = -math.inf
    while True:
        ys = np.arange(start, start + block, dtype=float)
        lp = log_density(member, ys, t)
        total = np.logaddexp(total, logsumexp(lp))
        if ys[-1] > mean and lp[-1] < total + math.log(tol):
            return float(total)
        start += block
