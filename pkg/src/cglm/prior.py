"""Spike-and-Laplace complexity prior and the truth-free constants built on it.

The prior picks a model size ``s`` with weight ``C d^{-a s}``, a model of
that size uniformly, and iid Laplace(``lam``) values on it.  Everything here
is evaluated in log space: ``d^{-(a+6)s}`` underflows for realistic ``d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammainc, gammaln, logsumexp

from .model import CglmModel, SparseCoef

__all__ = [
    "ComplexityPrior",
    "ConstantsBundle",
    "Thresholds",
    "OrderViolation",
    "build_prior",
    "log_prior_joint",
    "sample_prior",
    "constants",
    "order_failures",
    "choose_lambda",
    "validate_lambda",
    "an_rules",
    "thresholds",
    "laplace_ball_log_mass",
    "poisson_tail_log_mass",
    "lemma1_log_mass_lower",
]

class OrderViolation(ValueError):
    """One or more of the sample-size/dimension order conditions failed."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))


def log_binom(d: int, s: int) -> float:
    return float(gammaln(d + 1) - gammaln(s + 1) - gammaln(d - s + 1))


@dataclass(frozen=True)
class ComplexityPrior:
    d: int
    a: float
    lam: float
    log_cn: float

    def log_size_weight(self, s):
        """``log omega(s) = log C - a s log d``."""
        return self.log_cn - self.a * np.asarray(s, dtype=float) * math.log(self.d)

    def size_probabilities(self) -> np.ndarray:
        return np.exp(self.log_size_weight(np.arange(self.d + 1)))


def build_prior(d: int, a: float, lam: float) -> ComplexityPrior:
    if d < 2:
        raise ValueError("d must be at least 2")
    if not a > 0:
        raise ValueError("a must be positive")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    s = np.arange(d + 1)
    log_cn = -float(logsumexp(-a * s * math.log(d)))
    return ComplexityPrior(d=d, a=float(a), lam=float(lam), log_cn=log_cn)


def log_prior_joint(prior: ComplexityPrior, S, beta: SparseCoef) -> float:
    """Log density of ``(S, beta_S)``; ``-inf`` when ``supp(beta)`` is not inside ``S``."""
    S = tuple(sorted(int(j) for j in S))
    if any(j < 0 or j >= prior.d for j in S) or len(set(S)) != len(S):
        raise ValueError(f"model {S} is not a subset of [0, {prior.d})")
    if beta.dim != prior.d:
        raise ValueError("coefficient dimension does not match the prior")
    if not set(beta.support) <= set(S):
        return -math.inf
    k = len(S)
    return (float(prior.log_size_weight(k)) - log_binom(prior.d, k)
            + k * math.log(prior.lam / 2.0) - prior.lam * beta.l1)


def sample_prior(prior: ComplexityPrior, rng: np.random.Generator) -> tuple[tuple, SparseCoef]:
    s = int(rng.choice(prior.d + 1, p=_size_probs(prior)))
    S = tuple(sorted(int(j) for j in rng.choice(prior.d, size=s, replace=False)))
    values = rng.laplace(0.0, 1.0 / prior.lam, size=s)
    return S, SparseCoef(prior.d, S, values)


def _size_probs(prior: ComplexityPrior) -> np.ndarray:
    p = prior.size_probabilities()
    return p / p.sum()


@dataclass(frozen=True)
class ConstantsBundle:
    """Truth-free constants for one (model, budget, sparsity) configuration."""

    n: int
    d: int
    s_star: int
    b_n: int
    m0: float
    m1: float
    m_ax: float
    lambda_lo: float
    lambda_hi: float
    u_n: float
    b_n_star: float
    eps_local: float
    phi: Optional[float] = None
    phibar0: Optional[float] = None
    e1: Optional[float] = None
    e2: Optional[float] = None
    e1_star: Optional[float] = None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def e1_value(m_ax: float, phi: float) -> float:
    return 8.0 * (1.0 + 49.0 * m_ax ** 2 / (8.0 * phi ** 2))


def e2_value(m_ax: float, phibar0: float) -> float:
    return 6.0 + 12.0 * m_ax ** 2 / phibar0 ** 2


def order_failures(n: int, d: int, b_n: int, s_star: int,
                   enforce_paper_regime: bool = False) -> list[str]:
    """Each violated sample-size/dimension condition, described."""
    failures = []
    if not 1 <= s_star <= b_n:
        failures.append(f"need 1 <= s* <= b_n, got s* = {s_star}, b_n = {b_n}")
    if not b_n * math.log(d) < n:
        failures.append(f"need b_n log d < n, got {b_n} * log {d} = {b_n * math.log(d):.4g} >= {n}")
    if not 3 * b_n < d:
        failures.append(f"need 3 b_n < d, got 3 * {b_n} >= {d}")
    if enforce_paper_regime and not d > n:
        failures.append(f"need d > n (enforce_paper_regime is set), got d = {d}, n = {n}")
    return failures


def constants(model: CglmModel, b_n: int, s_star: int, phi: float | None = None,
              phibar0: float | None = None, phi1_star: float | None = None,
              enforce_paper_regime: bool = False) -> ConstantsBundle:
    """Constants ``M1``, ``M(A,X)``, the lambda window, ``U_n``, ``B_n*``, ``E1``, ``E2``.

    ``phi`` is the compatibility constant over the candidate class (enters
    ``E1``), ``phibar0`` the dimension constant at ``3 b_n`` (enters ``E2``),
    ``phi1_star`` the constant at the true support (enters ``E1*``).
    """
    n, d = model.n, model.d
    failures = order_failures(n, d, b_n, s_star, enforce_paper_regime)
    if failures:
        raise OrderViolation(failures)

    m0 = model.m0cert.m0
    m1 = max(1.0, m0)
    m_ax = model.design.max_abs * m1
    if not m_ax > 0:
        raise ValueError("M(A, X) vanishes: the design is identically zero")
    log_d = math.log(d)
    eps_local = math.sqrt(s_star * log_d / n)
    return ConstantsBundle(
        n=n, d=d, s_star=s_star, b_n=b_n, m0=m0, m1=m1, m_ax=m_ax,
        lambda_lo=m_ax / d, lambda_hi=m_ax * math.sqrt(log_d),
        u_n=m_ax * math.sqrt(n * log_d), b_n_star=eps_local / m_ax, eps_local=eps_local,
        phi=phi, phibar0=phibar0,
        e1=None if phi is None else e1_value(m_ax, phi),
        e2=None if phibar0 is None else e2_value(m_ax, phibar0),
        e1_star=None if phi1_star is None else e1_value(m_ax, phi1_star),
    )


def choose_lambda(bundle: ConstantsBundle, rule: str | float) -> float:
    """``lo``, ``hi`` or ``geomean`` of the admissible window, or an explicit value."""
    if isinstance(rule, (int, float)):
        lam = float(rule)
        validate_lambda(bundle, lam)
        return lam
    if rule == "lo":
        return bundle.lambda_lo
    if rule == "hi":
        return bundle.lambda_hi
    if rule == "geomean":
        return math.sqrt(bundle.lambda_lo * bundle.lambda_hi)
    raise ValueError(f"unknown lambda rule {rule!r}")


def validate_lambda(bundle: ConstantsBundle, lam: float) -> None:
    if not bundle.lambda_lo <= lam <= bundle.lambda_hi:
        raise ValueError(f"lambda = {lam:g} outside [{bundle.lambda_lo:g}, {bundle.lambda_hi:g}]")


def an_rules(e1: float, b_n: int) -> tuple[float, float, float]:
    """Lower limits on ``a``: dimension control (strict), superset control, contraction."""
    if not e1 > 0:
        raise ValueError("E1 must be positive")
    return 1.0, 1.0 + 2.0 * b_n * e1, 1.0 + e1


@dataclass(frozen=True)
class Thresholds:
    dim_threshold: float
    radius_l1: float
    lemma1_log_bound: float
    thm1_log_bound: float


def dim_threshold(s_star: int, a: float, m_ax: float, phi1_star: float) -> float:
    if not a > 1:
        raise ValueError("the dimension threshold needs a > 1")
    return s_star * (1.0 + 8.0 / (a - 1.0) * (1.0 + 49.0 * m_ax ** 2 / (8.0 * phi1_star ** 2)))


def radius_l1(s_star: int, a: float, e2: float, m_ax: float, n: int, d: int) -> float:
    return 2.0 * s_star * (1.0 + a + e2) / m_ax * math.sqrt(math.log(d) / n)


def thresholds(bundle: ConstantsBundle, prior: ComplexityPrior, s_star: int,
               phi1_star: float | None, n: int, d: int, beta_star_l1: float = 0.0) -> Thresholds:
    """Dimension cut-off, contraction radius and the two log lower bounds.

    Entries whose inputs are missing (no ``phi1_star``, no ``E2``, ``a <= 1``)
    come back as ``nan``.
    """
    if not phi1_star or prior.a <= 1:
        dim = math.nan
    else:
        dim = dim_threshold(s_star, prior.a, bundle.m_ax, phi1_star)
    rad = math.nan if bundle.e2 is None else radius_l1(s_star, prior.a, bundle.e2, bundle.m_ax, n, d)
    base = prior.log_cn - 0.5 - prior.lam * beta_star_l1
    log_d = math.log(d)
    return Thresholds(
        dim_threshold=dim,
        radius_l1=rad,
        lemma1_log_bound=base - (prior.a + 4.0) * s_star * log_d,
        thm1_log_bound=base - (prior.a + 6.0) * s_star * log_d,
    )


def laplace_ball_log_mass(s: int, lam: float, radius: float) -> float:
    """``log`` of the iid Laplace(``lam``) mass of the centred l1 ball, i.e.
    ``log P(Gamma(s, rate=lam) <= radius)``."""
    if s == 0:
        return 0.0
    p = float(gammainc(s, lam * radius))
    if p > 1e-280:
        return math.log(p)
    return poisson_tail_log_mass(s, lam * radius)


def poisson_tail_log_mass(s: int, x: float, tol: float = 1e-17) -> float:
    """``log sum_{j >= s} exp(-x) x^j / j!``, the chance that a rate-one Poisson
    process has at least ``s`` arrivals by time ``x``."""
    if s == 0:
        return 0.0
    if x <= 0:
        return -math.inf
    terms = []
    j = s
    log_term = -x + s * math.log(x) - gammaln(s + 1)
    while True:
        terms.append(log_term)
        j += 1
        log_term += math.log(x) - math.log(j)
        if j > x and log_term < logsumexp(terms) + math.log(tol):
            break
    return float(logsumexp(terms))


def lemma1_log_mass_lower(prior: ComplexityPrior, beta_star: SparseCoef, radius: float) -> float:
    """Lower bound on the log prior mass of the ``radius`` l1-ball around ``beta_star``.

    Keeps only the true model and applies the triangle inequality, which
    leaves the centred Laplace ball mass.
    """
    s = beta_star.s
    return (float(prior.log_size_weight(s)) - log_binom(prior.d, s)
            - prior.lam * beta_star.l1 + laplace_ball_log_mass(s, prior.lam, radius))
