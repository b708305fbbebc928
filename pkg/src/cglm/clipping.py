"""Clipping functions and the variance-function sublevel sets they map into.

A clipping function sends the linear predictor ``x^T beta`` to a canonical
parameter.  The soft clip ``eta(t) = c - log(1 + exp(c - t))`` is
1-Lipschitz, strictly increasing, and has range ``(-inf, c)``; it is used to
keep the canonical parameter away from a pole (``c = r0 - delta``) or away
from the fast growth of ``A''`` at ``+inf`` (``c = C0``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expfam import ExpFamilyMember, log_var

__all__ = [
    "Interval",
    "ClippingFn",
    "ClipConfigError",
    "CertificationError",
    "NotAnIntervalError",
    "M0Certificate",
    "identity",
    "soft_clip_upper",
    "soft_clip_at_pole",
    "default_clip",
    "make_clip",
    "eval_clip",
    "ia_interval",
    "certify_clipping",
]

DEFAULT_DELTA = 1e-4
DEFAULT_C0 = 1e3


class ClipConfigError(ValueError):
    """Clip range not contained in the canonical domain."""


class CertificationError(ValueError):
    """``A''`` is unbounded on the clip range."""


class NotAnIntervalError(ValueError):
    """The sublevel set ``{t : A''(t) <= b}`` is not a single interval."""


@dataclass(frozen=True)
class Interval:
    """Real interval with open/closed ends; ``lo > hi`` encodes the empty set."""

    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    @classmethod
    def empty(cls) -> "Interval":
        return cls(1.0, 0.0)

    @property
    def is_empty(self) -> bool:
        if self.lo > self.hi:
            return True
        return self.lo == self.hi and not (self.lo_closed and self.hi_closed)

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.is_empty:
            return np.zeros(t.shape, dtype=bool)
        above = (t >= self.lo) if self.lo_closed else (t > self.lo)
        below = (t <= self.hi) if self.hi_closed else (t < self.hi)
        return above & below

    def issubset(self, other: "Interval") -> bool:
        if self.is_empty:
            return True
        if other.is_empty:
            return False
        lo_ok = self.lo > other.lo or (self.lo == other.lo and (other.lo_closed or not self.lo_closed))
        hi_ok = self.hi < other.hi or (self.hi == other.hi and (other.hi_closed or not self.hi_closed))
        return lo_ok and hi_ok

    def __str__(self):
        if self.is_empty:
            return "{}"
        return "%s%g, %g%s" % ("[" if self.lo_closed else "(", self.lo, self.hi,
                               "]" if self.hi_closed else ")")


REAL_LINE = Interval(-math.inf, math.inf)


@dataclass(frozen=True)
class ClippingFn:
    """``kind`` is ``identity`` or ``soft``; a soft clip has range ``(-inf, upper)``.

    ``label`` records how the upper end was chosen (``c0`` or ``pole``) and
    ``c0``/``r0``/``delta`` keep the user-facing parameters.
    """

    kind: str
    upper: float = math.inf
    label: str = "identity"
    c0: float | None = None
    r0: float | None = None
    delta: float | None = None
    lipschitz_bound: float = field(default=1.0)

    @property
    def range(self) -> Interval:
        if self.kind == "identity":
            return REAL_LINE
        return Interval(-math.inf, self.upper)

    def __call__(self, t):
        return eval_clip(self, t)


def identity() -> ClippingFn:
    return ClippingFn("identity")


def soft_clip_upper(c0: float) -> ClippingFn:
    """``eta(t) = c0 - log(1 + exp(-t + c0))``."""
    return ClippingFn("soft", upper=float(c0), label="c0", c0=float(c0))


def soft_clip_at_pole(r0: float, delta: float) -> ClippingFn:
    """``eta(t) = (r0 - delta) - log(1 + exp(-t + r0 - delta))``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return ClippingFn("soft", upper=float(r0) - float(delta), label="pole",
                      r0=float(r0), delta=float(delta))


def default_clip(member: ExpFamilyMember, delta: float = DEFAULT_DELTA,
                 c0: float = DEFAULT_C0) -> ClippingFn:
    """Standard pairing of a family with its clipping function."""
    if member.kind in ("bernoulli", "gaussian"):
        return identity()
    if member.kind == "poisson":
        return soft_clip_upper(c0)
    return soft_clip_at_pole(member.pole, delta)


def make_clip(member: ExpFamilyMember, kind: str | None = None, c0: float | None = None,
              delta: float | None = None) -> ClippingFn:
    """Resolve config keys ``clip.kind``, ``clip.c0``, ``clip.delta``."""
    kind = (kind or "default").lower()
    if kind == "default":
        return default_clip(member, DEFAULT_DELTA if delta is None else delta,
                            DEFAULT_C0 if c0 is None else c0)
    if kind == "identity":
        return identity()
    if kind in ("soft_clip_upper", "upper"):
        return soft_clip_upper(DEFAULT_C0 if c0 is None else c0)
    if kind in ("soft_clip_at_pole", "pole"):
        if member.pole is None:
            raise ClipConfigError(f"{member.kind} has no pole to clip against")
        return soft_clip_at_pole(member.pole, DEFAULT_DELTA if delta is None else delta)
    raise ClipConfigError(f"unknown clip kind {kind!r}")


def eval_clip(fn: ClippingFn, t):
    t = np.asarray(t, dtype=float)
    if fn.kind == "identity":
        out = t * 1.0
    else:
        c = fn.upper
        # c - softplus(c - t), written to stay accurate for t >> c and t << c
        out = c - np.logaddexp(0.0, c - t)
    return float(out) if out.ndim == 0 else out


def clip_derivative(fn: ClippingFn, t):
    t = np.asarray(t, dtype=float)
    if fn.kind == "identity":
        return np.ones_like(t)
    return 1.0 / (1.0 + np.exp(t - fn.upper))


def ia_interval(member: ExpFamilyMember, b: float) -> Interval:
    """Sublevel set ``{t in domain : A''(t) <= b}`` in closed form."""
    if not b > 0:
        raise ValueError("b must be positive")
    lo, hi = member.theta_domain
    if math.isinf(b):
        return Interval(lo, hi)
    k = member.kind
    if k == "gaussian":
        return REAL_LINE if b >= 1.0 else Interval.empty()
    if k == "bernoulli":
        if b >= 0.25:
            return REAL_LINE
        raise NotAnIntervalError(
            f"bernoulli: {{t : A''(t) <= {b}}} is a union of two rays (A'' peaks at 1/4)")
    if k == "poisson":
        return Interval(-math.inf, math.log(b), hi_closed=True)
    if k in ("exponential", "laplace"):
        return Interval(-math.inf, -1.0 / math.sqrt(b), hi_closed=True)
    if k == "pareto":
        return Interval(-math.inf, -1.0 - 1.0 / math.sqrt(b), hi_closed=True)
    # negbinomial: smaller root of b u^2 - (2b + q) u + b = 0, u = e^t
    q = member.q
    u = 2 * b / ((2 * b + q) + math.sqrt(q * q + 4 * b * q))
    return Interval(-math.inf, math.log(u), hi_closed=True)


@dataclass(frozen=True)
class M0Certificate:
    """``log_m0`` stores ``log M0`` so huge clip constants stay representable."""

    log_m0: float
    log_sup_var: float
    checked_on: str

    @property
    def m0(self) -> float:
        return math.exp(self.log_m0) if self.log_m0 < 709 else math.inf

    @property
    def m0_squared(self) -> float:
        return math.exp(2 * self.log_m0) if 2 * self.log_m0 < 709 else math.inf


def _log_sup_var(member: ExpFamilyMember, rng_: Interval) -> tuple[float, str]:
    k = member.kind
    if k == "gaussian":
        return 0.0, "closed form: A'' = 1"
    if k == "bernoulli":
        if rng_.hi > 0.0:
            return math.log(0.25), "closed form: max A'' = 1/4 at t = 0"
        return float(log_var(member, rng_.hi)), "closed form: A'' increasing below 0, sup at range end"
    if math.isinf(rng_.hi):
        raise CertificationError(
            f"{k}: A'' is unbounded as t -> +inf on the clip range {rng_}")
    # A'' increases towards +inf / the pole for every remaining family
    return float(log_var(member, rng_.hi)), f"endpoint limit: A'' increasing, sup at t -> {rng_.hi:g}"


def certify_clipping(fn: ClippingFn, member: ExpFamilyMember, n_check: int = 10_000,
                     seed: int = 0) -> M0Certificate:
    """Smallest ``M0`` with the clip range inside ``I_A(M0**2 / 2)``.

    Also checks monotonicity and the Lipschitz bound of ``fn`` on random pairs.
    """
    lo, hi = member.theta_domain
    domain = Interval(lo, hi)
    if not fn.range.issubset(domain):
        raise ClipConfigError(
            f"clip range {fn.range} is not inside the {member.kind} domain {domain}"
            + (f" (pole r0 = {member.pole})" if member.pole is not None else ""))
    log_sup, how = _log_sup_var(member, fn.range)
    log_m0 = 0.5 * (math.log(2.0) + log_sup)

    rng = np.random.default_rng(seed)
    centre = 0.0 if fn.kind == "identity" else fn.upper
    t1 = centre + 20.0 * rng.standard_normal(n_check)
    t2 = centre + 20.0 * rng.standard_normal(n_check)
    e1, e2 = eval_clip(fn, t1), eval_clip(fn, t2)
    lo_t, hi_t = np.minimum(t1, t2), np.maximum(t1, t2)
    e_lo, e_hi = eval_clip(fn, lo_t), eval_clip(fn, hi_t)
    # far above the clip level both values round to c, so strictness is only
    # testable where the guaranteed increase exceeds float resolution
    gain = clip_derivative(fn, hi_t) * (hi_t - lo_t)
    resolvable = gain > 64 * np.finfo(float).eps * np.maximum(1.0, np.abs(e_hi))
    if np.any(e_lo > e_hi) or np.any(e_lo[resolvable] >= e_hi[resolvable]):
        raise CertificationError("clip function is not strictly increasing")
    if np.any(np.abs(e1 - e2) > fn.lipschitz_bound * np.abs(t1 - t2) + 1e-9):
        raise CertificationError("clip function exceeds its declared Lipschitz bound")
    return M0Certificate(log_m0=log_m0, log_sup_var=log_sup, checked_on=how)

