"""Compatibility constants of the clipped GLM and the local variance check.

Both constants are infima of ``sqrt(k D_n / n) / ||delta||_1`` ratios, where
``D_n`` is the KL sum between the fits at an anchor and at ``anchor + delta``.
The search writes ``delta = t u`` with ``u`` normalised so the l1 norm in
the denominator is one; ``t`` is then a scalar line search and ``u`` is
improved by adaptive coordinate moves.  Returned values are upper bounds on
the true infima over the ball ``||delta||_1 <= radius``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import comb

from .clipping import clip_derivative
from .expfam import kl_divergence, log_var, mean_var
from .model import CglmModel, SparseCoef, eta_vector

__all__ = [
    "ICEstimate",
    "Membership",
    "Lemma3Result",
    "phi1_ratio",
    "phibar0_ratio",
    "phi1_estimate",
    "phibar0_estimate",
    "membership",
    "phi_b",
    "lemma3_check",
    "default_radius",
]

CONE = 7.0
CONE_MARGIN = 1e-9
TAU_POS = 1e-6
ENUMERATE_LIMIT = 10_000
_T_GRID = np.geomspace(1e-6, 1.0, 24)


@dataclass(frozen=True)
class ICEstimate:
    value: float
    search_radius: float
    restarts: int
    minimizer: tuple
    converged: bool


def default_radius(b_n_star: float, d: int) -> float:
    return 10.0 * b_n_star * d


def _kl_sum(model: CglmModel, eta_a: np.ndarray, eta_b: np.ndarray) -> float:
    return float(np.sum(kl_divergence(model.member, eta_a, eta_b)))


def phi1_ratio(model: CglmModel, S, beta1: SparseCoef, beta2: SparseCoef) -> float:
    """``sqrt(|S| D_n(eta1 || eta2) / n) / ||(beta2 - beta1)_S||_1``."""
    S = list(S)
    diff = beta2.to_dense() - beta1.to_dense()
    denom = float(np.sum(np.abs(diff[S])))
    if denom == 0:
        raise ValueError("beta1 and beta2 agree on S")
    D = _kl_sum(model, eta_vector(model, beta1), eta_vector(model, beta2))
    return math.sqrt(len(S) * max(D, 0.0) / model.n) / denom


def phibar0_ratio(model: CglmModel, beta_star: SparseCoef, beta: SparseCoef, s: int) -> float:
    """``sqrt(s D_n(eta* || eta)) / (sqrt(n) ||beta - beta*||_1)``."""
    denom = float(np.sum(np.abs(beta.to_dense() - beta_star.to_dense())))
    if denom == 0:
        raise ValueError("beta equals beta_star")
    D = _kl_sum(model, eta_vector(model, beta_star), eta_vector(model, beta))
    return math.sqrt(s * max(D, 0.0) / model.n) / denom


class _RayProblem:
    """Ratio along rays ``anchor + t u`` for ``u`` living on a working set of columns."""

    def __init__(self, model: CglmModel, anchor: np.ndarray, cols: Sequence[int],
                 n_core: int, k: int, radius: float, cone: bool):
        self.model = model
        self.cols = np.asarray(cols, dtype=int)
        self.X = np.ascontiguousarray(model.design.entries[:, self.cols])
        self.lin_a = model.design.entries @ anchor
        self.eta_a = model.eta(self.lin_a)
        self.n_core = n_core  # first n_core working columns carry the l1 normalisation
        self.k = k
        self.radius = radius
        self.cone = cone

    def normalise(self, u: np.ndarray):
        core = float(np.sum(np.abs(u[:self.n_core])))
        if core == 0:
            return None
        u = u / core
        if self.cone and np.sum(np.abs(u[self.n_core:])) > CONE * (1.0 - CONE_MARGIN):
            return None
        return u

    def t_max(self, u: np.ndarray) -> float:
        return self.radius / float(np.sum(np.abs(u)))

    def ratios(self, xu: np.ndarray, ts: np.ndarray) -> np.ndarray:
        lin = self.lin_a[:, None] + xu[:, None] * ts[None, :]
        eta = self.model.eta(lin)
        D = np.sum(kl_divergence(self.model.member, self.eta_a[:, None], eta), axis=0)
        return np.sqrt(self.k * np.maximum(D, 0.0) / self.model.n) / ts

    def ratio(self, xu: np.ndarray, t: float) -> float:
        return float(self.ratios(xu, np.array([t]))[0])

    def best_t(self, u: np.ndarray, xatol: float = 1e-9) -> tuple[float, float]:
        xu = self.X @ u
        tm = self.t_max(u)
        ts = tm * _T_GRID
        vals = self.ratios(xu, ts)
        i = int(np.argmin(vals))
        best_t, best_v = float(ts[i]), float(vals[i])
        lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, ts.size - 1)]
        if hi > lo:
            res = minimize_scalar(lambda lt: self.ratio(xu, math.exp(lt)),
                                  bounds=(math.log(lo), math.log(hi)), method="bounded",
                                  options={"xatol": xatol})
            if res.fun < best_v:
                best_t, best_v = min(math.exp(res.x), tm), float(res.fun)
        return best_t, best_v

    def descend(self, u: np.ndarray, max_sweeps: int = 60, h_min: float = 1e-6):
        """Adaptive coordinate search on ``u`` with ``t`` re-optimised after each sweep."""
        t, val = self.best_t(u)
        h = np.full(u.size, 0.25 / max(self.n_core, 1))
        converged = False
        for _ in range(max_sweeps):
            for j in range(u.size):
                moved = False
                for sign in (1.0, -1.0):
                    cand = u.copy()
                    cand[j] += sign * h[j]
                    cand = self.normalise(cand)
                    if cand is None:
                        continue
                    tc = min(t, self.t_max(cand))
                    xc = self.X @ cand
                    vc = self.ratio(xc, tc)
                    if vc < val - 1e-15:
                        u, t, val, moved = cand, tc, vc, True
                        break
                h[j] = min(2.0 * h[j], 1.0) if moved else 0.5 * h[j]
            t, val = self.best_t(u, xatol=1e-4)
            if np.all(h < h_min):
                converged = True
                break
        t, val = self.best_t(u)
        return u, t, val, converged

    def point(self, anchor: np.ndarray, u: np.ndarray, t: float) -> tuple[SparseCoef, SparseCoef]:
        b2 = anchor.copy()
        b2[self.cols] += t * u
        return SparseCoef.from_dense(anchor), SparseCoef.from_dense(b2)


def _substreams(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in rng.integers(0, 2 ** 63, size=count)]


def _cone_candidates(problem_model: CglmModel, anchor: np.ndarray, S: list[int],
                     u_S: np.ndarray, limit: int) -> list[int]:
    """Off-support columns most aligned (in the local Fisher metric) with ``X_S u_S``."""
    d = problem_model.d
    rest = np.setdiff1d(np.arange(d), S)
    if limit <= 0 or rest.size == 0:
        return []
    X = problem_model.design.entries
    lin = X @ anchor
    w = np.atleast_1d(mean_var(problem_model.member, problem_model.eta(lin))[1])
    w = w * clip_derivative(problem_model.clip, lin) ** 2
    v = X[:, S] @ u_S
    Xr = X[:, rest]
    num = np.abs((w * v) @ Xr)
    den = np.sqrt(w @ Xr ** 2) + 1e-300
    order = np.argsort(-(num / den), kind="stable")
    return [int(j) for j in rest[order[:limit]]]


def phi1_estimate(model: CglmModel, S, radius: float, restarts: int = 64,
                  rng: np.random.Generator | None = None, anchor: SparseCoef | None = None,
                  working_extra: int | None = None) -> ICEstimate:
    """Smallest ratio ``sqrt(|S| D_n / n) / ||delta_S||_1`` found under the cone constraint.

    ``anchor`` fixes ``beta1`` (zero by default); ``working_extra`` caps the
    number of off-support coordinates searched per restart (all of them when
    ``d`` is small).
    """
    S = sorted(int(j) for j in S)
    if not S:
        raise ValueError("S must be nonempty")
    if not radius > 0:
        raise ValueError("radius must be positive")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    d, k = model.d, len(S)
    base = np.zeros(d) if anchor is None else anchor.to_dense()
    extra = d - k if working_extra is None else min(working_extra, d - k)
    if d <= 12:
        extra = d - k

    best = None
    for r, sub in enumerate(_substreams(rng, restarts)):
        if r == 0:
            u_S = np.ones(k)
        elif r <= k:
            u_S = np.eye(k)[r - 1]
        else:
            u_S = sub.laplace(size=k)
        u_S = u_S / np.sum(np.abs(u_S))
        off = _cone_candidates(model, base, S, u_S, extra)
        prob = _RayProblem(model, base, S + off, k, k, radius, cone=True)
        u = np.zeros(k + len(off))
        u[:k] = u_S
        if off and r > k and sub.random() < 0.5:
            w = sub.laplace(size=len(off))
            u[k:] = w / np.sum(np.abs(w)) * CONE * sub.random() * 0.9
        u, t, val, conv = prob.descend(u)
        if best is None or val < best[0]:
            best = (val, prob.point(base, u, t), conv)
    b1, b2 = best[1]
    value = phi1_ratio(model, S, b1, b2)
    return ICEstimate(value, float(radius), restarts, (b1, b2), best[2])


def _sign_patterns(s: int, rng: np.random.Generator, cap: int = 16) -> np.ndarray:
    if 2 ** s <= cap:
        return np.array(list(itertools.product((1.0, -1.0), repeat=s)))
    return rng.choice(np.array([-1.0, 1.0]), size=(cap, s))


def phibar0_estimate(model: CglmModel, beta_star: SparseCoef, s: int, radius: float,
                     restarts: int = 64, rng: np.random.Generator | None = None,
                     sampled_patterns: int = 256) -> ICEstimate:
    """Smallest ratio ``sqrt(s D_n(eta* || eta)) / (sqrt(n) ||beta - beta*||_1)``
    over ``|supp(beta - beta*)| <= s``.

    Support patterns are enumerated when there are at most ten thousand of
    them and sampled otherwise.  A cheap pass scores every pattern on
    equal-magnitude sign patterns; the best ``restarts`` patterns are then
    refined by coordinate search.
    """
    d = model.d
    if not 1 <= s <= d:
        raise ValueError(f"s must lie in [1, {d}], got {s}")
    if not radius > 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    base = beta_star.to_dense()

    if comb(d, s, exact=True) <= ENUMERATE_LIMIT:
        patterns = [list(p) for p in itertools.combinations(range(d), s)]
    else:
        seen = set()
        patterns = []
        while len(patterns) < sampled_patterns:
            p = tuple(sorted(int(j) for j in rng.choice(d, size=s, replace=False)))
            if p not in seen:
                seen.add(p)
                patterns.append(list(p))

    signs = _sign_patterns(s, rng)
    scored = []
    for idx, p in enumerate(patterns):
        prob = _RayProblem(model, base, p, s, s, radius, cone=False)
        best_v, best_u = math.inf, None
        for sg in signs:
            u = sg / s
            v = float(np.min(prob.ratios(prob.X @ u, prob.t_max(u) * _T_GRID)))
            if v < best_v:
                best_v, best_u = v, u
        scored.append((best_v, idx, best_u))
    scored.sort(key=lambda x: (x[0], x[1]))

    best = None
    for _, idx, u0 in scored[:restarts]:
        prob = _RayProblem(model, base, patterns[idx], s, s, radius, cone=False)
        u, t, val, conv = prob.descend(u0.copy())
        if best is None or val < best[0]:
            best = (val, prob.point(base, u, t), conv)
    _, beta = best[1]
    value = phibar0_ratio(model, beta_star, beta, s)
    return ICEstimate(value, float(radius), min(restarts, len(scored)), (beta_star, beta), best[2])


@dataclass(frozen=True)
class Membership:
    in_b1: bool
    in_b2: bool
    in_bn: bool
    phi1_star: ICEstimate | None
    phibar0_3s: ICEstimate | None

    def __iter__(self):
        return iter((self.in_b1, self.in_b2, self.in_bn, self.phi1_star, self.phibar0_3s))


def membership(model: CglmModel, beta_star: SparseCoef, b_n: int, radius: float,
               restarts: int = 64, rng: np.random.Generator | None = None,
               tolerance: float = TAU_POS, with_phibar0: bool = True) -> Membership:
    """Joint identifiability check for ``beta_star``.

    The sparsity part is exact; the compatibility part uses the estimate at
    the true support with ``beta1 = beta_star``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    s = beta_star.s
    in_b2 = 0 < s <= b_n
    phi1 = None
    if s > 0:
        phi1 = phi1_estimate(model, beta_star.support, radius, restarts, rng, anchor=beta_star,
                             working_extra=2 * s + 6)
    in_b1 = phi1 is not None and phi1.value > tolerance
    phib = None
    if with_phibar0:
        phib = phibar0_estimate(model, beta_star, min(3 * b_n, model.d), radius,
                                max(1, restarts // 4), rng)
    return Membership(in_b1, in_b2, in_b1 and in_b2, phi1, phib)


def phi_b(model: CglmModel, candidates: Sequence[SparseCoef], radius: float,
          restarts: int = 64, rng: np.random.Generator | None = None,
          anchor: str = "zero") -> float:
    """Minimum compatibility estimate over a finite candidate class.

    With ``anchor="zero"`` the estimate depends on the support only and
    duplicate supports are evaluated once; ``anchor="candidate"`` anchors
    each search at the candidate itself.
    """
    if not candidates:
        raise ValueError("candidate list is empty")
    if anchor not in ("zero", "candidate"):
        raise ValueError(f"unknown anchor {anchor!r}")
    seed = (np.random.default_rng(0) if rng is None else rng).integers(0, 2 ** 63)
    seen = {}
    for c in candidates:
        key = c.support if anchor == "zero" else (c.support, tuple(c.values))
        if key in seen:
            continue
        est = phi1_estimate(model, c.support, radius, restarts, np.random.default_rng(seed),
                            anchor=None if anchor == "zero" else c)
        seen[key] = est.value
    return min(seen.values())


@dataclass(frozen=True)
class Lemma3Result:
    ok: bool
    offending_index: int | None
    max_var: float
    m0_squared: float
    radius: float
    reason: str = ""

    def __bool__(self):
        return self.ok


def lemma3_check(model: CglmModel, beta_star: SparseCoef, s_star: int, n: int, d: int,
                 grid: int = 101) -> Lemma3Result:
    """Whether ``A''`` stays below ``M0^2`` on every ``r``-neighbourhood of ``eta*_i``,
    ``r = sqrt(s* log d / n)``."""
    if grid < 2:
        raise ValueError("grid needs at least two points")
    r = math.sqrt(s_star * math.log(d) / n)
    eta_s = np.atleast_1d(eta_vector(model, beta_star))
    log_m0sq = 2.0 * model.m0cert.log_m0
    m0sq = model.m0cert.m0_squared
    lo, hi = model.member.theta_domain
    escape = np.flatnonzero(eta_s + r >= hi)
    if escape.size:
        i = int(escape[0])
        return Lemma3Result(False, i, math.inf, m0sq, r,
                            f"neighbourhood of eta*_{i} = {eta_s[i]:g} reaches the pole {hi:g}")
    pts = eta_s[:, None] + r * np.linspace(-1.0, 1.0, grid)[None, :]
    pts = np.maximum(pts, lo) if math.isfinite(lo) else pts
    lv = np.max(np.asarray(log_var(model.member, pts)).reshape(eta_s.size, grid), axis=1)
    bad = np.flatnonzero(lv > log_m0sq + 1e-12)
    max_var = float(np.exp(np.max(lv))) if np.max(lv) < 709 else math.inf
    if bad.size:
        i = int(bad[0])
        return Lemma3Result(False, i, max_var, m0sq, r,
                            f"A'' exceeds M0^2 near eta*_{i} = {eta_s[i]:g}")
    return Lemma3Result(True, None, max_var, m0sq, r)
