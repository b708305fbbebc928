"""The clipped GLM: design, sparse coefficients, likelihood pieces, simulation."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clipping import ClippingFn, M0Certificate, certify_clipping, eval_clip
from .expfam import (ExpFamilyMember, kl_divergence, log_density, log_partition,
                     mean_var, sample)

__all__ = [
    "DesignMatrix",
    "SparseCoef",
    "CglmModel",
    "Dataset",
    "DivergenceProfile",
    "eta_vector",
    "divergence_profile",
    "log_lik_ratio",
    "generate_dataset",
    "dn_membership",
    "make_design",
    "read_design_csv",
    "write_design_csv",
    "read_dataset_csv",
    "write_dataset_csv",
]


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Dense ``n x d`` design with the max-absolute-entry norm cached."""

    entries: np.ndarray
    max_abs: float = field(init=False)

    def __post_init__(self):
        x = np.ascontiguousarray(self.entries, dtype=float)
        if x.ndim != 2:
            raise ValueError("design must be two-dimensional")
        if not np.all(np.isfinite(x)):
            raise ValueError("design has non-finite entries")
        x.setflags(write=False)
        object.__setattr__(self, "entries", x)
        object.__setattr__(self, "max_abs", float(np.max(np.abs(x))) if x.size else 0.0)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1]

    def times(self, beta: "SparseCoef") -> np.ndarray:
        """``X beta`` by iterating the support."""
        if beta.dim != self.d:
            raise ValueError(f"coefficient dimension {beta.dim} does not match design d = {self.d}")
        if not beta.support:
            return np.zeros(self.n)
        return self.entries[:, list(beta.support)] @ beta.values


@dataclass(frozen=True, eq=False)
class SparseCoef:
    """Coefficient vector stored as a sorted support (0-based) and nonzero values."""

    dim: int
    support: tuple = ()
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        support = tuple(int(j) for j in self.support)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(support) != values.size:
            raise ValueError("support and values differ in length")
        order = np.argsort(support, kind="stable")
        support = tuple(support[i] for i in order)
        values = values[order]
        if any(b <= a for a, b in zip(support, support[1:])):
            raise ValueError("support indices must be distinct")
        if support and (support[0] < 0 or support[-1] >= self.dim):
            raise ValueError(f"support index outside [0, {self.dim})")
        if np.any(values == 0):
            raise ValueError("values on the support must be nonzero")
        values.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, dim: int) -> "SparseCoef":
        return cls(dim)

    @classmethod
    def from_dense(cls, x: Sequence[float]) -> "SparseCoef":
        x = np.asarray(x, dtype=float)
        nz = np.flatnonzero(x)
        return cls(x.size, tuple(nz), x[nz])

    @classmethod
    def from_dict(cls, dim: int, entries: dict) -> "SparseCoef":
        keys = sorted(entries)
        return cls(dim, tuple(keys), [entries[k] for k in keys])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[list(self.support)] = self.values
        return out

    @property
    def s(self) -> int:
        return len(self.support)

    @property
    def l1(self) -> float:
        return float(np.sum(np.abs(self.values)))

    def __eq__(self, other):
        return (isinstance(other, SparseCoef) and self.dim == other.dim
                and self.support == other.support and np.array_equal(self.values, other.values))

    def __repr__(self):
        pairs = ", ".join(f"{j}: {v:g}" for j, v in zip(self.support, self.values))
        return f"SparseCoef(dim={self.dim}, {{{pairs}}})"


class CglmModel:
    """Exponential family + clipping function + design.

    Construction certifies the clipping condition; a failure propagates as
    :class:`~cglm.clipping.ClipConfigError` or
    :class:`~cglm.clipping.CertificationError`.
    """

    def __init__(self, member: ExpFamilyMember, clip: ClippingFn, design,
                 m0cert: M0Certificate | None = None):
        if not isinstance(design, DesignMatrix):
            design = DesignMatrix(np.asarray(design, dtype=float))
        self.member = member
        self.clip = clip
        self.design = design
        self.m0cert = m0cert if m0cert is not None else certify_clipping(clip, member)

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def d(self) -> int:
        return self.design.d

    def eta(self, linear) -> np.ndarray:
        return eval_clip(self.clip, linear)

    def loglik_from_eta(self, T: np.ndarray, eta: np.ndarray) -> float:
        """``sum_i T_i eta_i - A(eta_i)``; the base measure is left out."""
        return float(np.dot(T, eta) - np.sum(log_partition(self.member, eta)))

    def __repr__(self):
        return (f"CglmModel({self.member.kind}, clip={self.clip.kind}"
                f"{'' if self.clip.kind == 'identity' else f'<{self.clip.upper:g}'}, n={self.n}, d={self.d})")


@dataclass(frozen=True, eq=False)
class Dataset:
    y: np.ndarray
    T: np.ndarray
    seed: object = None

    @classmethod
    def from_observations(cls, member: ExpFamilyMember, y, seed=None) -> "Dataset":
        y = member.check_support(np.asarray(y, dtype=float))
        return cls(y, member.sufficient_stat(y), seed)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class DivergenceProfile:
    Dn: float
    varZn: float
    kl: np.ndarray
    var_terms: np.ndarray


def eta_vector(model: CglmModel, beta: SparseCoef) -> np.ndarray:
    return model.eta(model.design.times(beta))


def divergence_profile(model: CglmModel, beta_star: SparseCoef,
                       beta: SparseCoef) -> DivergenceProfile:
    """KL sum ``D_n(eta* || eta)`` and ``Var Z_n = sum (eta - eta*)^2 A''(eta*)``."""
    eta_s = eta_vector(model, beta_star)
    eta = eta_vector(model, beta)
    kl = np.atleast_1d(kl_divergence(model.member, eta_s, eta))
    var_terms = (eta - eta_s) ** 2 * np.atleast_1d(mean_var(model.member, eta_s)[1])
    return DivergenceProfile(float(kl.sum()), float(var_terms.sum()), kl, var_terms)


def log_lik_ratio(model: CglmModel, data: Dataset, beta_star: SparseCoef,
                  beta: SparseCoef) -> tuple[float, float, float]:
    """``(Z_n, D_n, L_n)`` with ``L_n = Z_n - D_n``."""
    if data.n != model.n:
        raise ValueError(f"dataset has {data.n} observations, design has {model.n} rows")
    eta_s = eta_vector(model, beta_star)
    eta = eta_vector(model, beta)
    mean_s = np.atleast_1d(mean_var(model.member, eta_s)[0])
    Zn = float(np.dot(data.T - mean_s, eta - eta_s))
    Dn = float(np.sum(kl_divergence(model.member, eta_s, eta)))
    return Zn, Dn, Zn - Dn


def log_lik_ratio_direct(model: CglmModel, data: Dataset, beta_star: SparseCoef,
                         beta: SparseCoef) -> float:
    """``sum_i log f(y_i | eta_i) - log f(y_i | eta*_i)`` from densities."""
    eta_s = eta_vector(model, beta_star)
    eta = eta_vector(model, beta)
    return float(np.sum(log_density(model.member, data.y, eta))
                 - np.sum(log_density(model.member, data.y, eta_s)))


def generate_dataset(model: CglmModel, beta_star: SparseCoef, rng: np.random.Generator,
                     seed_record=None) -> Dataset:
    eta_s = eta_vector(model, beta_star)
    y = np.atleast_1d(sample(model.member, eta_s, rng))
    return Dataset(y, model.member.sufficient_stat(y), seed=seed_record)


def dn_membership(model: CglmModel, beta_star: SparseCoef, beta: SparseCoef,
                  s_star: int, d: int) -> bool:
    """Whether ``max(D_n, Var Z_n) <= s* log d``."""
    prof = divergence_profile(model, beta_star, beta)
    return max(prof.Dn, prof.varZn) <= s_star * math.log(d)


def make_design(kind: str, n: int, d: int, rng: np.random.Generator,
                scale: float = 1.0) -> DesignMatrix:
    """``gaussian`` (iid N(0,1)), ``rademacher`` or ``identity_blocks``.

    ``identity_blocks`` puts ``scale`` at column ``i mod d`` of row ``i``, so
    with ``n = k d`` the Gram matrix is ``k scale^2 I``.
    """
    kind = kind.lower()
    if kind == "gaussian":
        x = rng.standard_normal((n, d))
    elif kind == "rademacher":
        x = rng.choice(np.array([-1.0, 1.0]), size=(n, d))
    elif kind == "identity_blocks":
        x = np.zeros((n, d))
        x[np.arange(n), np.arange(n) % d] = 1.0
    else:
        raise ValueError(f"unknown design kind {kind!r}")
    return DesignMatrix(scale * x)


def read_design_csv(path) -> DesignMatrix:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return DesignMatrix(np.array(rows))


def write_design_csv(design: DesignMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in design.entries:
            w.writerow([repr(float(v)) for v in row])


def read_dataset_csv(path, member: ExpFamilyMember) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    rows.sort(key=lambda r: int(r["i"]))
    return Dataset.from_observations(member, [float(r["y"]) for r in rows])


def write_dataset_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "y"])
        for i, v in enumerate(data.y):
            w.writerow([i, repr(float(v))])


def coef_l1_distance(a: SparseCoef, b: SparseCoef) -> float:
    return float(np.sum(np.abs(a.to_dense() - b.to_dense())))

