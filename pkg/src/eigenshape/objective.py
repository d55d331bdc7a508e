"""Spectral objectives ``F(lambda_1..lambda_N) + |Omega|`` and their l^p smoothing.

The smoothed functional replaces the j-th argument of ``G`` by the l^p mean
``(lambda_1^p + ... + lambda_j^p)^(1/p)``; ``p = inf`` recovers ``G`` itself
on ascending input.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

CLUSTER_TOL = 1e-3


class MultiplicityError(ValueError):
    """Gradient requested where the unsmoothed objective is not differentiable."""


@dataclass(frozen=True)
class ObjectiveSpec:
    form: str  # "linear" | "powersum" | "custom"
    mu: tuple[float, ...] | None = None
    q: float | None = None
    G: Callable | None = None
    grad_G: Callable | None = None
    derivative_lb: float = 1e-3
    derivative_ub: float = 1e6
    xi0: float = 1.0
    p: float = math.inf
    cluster_tol: float = CLUSTER_TOL
    Q: float | None = None

    def __post_init__(self):
        if self.form not in ("linear", "powersum", "custom"):
            raise ValueError(f"unknown objective form {self.form!r}")
        if self.form == "linear":
            if self.mu is None or any(m < 0 for m in self.mu):
                raise ValueError("linear form needs nonnegative weights mu")
            object.__setattr__(self, "mu", tuple(float(m) for m in self.mu))
        if self.form == "powersum" and (self.q is None or self.q < 1):
            raise ValueError("powersum form needs exponent q >= 1")
        if self.form == "custom" and (self.G is None or self.grad_G is None):
            raise ValueError("custom form needs G and grad_G")
        if not self.derivative_lb > 0:
            raise ValueError("derivative lower bound must be positive")
        if self.p < 1:
            raise ValueError("smoothing exponent p must be >= 1")
        if self.Q is not None and abs(self.xi0 - 1.0) > 1.0 / self.Q:
            raise ValueError(f"|xi0 - 1| exceeds 1/Q = {1.0 / self.Q}")

    @property
    def smoothed(self) -> bool:
        return math.isfinite(self.p)

    def outer(self, y: np.ndarray) -> float:
        if self.form == "linear":
            return float(np.dot(self._mu(len(y)), y))
        if self.form == "powersum":
            return float(np.sum(y ** self.q))
        return float(self.G(y))

    def outer_grad(self, y: np.ndarray) -> np.ndarray:
        if self.form == "linear":
            return self._mu(len(y)).copy()
        if self.form == "powersum":
            return self.q * y ** (self.q - 1)
        return np.asarray(self.grad_G(y), dtype=np.float64)

    def _mu(self, n):
        if len(self.mu) != n:
            raise ValueError(f"objective has {len(self.mu)} weights, spectrum has {n} values")
        return np.asarray(self.mu)

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectiveSpec":
        """Build from the run-config form ``{"form": "linear", "mu": [...]}`` etc."""
        form = d.get("form")
        common = {k: d[k] for k in ("derivative_lb", "derivative_ub", "xi0", "cluster_tol", "Q") if k in d}
        p = _parse_p(d.get("p", math.inf))
        if form == "linear":
            return cls("linear", mu=tuple(d["mu"]), p=p, **common)
        if form == "powersum":
            return cls("powersum", q=float(d["q"]), p=p, **common)
        if form == "sum_fp":
            n = int(d.get("N", 2))
            return cls("linear", mu=(1.0,) * n, p=p, **common)
        raise ValueError(f"unknown objective form {form!r}")

    def to_dict(self) -> dict:
        out = {"form": self.form, "p": "inf" if not self.smoothed else self.p, "xi0": self.xi0}
        if self.form == "linear":
            out["mu"] = list(self.mu)
        if self.form == "powersum":
            out["q"] = self.q
        return out


def _parse_p(p):
    if isinstance(p, str):
        return math.inf if p.lower() in ("inf", "infinity") else float(p)
    return math.inf if p is None else float(p)


def _check_point(lambdas) -> np.ndarray:
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.ndim != 1 or len(lam) == 0:
        raise ValueError("need a non-empty vector of eigenvalues")
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    if np.any(np.diff(lam) < 0):
        raise ValueError("eigenvalues must be ascending")
    return lam


def lp_means(lam: np.ndarray, p: float) -> np.ndarray:
    """Nested l^p means ``y_j = (sum_{i<=j} lam_i^p)^(1/p)``, overflow-safe."""
    lam = np.asarray(lam, dtype=np.float64)
    if not math.isfinite(p):
        return np.maximum.accumulate(lam)
    y = np.empty_like(lam)
    for j in range(len(lam)):
        top = lam[: j + 1].max()
        y[j] = top * np.sum((lam[: j + 1] / top) ** p) ** (1.0 / p)
    return y


def evaluate(spec: ObjectiveSpec, lambdas, vol: float) -> float:
    lam = _check_point(lambdas)
    return spec.outer(lp_means(lam, spec.p)) + float(vol)


def smoothed_gradient(spec: ObjectiveSpec, lam: np.ndarray) -> np.ndarray:
    """Chain rule ``sum_{j>=k} dG_j(y) (lam_k / y_j)^(p-1)`` for finite p."""
    p = spec.p
    y = lp_means(lam, p)
    dG = spec.outer_grad(y)
    n = len(lam)
    xi = np.zeros(n)
    for k in range(n):
        for j in range(k, n):
            xi[k] += dG[j] * (lam[k] / y[j]) ** (p - 1.0)
    return xi


def multiplicity_clusters(lambdas, tol: float = CLUSTER_TOL) -> list[list[int]]:
    """Maximal runs of (0-based) indices whose consecutive relative gaps are below ``tol``."""
    lam = np.asarray(lambdas, dtype=np.float64)
    if len(lam) == 0:
        return []
    clusters = [[0]]
    for k in range(1, len(lam)):
        if (lam[k] - lam[k - 1]) < tol * abs(lam[k]):
            clusters[-1].append(k)
        else:
            clusters.append([k])
    return clusters


def gradient(spec: ObjectiveSpec, lambdas) -> np.ndarray:
    """Eigenvalue gradient ``xi_k = dF/dlambda_k`` (of F_p when smoothed)."""
    lam = _check_point(lambdas)
    if spec.smoothed:
        xi = smoothed_gradient(spec, lam)
    else:
        xi = spec.outer_grad(lam)
        for c in multiplicity_clusters(lam, spec.cluster_tol):
            if len(c) < 2:
                continue
            symmetric = spec.form == "powersum" or (
                spec.form == "linear" and np.ptp(np.asarray(spec.mu)[c]) == 0.0)
            if not symmetric:
                raise MultiplicityError(
                    f"eigenvalues {[k + 1 for k in c]} coincide and F is not symmetric there; use smooth_p")
            if spec.form == "powersum":
                xi[c] = np.mean(xi[c])
        lo, hi = np.min(xi), np.max(xi)
        if lo < spec.derivative_lb or hi > spec.derivative_ub:
            warnings.warn(f"eigenvalue gradient {xi} outside [{spec.derivative_lb}, {spec.derivative_ub}]",
                          stacklevel=2)
    return xi


def smooth_p(spec: ObjectiveSpec, p: float) -> ObjectiveSpec:
    if p < 1:
        raise ValueError("p must be >= 1")
    return dataclasses.replace(spec, p=float(p))


def strict_gap_check(spec_p: ObjectiveSpec, lambdas) -> bool:
    """True when every tied pair lambda_k = lambda_{k+1} has dF_p/dlambda_k > dF_p/dlambda_{k+1}."""
    lam = _check_point(lambdas)
    ties = [k for k in range(len(lam) - 1) if lam[k + 1] - lam[k] <= spec_p.cluster_tol * lam[k + 1]]
    if not ties:
        warnings.warn("no tied eigenvalues: gap check is vacuous", stacklevel=2)
        return True
    xi = smoothed_gradient(spec_p, lam) if spec_p.smoothed else spec_p.outer_grad(lam)
    return all(xi[k] > xi[k + 1] for k in ties)


def lower_bound(spec_p: ObjectiveSpec, lambdas) -> np.ndarray:
    """Per-k lower bound on dF_p/dlambda_k from the j = k chain-rule term."""
    lam = _check_point(lambdas)
    y = lp_means(lam, spec_p.p)
    return spec_p.derivative_lb * (lam / y) ** (spec_p.p - 1.0)
