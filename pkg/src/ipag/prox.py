"""Proximal machinery: simple sets with exact projections, approximate-prox
accuracy bookkeeping, and subgradient certificates for inexact solutions.

The proximal map used throughout is

    prox_{gamma,h}(y) = argmin_u  h(u) + ||u - y||^2 / (2 gamma),

which for indicator h is the Euclidean projection (independent of gamma).
An accuracy ``rho`` always refers to the objective gap of this problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (CertificateUnavailable, DimensionMismatch, InvalidAlpha,
                     UnsupportedSet)


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box {x : lower <= x <= upper}."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape:
            raise DimensionMismatch("box bounds have different shapes")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, x: np.ndarray, tol: float = 1e-10) -> bool:
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def project(self, y: np.ndarray) -> np.ndarray:
        return np.clip(y, self.lower, self.upper)

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


@dataclass(frozen=True)
class BallSet:
    """Euclidean ball {x : ||x|| <= radius} centered at the origin."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def contains(self, x: np.ndarray, tol: float = 1e-10) -> bool:
        return float(np.linalg.norm(x)) <= self.radius + tol

    def project(self, y: np.ndarray) -> np.ndarray:
        nrm = float(np.linalg.norm(y))
        if nrm <= self.radius:
            return np.asarray(y, dtype=float).copy()
        return (self.radius / nrm) * np.asarray(y, dtype=float)


@dataclass(frozen=True)
class IndicatorOfSet:
    """h(x) = 0 on the set, +inf outside (up to ``tol``)."""

    set: object
    tol: float = 1e-10

    def value(self, x: np.ndarray) -> float:
        return 0.0 if self.set.contains(x, self.tol) else math.inf

    def exact_project(self, y: np.ndarray) -> Optional[np.ndarray]:
        """Analytic projection when the underlying set has one."""
        if isinstance(self.set, (BoxSet, BallSet)):
            return self.set.project(y)
        return None


@dataclass(frozen=True)
class ProxQuery:
    """One proximal subproblem: center, scale, and nonsmooth part."""

    center: np.ndarray
    gamma: float
    nonsmooth: IndicatorOfSet

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def objective(self, u: np.ndarray) -> float:
        return (float(np.sum((u - self.center) ** 2)) / (2.0 * self.gamma)
                + self.nonsmooth.value(u))


@dataclass
class ApproxProxResult:
    """Inexact prox solution with its accuracy certificate.

    ``rho`` bounds the prox objective gap; ``distance_bound`` bounds
    ||point - exact prox||^2. Exact solvers report both as zero.
    ``kappa`` is the restoration weight when feasibility restoration ran.
    """

    point: np.ndarray
    rho: float
    distance_bound: float
    inner_iters: int
    kappa: Optional[float] = None

    def __post_init__(self):
        if self.rho < 0 or self.distance_bound < 0:
            raise ValueError("accuracy bounds must be nonnegative")


@dataclass(frozen=True)
class RhoSubgradientCertificate:
    """Witness (v, d) that d = (y - x~ - v)/gamma is a rho-subgradient of h
    at the approximate prox point x~, with ||v|| <= sqrt(2 gamma rho).
    """

    v: np.ndarray
    d: np.ndarray
    rho: float
    gamma: float


def prox_box(y: np.ndarray, gamma: float, lower: np.ndarray,
             upper: np.ndarray) -> np.ndarray:
    """Exact prox of the box indicator: componentwise clamp (gamma-free)."""
    y = np.asarray(y, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if y.shape != lower.shape or y.shape != upper.shape:
        raise DimensionMismatch("point and box bounds have different shapes")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return np.clip(y, lower, upper)


def prox_ball(y: np.ndarray, gamma: float, radius: float) -> np.ndarray:
    """Exact prox of the centered-ball indicator: radial projection."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return BallSet(radius).project(y)


def check_prox_accuracy(candidate: ApproxProxResult, query: ProxQuery,
                        reference_solution: np.ndarray):
    """Audit a claimed rho against a high-accuracy reference minimizer.

    Returns ``(satisfied, measured_gap)`` where the gap is the prox
    objective at the candidate minus at the reference. For indicator h an
    infeasible candidate has infinite gap and is never satisfied.
    """
    ref = np.asarray(reference_solution, dtype=float)
    gap = query.objective(candidate.point) - query.objective(ref)
    satisfied = bool(gap <= candidate.rho + 1e-9)
    return satisfied, float(gap)


def make_certificate(candidate: np.ndarray, query: ProxQuery, rho: float,
                     reference_solution: Optional[np.ndarray] = None,
                     n_probes: int = 100,
                     rng: Optional[np.random.Generator] = None,
                     ) -> RhoSubgradientCertificate:
    """Build the subgradient certificate for a rho-approximate prox point.

    Takes v as the (norm-clipped) displacement from the candidate to the
    exact prox, so d = (y - x~ - v)/gamma is the exact-prox residual
    direction. The certificate is validated on ``n_probes`` random feasible
    probe points plus the reference itself; failure to validate means the
    candidate is not actually rho-approximate.

    Raises
    ------
    CertificateUnavailable
        If no admissible v passes the sampled subgradient inequality.
    UnsupportedSet
        If no reference solution is given and the set has no analytic
        projection.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    x_t = np.asarray(candidate, dtype=float)
    y = query.center
    gamma = query.gamma
    h = query.nonsmooth
    if reference_solution is None:
        reference_solution = h.exact_project(y)
        if reference_solution is None:
            raise UnsupportedSet("no analytic projection; pass a reference")
    ref = np.asarray(reference_solution, dtype=float)

    if h.value(x_t) == math.inf:
        raise CertificateUnavailable("candidate is infeasible for indicator h")

    v = ref - x_t
    bound = math.sqrt(max(2.0 * gamma * rho, 0.0))
    nv = float(np.linalg.norm(v))
    if nv > bound:
        v = v * (bound / nv) if nv > 0 else v
    d = (y - x_t - v) / gamma

    # sampled surrogate for the universally quantified inequality
    probes = _feasible_probes(h, ref, n_probes, rng)
    probes.append(ref)
    slack = 1e-9 * (1.0 + abs(rho))
    for u in probes:
        if h.value(u) < math.inf:
            lhs = h.value(u)
            rhs = h.value(x_t) + float(d @ (u - x_t)) - rho
            if lhs < rhs - slack:
                raise CertificateUnavailable(
                    "subgradient inequality failed at a probe point; "
                    "candidate is not rho-approximate")
    return RhoSubgradientCertificate(v=v, d=d, rho=rho, gamma=gamma)


def _feasible_probes(h: IndicatorOfSet, anchor: np.ndarray, n: int,
                     rng: Optional[np.random.Generator]):
    """Random feasible points of an indicator's set, biased around anchor."""
    rng = rng or np.random.default_rng(0)
    s = h.set
    out = []
    if isinstance(s, BoxSet):
        for _ in range(n):
            out.append(rng.uniform(s.lower, s.upper))
        return out
    if isinstance(s, BallSet):
        dim = anchor.shape[0]
        for _ in range(n):
            u = rng.standard_normal(dim)
            r = s.radius * rng.uniform() ** (1.0 / dim)
            out.append(r * u / np.linalg.norm(u))
        return out
    # general set with an interior point: sample the segment toward random
    # box points and keep what lands feasible
    interior = getattr(s, "slater_point", anchor)
    box = getattr(s, "box", None)
    dim = anchor.shape[0]
    tries = 0
    while len(out) < n and tries < 50 * n:
        tries += 1
        if box is not None:
            target = rng.uniform(box.lower, box.upper)
        else:
            target = anchor + rng.standard_normal(dim)
        pt = interior + rng.uniform() * (target - interior)
        if s.contains(pt, 0.0):
            out.append(pt)
    if not out:
        out.append(np.asarray(interior, dtype=float))
    return out


def gamma_recursion(alphas) -> np.ndarray:
    """Telescoping weights: G_1 = 1, G_k = (1 - alpha_k) G_{k-1}.

    The first weight may be 1 (it is ignored by the recursion); every
    subsequent weight must lie in (0, 1].
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size == 0:
        return np.zeros(0)
    if np.any(alphas[1:] <= 0) or np.any(alphas[1:] > 1) or not (
            0 < alphas[0] <= 1):
        raise InvalidAlpha("momentum weights must lie in (0, 1]")
    out = np.empty_like(alphas)
    out[0] = 1.0
    for k in range(1, alphas.size):
        out[k] = (1.0 - alphas[k]) * out[k - 1]
    return out
