"""Inexact projection subproblem solvers and exact-feasibility restoration.

The workhorse is a fixed-step primal-dual scheme on the Lagrangian of

    min_{u in X}  ||u - c||^2 / (2 gamma)   s.t.  phi_i(u) <= 0,

run in gamma-normalized form (the indicator prox is a pure projection, so
the subproblem is solved with unit quadratic and accuracies rescaled).
Restoration then produces an exactly feasible point by mixing with the
strictly feasible interior point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from .errors import (BudgetZero, SlaterViolation, UnboundedDual,
                     UnsupportedSet)
from .prox import ApproxProxResult, BallSet, BoxSet, ProxQuery

DUAL_HARD_CAP = 1e8

# Declared rate constants of the primal-dual solver: for budget t,
# ||u_t - u*||^2 <= (APD_A1 ||u0 - u*||^2 + APD_A2) / t^2. Calibrated on the
# halfspace/ball battery plus small quadratic-constraint probes (measured
# max 2521, see tests/test_inner.py), kept with a ~4x margin.
APD_A1 = 1.0e4
APD_A2 = 1.0e4


class InnerSolverContract(Protocol):
    """Anything that can approximately solve a prox query from a warm start
    within an iteration budget, reporting certified accuracies.
    """

    def solve(self, query: ProxQuery, u0: np.ndarray, budget: int,
              rng: Optional[np.random.Generator] = None) -> ApproxProxResult:
        ...


@dataclass(frozen=True)
class RestorationResult:
    """Outcome of pulling an almost-feasible point inside the feasible set."""

    feasible_point: np.ndarray
    kappa: float
    max_violation_before: float


def _constraint_parts(query: ProxQuery):
    """Extract (box, phi_values, phi_jacobian, slater) from an indicator query."""
    s = query.nonsmooth.set
    box = getattr(s, "box", None)
    if box is None and isinstance(s, BoxSet):
        box = s
    if box is None:
        raise UnsupportedSet("primal-dual solver needs a box-bounded set")
    if hasattr(s, "phi_values"):
        return box, s.phi_values, s.phi_jacobian, np.asarray(s.slater_point, float)
    empty = lambda x: np.zeros(0)
    emptyj = lambda x: np.zeros((0, box.dim))
    center = 0.5 * (box.lower + box.upper)
    return box, empty, emptyj, center


def _feasible_scales(c, u0, box, phi_values, phi_jacobian, slater, m):
    """Per-constraint gradient scales and a normalized coupling norm, sampled
    on segments from the interior point toward the clamped center and the
    warm start (the region the iterates traverse). Safety factor 2.
    """
    cproj = box.project(c)
    pts = [slater, cproj, u0]
    for t in np.linspace(0.0, 1.0, 16):
        pts.append(slater + t * (cproj - slater))
        pts.append(slater + t * (u0 - slater))
    feas = [p for p in pts if np.all(phi_values(p) <= 0.0)]
    if not feas:
        feas = [slater]
    s = np.zeros(m)
    for p in feas:
        s = np.maximum(s, np.linalg.norm(phi_jacobian(p), axis=1))
    s = 2.0 * np.maximum(s, 1e-8)
    coupling = max(np.linalg.norm(phi_jacobian(p) / s[:, None], 2) for p in feas)
    coupling = max(2.0 * coupling, 1e-8)
    gbar = max(np.max(np.linalg.norm(phi_jacobian(p), axis=1) / s) for p in feas)
    return s, coupling, max(gbar, 1e-8)


def apd_solve(query: ProxQuery, u0: np.ndarray, budget: int,
              rng: Optional[np.random.Generator] = None) -> ApproxProxResult:
    """Fixed-step accelerated primal-dual solve of the projection subproblem.

    Primal steps are exact proxes of the strongly convex quadratic over the
    box; dual steps are nonnegative-clipped ascent on the (scaled,
    value-capped) constraint functions evaluated at the momentum-extrapolated
    primal point. The primal stepsize is halved whenever the measured
    weighted-coupling curvature along the trajectory violates its stability
    bound. Runs exactly ``budget`` iterations.

    Raises
    ------
    BudgetZero
        If ``budget < 1``.
    UnboundedDual
        If a dual variable reaches the hard cap (Slater failure or broken
        scaling).
    """
    if budget < 1:
        raise BudgetZero(f"budget must be >= 1, got {budget}")
    box, phi_values, phi_jacobian, slater = _constraint_parts(query)
    c = query.center
    gamma = query.gamma
    u0 = box.project(np.asarray(u0, dtype=float))
    m = phi_values(u0).shape[0]
    diam = box.diameter()

    if m == 0:
        return ApproxProxResult(point=box.project(c), rho=0.0,
                                distance_bound=0.0, inner_iters=0)

    s, coupling, gbar = _feasible_scales(c, u0, box, phi_values, phi_jacobian,
                                         slater, m)
    tau = 1.0 / coupling
    sigma = 1.0 / (2.0 * coupling)
    q = tau / (1.0 + tau)
    theta = (1.0 - math.sqrt(q)) / (1.0 + math.sqrt(q))
    value_cap = 2.0 * gbar * diam
    margin_n = np.maximum(-phi_values(slater) / s, 1e-12)
    dual_cap = np.minimum(np.sum((slater - c) ** 2) / margin_n, DUAL_HARD_CAP)

    u = u0.copy()
    u_prev = u0.copy()
    w = np.zeros(m)
    jac_scaled = phi_jacobian(u) / s[:, None]
    for _ in range(budget):
        ubar = u + theta * (u - u_prev)
        vals = np.minimum(phi_values(ubar) / s, value_cap)
        w = np.clip(w + sigma * vals, 0.0, dual_cap)
        g = jac_scaled.T @ w
        u_prev = u
        u = box.project((tau * c + u_prev - tau * g) / (tau + 1.0))
        jac_new = phi_jacobian(u) / s[:, None]
        du = float(np.linalg.norm(u - u_prev))
        if du > 1e-14:
            curv = float(np.linalg.norm((jac_new - jac_scaled).T @ w)) / du
            if tau * curv > 0.9:
                tau *= 0.5
                q = tau / (1.0 + tau)
                theta = (1.0 - math.sqrt(q)) / (1.0 + math.sqrt(q))
        jac_scaled = jac_new

    if np.any(w >= DUAL_HARD_CAP):
        raise UnboundedDual("dual variable reached hard cap; check the "
                            "Slater point and constraint scaling")

    dist_sq = _distance_bound(u0, u, diam, budget)
    delta = math.sqrt(dist_sq)
    rho = (delta * float(np.linalg.norm(u - c)) + 0.5 * delta * delta) / gamma
    return ApproxProxResult(point=u, rho=rho, distance_bound=dist_sq,
                            inner_iters=budget)


def _distance_bound(u0, u_t, diam, t):
    """Certified ||u_t - u*||^2 bound from the declared rate constants.

    ||u0 - u*|| is bounded by the box diameter and, when the budget allows,
    by the tighter measured form ||u0 - u_t|| + ||u_t - u*||.
    """
    d2 = (APD_A1 * diam * diam + APD_A2) / (t * t)
    root_a1 = math.sqrt(APD_A1)
    if t > root_a1 + 1.0:
        moved = float(np.linalg.norm(u_t - u0))
        refined = ((root_a1 * moved + math.sqrt(APD_A2)) / (t - root_a1)) ** 2
        d2 = min(d2, refined)
    return min(d2, diam * diam)


def exact_projection_adapter(query: ProxQuery, u0: np.ndarray,
                             budget: int) -> ApproxProxResult:
    """Zero-error inner solver for sets with an analytic projection.

    Supports boxes, centered balls, and constraint sets with no functional
    constraints (pure box). Ignores the warm start and budget.
    """
    point = query.nonsmooth.exact_project(query.center)
    if point is None:
        s = query.nonsmooth.set
        if hasattr(s, "phi_values") and s.n_constraints == 0:
            point = s.box.project(query.center)
        else:
            raise UnsupportedSet(
                "set has no analytic projection; use the primal-dual solver")
    return ApproxProxResult(point=np.asarray(point, dtype=float), rho=0.0,
                            distance_bound=0.0, inner_iters=0)


def restore_feasibility(candidate: np.ndarray, constraint_set) -> RestorationResult:
    """Pull an almost-feasible point exactly inside the feasible set.

    Mixes the candidate with the strictly feasible interior point using

        kappa = max_i [phi_i(x)]_+ / ([phi_i(x)]_+ - phi_i(interior)),

    which is 0 for feasible input and always lands in [0, 1]. Convexity of
    the constraints makes the mixture feasible; a vanishing nudge of kappa
    absorbs floating-point rounding at the active constraint.
    """
    x_hat = np.asarray(candidate, dtype=float)
    x0 = np.asarray(constraint_set.slater_point, dtype=float)
    vals0 = constraint_set.phi_values(x0)
    if vals0.size and vals0.max() >= 0.0:
        raise SlaterViolation("interior point is not strictly feasible")
    vals = constraint_set.phi_values(x_hat)
    if vals.size == 0:
        return RestorationResult(feasible_point=x_hat.copy(), kappa=0.0,
                                 max_violation_before=0.0)
    pos = np.maximum(vals, 0.0)
    max_violation = float(pos.max())
    if max_violation == 0.0:
        return RestorationResult(feasible_point=x_hat.copy(), kappa=0.0,
                                 max_violation_before=0.0)
    kappa = float(np.max(pos / (pos - vals0)))
    point = kappa * x0 + (1.0 - kappa) * x_hat
    for _ in range(50):
        if constraint_set.phi_values(point).max() <= 1e-12:
            break
        kappa = min(1.0, kappa + (1.0 - kappa) * 1e-9 + 1e-15)
        point = kappa * x0 + (1.0 - kappa) * x_hat
    return RestorationResult(feasible_point=point, kappa=kappa,
                             max_violation_before=max_violation)


def solve_with_restoration(query: ProxQuery, u0: np.ndarray, budget: int,
                           rng: Optional[np.random.Generator] = None,
                           ) -> ApproxProxResult:
    """Inexact projection followed by exact-feasibility restoration.

    The returned point always satisfies every constraint (to 1e-10). The
    accuracy claim inflates the pre-restoration suboptimality bound by the
    mixing cost, all from measured quantities: with delta the certified
    distance bound, kappa the mixing weight, c the prox center and x° the
    interior point,

        rho_out = [ kappa^2 ||x°-c||^2 / 2
                    + kappa (1-kappa) ||x°-c|| ||x_hat-c||
                    + delta ||x_hat-c|| + delta^2 / 2 ] / gamma.
    """
    s = query.nonsmooth.set
    if not hasattr(s, "phi_values"):
        return exact_projection_adapter(query, u0, budget)
    raw = apd_solve(query, u0, budget, rng)
    if s.n_constraints == 0:
        return raw
    rest = restore_feasibility(raw.point, s)
    c = query.center
    gamma = query.gamma
    delta = math.sqrt(raw.distance_bound)
    d_hat = float(np.linalg.norm(raw.point - c))
    d_int = float(np.linalg.norm(np.asarray(s.slater_point, float) - c))
    k = rest.kappa
    rho = (0.5 * k * k * d_int * d_int
           + k * (1.0 - k) * d_int * d_hat
           + delta * d_hat + 0.5 * delta * delta) / gamma
    diam = s.box.diameter()
    dist_bound = min((k * diam + delta) ** 2, diam * diam)
    return ApproxProxResult(point=rest.feasible_point, rho=rho,
                            distance_bound=dist_bound,
                            inner_iters=raw.inner_iters, kappa=k)


class ApdSolver:
    """InnerSolverContract adapter for the primal-dual scheme (no restoration)."""

    a1 = APD_A1
    a2 = APD_A2

    def solve(self, query, u0, budget, rng=None):
        return apd_solve(query, u0, budget, rng)


class RestoringSolver:
    """InnerSolverContract adapter producing exactly feasible points."""

    a1 = APD_A1
    a2 = APD_A2

    def solve(self, query, u0, budget, rng=None):
        return solve_with_restoration(query, u0, budget, rng)


class ExactProjectionSolver:
    """InnerSolverContract adapter for analytically projectable sets."""

    a1 = 0.0
    a2 = 0.0

    def solve(self, query, u0, budget, rng=None):
        return exact_projection_adapter(query, u0, budget)
