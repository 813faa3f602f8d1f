"""Outer accelerated loops: stepsize schedules, the randomized output rule,
and the composite/constrained solver drivers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (DegenerateWeights, InvalidHorizon, NonFiniteIterate)
from .inner import InnerSolverContract, RestoringSolver
from .model import CompositeProblem, sample_minibatch_grad
from .prox import ProxQuery, gamma_recursion


@dataclass(frozen=True)
class StepSchedule:
    """Per-iteration parameters of the accelerated loop (1-indexed).

    Arrays hold k = 1..horizon. Construction enforces alpha_k * gamma_k <=
    lambda_k for every k and that Gamma follows the telescoping recursion
    of alpha.
    """

    alpha: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    Gamma: np.ndarray
    batch: np.ndarray
    p_budget: np.ndarray
    q_budget: np.ndarray
    L: float

    def __post_init__(self):
        n = len(self.alpha)
        for name in ("gamma", "lam", "Gamma", "batch", "p_budget", "q_budget"):
            if len(getattr(self, name)) != n:
                raise InvalidHorizon(f"schedule array {name} has wrong length")
        if np.any(self.alpha * self.gamma > self.lam * (1 + 1e-12)):
            raise InvalidHorizon("alpha_k * gamma_k <= lambda_k violated")
        ref = gamma_recursion(self.alpha)
        if np.max(np.abs(ref - self.Gamma)) > 1e-12:
            raise InvalidHorizon("Gamma does not match the alpha recursion")

    @property
    def horizon(self) -> int:
        return len(self.alpha)

    def at(self, k: int):
        """1-indexed access: (alpha, gamma, lambda, Gamma, N, p, q) at step k."""
        i = k - 1
        return (self.alpha[i], self.gamma[i], self.lam[i], self.Gamma[i],
                int(self.batch[i]), int(self.p_budget[i]), int(self.q_budget[i]))


def ipag_schedule(L: float, horizon: int) -> StepSchedule:
    """The accelerated schedule driving the O(1/T) residual rate.

    alpha_k = 2/(k+1), gamma_k = k/(4L), lambda_k = 1/(2L),
    Gamma_k = 2/(k(k+1)), batch N_k = k+1, inner budgets p_k = k+1, q_k = k.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    if horizon < 2:
        raise InvalidHorizon(f"horizon must be >= 2, got {horizon}")
    k = np.arange(1, horizon + 1, dtype=float)
    return StepSchedule(
        alpha=2.0 / (k + 1.0),
        gamma=k / (4.0 * L),
        lam=np.full(horizon, 1.0 / (2.0 * L)),
        Gamma=2.0 / (k * (k + 1.0)),
        batch=(k + 1.0).astype(int),
        p_budget=(k + 1.0).astype(int),
        q_budget=k.astype(int),
        L=L,
    )


def output_distribution(schedule: StepSchedule, T: int) -> np.ndarray:
    """Sampling weights of the output index over {floor(T/2), ..., T}.

    w_k = (1 - L lambda_k) / (16 lambda_k Gamma_k), normalized. For the
    standard schedule this is proportional to k (k+1).
    """
    if T < 1 or T > schedule.horizon:
        raise InvalidHorizon(f"T={T} outside schedule horizon")
    lo = max(1, T // 2)
    ks = np.arange(lo, T + 1)
    lam = schedule.lam[ks - 1]
    Gam = schedule.Gamma[ks - 1]
    w = (1.0 - schedule.L * lam) / (16.0 * lam * Gam)
    if np.any(w <= 0):
        raise DegenerateWeights("nonpositive output weight; need lambda_k < 1/L")
    return w / w.sum()


@dataclass
class IpagState:
    """Snapshot of the three iterate sequences plus oracle counters."""

    k: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    grad_samples: int = 0
    constraint_grad_evals: int = 0


@dataclass
class IpagTrace:
    """Per-iteration records of one solver run (index 0 is iteration 1)."""

    residual_sq: list[float] = field(default_factory=list)
    obj_z: list[float] = field(default_factory=list)
    obj_y: list[float] = field(default_factory=list)
    feas_margin: list[float] = field(default_factory=list)
    e_claims: list[float] = field(default_factory=list)
    rho_claims: list[float] = field(default_factory=list)
    e_predicted: list[float] = field(default_factory=list)
    rho_predicted: list[float] = field(default_factory=list)
    inner_iters: list[int] = field(default_factory=list)
    batch_sizes: list[int] = field(default_factory=list)
    kappa_x: list[float] = field(default_factory=list)
    kappa_y: list[float] = field(default_factory=list)
    x_hist: list[np.ndarray] = field(default_factory=list)
    y_hist: list[np.ndarray] = field(default_factory=list)
    z_hist: list[np.ndarray] = field(default_factory=list)
    grad_samples: int = 0
    constraint_grad_evals: int = 0
    output_index: int = 0
    z_out: Optional[np.ndarray] = None

    @property
    def T(self) -> int:
        return len(self.residual_sq)


def run_composite(problem: CompositeProblem, schedule: StepSchedule,
                  inner_solver: InnerSolverContract, x0: np.ndarray,
                  y0: Optional[np.ndarray], T: int,
                  rng: np.random.Generator) -> IpagTrace:
    """Run the accelerated inexact-prox loop for T iterations.

    Each iteration forms z_k = (1-alpha_k) y_{k-1} + alpha_k x_{k-1}, draws
    ONE mini-batch gradient of size N_k at z_k shared by both prox steps,
    then inexactly solves
        x_k ~ prox_{gamma_k h}(x_{k-1} - gamma_k g)   (budget q_k, start x_{k-1})
        y_k ~ prox_{lambda_k h}(z_k   - lambda_k g)   (budget p_k, start y_{k-1})
    The returned trace includes the randomly selected output index and point.
    """
    if T < 1 or T > schedule.horizon:
        raise InvalidHorizon(f"T={T} outside schedule horizon {schedule.horizon}")
    x = np.asarray(x0, dtype=float).copy()
    y = x.copy() if y0 is None else np.asarray(y0, dtype=float).copy()
    if problem.h_value(x) == math.inf or problem.h_value(y) == math.inf:
        raise ValueError("x0 and y0 must be feasible for the nonsmooth part")

    trace = IpagTrace()
    for k in range(1, T + 1):
        a_k, g_k, lam_k, _, N_k, p_k, q_k = schedule.at(k)
        z = (1.0 - a_k) * y + a_k * x
        g_bar, _ = sample_minibatch_grad(problem, z, N_k, rng)
        trace.grad_samples += N_k

        rx = inner_solver.solve(
            ProxQuery(center=x - g_k * g_bar, gamma=g_k,
                      nonsmooth=problem.nonsmooth), u0=x, budget=q_k, rng=rng)
        ry = inner_solver.solve(
            ProxQuery(center=z - lam_k * g_bar, gamma=lam_k,
                      nonsmooth=problem.nonsmooth), u0=y, budget=p_k, rng=rng)
        x, y = rx.point, ry.point
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))
                and np.all(np.isfinite(z))):
            raise NonFiniteIterate(f"non-finite iterate at k={k}")

        trace.residual_sq.append(float(np.sum((y - z) ** 2)))
        trace.obj_z.append(float(problem.objective.eval(z)))
        trace.obj_y.append(float(problem.objective.eval(y)))
        trace.feas_margin.append(_feasibility_margin(problem, x, y))
        trace.e_claims.append(rx.rho)
        trace.rho_claims.append(ry.rho)
        # closed-form accuracy predictions from the solver's declared rate
        # constants; diagnostics only, never consumed by the loop
        a1 = getattr(inner_solver, "a1", 0.0)
        a2 = getattr(inner_solver, "a2", 0.0)
        trace.e_predicted.append(
            g_k * (a1 * float(np.sum((x - x_prev) ** 2)) + a2) / (q_k * q_k))
        trace.rho_predicted.append(
            lam_k * (a1 * float(np.sum((y - y_prev) ** 2)) + a2) / (p_k * p_k))
        trace.inner_iters.append(rx.inner_iters + ry.inner_iters)
        trace.constraint_grad_evals += rx.inner_iters + ry.inner_iters
        trace.batch_sizes.append(N_k)
        trace.kappa_x.append(rx.kappa if rx.kappa is not None else 0.0)
        trace.kappa_y.append(ry.kappa if ry.kappa is not None else 0.0)
        trace.x_hist.append(x.copy())
        trace.y_hist.append(y.copy())
        trace.z_hist.append(z.copy())

    probs = output_distribution(schedule, T)
    lo = max(1, T // 2)
    trace.output_index = int(rng.choice(np.arange(lo, T + 1), p=probs))
    trace.z_out = trace.z_hist[trace.output_index - 1].copy()
    return trace


def run_constrained(problem: CompositeProblem, schedule: StepSchedule,
                    x0: np.ndarray, y0: Optional[np.ndarray], T: int,
                    rng: np.random.Generator,
                    inner_solver: Optional[InnerSolverContract] = None,
                    ) -> IpagTrace:
    """Constrained variant: every inner solve is followed by exact
    feasibility restoration, so all stored iterates are feasible.
    """
    solver = inner_solver if inner_solver is not None else RestoringSolver()
    return run_composite(problem, schedule, solver, x0, y0, T, rng)


def min_residual_curve(trace: IpagTrace) -> list[tuple[int, float]]:
    """Prefix minimum of the recorded residuals: (T', min_{k<=T'} r_k)."""
    if trace.T == 0:
        raise ValueError("empty trace")
    out = []
    best = math.inf
    for i, r in enumerate(trace.residual_sq, start=1):
        best = min(best, r)
        out.append((i, best))
    return out


def _feasibility_margin(problem, x, y) -> float:
    s = problem.nonsmooth.set
    if hasattr(s, "max_violation"):
        return max(s.max_violation(x), s.max_violation(y))
    return 0.0 if (problem.h_value(x) == 0.0 and problem.h_value(y) == 0.0) else math.inf
