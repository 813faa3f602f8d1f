"""Problem abstractions: smooth objective, stochastic gradient oracle,
constraint sets, and the composite problem they assemble into.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, SlaterViolation
from .prox import BoxSet, IndicatorOfSet


@dataclass(frozen=True)
class SmoothObjective:
    """Smooth (possibly weakly convex) objective with an exact gradient.

    ``lipschitz_L`` bounds the gradient's Lipschitz constant and
    ``weak_convexity_ell`` the allowed downward curvature: for all x, y

        -ell/2 ||y-x||^2 <= f(y) - f(x) - <grad(x), y-x> <= L/2 ||y-x||^2.
    """

    dim: int
    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    lipschitz_L: float
    weak_convexity_ell: float = 0.0

    def __post_init__(self):
        if self.dim <= 0:
            raise DimensionMismatch(f"dim must be positive, got {self.dim}")
        if self.lipschitz_L <= 0:
            raise ValueError(f"lipschitz_L must be positive, got {self.lipschitz_L}")
        if self.weak_convexity_ell < 0:
            raise ValueError("weak_convexity_ell must be nonnegative")


class StochasticGradientOracle:
    """Unbiased mini-batch gradient oracle.

    Implementations return the average of ``batch_size`` i.i.d. gradient
    samples at ``point`` and advertise ``variance_bound_tau2`` so that the
    batch-mean noise satisfies E||xi_bar||^2 <= tau2 / batch_size.
    """

    variance_bound_tau2: float = 0.0

    def sample_grad(self, point: np.ndarray, batch_size: int,
                    rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


@dataclass
class AdditiveNoiseOracle(StochasticGradientOracle):
    """Exact gradient plus i.i.d. Gaussian noise per coordinate.

    Each sample is grad(z) + eta with eta ~ N(0, noise_std^2 I), so the
    batch mean has second moment dim * noise_std^2 / N and
    ``variance_bound_tau2 = dim * noise_std^2``.
    """

    grad: Callable[[np.ndarray], np.ndarray]
    dim: int
    noise_std: float = 0.0
    variance_bound_tau2: float = field(init=False)

    def __post_init__(self):
        self.variance_bound_tau2 = self.dim * self.noise_std ** 2

    def sample_grad(self, point, batch_size, rng):
        g = np.asarray(self.grad(point), dtype=float)
        if self.noise_std == 0.0:
            return g.copy()
        noise = rng.normal(0.0, self.noise_std, size=(batch_size, self.dim))
        return g + noise.mean(axis=0)


@dataclass(frozen=True)
class ConvexConstraint:
    """One smooth convex constraint function phi with its gradient."""

    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ConstraintSet:
    """Feasible region: a compact box intersected with smooth convex
    sublevel sets, together with a strictly feasible interior point.

    ``batch_values``/``batch_jacobian``, when given, evaluate all constraint
    functions (or gradients) in one vectorized call and take precedence over
    the per-constraint closures.
    """

    box: BoxSet
    constraints: tuple[ConvexConstraint, ...]
    slater_point: np.ndarray
    batch_values: Optional[Callable[[np.ndarray], np.ndarray]] = None
    batch_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    batch_values_many: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        x0 = np.asarray(self.slater_point, dtype=float)
        object.__setattr__(self, "slater_point", x0)
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if x0.shape != self.box.lower.shape:
            raise DimensionMismatch("slater point dimension differs from box")
        if np.any(x0 <= self.box.lower) or np.any(x0 >= self.box.upper):
            raise SlaterViolation("interior point must be strictly inside the box")
        vals0 = self.phi_values(x0)
        for i, v in enumerate(vals0):
            if v >= 0.0:
                raise SlaterViolation(
                    f"constraint {i} not strictly negative at interior point "
                    f"(value {v:g})")

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def phi_values(self, x: np.ndarray) -> np.ndarray:
        if self.batch_values is not None:
            return np.asarray(self.batch_values(x), dtype=float)
        return np.array([c.eval(x) for c in self.constraints], dtype=float)

    def phi_jacobian(self, x: np.ndarray) -> np.ndarray:
        if self.batch_jacobian is not None:
            return np.asarray(self.batch_jacobian(x), dtype=float)
        if not self.constraints:
            return np.zeros((0, self.dim))
        return np.stack([np.asarray(c.grad(x), dtype=float)
                         for c in self.constraints])

    def phi_values_many(self, pts: np.ndarray) -> np.ndarray:
        """(k, n) points -> (k, m) constraint values."""
        if self.batch_values_many is not None:
            return np.asarray(self.batch_values_many(pts), dtype=float)
        return np.stack([self.phi_values(p) for p in pts]) if len(pts) else \
            np.zeros((0, self.n_constraints))

    def max_violation(self, x: np.ndarray) -> float:
        """max_i [phi_i(x)]_+ combined with box violation."""
        v = 0.0
        if self.constraints:
            v = max(0.0, float(self.phi_values(x).max()))
        box_v = float(np.maximum(self.box.lower - x, 0.0).max(initial=0.0))
        box_v = max(box_v, float(np.maximum(x - self.box.upper, 0.0).max(initial=0.0)))
        return max(v, box_v)

    def contains(self, x: np.ndarray, tol: float = 1e-10) -> bool:
        return self.max_violation(x) <= tol


@dataclass(frozen=True)
class AssumptionConstants:
    """Diagnostic constants: gradient Lipschitz L, weak-convexity ell,
    prox-norm bound C, and oracle variance bound tau2. ``C`` defaults to
    the box diameter and is reporting-only; no solver consumes it.
    """

    L: float
    ell: float = 0.0
    C: float = 0.0
    tau2: float = 0.0

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("L must be positive")
        if min(self.ell, self.C, self.tau2) < 0:
            raise ValueError("ell, C, tau2 must be nonnegative")


@dataclass(frozen=True)
class CompositeProblem:
    """Smooth stochastic objective plus a nonsmooth part (an indicator of a
    feasible set in all shipped instances).
    """

    objective: SmoothObjective
    oracle: StochasticGradientOracle
    nonsmooth: IndicatorOfSet
    constants: Optional[AssumptionConstants] = None

    @property
    def dim(self) -> int:
        return self.objective.dim

    def h_value(self, x: np.ndarray) -> float:
        return self.nonsmooth.value(x)


def make_indicator_composite(objective: SmoothObjective,
                             oracle: StochasticGradientOracle,
                             constraint_set: ConstraintSet) -> CompositeProblem:
    """Assemble a composite problem whose nonsmooth part is the indicator
    of ``constraint_set``.

    Raises
    ------
    DimensionMismatch
        If the objective and set dimensions disagree.
    SlaterViolation
        Propagated from the constraint set when its interior point is not
        strictly feasible (checked at set construction).
    """
    if objective.dim != constraint_set.dim:
        raise DimensionMismatch(
            f"objective dim {objective.dim} != set dim {constraint_set.dim}")
    diam = float(np.linalg.norm(constraint_set.box.upper - constraint_set.box.lower))
    constants = AssumptionConstants(
        L=objective.lipschitz_L,
        ell=objective.weak_convexity_ell,
        C=diam,
        tau2=getattr(oracle, "variance_bound_tau2", 0.0),
    )
    return CompositeProblem(objective=objective, oracle=oracle,
                            nonsmooth=IndicatorOfSet(constraint_set),
                            constants=constants)


def sample_minibatch_grad(problem: CompositeProblem, z: np.ndarray, batch_size: int,
                          rng: np.random.Generator):
    """Draw one mini-batch gradient estimate at ``z``.

    Returns ``(g_bar, xi_bar)`` where ``g_bar`` is the batch mean and
    ``xi_bar = grad(z) - g_bar`` is the realized noise (None when no exact
    gradient is available for diagnostics).
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    g_bar = problem.oracle.sample_grad(z, batch_size, rng)
    xi_bar = None
    if problem.objective.grad is not None:
        xi_bar = np.asarray(problem.objective.grad(z), dtype=float) - g_bar
    return g_bar, xi_bar
