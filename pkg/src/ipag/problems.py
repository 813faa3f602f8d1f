"""Synthetic problem generators: the stochastic QP with quadratic
constraints used by the benchmark, plus analytic fixtures with known
solutions for verification.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, OddDimension
from .model import (AdditiveNoiseOracle, ConstraintSet, ConvexConstraint,
                    CompositeProblem, SmoothObjective, StochasticGradientOracle,
                    make_indicator_composite)
from .prox import BoxSet

BOX_HALF_WIDTH = 10.0


def power_iteration(matvec: Callable[[np.ndarray], np.ndarray], dim: int,
                    tol: float = 1e-8, max_iters: int = 10_000,
                    seed: int = 0) -> float:
    """Dominant (largest-magnitude) eigenvalue of a symmetric operator.

    Rayleigh-quotient power iteration from a fixed seeded start; stops when
    the quotient stabilizes to ``tol`` (relative) or at ``max_iters``.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = matvec(v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v_new = w / nrm
        lam_new = float(v_new @ matvec(v_new))
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam, v = lam_new, v_new
    return lam


def extreme_eigenvalues(H: np.ndarray, tol: float = 1e-8,
                        max_iters: int = 10_000) -> tuple[float, float]:
    """(lambda_min, lambda_max) of a symmetric matrix via shifted power
    iterations only (no dense factorization)."""
    n = H.shape[0]
    dom = power_iteration(lambda v: H @ v, n, tol, max_iters)
    # eigenvalues of H - dom*I lie in [lmin - dom, lmax - dom]; the shifted
    # dominant one recovers the opposite end of the spectrum
    shifted = power_iteration(lambda v: H @ v - dom * v, n, tol, max_iters,
                              seed=1)
    other = dom + shifted
    return (min(dom, other), max(dom, other))


@dataclass(frozen=True)
class QpInstance:
    """Randomized nonconvex QP with convex quadratic constraints.

    Objective (expectation form):
        f(x) = -delta/2 ||D B x||^2 + tau_obj/2 E||A x - b - omega||^2,
    omega ~ N(0, noise_std^2 I_p). Constraints:
        phi_i(x) = x' Q_i x / 2 + d_i' x - c_i <= 0,  box |x_j| <= 10.
    The origin is strictly feasible (c_i >= 1).
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray            # diagonal entries
    b: np.ndarray
    delta: float
    tau_obj: float
    Q: np.ndarray            # (m, n, n), each PSD
    d: np.ndarray            # (m, n)
    c: np.ndarray            # (m,)
    noise_std: float
    seed: int
    L: float = field(default=0.0)
    ell: float = field(default=0.0)

    def __post_init__(self):
        H = self.hessian()
        if self.L == 0.0:
            lmin, lmax = extreme_eigenvalues(H)
            object.__setattr__(self, "L", float(max(abs(lmin), abs(lmax))))
            object.__setattr__(self, "ell", float(max(0.0, -lmin)))

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.Q.shape[0]

    def hessian(self) -> np.ndarray:
        DB = self.D[:, None] * self.B
        return -self.delta * (DB.T @ DB) + self.tau_obj * (self.A.T @ self.A)

    def objective_value(self, x: np.ndarray) -> float:
        """Deterministic part: the expectation objective minus the constant
        noise floor tau_obj * p * noise_std^2 / 2."""
        DB = self.D[:, None] * self.B
        r = self.A @ x - self.b
        return float(-0.5 * self.delta * np.sum((DB @ x) ** 2)
                     + 0.5 * self.tau_obj * np.sum(r * r))

    def objective_mc(self, x: np.ndarray, n_samples: int,
                     rng: np.random.Generator) -> float:
        """Monte Carlo estimate of the stochastic objective at x."""
        DB = self.D[:, None] * self.B
        r = self.A @ x - self.b
        omega = rng.normal(0.0, self.noise_std, size=(n_samples, self.p))
        stoch = np.mean(np.sum((r[None, :] - omega) ** 2, axis=1))
        return float(-0.5 * self.delta * np.sum((DB @ x) ** 2)
                     + 0.5 * self.tau_obj * stoch)

    def phi_values(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * np.einsum("ijk,j,k->i", self.Q, x, x) + self.d @ x - self.c

    def phi_jacobian(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("ijk,k->ij", self.Q, x) + self.d

    def phi_values_many(self, pts: np.ndarray) -> np.ndarray:
        return (0.5 * np.einsum("ijk,lj,lk->li", self.Q, pts, pts)
                + pts @ self.d.T - self.c)

    def box(self) -> BoxSet:
        return BoxSet(lower=np.full(self.n, -BOX_HALF_WIDTH),
                      upper=np.full(self.n, BOX_HALF_WIDTH))

    def constraint_set(self) -> ConstraintSet:
        cons = tuple(
            ConvexConstraint(
                eval=lambda x, i=i: float(0.5 * x @ self.Q[i] @ x
                                          + self.d[i] @ x - self.c[i]),
                grad=lambda x, i=i: self.Q[i] @ x + self.d[i])
            for i in range(self.m))
        return ConstraintSet(box=self.box(), constraints=cons,
                             slater_point=np.zeros(self.n),
                             batch_values=self.phi_values,
                             batch_jacobian=self.phi_jacobian,
                             batch_values_many=self.phi_values_many)

    def to_composite(self) -> CompositeProblem:
        obj = SmoothObjective(dim=self.n, eval=self.objective_value,
                              grad=lambda x: qp_full_gradient(self, x),
                              lipschitz_L=self.L, weak_convexity_ell=self.ell)
        return make_indicator_composite(obj, QpGradientOracle(self),
                                        self.constraint_set())


@dataclass
class QpGradientOracle(StochasticGradientOracle):
    """Mini-batch gradient oracle of the QP: each sample replaces b by
    b + omega with omega ~ N(0, noise_std^2 I_p)."""

    instance: QpInstance
    variance_bound_tau2: float = field(init=False)

    def __post_init__(self):
        inst = self.instance
        self.variance_bound_tau2 = (inst.tau_obj ** 2 * inst.noise_std ** 2
                                    * float(np.trace(inst.A.T @ inst.A)))

    def sample_grad(self, point, batch_size, rng):
        return qp_stochastic_gradient(self.instance, point, batch_size, rng)


def generate_qp(n: int, m: int, seed: int, noise_std: float = 1.0,
                d_two_point: bool = False) -> QpInstance:
    """Draw a seeded random instance.

    A (p x n, p = n/2), B (n x n) and b have U[0,1] entries; the diagonal of
    D is uniform on the integers {1, ..., 1000} (or on the two-point set
    {1, 1000} with ``d_two_point``); Q_i = M_i' M_i / n with M_i uniform,
    d_i uniform, c_i ~ U[1,2]. The objective weights are calibrated so the
    Hessian has a negative eigenvalue: tau_obj = 1 and delta = 2
    lambda_max(A'A) / lambda_max((DB)'(DB)), doubled (at most 10 times)
    until lambda_min < 0.
    """
    if n % 2 != 0 or n < 4:
        raise OddDimension(f"n must be even and >= 4, got {n}")
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    p = n // 2
    A = rng.uniform(0.0, 1.0, size=(p, n))
    B = rng.uniform(0.0, 1.0, size=(n, n))
    b = rng.uniform(0.0, 1.0, size=p)
    if d_two_point:
        D = rng.choice(np.array([1.0, 1000.0]), size=n)
    else:
        D = rng.integers(1, 1001, size=n).astype(float)
    M = rng.uniform(0.0, 1.0, size=(m, n, n))
    Q = np.einsum("iab,iac->ibc", M, M) / n
    d = rng.uniform(0.0, 1.0, size=(m, n))
    c = rng.uniform(1.0, 2.0, size=m)

    DB = D[:, None] * B
    lmax_AtA = power_iteration(lambda v: A.T @ (A @ v), n)
    lmax_DB = power_iteration(lambda v: DB.T @ (DB @ v), n)
    tau_obj = 1.0
    delta = 2.0 * lmax_AtA / lmax_DB
    for _ in range(10):
        H = -delta * (DB.T @ DB) + tau_obj * (A.T @ A)
        lmin, _ = extreme_eigenvalues(H)
        if lmin < 0.0:
            break
        delta *= 2.0
    return QpInstance(A=A, B=B, D=D, b=b, delta=delta, tau_obj=tau_obj,
                      Q=Q, d=d, c=c, noise_std=noise_std, seed=seed)


def qp_full_gradient(instance: QpInstance, x: np.ndarray) -> np.ndarray:
    """Exact gradient: -delta (DB)'(DB) x + tau_obj A'(Ax - b)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.n,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({instance.n},)")
    DB = instance.D[:, None] * instance.B
    return (-instance.delta * (DB.T @ (DB @ x))
            + instance.tau_obj * (instance.A.T @ (instance.A @ x - instance.b)))


def qp_stochastic_gradient(instance: QpInstance, x: np.ndarray, batch_size: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Mini-batch gradient: average of per-sample gradients with b replaced
    by b + omega_j. Linear in omega, so only the batch mean enters."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    g = qp_full_gradient(instance, x)
    if instance.noise_std == 0.0:
        return g
    omega = rng.normal(0.0, instance.noise_std, size=(batch_size, instance.p))
    return g - instance.tau_obj * (instance.A.T @ omega.mean(axis=0))


@dataclass(frozen=True)
class AnalyticProblem:
    """Ground-truth fixture: objective with known minimizer/stationary set."""

    name: str
    objective: SmoothObjective
    constraint_set: ConstraintSet
    minimizer: Optional[np.ndarray] = None
    stationary_points: tuple[np.ndarray, ...] = ()

    def to_composite(self, noise_std: float = 0.0) -> CompositeProblem:
        oracle = AdditiveNoiseOracle(grad=self.objective.grad,
                                     dim=self.objective.dim,
                                     noise_std=noise_std)
        return make_indicator_composite(self.objective, oracle,
                                        self.constraint_set)


def _quadratic_objective(H: np.ndarray, center: np.ndarray,
                         lin: Optional[np.ndarray] = None) -> SmoothObjective:
    n = H.shape[0]
    lin = np.zeros(n) if lin is None else lin
    eigs = np.linalg.eigvalsh(H)

    def f(x):
        dx = x - center
        return float(0.5 * dx @ H @ dx + lin @ dx)

    def g(x):
        return H @ (x - center) + lin

    return SmoothObjective(dim=n, eval=f, grad=g,
                           lipschitz_L=float(np.max(np.abs(eigs))),
                           weak_convexity_ell=float(max(0.0, -eigs.min())))


def enumerate_box_stationary_points(H: np.ndarray, lin: np.ndarray,
                                    lower: np.ndarray, upper: np.ndarray
                                    ) -> list[np.ndarray]:
    """All first-order stationary points of min x'Hx/2 + lin'x over a box,
    by exhaustive enumeration of active-face patterns (dimension <= 3)."""
    n = H.shape[0]
    if n > 3:
        raise ValueError("enumeration intended for n <= 3")
    out = []
    for pattern in itertools.product(("lo", "free", "up"), repeat=n):
        x = np.zeros(n)
        free = [i for i, s in enumerate(pattern) if s == "free"]
        for i, s in enumerate(pattern):
            if s == "lo":
                x[i] = lower[i]
            elif s == "up":
                x[i] = upper[i]
        if free:
            Hff = H[np.ix_(free, free)]
            fixed = [i for i in range(n) if i not in free]
            rhs = -(lin[free] + (H[np.ix_(free, fixed)] @ x[fixed]
                                 if fixed else 0.0))
            try:
                x[free] = np.linalg.solve(Hff, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.any(x[free] < lower[free] - 1e-12) or np.any(
                    x[free] > upper[free] + 1e-12):
                continue
        g = H @ x + lin
        ok = True
        for i, s in enumerate(pattern):
            if s == "free" and abs(g[i]) > 1e-9:
                ok = False
            if s == "lo" and g[i] < -1e-9:
                ok = False
            if s == "up" and g[i] > 1e-9:
                ok = False
        if ok and not any(np.allclose(x, prev, atol=1e-9) for prev in out):
            out.append(x)
    return out


def analytic_battery() -> list[AnalyticProblem]:
    """Fixtures with independently known solutions.

    (a) box_quadratic: strongly convex quadratic, minimizer interior to the
        box, so the constrained and unconstrained minimizers coincide.
    (b) ball_quadratic: f = ||x - x*||^2 / 2 with x* outside the unit ball
        constraint; the solution is the radial projection of x*.
    (c) nonconvex_box: 2-d indefinite quadratic over a box with the full
        stationary set enumerated by the exhaustive face analysis.
    """
    problems = []

    rng = np.random.default_rng(2024)
    n = 5
    Mrand = rng.standard_normal((n, n))
    H = Mrand @ Mrand.T + 0.5 * np.eye(n)
    center = rng.uniform(-2.0, 2.0, n)
    box = BoxSet(np.full(n, -BOX_HALF_WIDTH), np.full(n, BOX_HALF_WIDTH))
    cs = ConstraintSet(box=box, constraints=(), slater_point=np.zeros(n))
    problems.append(AnalyticProblem(
        name="box_quadratic", objective=_quadratic_objective(H, center),
        constraint_set=cs, minimizer=center))

    n = 4
    target = np.array([2.0, 1.0, 0.5, -1.0])
    radius = 1.0
    box = BoxSet(np.full(n, -BOX_HALF_WIDTH), np.full(n, BOX_HALF_WIDTH))
    ball_con = ConvexConstraint(
        eval=lambda x: float(x @ x - radius ** 2),
        grad=lambda x: 2.0 * x)
    cs = ConstraintSet(box=box, constraints=(ball_con,),
                       slater_point=np.zeros(n))
    xstar = radius * target / np.linalg.norm(target)
    problems.append(AnalyticProblem(
        name="ball_quadratic",
        objective=_quadratic_objective(np.eye(n), target),
        constraint_set=cs, minimizer=xstar))

    H2 = np.array([[2.0, 0.4], [0.4, -1.5]])
    lin2 = np.array([0.3, -0.2])
    lo2, up2 = np.full(2, -1.0), np.full(2, 1.0)
    box2 = BoxSet(lo2, up2)
    cs2 = ConstraintSet(box=box2, constraints=(), slater_point=np.zeros(2))
    stat = enumerate_box_stationary_points(H2, lin2, lo2, up2)
    problems.append(AnalyticProblem(
        name="nonconvex_box",
        objective=_quadratic_objective(H2, np.zeros(2), lin2),
        constraint_set=cs2, stationary_points=tuple(stat)))
    return problems


def battery_problem(name: str) -> AnalyticProblem:
    for p in analytic_battery():
        if p.name == name:
            return p
    raise KeyError(f"unknown battery problem {name!r}")


def _fmt_row(row) -> str:
    return " ".join(repr(float(v)) for v in np.atleast_1d(row))


def save_instance(instance: QpInstance, path) -> None:
    """Write a locale-independent text archive of the instance (exact
    round-trip through float repr)."""
    lines = ["qp-instance v1"]
    lines.append(f"meta {instance.n} {instance.m} {repr(instance.noise_std)} "
                 f"{repr(instance.delta)} {repr(instance.tau_obj)} {instance.seed}")
    for name, mat in (("A", instance.A), ("B", instance.B)):
        lines.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
        lines.extend(_fmt_row(r) for r in mat)
    lines.append(f"D {instance.n}")
    lines.append(_fmt_row(instance.D))
    lines.append(f"b {instance.p}")
    lines.append(_fmt_row(instance.b))
    for i in range(instance.m):
        lines.append(f"Q{i} {instance.n} {instance.n}")
        lines.extend(_fmt_row(r) for r in instance.Q[i])
        lines.append(f"d{i} {instance.n}")
        lines.append(_fmt_row(instance.d[i]))
        lines.append(f"c{i} 1")
        lines.append(repr(float(instance.c[i])))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_instance(path) -> QpInstance:
    """Read an instance archive written by :func:`save_instance`."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != "qp-instance v1":
        raise ValueError("not a qp-instance archive")
    meta = lines[1].split()
    n, m = int(meta[1]), int(meta[2])
    noise_std, delta, tau_obj = float(meta[3]), float(meta[4]), float(meta[5])
    seed = int(meta[6])
    idx = 2

    def read_block(expect: str):
        nonlocal idx
        head = lines[idx].split()
        if head[0] != expect:
            raise ValueError(f"expected block {expect!r}, found {head[0]!r}")
        rows = int(head[1])
        cols = int(head[2]) if len(head) > 2 else None
        idx += 1
        data = []
        nrows = rows if cols is not None else 1
        for _ in range(nrows):
            data.append([float(tok) for tok in lines[idx].split()])
            idx += 1
        arr = np.array(data)
        return arr if cols is not None else arr[0]

    A = read_block("A")
    B = read_block("B")
    D = read_block("D")
    b = read_block("b")
    Q = np.zeros((m, n, n))
    d = np.zeros((m, n))
    c = np.zeros(m)
    for i in range(m):
        Q[i] = read_block(f"Q{i}")
        d[i] = read_block(f"d{i}")
        c[i] = read_block(f"c{i}")[0]
    return QpInstance(A=A, B=B, D=D, b=b, delta=delta, tau_obj=tau_obj,
                      Q=Q, d=d, c=c, noise_std=noise_std, seed=seed)
