import numpy as np
import pytest

from ipag import (BoxSet, ConstraintSet, ConvexConstraint, IndicatorOfSet,
                  generate_qp)


@pytest.fixture(scope="session")
def qp_small():
    """Reduced instance with brute-force-checkable dimension."""
    return generate_qp(n=4, m=2, seed=3, noise_std=0.5)


@pytest.fixture(scope="session")
def qp_desk():
    """Desk-scale benchmark instance."""
    return generate_qp(n=50, m=10, seed=7, noise_std=1.0)


def make_halfspace_set(a, b, half_width=100.0, slater=None):
    """Box-bounded halfspace {x : a'x <= b} with a strictly feasible point."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    box = BoxSet(np.full(n, -half_width), np.full(n, half_width))
    con = ConvexConstraint(eval=lambda x: float(a @ x - b),
                           grad=lambda x: a)
    if slater is None:
        slater = (b - 1.0) * a / float(a @ a)
    return ConstraintSet(box=box, constraints=(con,), slater_point=slater)


def make_ball_set(radius, n, half_width=100.0):
    """Box-bounded centered ball as a smooth constraint set."""
    box = BoxSet(np.full(n, -half_width), np.full(n, half_width))
    con = ConvexConstraint(eval=lambda x: float(x @ x - radius ** 2),
                           grad=lambda x: 2.0 * x)
    return ConstraintSet(box=box, constraints=(con,), slater_point=np.zeros(n))


def halfspace_projection(y, a, b):
    """Analytic projection onto {x : a'x <= b}."""
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    return y - max(float(a @ y - b), 0.0) / float(a @ a) * a


def inner_battery(seed=42, n_instances=20):
    """Fixed random battery of halfspace/ball projection instances with
    analytic solutions (dim <= 20), used for the 1/t^2 contract checks."""
    rng = np.random.default_rng(seed)
    instances = []
    for i in range(n_instances):
        n = int(rng.integers(2, 21))
        if i < n_instances // 2:
            a = rng.standard_normal(n)
            y = rng.standard_normal(n) * 3.0
            b = float(a @ y) - abs(rng.standard_normal()) - 0.5
            cs = make_halfspace_set(a, b)
            ustar = halfspace_projection(y, a, b)
        else:
            y = rng.standard_normal(n)
            y *= (2.0 + abs(rng.standard_normal())) / np.linalg.norm(y)
            cs = make_ball_set(1.0, n)
            ustar = y / np.linalg.norm(y)
        gamma = float(rng.uniform(0.1, 10.0))
        u0 = rng.uniform(-5.0, 5.0, n)
        instances.append({"set": cs, "y": y, "gamma": gamma, "u0": u0,
                          "ustar": ustar,
                          "indicator": IndicatorOfSet(cs)})
    return instances
