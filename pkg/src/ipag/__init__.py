"""Inexact-proximal accelerated gradient solver with feasibility-preserving
inner projections, synthetic benchmarks, and verification oracles.
"""

from .errors import (BudgetZero, CertificateUnavailable, DegenerateWeights,
                     DimensionMismatch, DimensionTooLarge, InvalidAlpha,
                     InvalidHorizon, IpagError, NonFiniteIterate, OddDimension,
                     ParseError, SlaterViolation, UnboundedDual, UnsupportedSet,
                     ValidationError)
from .inner import (ApdSolver, ExactProjectionSolver, RestorationResult,
                    RestoringSolver, apd_solve, exact_projection_adapter,
                    restore_feasibility, solve_with_restoration)
from .model import (AdditiveNoiseOracle, AssumptionConstants, CompositeProblem,
                    ConstraintSet, ConvexConstraint, SmoothObjective,
                    StochasticGradientOracle, make_indicator_composite,
                    sample_minibatch_grad)
from .problems import (AnalyticProblem, QpGradientOracle, QpInstance,
                       analytic_battery, battery_problem,
                       enumerate_box_stationary_points, generate_qp,
                       load_instance, power_iteration, qp_full_gradient,
                       qp_stochastic_gradient, save_instance)
from .prox import (ApproxProxResult, BallSet, BoxSet, IndicatorOfSet,
                   ProxQuery, RhoSubgradientCertificate, check_prox_accuracy,
                   gamma_recursion, make_certificate, prox_ball, prox_box)
from .solver import (IpagState, IpagTrace, StepSchedule, ipag_schedule,
                     min_residual_curve, output_distribution, run_composite,
                     run_constrained)
from .verify import (StationarityReport, brute_force_prox, finite_diff_check,
                     stationarity_residual)

__version__ = "0.1.0"
