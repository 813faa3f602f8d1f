"""Experiment runner and command-line interface.

Subcommands: ``run`` (replicated experiments to CSV), ``verify`` (runtime
invariant suites), ``bench`` (oracle-count and timing summary). Exit codes:
0 success, 1 configuration/validation error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import IpagError, ParseError, ValidationError
from .inner import ExactProjectionSolver, RestoringSolver, solve_with_restoration
from .model import CompositeProblem
from .problems import (analytic_battery, battery_problem, generate_qp,
                       qp_stochastic_gradient)
from .prox import ProxQuery
from .solver import (ipag_schedule, min_residual_curve, output_distribution,
                     run_composite, run_constrained)

OBJECTIVE_MC_SAMPLES = 10_000
BATTERY_NAMES = ("box_quadratic", "ball_quadratic", "nonconvex_box")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str                     # "qp" | "battery"
    horizon: int = 200
    replications: int = 5
    seed: int = 0
    inner: str = "apd"            # "apd" | "exact"
    n: int = 0
    m: int = 0
    noise_std: float = 1.0
    battery_name: str = ""
    out: Optional[str] = None
    residual_report: bool = False
    baseline: bool = False
    parallel: int = 1


@dataclass
class ReplicationResult:
    replication: int
    n: int
    m: int
    std: float
    T: int
    f_final: float
    f_best: float
    infeas: float
    cpu_s: float
    grad_samples: int
    constraint_evals: int
    min_residual_at_T: float
    residual_curve: list[tuple[int, float]] = field(default_factory=list)


@dataclass
class RunReport:
    config: ExperimentConfig
    rows: list[ReplicationResult]
    baseline_rows: list[ReplicationResult] = field(default_factory=list)

    def aggregate(self) -> dict:
        f = np.array([r.f_final for r in self.rows])
        inf = np.array([r.infeas for r in self.rows])
        return {"f_final_mean": float(f.mean()), "f_final_std": float(f.std()),
                "infeas_max": float(inf.max())}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment configuration."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError("top-level JSON value must be an object")
    if "problem" not in raw:
        raise ValidationError("problem: missing")
    prob = raw["problem"]
    if not isinstance(prob, dict) or len(prob) != 1:
        raise ValidationError("problem: expected one of {'qp': ...} or "
                              "{'battery': ...}")
    kind = next(iter(prob))
    kwargs = dict(
        horizon=int(raw.get("horizon", 200)),
        replications=int(raw.get("replications", 5)),
        seed=int(raw.get("seed", 0)),
        inner=str(raw.get("inner", "apd")),
        out=raw.get("out"),
        residual_report=bool(raw.get("residual_report", False)),
        baseline=bool(raw.get("baseline", False)),
        parallel=int(raw.get("parallel", 1)),
    )
    if kind == "qp":
        spec = prob["qp"]
        if not isinstance(spec, dict) or "n" not in spec or "m" not in spec:
            raise ValidationError("problem.qp: needs integer fields n and m")
        n = int(spec["n"])
        m = int(spec["m"])
        if n % 2 != 0:
            raise ValidationError("problem.qp.n: n must be even, p=n/2")
        if n < 4:
            raise ValidationError("problem.qp.n: n must be >= 4")
        if m < 1:
            raise ValidationError("problem.qp.m: m must be >= 1")
        cfg = ExperimentConfig(kind="qp", n=n, m=m,
                               noise_std=float(spec.get("noise_std", 1.0)),
                               **kwargs)
    elif kind == "battery":
        name = prob["battery"]
        if name not in BATTERY_NAMES:
            raise ValidationError(
                f"problem.battery: unknown name {name!r}; "
                f"choose from {BATTERY_NAMES}")
        cfg = ExperimentConfig(kind="battery", battery_name=name,
                               noise_std=float(raw.get("noise_std", 0.0)),
                               **kwargs)
    else:
        raise ValidationError(f"problem.{kind}: unsupported problem kind")
    if cfg.horizon < 2:
        raise ValidationError("horizon: must be >= 2")
    if cfg.replications < 1:
        raise ValidationError("replications: must be >= 1")
    if cfg.inner not in ("apd", "exact"):
        raise ValidationError("inner: must be 'apd' or 'exact'")
    if cfg.parallel < 1:
        raise ValidationError("parallel: must be >= 1")
    return cfg


def _build_problem(config: ExperimentConfig):
    """Rebuilt per call (and per worker process) from the seed."""
    if config.kind == "qp":
        inst = generate_qp(config.n, config.m, config.seed, config.noise_std)
        return inst.to_composite(), inst
    prob = battery_problem(config.battery_name)
    return prob.to_composite(noise_std=config.noise_std), prob


def _objective_report(problem: CompositeProblem, inst, x: np.ndarray,
                      rng: np.random.Generator) -> float:
    """Monte Carlo estimate of the stochastic objective (exact deterministic
    part plus a 10^4-sample average of the noisy part)."""
    if hasattr(inst, "objective_mc"):
        return inst.objective_mc(x, OBJECTIVE_MC_SAMPLES, rng)
    return float(problem.objective.eval(x))


def run_replication(config: ExperimentConfig, rep: int) -> ReplicationResult:
    problem, inst = _build_problem(config)
    T = config.horizon
    rng = np.random.default_rng([config.seed, 1000 + rep])
    x0 = _start_point(problem)
    t0 = time.perf_counter()
    if config.inner == "exact":
        trace = run_composite(problem, ipag_schedule(problem.objective.lipschitz_L, T),
                              ExactProjectionSolver(), x0, None, T, rng)
    else:
        trace = run_constrained(problem, ipag_schedule(problem.objective.lipschitz_L, T),
                                x0, None, T, rng)
    cpu = time.perf_counter() - t0
    mc_rng = np.random.default_rng([config.seed, 5000 + rep])
    f_final = _objective_report(problem, inst, trace.z_out, mc_rng)
    f_best = _best_feasible_objective(trace)
    s = problem.nonsmooth.set
    infeas = s.max_violation(trace.z_out) if hasattr(s, "max_violation") else 0.0
    curve = min_residual_curve(trace)
    return ReplicationResult(
        replication=rep, n=problem.dim,
        m=getattr(s, "n_constraints", 0), std=config.noise_std, T=T,
        f_final=f_final, f_best=f_best, infeas=float(infeas), cpu_s=cpu,
        grad_samples=trace.grad_samples,
        constraint_evals=trace.constraint_grad_evals,
        min_residual_at_T=curve[-1][1],
        residual_curve=curve if config.residual_report else [])


def _start_point(problem: CompositeProblem) -> np.ndarray:
    s = problem.nonsmooth.set
    if hasattr(s, "slater_point"):
        return np.asarray(s.slater_point, dtype=float).copy()
    return np.zeros(problem.dim)


def _best_feasible_objective(trace) -> float:
    best = math.inf
    for margin, oy, oz in zip(trace.feas_margin, trace.obj_y, trace.obj_z):
        if margin <= 1e-10:
            best = min(best, oy, oz)
    return best


def run_baseline_replication(config: ExperimentConfig, rep: int) -> ReplicationResult:
    """Projected stochastic gradient at the same total gradient budget.

    Constant batch of about the mean batch of the accelerated run, constant
    stepsize 1/(2L), projections through the same restored inner solver
    with a per-step budget matching the accelerated scheme's total.
    """
    problem, inst = _build_problem(config)
    T = config.horizon
    total_budget = T * (T + 3) // 2
    batch = (T + 3 + 1) // 2
    proj_budget = T + 2
    rng = np.random.default_rng([config.seed, 2000 + rep])
    L = problem.objective.lipschitz_L
    step = 1.0 / (2.0 * L)
    x = _start_point(problem)
    s = problem.nonsmooth.set
    t0 = time.perf_counter()
    remaining = total_budget
    grad_samples = 0
    constraint_evals = 0
    best = math.inf
    while remaining > 0:
        N = min(batch, remaining)
        g = problem.oracle.sample_grad(x, N, rng)
        grad_samples += N
        remaining -= N
        query = ProxQuery(center=x - step * g, gamma=step,
                          nonsmooth=problem.nonsmooth)
        res = solve_with_restoration(query, u0=x, budget=proj_budget)
        x = res.point
        constraint_evals += res.inner_iters
        best = min(best, float(problem.objective.eval(x)))
    cpu = time.perf_counter() - t0
    mc_rng = np.random.default_rng([config.seed, 6000 + rep])
    f_final = _objective_report(problem, inst, x, mc_rng)
    infeas = s.max_violation(x) if hasattr(s, "max_violation") else 0.0
    return ReplicationResult(
        replication=rep, n=problem.dim, m=getattr(s, "n_constraints", 0),
        std=config.noise_std, T=T, f_final=f_final, f_best=best,
        infeas=float(infeas), cpu_s=cpu, grad_samples=grad_samples,
        constraint_evals=constraint_evals, min_residual_at_T=math.nan)


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Run all replications (optionally in parallel) and the baseline."""
    reps = range(config.replications)
    if config.parallel > 1:
        with ProcessPoolExecutor(max_workers=config.parallel) as pool:
            rows = list(pool.map(run_replication, [config] * len(reps), reps))
            base = (list(pool.map(run_baseline_replication,
                                  [config] * len(reps), reps))
                    if config.baseline else [])
    else:
        rows = [run_replication(config, r) for r in reps]
        base = ([run_baseline_replication(config, r) for r in reps]
                if config.baseline else [])
    return RunReport(config=config, rows=rows, baseline_rows=base)


CSV_COLUMNS = ("replication", "n", "m", "std", "T", "f_final", "f_best",
               "infeas", "cpu_s", "grad_samples", "constraint_evals",
               "min_residual_at_T")


def emit_csv(report: RunReport, path) -> None:
    """One row per replication; floats via repr for exact round-trips.

    Baseline rows, when present, go to ``<path>.baseline.csv`` with the
    same schema.
    """
    _write_rows(report.rows, path)
    if report.baseline_rows:
        _write_rows(report.baseline_rows, str(path) + ".baseline.csv")
    if report.config.residual_report:
        for row in report.rows:
            if row.residual_curve:
                cpath = f"{path}.residuals_rep{row.replication}.csv"
                with open(cpath, "w", newline="\n") as fh:
                    fh.write("T,min_residual\n")
                    for t, r in row.residual_curve:
                        fh.write(f"{t},{repr(r)}\n")


def _write_rows(rows, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in rows:
            vals = [str(r.replication), str(r.n), str(r.m), repr(r.std),
                    str(r.T), repr(r.f_final), repr(r.f_best), repr(r.infeas),
                    repr(r.cpu_s), str(r.grad_samples),
                    str(r.constraint_evals), repr(r.min_residual_at_T)]
            fh.write(",".join(vals) + "\n")


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    report = run_experiment(cfg)
    out = args.out or cfg.out or "results.csv"
    emit_csv(report, out)
    agg = report.aggregate()
    print(f"wrote {out}: {len(report.rows)} replications, "
          f"f_final mean {agg['f_final_mean']:.6g} "
          f"(std {agg['f_final_std']:.3g}), max infeas {agg['infeas_max']:.3g}")
    return 0


def _cmd_bench(args) -> int:
    cfg = _load_config(args)
    row = run_replication(cfg, 0)
    print(f"problem: {cfg.kind} n={row.n} m={row.m} T={row.T}")
    print(f"objective gradient samples: {row.grad_samples}")
    print(f"inner (constraint-gradient) iterations: {row.constraint_evals}")
    print(f"wall clock: {row.cpu_s:.3f} s")
    print(f"final objective: {row.f_final:.6g}   infeasibility: {row.infeas:.3g}")
    return 0


def _cmd_verify(_args) -> int:
    failures = 0
    for name, fn in _invariant_suites():
        try:
            fn()
            print(f"PASS {name}")
        except AssertionError as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
    return 0 if failures == 0 else 2


def _invariant_suites():
    from .inner import apd_solve, restore_feasibility
    from .model import ConstraintSet, ConvexConstraint
    from .prox import BoxSet, IndicatorOfSet, prox_ball, prox_box

    def schedule_forms():
        sched = ipag_schedule(1.0, 1000)
        k = np.arange(1, 1001, dtype=float)
        assert np.array_equal(sched.alpha, 2.0 / (k + 1.0)), "alpha mismatch"
        assert np.allclose(sched.Gamma, 2.0 / (k * (k + 1.0)), rtol=1e-14), \
            "Gamma mismatch"

    def output_dist():
        probs = output_distribution(ipag_schedule(1.0, 4), 4)
        assert np.allclose(probs, np.array([6, 12, 20]) / 38.0), \
            f"T=4 probabilities wrong: {probs}"

    def prox_invariance():
        rng = np.random.default_rng(0)
        for _ in range(200):
            y = rng.uniform(-20, 20, 4)
            lo, hi = -np.ones(4) * 5, np.ones(4) * 5
            outs = {prox_box(y, g, lo, hi).tobytes() for g in (1e-3, 1.0, 1e3)}
            assert len(outs) == 1, "box prox depends on gamma"
            outs = {prox_ball(y, g, 2.0).tobytes() for g in (1e-3, 1.0, 1e3)}
            assert len(outs) == 1, "ball prox depends on gamma"

    def restoration_feasibility():
        rng = np.random.default_rng(1)
        box = BoxSet(-np.ones(3) * 10, np.ones(3) * 10)
        con = ConvexConstraint(eval=lambda x: float(x @ x - 4.0),
                               grad=lambda x: 2.0 * x)
        cs = ConstraintSet(box=box, constraints=(con,),
                           slater_point=np.zeros(3))
        for _ in range(200):
            cand = rng.uniform(-10, 10, 3)
            res = restore_feasibility(cand, cs)
            assert cs.max_violation(res.feasible_point) <= 1e-10, \
                "restored point infeasible"

    def inner_contract():
        rng = np.random.default_rng(2)
        for _ in range(3):
            a = rng.standard_normal(6)
            y = rng.standard_normal(6) * 3
            bb = float(a @ y) - 1.0
            box = BoxSet(-np.ones(6) * 100, np.ones(6) * 100)
            con = ConvexConstraint(eval=lambda x, a=a, bb=bb: float(a @ x - bb),
                                   grad=lambda x, a=a: a)
            cs = ConstraintSet(box=box, constraints=(con,),
                               slater_point=y - 2.0 * a / float(a @ a))
            ustar = y - max(float(a @ y) - bb, 0.0) / float(a @ a) * a
            q = ProxQuery(center=y, gamma=1.0, nonsmooth=IndicatorOfSet(cs))
            errs = []
            for t in (25, 100, 400):
                res = apd_solve(q, u0=cs.slater_point, budget=t)
                errs.append(max(float(np.sum((res.point - ustar) ** 2)), 1e-30))
            slope = np.polyfit(np.log([25, 100, 400]), np.log(errs), 1)[0]
            assert slope <= -1.8, f"inner solver decay too slow: {slope:.2f}"

    return [("schedule closed forms", schedule_forms),
            ("output distribution", output_dist),
            ("prox gamma-invariance", prox_invariance),
            ("restoration feasibility", restoration_feasibility),
            ("inner solver 1/t^2 contract", inner_contract)]


def _load_config(args) -> ExperimentConfig:
    text = Path(args.config).read_text()
    cfg = parse_config(text)
    if args.seed is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "seed": args.seed})
    if getattr(args, "parallel", None):
        cfg = ExperimentConfig(**{**cfg.__dict__, "parallel": args.parallel})
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipag",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a replicated experiment")
    p_run.add_argument("--config", required=True, help="JSON config path")
    p_run.add_argument("--out", default=None, help="output CSV path")
    p_run.add_argument("--seed", type=int, default=None, help="seed override")
    p_run.add_argument("--parallel", type=int, default=None,
                       help="worker processes for replications")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", help="run the invariant suites")
    p_verify.set_defaults(func=_cmd_verify)

    p_bench = sub.add_parser("bench", help="single-run timing/oracle summary")
    p_bench.add_argument("--config", required=True, help="JSON config path")
    p_bench.add_argument("--seed", type=int, default=None, help="seed override")
    p_bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except IpagError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
