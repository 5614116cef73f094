"""
Numerical construction of the new interval.

`solve` minimizes the weighted expected-length criterion over the spline
values (b at the interior knots, s at every knot but d) subject to
c(gamma) >= 1 - alpha on the grid {0, delta, ..., M delta}, using SLSQP with
forward-difference Jacobians of the quadrature. The result is re-checked on a
grid four times finer before it is reported.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import optimize as sp_optimize

from .bsfun import BSFunctions, build_spline_bs, even_knots, s_value_basis
from .dist_core import DegreesOfFreedom, critical_value
from .errors import InvalidInputError
from .perfeval import EvalSettings, GridEvaluator, PerformanceCurve, curve, gamma_grid

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("lambda", "d", "knot_step")


@dataclass(frozen=True)
class SolveConfig:
    lam: float
    d: float
    knots: tuple[float, ...]
    rho: float
    alpha: float = 0.05
    dof: DegreesOfFreedom = field(default_factory=DegreesOfFreedom.infinite)
    constraint_delta: float = 0.25
    # None means enough points to reach d + 6
    constraint_count: Optional[int] = None
    eval: EvalSettings = field(default_factory=EvalSettings)
    feasibility_tol: float = 5e-4
    objective_tol: float = 1e-9
    max_iterations: int = 200
    fd_step: float = 1e-5
    verify_factor: int = 4
    multistart: int = 0
    seed: int = 0
    s_bc: str = "natural"

    def __post_init__(self):
        object.__setattr__(self, "knots", tuple(float(k) for k in self.knots))
        object.__setattr__(self, "dof", DegreesOfFreedom.parse(self.dof))
        if self.lam < 0:
            raise InvalidInputError(f"lambda must be nonnegative, got {self.lam}")
        if not self.d > 0:
            raise InvalidInputError("d must be positive")
        if abs(self.rho) >= 1:
            raise InvalidInputError("|rho| must be below 1")
        if not 0 < self.alpha < 1:
            raise InvalidInputError("alpha must lie in (0, 1)")
        if not self.constraint_delta > 0:
            raise InvalidInputError("constraint_delta must be positive")
        if self.gamma_max < self.d + 4 - 1e-9:
            raise InvalidInputError(f"constraint grid reaches {self.gamma_max}; it must cover [0, d + 4]")
        for name in ("feasibility_tol", "objective_tol", "fd_step"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.max_iterations < 1 or self.verify_factor < 1 or self.multistart < 0:
            raise InvalidInputError("max_iterations and verify_factor must be positive, multistart nonnegative")
        # validates knots against d
        build_spline_bs(self.d, self.knots, [0.0] * (len(self.knots) - 2), [1.0] * (len(self.knots) - 1), self.alpha, self.dof)

    @property
    def count(self) -> int:
        if self.constraint_count is not None:
            return self.constraint_count
        return math.ceil((self.d + 6.0) / self.constraint_delta - 1e-9)

    @property
    def gamma_max(self) -> float:
        return self.count * self.constraint_delta

    @property
    def constraint_grid(self) -> np.ndarray:
        return self.constraint_delta * np.arange(self.count + 1)

    @property
    def verification_grid(self) -> np.ndarray:
        return gamma_grid(self.gamma_max, self.constraint_delta / self.verify_factor)

    @property
    def critical(self) -> float:
        return critical_value(self.alpha, self.dof)


@dataclass
class SolveReport:
    bs: BSFunctions
    objective_value: float
    min_coverage_on_fine_grid: float
    expected_gain: float
    max_potential_loss: float
    iterations: int
    converged: bool
    wall_time: float
    message: str = ""
    bounds_active: bool = False
    curve: Optional[PerformanceCurve] = None

    @property
    def gain_loss_ratio(self) -> float:
        if self.max_potential_loss <= 0:
            return math.nan
        return self.expected_gain / self.max_potential_loss

    def summary(self) -> dict:
        ratio = self.gain_loss_ratio
        return {
            "objective_value": self.objective_value,
            "min_coverage_on_fine_grid": self.min_coverage_on_fine_grid,
            "expected_gain": self.expected_gain,
            "max_potential_loss": self.max_potential_loss,
            "gain_loss_ratio": None if math.isnan(ratio) else ratio,
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "message": self.message,
            "bounds_active": self.bounds_active,
        }


class _SplineProblem:
    """Objective and constraints as functions of the decision vector, memoized per point."""

    def __init__(self, config: SolveConfig, evaluator: GridEvaluator):
        self.config = config
        self.evaluator = evaluator
        self.n_b = len(config.knots) - 2
        self._cache: dict[bytes, np.ndarray] = {}
        # the criterion is linear in the s values and does not involve b
        basis = s_value_basis(config.knots, evaluator.half_x, config.s_bc)
        self._objective_grad = np.concatenate(
            [np.zeros(self.n_b), basis.T @ evaluator.objective_gradient_s(config.lam)]
        )

    def to_bs(self, z: np.ndarray) -> BSFunctions:
        c = self.config
        s_values = np.maximum(z[self.n_b :], 0.0)
        return build_spline_bs(c.d, c.knots, z[: self.n_b], s_values, c.alpha, c.dof, s_bc=c.s_bc)

    def objective(self, z: np.ndarray) -> float:
        return self.evaluator.objective(self.to_bs(z), self.config.lam)

    def objective_jac(self, z: np.ndarray) -> np.ndarray:
        return self._objective_grad.copy()

    def constraints(self, z: np.ndarray) -> np.ndarray:
        key = z.tobytes()
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = self.evaluator.coverage(self.to_bs(z)) - (1.0 - self.config.alpha)
        return self._cache[key]

    def constraints_jac(self, z: np.ndarray) -> np.ndarray:
        return self._forward_difference(z, self.constraints).T

    def _forward_difference(self, z: np.ndarray, fn) -> np.ndarray:
        base = fn(z)
        rows = []
        for i in range(z.size):
            step = self.config.fd_step * max(1.0, abs(z[i]))
            shifted = z.copy()
            shifted[i] += step
            rows.append((fn(shifted) - base) / step)
        return np.array(rows)


def _initial_points(config: SolveConfig) -> list[np.ndarray]:
    t = config.critical
    q = len(config.knots)
    standard = np.concatenate([np.zeros(q - 2), np.full(q - 1, t)])
    points = [standard]
    rng = np.random.default_rng(config.seed)
    for _ in range(config.multistart):
        b = rng.normal(0.0, 0.1 * t, q - 2)
        s = t * (1.0 + rng.uniform(-0.1, 0.05, q - 1))
        points.append(np.concatenate([b, s]))
    return points


def solve(config: SolveConfig) -> SolveReport:
    """Minimize the criterion subject to coverage >= 1 - alpha on the constraint grid.

    Starts from the standard interval (b = 0, s = t), which is always feasible.
    A run that stops early is still reported, with `converged=False` and the
    best iterate attached.
    """
    started = time.perf_counter()
    t = config.critical
    evaluator = GridEvaluator(
        config.d, config.knots, config.alpha, config.dof, config.constraint_grid, config.eval, config.rho
    )
    problem = _SplineProblem(config, evaluator)
    n_b = problem.n_b
    bounds = [(-2.0 * t, 2.0 * t)] * n_b + [(0.0, 2.0 * t)] * (len(config.knots) - 1)
    constraints = [{"type": "ineq", "fun": problem.constraints, "jac": problem.constraints_jac}]
    logger.info(
        "solve: lambda=%g d=%g knots=%d rho=%.6f dof=%s, %d constraint points",
        config.lam, config.d, len(config.knots), config.rho, config.dof, config.constraint_grid.size,
    )

    best = None
    for start_index, z0 in enumerate(_initial_points(config)):
        iteration = {"n": 0}

        def progress(z, _iteration=iteration):
            _iteration["n"] += 1
            if not logger.isEnabledFor(logging.DEBUG):
                return
            logger.debug(
                "iteration %d: objective %.8f, min coverage %.6f",
                _iteration["n"], problem.objective(z), problem.constraints(z).min() + 1.0 - config.alpha,
            )

        result = sp_optimize.minimize(
            problem.objective,
            z0,
            jac=problem.objective_jac,
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            callback=progress,
            options={"maxiter": config.max_iterations, "ftol": config.objective_tol},
        )
        feasible = problem.constraints(result.x).min() >= -config.feasibility_tol
        logger.info(
            "start %d: %s after %d iterations, objective %.8f, feasible=%s",
            start_index, "converged" if result.success else "stopped", result.nit, result.fun, feasible,
        )
        candidate = (result.success and feasible, -float(result.fun), start_index, result)
        if best is None or candidate[:2] > best[:2]:
            best = candidate

    result = best[3]
    z = result.x
    message = str(result.message)
    fell_back = False
    # the standard interval is feasible with objective 0, so never report anything worse
    if result.fun > 0.0 or problem.constraints(z).min() < -config.feasibility_tol:
        z = _initial_points(config)[0]
        fell_back = True
        message += "; fell back to the standard interval"
    bs = problem.to_bs(z)

    verified = curve(bs, config.rho, config.verification_grid, config.eval, check=True)
    e2 = verified.e_squared
    min_fine = verified.min_coverage
    converged = bool(result.success) and not fell_back and min_fine >= 1.0 - config.alpha - config.feasibility_tol
    tight = 1e-6 * t
    bounds_active = bool(
        np.any(np.abs(np.abs(z[:n_b]) - 2.0 * t) < tight) or np.any(z[n_b:] > 2.0 * t - tight)
    )
    if bounds_active:
        logger.warning("solution touches the variable bounds")
    try:
        bs.check_nonnegative()
    except InvalidInputError:
        logger.warning("spline s dips below zero between knots (minimum %.3g)", bs.min_s())
        converged = False

    report = SolveReport(
        bs=bs,
        objective_value=float(evaluator.objective(bs, config.lam)),
        min_coverage_on_fine_grid=min_fine,
        expected_gain=float(1.0 - e2[0]),
        max_potential_loss=float(e2.max() - 1.0),
        iterations=int(result.nit),
        converged=converged,
        wall_time=time.perf_counter() - started,
        message=message,
        bounds_active=bounds_active,
        curve=verified,
    )
    logger.info(
        "solved in %.1fs: gain %.4f, loss %.4f, min coverage %.6f",
        report.wall_time, report.expected_gain, report.max_potential_loss, min_fine,
    )
    return report


@dataclass
class SweepItem:
    label: str
    config: SolveConfig
    report: Optional[SolveReport] = None
    error: Optional[str] = None

    def row(self) -> dict:
        step = self.config.knots[1] - self.config.knots[0]
        row = {
            "label": self.label,
            "lambda": self.config.lam,
            "d": self.config.d,
            "knot_step": step,
            "expected_gain": None,
            "max_potential_loss": None,
            "gain_loss_ratio": None,
            "min_coverage": None,
            "converged": False,
            "error": self.error or "",
        }
        if self.report is not None:
            ratio = self.report.gain_loss_ratio
            row.update(
                expected_gain=self.report.expected_gain,
                max_potential_loss=self.report.max_potential_loss,
                gain_loss_ratio=None if math.isnan(ratio) else ratio,
                min_coverage=self.report.min_coverage_on_fine_grid,
                converged=self.report.converged,
            )
        return row


def _knot_step(config: SolveConfig) -> float:
    steps = np.diff(config.knots)
    if not np.allclose(steps, steps[0]):
        raise InvalidInputError("d sweeps need evenly spaced knots in the base config")
    return float(steps[0])


def sweep_configs(base: SolveConfig, vary: str, values: Sequence[float]) -> list[tuple[str, SolveConfig]]:
    """One config per value of `vary` (lambda, d or knot_step), everything else shared."""
    if vary not in SWEEP_PARAMETERS:
        raise InvalidInputError(f"can only sweep over {SWEEP_PARAMETERS}, got {vary!r}")
    if not values:
        raise InvalidInputError("sweep needs at least one value")
    configs = []
    for value in values:
        if vary == "lambda":
            config = replace(base, lam=float(value))
        elif vary == "d":
            config = replace(base, d=float(value), knots=tuple(even_knots(value, _knot_step(base))))
        else:
            config = replace(base, knots=tuple(even_knots(base.d, value)))
        configs.append((f"{vary}={value:g}", config))
    return configs


def _solve_item(item: tuple[str, SolveConfig]) -> SweepItem:
    label, config = item
    try:
        return SweepItem(label, config, report=solve(config))
    except Exception as exc:
        logger.error("sweep item %s failed: %s: %s", label, type(exc).__name__, exc)
        return SweepItem(label, config, error=f"{type(exc).__name__}: {exc}")


def sensitivity_sweep(
    base: SolveConfig, vary: str, values: Sequence[float], workers: int = 1
) -> list[SweepItem]:
    """Solve once per value; failures are recorded per item and the sweep carries on."""
    items = sweep_configs(base, vary, values)
    if workers <= 1 or len(items) == 1:
        results = []
        for item in items:
            logger.info("sweep item %s", item[0])
            results.append(_solve_item(item))
        return results
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(_solve_item, items))


def sweep_frame(items: Sequence[SweepItem]) -> pd.DataFrame:
    return pd.DataFrame([item.row() for item in items])


def format_table(columns: Sequence[tuple[str, SolveReport]]) -> str:
    """Expected gain, maximum potential loss and their ratio, one column per run."""
    data = {}
    for label, report in columns:
        data[label] = [report.expected_gain, report.max_potential_loss, report.gain_loss_ratio]
    frame = pd.DataFrame(data, index=["expected gain", "max potential loss", "gain/loss ratio"])
    return frame.to_string(float_format=lambda v: f"{v:.4f}")
