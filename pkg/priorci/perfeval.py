"""
Quadrature engine for the performance of J(b, s).

Coverage

    c(gamma) = (1 - alpha) + int_0^inf int_{-d}^{d} (k - k_dag) phi(w x - gamma) dx  w f_W(w) dw

with k = Psi(w (b(x) - s(|x|)), w (b(x) + s(|x|)); rho (w x - gamma), 1 - rho^2) and k_dag the same
slice with endpoints -/+ t w, scaled expected length

    e(gamma) = 1 + 1 / (t E(W)) int int_{-d}^{d} (s(|x|) - t) phi(w x - gamma) dx  w^2 f_W(w) dw

and the weighted criterion

    2 / (t E(W)) int int_0^d (s(x) - t) (lambda + phi(w x)) dx  w^2 f_W(w) dw.

The substitution h = w x turns b(h/w) into b(x), so b and s are only ever
evaluated on the fixed x nodes. Integrals use composite Gauss-Legendre panels:
x panels never straddle a breakpoint of (b, s), w panels are equally spaced in
normal score between two extreme quantiles of W. With infinite degrees of
freedom the w integral collapses to the point w = 1.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from numpy.typing import ArrayLike
from scipy import optimize as sp_optimize
from scipy import special

from .bsfun import IntervalFunctions, naive_bs
from .dist_core import (
    DegreesOfFreedom,
    critical_value,
    expected_w,
    normal_pdf,
    w_density,
    w_partial_mean_outside,
    w_quantile,
    w_tail_mass,
)
from .errors import DegenerateCorrelationError, InvalidInputError

logger = logging.getLogger(__name__)

CURVE_CHUNK = 32


@dataclass(frozen=True)
class EvalSettings:
    """Quadrature resolution and the w truncation scheme.

    `w_truncation=None` means AUTO: (w_lo, w_hi) are the p and 1 - p quantiles
    of W, with p = min(w_tail_prob, target_abs_tol / 40) so that the coverage
    truncation bound 4p stays below target_abs_tol / 10. `curve(..., check=True)`
    compares against a node-doubled rule and refines when the change exceeds
    target_abs_tol.
    """

    w_truncation: Optional[tuple[float, float]] = None
    w_tail_prob: float = 1e-12
    w_panels: int = 16
    w_nodes: int = 8
    x_nodes: int = 8
    x_panel_width: float = 0.5
    target_abs_tol: float = 1e-6

    def __post_init__(self):
        if self.w_truncation is not None:
            lo, hi = self.w_truncation
            if not 0 < lo < hi:
                raise InvalidInputError(f"w truncation must satisfy 0 < w_lo < w_hi, got {self.w_truncation}")
            object.__setattr__(self, "w_truncation", (float(lo), float(hi)))
        if not 0 < self.w_tail_prob < 0.5:
            raise InvalidInputError("w_tail_prob must lie in (0, 0.5)")
        if min(self.w_panels, self.w_nodes, self.x_nodes) < 1:
            raise InvalidInputError("panel and node counts must be positive")
        if not (self.x_panel_width > 0 and self.target_abs_tol > 0):
            raise InvalidInputError("x_panel_width and target_abs_tol must be positive")

    def refined(self, factor: int = 2) -> "EvalSettings":
        """Same scheme with node and panel counts multiplied by `factor`."""
        return EvalSettings(
            w_truncation=self.w_truncation,
            w_tail_prob=self.w_tail_prob,
            w_panels=self.w_panels * factor,
            w_nodes=self.w_nodes * factor,
            x_nodes=self.x_nodes * factor,
            x_panel_width=self.x_panel_width / factor,
            target_abs_tol=self.target_abs_tol,
        )

    @property
    def tail_prob(self) -> float:
        return min(self.w_tail_prob, self.target_abs_tol / 40.0)

    def w_range(self, dof: DegreesOfFreedom) -> tuple[float, float]:
        if dof.is_infinite:
            return (1.0, 1.0)
        if self.w_truncation is not None:
            return self.w_truncation
        lo, hi = w_quantile(np.array([self.tail_prob, 1.0 - self.tail_prob]), dof)
        return float(lo), float(hi)


@dataclass(frozen=True)
class PerformanceCurve:
    gamma_grid: np.ndarray
    coverage: np.ndarray
    e_squared: np.ndarray

    def __post_init__(self):
        gamma = np.asarray(self.gamma_grid, dtype=float)
        cov = np.asarray(self.coverage, dtype=float)
        e2 = np.asarray(self.e_squared, dtype=float)
        if not (gamma.shape == cov.shape == e2.shape) or gamma.ndim != 1:
            raise InvalidInputError("curve columns must be one-dimensional and of equal length")
        if not (np.all(np.isfinite(cov)) and np.all(np.isfinite(e2))):
            raise InvalidInputError("curve values must be finite")
        # quadrature noise may leave a value a hair outside [0, 1]
        cov = np.clip(cov, 0.0, 1.0)
        object.__setattr__(self, "gamma_grid", gamma)
        object.__setattr__(self, "coverage", cov)
        object.__setattr__(self, "e_squared", e2)

    def __len__(self) -> int:
        return self.gamma_grid.size

    @property
    def min_coverage(self) -> float:
        return float(self.coverage.min())

    @property
    def argmin_gamma(self) -> float:
        return float(self.gamma_grid[int(np.argmin(self.coverage))])

    @property
    def max_e_squared(self) -> float:
        return float(self.e_squared.max())


def gauss_panels(edges: Sequence[float], nodes_per_panel: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights over consecutive panels."""
    ref_nodes, ref_weights = leggauss(nodes_per_panel)
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (ref_nodes[None, :] + 1.0)).ravel()
    weights = (half * ref_weights[None, :]).ravel()
    return nodes, weights


def x_panel_edges(d: float, breakpoints: ArrayLike, max_width: float) -> np.ndarray:
    """Panel edges on [0, d] that include every breakpoint."""
    points = np.asarray(breakpoints, dtype=float)
    points = points[(points > 0.0) & (points < d)]
    coarse = np.unique(np.concatenate([[0.0], points, [d]]))
    edges = [0.0]
    for lo, hi in zip(coarse[:-1], coarse[1:]):
        count = max(1, math.ceil((hi - lo) / max_width - 1e-12))
        edges.extend(np.linspace(lo, hi, count + 1)[1:])
    return np.array(edges)


def w_nodes(dof: DegreesOfFreedom, settings: EvalSettings) -> tuple[np.ndarray, np.ndarray]:
    """Nodes in w and weights that already include f_W(w)."""
    if dof.is_infinite:
        return np.ones(1), np.ones(1)
    lo, hi = settings.w_range(dof)
    if settings.w_truncation is None:
        scores = np.linspace(special.ndtri(settings.tail_prob), -special.ndtri(settings.tail_prob), settings.w_panels + 1)
        edges = w_quantile(special.ndtr(scores), dof)
        edges[0], edges[-1] = lo, hi
    else:
        edges = np.linspace(lo, hi, settings.w_panels + 1)
    nodes, weights = gauss_panels(edges, settings.w_nodes)
    return nodes, weights * w_density(nodes, dof)


def coverage_truncation_bound(dof: DegreesOfFreedom, settings: EvalSettings) -> float:
    """Bound on the coverage contribution of w outside (w_lo, w_hi)."""
    if dof.is_infinite:
        return 0.0
    lo, hi = settings.w_range(dof)
    return 2.0 * w_tail_mass(lo, hi, dof)


def length_truncation_bound(bs: IntervalFunctions, settings: EvalSettings, points: int = 2001) -> float:
    """Bound on the scaled-length contribution of w outside (w_lo, w_hi)."""
    dof = bs.dof
    if dof.is_infinite:
        return 0.0
    lo, hi = settings.w_range(dof)
    grid = np.linspace(0.0, bs.d, points)
    sup_dev = float(np.max(np.abs(bs.s(grid) - bs.critical)))
    return sup_dev * w_partial_mean_outside(lo, hi, dof, power=1) / (bs.critical * expected_w(dof))


class GridEvaluator:
    """Coverage, scaled length and criterion of any (b, s) sharing d and breakpoints.

    Everything that does not depend on the values of b and s (nodes, weights,
    phi(w x - gamma) and the standard-interval slice k_dag) is tabulated once
    per gamma grid, so repeated evaluation inside the optimizer only touches
    the k term.
    """

    def __init__(
        self,
        d: float,
        breakpoints: ArrayLike,
        alpha: float,
        dof: DegreesOfFreedom,
        gamma_grid: ArrayLike,
        settings: EvalSettings | None = None,
        rho: Optional[float] = None,
    ):
        self.settings = settings or EvalSettings()
        self.d = float(d)
        self.alpha = alpha
        self.dof = dof
        self.rho = rho
        self.t = critical_value(alpha, dof)
        self.mean_w = expected_w(dof)
        self.gamma_grid = np.abs(np.atleast_1d(np.asarray(gamma_grid, dtype=float)))

        half_x, half_wx = gauss_panels(x_panel_edges(self.d, breakpoints, self.settings.x_panel_width), self.settings.x_nodes)
        self.half_x = half_x
        self.half_x_weights = half_wx
        # full [-d, d] rule by reflection of the [0, d] rule
        self.x = np.concatenate([-half_x[::-1], half_x])
        self.x_weights = np.concatenate([half_wx[::-1], half_wx])
        self.w, self.w_weights = w_nodes(dof, self.settings)

        h = self.w[:, None] * self.x[None, :]
        self._h = h
        length_rows = []
        for gamma in self.gamma_grid:
            dens = normal_pdf(h - gamma)
            length_rows.append(((self.w**2 * self.w_weights)[:, None] * dens).sum(axis=0) * self.x_weights)
        self._length_matrix = np.array(length_rows)

        w2 = self.w**2 * self.w_weights
        h_half = self.w[:, None] * half_x[None, :]
        self._objective_flat = w2.sum() * half_wx
        self._objective_point = (w2[:, None] * normal_pdf(h_half)).sum(axis=0) * half_wx

        self._coverage_weights = None
        self._coverage_offsets = None
        if rho is not None:
            self._tabulate_coverage(rho)
        logger.debug(
            "evaluator: %d x nodes, %d w nodes, %d gamma points", self.x.size, self.w.size, self.gamma_grid.size
        )

    def _tabulate_coverage(self, rho: float):
        if abs(rho) >= 1.0:
            raise DegenerateCorrelationError("coverage needs |rho| < 1 so that 1 - rho^2 > 0")
        self._sd = math.sqrt(1.0 - rho * rho)
        weights, offsets = [], []
        tw = self.t * self.w[:, None]
        for gamma in self.gamma_grid:
            mu = rho * (self._h - gamma)
            wt = (self.w * self.w_weights)[:, None] * normal_pdf(self._h - gamma) * self.x_weights[None, :]
            k_dag = special.ndtr((tw - mu) / self._sd) - special.ndtr((-tw - mu) / self._sd)
            weights.append(wt)
            offsets.append(float((wt * k_dag).sum()))
        self._coverage_weights = weights
        self._coverage_offsets = np.array(offsets)

    def _check_compatible(self, bs: IntervalFunctions):
        if abs(bs.d - self.d) > 1e-12 or bs.alpha != self.alpha or bs.dof != self.dof:
            raise InvalidInputError("b,s functions do not match the evaluator's d, alpha or dof")

    def coverage(self, bs: IntervalFunctions) -> np.ndarray:
        """c(gamma) on the evaluator's gamma grid."""
        if self._coverage_weights is None:
            raise InvalidInputError("evaluator was built without rho; coverage is unavailable")
        self._check_compatible(bs)
        b = bs.b(self.x)
        s = bs.s(self.x)
        lo = self.w[:, None] * (b - s)[None, :]
        hi = self.w[:, None] * (b + s)[None, :]
        out = np.empty(self.gamma_grid.size)
        for j, gamma in enumerate(self.gamma_grid):
            mu = self.rho * (self._h - gamma)
            k = special.ndtr((hi - mu) / self._sd) - special.ndtr((lo - mu) / self._sd)
            out[j] = (self._coverage_weights[j] * k).sum() - self._coverage_offsets[j]
        return (1.0 - self.alpha) + out

    def scaled_length(self, bs: IntervalFunctions) -> np.ndarray:
        """e(gamma) on the evaluator's gamma grid."""
        self._check_compatible(bs)
        deviation = bs.s(np.abs(self.x)) - self.t
        return 1.0 + self._length_matrix @ deviation / (self.t * self.mean_w)

    def objective(self, bs: IntervalFunctions, lam: float) -> float:
        if lam < 0:
            raise InvalidInputError("lambda must be nonnegative")
        self._check_compatible(bs)
        deviation = bs.s(self.half_x) - self.t
        weights = lam * self._objective_flat + self._objective_point
        return float(2.0 * (weights @ deviation) / (self.t * self.mean_w))

    def objective_gradient_s(self, lam: float) -> np.ndarray:
        """d objective / d s(x) at the half-line x nodes; the criterion is linear in s."""
        weights = lam * self._objective_flat + self._objective_point
        return 2.0 * weights / (self.t * self.mean_w)


def _evaluator_for(bs: IntervalFunctions, gamma_grid, settings, rho=None) -> GridEvaluator:
    return GridEvaluator(bs.d, bs.breakpoints, bs.alpha, bs.dof, gamma_grid, settings, rho)


def coverage(gamma: float, bs: IntervalFunctions, rho: float, settings: EvalSettings | None = None) -> float:
    """Coverage probability of J(b, s) at gamma; even in gamma."""
    return float(_evaluator_for(bs, [gamma], settings, rho).coverage(bs)[0])


def scaled_expected_length(gamma: float, bs: IntervalFunctions, settings: EvalSettings | None = None) -> float:
    """Expected length of J(b, s) divided by that of the standard interval."""
    return float(_evaluator_for(bs, [gamma], settings).scaled_length(bs)[0])


def objective(bs: IntervalFunctions, lam: float, settings: EvalSettings | None = None) -> float:
    """Integral of e(gamma) - 1 against the weight lambda * dgamma + point mass at 0."""
    return _evaluator_for(bs, [0.0], settings).objective(bs, lam)


def curve(
    bs: IntervalFunctions,
    rho: float,
    gamma_grid: ArrayLike,
    settings: EvalSettings | None = None,
    workers: int = 1,
    check: bool = False,
) -> PerformanceCurve:
    """Coverage and e^2 over a nonnegative increasing gamma grid.

    Args:
        bs: the (b, s) pair to evaluate.
        rho: correlation between theta_hat and tau_hat.
        gamma_grid: nonnegative, increasing.
        settings: quadrature settings; defaults to EvalSettings().
        workers: number of threads sharing the grid; results keep grid order.
        check: also evaluate with doubled nodes; when coverage or e moves by
            more than `settings.target_abs_tol`, the doubled result is returned.

    Returns:
        PerformanceCurve
    """
    grid = np.asarray(gamma_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidInputError("gamma grid must be a nonempty one-dimensional array")
    if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("gamma grid must be nonnegative and increasing")
    settings = settings or EvalSettings()

    result = _curve_values(bs, rho, grid, settings, workers)
    if check:
        finer = _curve_values(bs, rho, grid, settings.refined(), workers)
        change = quadrature_change(result, finer)
        if change > settings.target_abs_tol:
            logger.warning(
                "quadrature moved by %.3g under node doubling (target %.3g); using the finer rule",
                change, settings.target_abs_tol,
            )
            result = finer
        else:
            logger.debug("node doubling changed the curve by %.3g", change)
    logger.info(
        "curve: %d points, min coverage %.6f, max e^2 %.6f", grid.size, result.coverage.min(), result.e_squared.max()
    )
    return result


def _curve_values(
    bs: IntervalFunctions, rho: float, grid: np.ndarray, settings: EvalSettings, workers: int
) -> PerformanceCurve:
    def evaluate(chunk: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ev = _evaluator_for(bs, chunk, settings, rho)
        return ev.coverage(bs), ev.scaled_length(bs) ** 2

    workers = max(1, min(workers, grid.size))
    # chunks bound the size of the per-gamma coverage tables
    chunks = np.array_split(grid, max(workers, math.ceil(grid.size / CURVE_CHUNK)))
    if workers == 1:
        results = [evaluate(chunk) for chunk in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, chunks))
    cov = np.concatenate([r[0] for r in results])
    e2 = np.concatenate([r[1] for r in results])
    return PerformanceCurve(grid, cov, e2)


def quadrature_change(coarse: PerformanceCurve, fine: PerformanceCurve) -> float:
    """Largest change in coverage or e between two rules on the same grid."""
    return float(
        max(
            np.max(np.abs(coarse.coverage - fine.coverage)),
            np.max(np.abs(np.sqrt(coarse.e_squared) - np.sqrt(fine.e_squared))),
        )
    )


def gamma_grid(gamma_max: float, step: float) -> np.ndarray:
    """0, step, 2 step, ... up to gamma_max; a single point when step exceeds the range."""
    if gamma_max < 0 or step <= 0:
        raise InvalidInputError("gamma_max must be nonnegative and step positive")
    count = int(math.floor(gamma_max / step + 1e-9))
    return step * np.arange(count + 1)


@dataclass(frozen=True)
class NaiveMinimum:
    gamma_star: float
    min_coverage: float
    curve: PerformanceCurve


def naive_min_coverage(
    rho: float,
    q: float,
    alpha: float,
    dof: DegreesOfFreedom,
    gamma_max: float = 10.0,
    step: float = 0.05,
    settings: EvalSettings | None = None,
) -> NaiveMinimum:
    """Minimum over gamma >= 0 of the naive preliminary-test interval's coverage.

    A grid search locates the minimizing cell, then a bounded scalar search
    refines gamma inside it.
    """
    bs = naive_bs(q, rho, alpha, dof)
    result = curve(bs, rho, gamma_grid(gamma_max, step), settings)
    j = int(np.argmin(result.coverage))
    gamma_star, best = float(result.gamma_grid[j]), float(result.coverage[j])
    if result.gamma_grid.size > 1:
        lo = max(0.0, gamma_star - step)
        hi = min(float(result.gamma_grid[-1]), gamma_star + step)

        def at(gamma: float) -> float:
            return coverage(gamma, bs, rho, settings)

        refined = sp_optimize.minimize_scalar(at, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
        if refined.success and refined.fun < best:
            gamma_star, best = float(refined.x), float(refined.fun)
    logger.info("naive interval: min coverage %.6f at gamma %.4f", best, gamma_star)
    return NaiveMinimum(gamma_star, best, result)
