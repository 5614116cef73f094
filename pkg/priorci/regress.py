"""
Least-squares fitting and the sufficient reduction every formula consumes.

A RegressionProblem states the inference task (design X, response y, the
vectors a and c, the number t and the level alpha). `fit` reduces it to a
Geometry: the entries of V = cov(theta_hat, tau_hat) / sigma^2, their
correlation rho, the degrees of freedom and, when y is present, the estimates
theta_hat = a'beta_hat, tau_hat = c'beta_hat - t and sigma_hat.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg

from .dist_core import DegreesOfFreedom, critical_value
from .errors import InvalidInputError, SingularDesignError

logger = logging.getLogger(__name__)

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class RegressionProblem:
    X: np.ndarray
    a: np.ndarray
    c: np.ndarray
    t: float = 0.0
    alpha: float = 0.05
    y: Optional[np.ndarray] = None
    # external variance estimate sigma_hat^2 / sigma^2 ~ Q/m with its own m
    sigma_hat: Optional[float] = None
    dof: Optional[DegreesOfFreedom] = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        a = np.asarray(self.a, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float).ravel()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)
        n, p = X.shape
        if a.shape != (p,) or c.shape != (p,):
            raise InvalidInputError(f"a and c must have length p={p}, got {a.size} and {c.size}")
        if not np.any(a):
            raise InvalidInputError("a must be nonzero")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).ravel()
            if y.shape != (n,):
                raise InvalidInputError(f"response has {y.size} rows but the design has {n}")
            object.__setattr__(self, "y", y)
        if self.sigma_hat is not None:
            if self.sigma_hat < 0:
                raise InvalidInputError("sigma_hat must be nonnegative")
            if self.dof is None:
                raise InvalidInputError("an external sigma_hat needs its degrees of freedom")
            if n < p:
                raise InvalidInputError(f"need n >= p, got n={n}, p={p}")
        elif n <= p:
            raise InvalidInputError(f"need n > p to estimate sigma, got n={n}, p={p}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class Geometry:
    v11: float
    v12: float
    v22: float
    dof: DegreesOfFreedom
    alpha: float = 0.05
    theta_hat: Optional[float] = None
    tau_hat: Optional[float] = None
    sigma_hat: Optional[float] = None
    rho: float = field(init=False)

    def __post_init__(self):
        if not (self.v11 > 0 and self.v22 > 0):
            raise InvalidInputError("v11 and v22 must be positive")
        rho = self.v12 / math.sqrt(self.v11 * self.v22)
        if abs(rho) > 1.0 + 1e-12:
            raise InvalidInputError(f"|rho| exceeds 1 ({rho})")
        object.__setattr__(self, "rho", max(-1.0, min(1.0, rho)))

    @classmethod
    def from_moments(
        cls,
        v11: float,
        v12: float,
        v22: float,
        dof: DegreesOfFreedom,
        alpha: float = 0.05,
        theta_hat: Optional[float] = None,
        tau_hat: Optional[float] = None,
        sigma_hat: Optional[float] = None,
    ) -> "Geometry":
        return cls(v11, v12, v22, dof, alpha, theta_hat, tau_hat, sigma_hat)

    @property
    def has_estimates(self) -> bool:
        return None not in (self.theta_hat, self.tau_hat, self.sigma_hat)

    @property
    def critical(self) -> float:
        return critical_value(self.alpha, self.dof)

    def standardized_tau(self) -> float:
        """tau_hat / (sigma_hat sqrt(v22)), the preliminary test statistic."""
        self._require_estimates()
        if self.sigma_hat <= 0:
            raise InvalidInputError("sigma_hat must be positive to standardize tau_hat")
        return self.tau_hat / (self.sigma_hat * math.sqrt(self.v22))

    def _require_estimates(self):
        if not self.has_estimates:
            raise InvalidInputError("geometry was built from the design only; estimates are absent")


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise InvalidInputError(f"lower endpoint {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper}


def _qr(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.min() <= _RANK_TOL * max(diag.max(), 1.0):
        raise SingularDesignError("design matrix columns are linearly dependent")
    return Q, R


def _moment_matrix(R: np.ndarray, a: np.ndarray, c: np.ndarray) -> np.ndarray:
    # V = A' (X'X)^{-1} A with X'X = R'R, so V = L'L for L = R^{-T} A
    L = linalg.solve_triangular(R, np.column_stack([a, c]), trans="T")
    V = L.T @ L
    det = V[0, 0] * V[1, 1] - V[0, 1] ** 2
    if det <= 1e-12 * V[0, 0] * V[1, 1]:
        raise SingularDesignError("a and c are not linearly independent")
    return V


def geometry_from_design(
    X: ArrayLike,
    a: ArrayLike,
    c: ArrayLike,
    alpha: float = 0.05,
    dof: Optional[DegreesOfFreedom] = None,
) -> Geometry:
    """Design-only reduction for performance studies; estimates stay absent."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    a = np.asarray(a, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    n, p = X.shape
    if a.shape != (p,) or c.shape != (p,):
        raise InvalidInputError(f"a and c must have length p={p}")
    _, R = _qr(X)
    V = _moment_matrix(R, a, c)
    if dof is None:
        if n <= p:
            raise InvalidInputError(f"need n > p for residual degrees of freedom, got n={n}, p={p}")
        dof = DegreesOfFreedom(n - p)
    return Geometry(V[0, 0], V[0, 1], V[1, 1], dof, alpha)


def fit(problem: RegressionProblem) -> Geometry:
    """Least squares by QR and the reduction to (V, rho, m, theta_hat, tau_hat, sigma_hat)."""
    if problem.y is None:
        raise InvalidInputError("fit needs a response vector; use geometry_from_design for design-only work")
    Q, R = _qr(problem.X)
    beta = linalg.solve_triangular(R, Q.T @ problem.y)
    V = _moment_matrix(R, problem.a, problem.c)

    if problem.sigma_hat is not None:
        sigma_hat = float(problem.sigma_hat)
        dof = problem.dof
    else:
        m = problem.n - problem.p
        resid = problem.y - problem.X @ beta
        sigma_hat = math.sqrt(float(resid @ resid) / m)
        dof = DegreesOfFreedom(m)

    theta_hat = float(problem.a @ beta)
    tau_hat = float(problem.c @ beta) - problem.t
    logger.debug("fit: theta_hat=%g tau_hat=%g sigma_hat=%g dof=%s", theta_hat, tau_hat, sigma_hat, dof)
    return Geometry(V[0, 0], V[0, 1], V[1, 1], dof, problem.alpha, theta_hat, tau_hat, sigma_hat)


def standard_interval(geom: Geometry) -> ConfidenceInterval:
    """[theta_hat -/+ t_{m,1-alpha/2} sqrt(v11) sigma_hat]."""
    geom._require_estimates()
    scale = math.sqrt(geom.v11) * geom.sigma_hat
    half = scale * geom.critical
    return ConfidenceInterval(geom.theta_hat - half, geom.theta_hat + half)


def realize_interval(geom: Geometry, bs) -> ConfidenceInterval:
    """The interval J(b, s) on observed data."""
    geom._require_estimates()
    if not geom.sigma_hat > 0:
        raise InvalidInputError("realize_interval needs sigma_hat > 0")
    if abs(bs.critical - geom.critical) > 1e-9:
        raise InvalidInputError(
            f"b,s functions were built for t={bs.critical:.10g} but the data imply t={geom.critical:.10g}"
        )
    x = geom.standardized_tau()
    scale = math.sqrt(geom.v11) * geom.sigma_hat
    center = geom.theta_hat - scale * float(bs.b(x))
    half = scale * float(bs.s(abs(x)))
    return ConfidenceInterval(center - half, center + half)


def factorial2x2(replicates: int) -> np.ndarray:
    """Coded 2x2 factorial design, columns (1, x1, x2, x1*x2).

    Rows cycle through the cells (-1,-1), (1,-1), (-1,1), (1,1) once per
    replicate.
    """
    if replicates < 1:
        raise InvalidInputError("replicates must be at least 1")
    x1 = np.array([-1.0, 1.0, -1.0, 1.0])
    x2 = np.array([-1.0, -1.0, 1.0, 1.0])
    cells = np.column_stack([np.ones(4), x1, x2, x1 * x2])
    return np.tile(cells, (replicates, 1))


def simple_effect_contrast() -> np.ndarray:
    """a for theta = E(Y | x1=1, x2=-1) - E(Y | x1=-1, x2=-1) = 2(beta1 - beta12)."""
    return np.array([0.0, 2.0, 0.0, -2.0])


def interaction_contrast() -> np.ndarray:
    """c for tau = beta12."""
    return np.array([0.0, 0.0, 0.0, 1.0])
