"""
The (b, s) function pairs that define an interval

    J(b, s) = [theta_hat - sqrt(v11) sigma_hat b(x) -/+ sqrt(v11) sigma_hat s(|x|)],
    x = tau_hat / (sigma_hat sqrt(v22)).

Three families live here: the spline family optimized by `priorci.optimize`,
the discontinuous pair of the naive preliminary-test interval, and the
continuous transition family between the standard interval and the interval
that assumes tau = 0.

Every family exposes the same evaluator surface: `b(x)`, `s(x)`, the cutoff
`d` beyond which the pair equals (0, critical), `critical`, `alpha`, `dof` and
`breakpoints` (points in [0, d] where the functions may lose smoothness).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.interpolate import CubicSpline

from .dist_core import INFINITE, DegreesOfFreedom, critical_value, t_quantile
from .errors import InvalidInputError

logger = logging.getLogger(__name__)

S_BOUNDARY_CONDITIONS = ("natural", "not-a-knot")


def _effective_s_bc(s_bc: str, knot_count: int) -> str:
    # not-a-knot needs at least four knots
    if s_bc == "not-a-knot" and knot_count < 4:
        return "natural"
    return s_bc


class IntervalFunctions(Protocol):
    d: float
    alpha: float
    dof: DegreesOfFreedom

    @property
    def critical(self) -> float: ...

    @property
    def breakpoints(self) -> np.ndarray: ...

    def b(self, x: ArrayLike): ...

    def s(self, x: ArrayLike): ...


def _as_output(values: np.ndarray, scalar: bool):
    return float(values) if scalar else values


@dataclass(frozen=True)
class BSFunctions:
    """Spline member of the J(b, s) family.

    b is the clamped cubic spline (b'(-d) = b'(d) = 0) through the odd
    extension of (0, b_values, 0) on [-d, d]; s is the cubic spline through
    (s_values, critical) on [0, d]. Outside the core intervals b = 0 and
    s = critical.
    """

    d: float
    knots: tuple[float, ...]
    b_values: tuple[float, ...]
    s_values: tuple[float, ...]
    alpha: float
    dof: DegreesOfFreedom
    s_bc: str = "natural"
    _b_spline: CubicSpline = field(init=False, repr=False, compare=False)
    _s_spline: CubicSpline = field(init=False, repr=False, compare=False)
    _critical: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        b_values = tuple(float(v) for v in self.b_values)
        s_values = tuple(float(v) for v in self.s_values)
        d = float(self.d)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "b_values", b_values)
        object.__setattr__(self, "s_values", s_values)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "dof", DegreesOfFreedom.parse(self.dof))

        if not d > 0:
            raise InvalidInputError(f"cutoff d must be positive, got {d}")
        if len(knots) < 2:
            raise InvalidInputError("need at least the two knots 0 and d")
        if knots[0] != 0.0 or abs(knots[-1] - d) > 1e-12:
            raise InvalidInputError(f"knots must run from 0 to d={d}, got {knots[0]}..{knots[-1]}")
        if any(k1 <= k0 for k0, k1 in zip(knots, knots[1:])):
            raise InvalidInputError("knots must be strictly increasing")
        q = len(knots)
        if len(b_values) != q - 2:
            raise InvalidInputError(f"expected {q - 2} b values (interior knots), got {len(b_values)}")
        if len(s_values) != q - 1:
            raise InvalidInputError(f"expected {q - 1} s values (all knots but d), got {len(s_values)}")
        if not all(math.isfinite(v) for v in b_values + s_values):
            raise InvalidInputError("b and s values must be finite")
        if any(v < 0 for v in s_values):
            raise InvalidInputError("s values must be nonnegative")
        if self.s_bc not in S_BOUNDARY_CONDITIONS:
            raise InvalidInputError(f"s_bc must be one of {S_BOUNDARY_CONDITIONS}")

        critical = critical_value(self.alpha, self.dof)
        # last knot pinned to d exactly; b(d) = 0 and s(d) = critical
        grid = np.array(knots[:-1] + (d,))
        b_half = np.concatenate([[0.0], b_values, [0.0]])
        b_x = np.concatenate([-grid[:0:-1], grid])
        b_y = np.concatenate([-b_half[:0:-1], b_half])
        b_spline = CubicSpline(b_x, b_y, bc_type=((1, 0.0), (1, 0.0)))
        s_y = np.concatenate([s_values, [critical]])
        s_spline = CubicSpline(grid, s_y, bc_type=_effective_s_bc(self.s_bc, q))

        object.__setattr__(self, "_b_spline", b_spline)
        object.__setattr__(self, "_s_spline", s_spline)
        object.__setattr__(self, "_critical", critical)

    @property
    def critical(self) -> float:
        """The pinned value s(d) = t_{m, 1 - alpha/2}."""
        return self._critical

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array(self.knots)

    @property
    def b_spline(self) -> CubicSpline:
        return self._b_spline

    @property
    def s_spline(self) -> CubicSpline:
        return self._s_spline

    def b(self, x: ArrayLike):
        scalar = np.ndim(x) == 0
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        inside = ax < self.d
        out = np.zeros_like(ax)
        # evaluate on |x| and restore the sign so oddness is exact
        out[inside] = np.sign(x[inside]) * self._b_spline(ax[inside])
        return _as_output(out, scalar)

    def s(self, x: ArrayLike):
        scalar = np.ndim(x) == 0
        ax = np.abs(np.asarray(x, dtype=float))
        inside = ax < self.d
        out = np.full_like(ax, self._critical)
        out[inside] = self._s_spline(ax[inside])
        return _as_output(out, scalar)

    def min_s(self, points: int = 4001) -> float:
        grid = np.linspace(0.0, self.d, points)
        return float(np.min(self.s(grid)))

    def check_nonnegative(self, points: int = 4001, tol: float = 0.0) -> None:
        """Fine-grid post-check that the spline s does not dip below zero."""
        lowest = self.min_s(points)
        if lowest < -tol:
            raise InvalidInputError(f"s dips below zero on [0, d] (minimum {lowest:.6g})")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "dof": self.dof.to_json(),
            "d": self.d,
            "knots": list(self.knots),
            "b_values": list(self.b_values),
            "s_values": list(self.s_values),
        }

    @classmethod
    def from_dict(cls, doc: dict, s_bc: str = "natural") -> "BSFunctions":
        return build_spline_bs(
            doc["d"], doc["knots"], doc["b_values"], doc["s_values"], doc["alpha"], doc["dof"], s_bc=s_bc
        )


def build_spline_bs(
    d: float,
    knots: Sequence[float],
    b_values: Sequence[float],
    s_values: Sequence[float],
    alpha: float,
    dof,
    s_bc: str = "natural",
) -> BSFunctions:
    return BSFunctions(d, tuple(knots), tuple(b_values), tuple(s_values), alpha, DegreesOfFreedom.parse(dof), s_bc)


def s_value_basis(knots: Sequence[float], x: ArrayLike, s_bc: str = "natural") -> np.ndarray:
    """Matrix B with s(x) = B @ s_values + (part fixed by s(d) = critical) for x in [0, d].

    The spline is linear in its data, so column j is the spline through the j-th
    unit vector with a zero at d.
    """
    knots = np.asarray(knots, dtype=float)
    q = knots.size
    units = np.vstack([np.eye(q - 1), np.zeros((1, q - 1))])
    basis = CubicSpline(knots, units, bc_type=_effective_s_bc(s_bc, q))
    return basis(np.asarray(x, dtype=float))


def even_knots(d: float, step: float) -> list[float]:
    """0, step, 2 step, ..., d; d must be (close to) a multiple of step."""
    if not (d > 0 and step > 0):
        raise InvalidInputError("d and the knot step must be positive")
    count = round(d / step)
    if count < 1 or abs(count * step - d) > 1e-9 * max(1.0, d):
        raise InvalidInputError(f"d={d} is not a multiple of the knot step {step}")
    return [d * i / count for i in range(count + 1)]


def standard_bs(d: float, knots: Sequence[float], alpha: float, dof) -> BSFunctions:
    """b = 0, s = t_{m,1-alpha/2}: the standard interval written as a spline member."""
    dof = DegreesOfFreedom.parse(dof)
    crit = critical_value(alpha, dof)
    q = len(knots)
    return build_spline_bs(d, knots, [0.0] * (q - 2), [crit] * (q - 1), alpha, dof)


@dataclass(frozen=True)
class NaiveBS:
    """(b, s) of the preliminary-test interval; discontinuous at q."""

    q: float
    rho: float
    alpha: float
    dof: DegreesOfFreedom

    def __post_init__(self):
        object.__setattr__(self, "dof", DegreesOfFreedom.parse(self.dof))
        if not self.q > 0:
            raise InvalidInputError("q must be positive")
        if abs(self.rho) > 1:
            raise InvalidInputError("|rho| must not exceed 1")
        if self.dof.is_infinite:
            raise InvalidInputError("the naive interval is defined through n - p and n - p + 1; dof must be finite")

    @property
    def d(self) -> float:
        return self.q

    @property
    def critical(self) -> float:
        return critical_value(self.alpha, self.dof)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([0.0, self.q])

    def b(self, x: ArrayLike):
        scalar = np.ndim(x) == 0
        x = np.asarray(x, dtype=float)
        out = np.where(np.abs(x) <= self.q, self.rho * x, 0.0)
        return _as_output(out, scalar)

    def s(self, x: ArrayLike):
        scalar = np.ndim(x) == 0
        ax = np.abs(np.asarray(x, dtype=float))
        m = self.dof.m
        inner = t_quantile(1.0 - self.alpha / 2.0, DegreesOfFreedom(m + 1))
        accepted = inner * math.sqrt(1.0 - self.rho**2) * np.sqrt((m + ax * ax) / (m + 1))
        out = np.where(ax <= self.q, accepted, self.critical)
        return _as_output(out, scalar)


def naive_bs(q: float, rho: float, alpha: float, dof) -> NaiveBS:
    return NaiveBS(q, rho, alpha, DegreesOfFreedom.parse(dof))


@dataclass(frozen=True)
class TransitionBS:
    """(b, s) of g(x) I + (1 - g(x)) K for a monotone continuous g, dof infinite.

    g is treated as 1 beyond `cutoff`, which must be large enough that
    g(cutoff) >= 1 - 1e-9.
    """

    g: Callable[[float], float]
    rho: float
    alpha: float
    cutoff: float = 20.0
    dof: DegreesOfFreedom = field(default=INFINITE, init=False)

    def __post_init__(self):
        if abs(self.rho) > 1:
            raise InvalidInputError("|rho| must not exceed 1")
        if not self.cutoff > 0:
            raise InvalidInputError("cutoff must be positive")
        grid = np.linspace(0.0, self.cutoff, 2001)
        values = self._g(grid)
        if np.any(values < 0.0) or np.any(values > 1.0) or not np.all(np.isfinite(values)):
            raise InvalidInputError("g must take values in [0, 1]")
        if np.any(np.diff(values) < -1e-12):
            raise InvalidInputError("g must be nondecreasing")
        if values[-1] < 1.0 - 1e-9:
            raise InvalidInputError(f"g({self.cutoff}) = {values[-1]:.3g}; raise the cutoff")

    def _g(self, ax: np.ndarray) -> np.ndarray:
        return np.vectorize(self.g, otypes=[float])(ax)

    @property
    def d(self) -> float:
        return self.cutoff

    @property
    def critical(self) -> float:
        return critical_value(self.alpha, INFINITE)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([0.0, self.cutoff])

    def b(self, x: ArrayLike):
        scalar = np.ndim(x) == 0
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        out = np.zeros_like(ax)
        inside = ax < self.cutoff
        out[inside] = (1.0 - self._g(ax[inside])) * self.rho * x[inside]
        return _as_output(out, scalar)

    def s(self, x: ArrayLike):
        scalar = np.ndim(x) == 0
        ax = np.abs(np.asarray(x, dtype=float))
        root = math.sqrt(1.0 - self.rho**2)
        out = np.full_like(ax, self.critical)
        inside = ax < self.cutoff
        out[inside] = (self._g(ax[inside]) * (1.0 - root) + root) * self.critical
        return _as_output(out, scalar)


def transition_bs(g: Callable[[float], float], rho: float, alpha: float, cutoff: float = 20.0) -> TransitionBS:
    return TransitionBS(g, rho, alpha, cutoff)
