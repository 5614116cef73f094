"""
Probability kernel shared by every other module.

Normal density and distribution function, Student-t quantiles, the law of
W = sigma_hat / sigma (distributed as sqrt(Q/m) with Q ~ chi^2_m) and the
slice probability Psi(x, y; mu, v) = P(x <= Z <= y) for Z ~ N(mu, v).

All functions are pure and accept numpy arrays where that makes sense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike
from scipy import special, stats

from .errors import InvalidInputError

SQRT_2PI = math.sqrt(2.0 * math.pi)

_INFINITE_TOKENS = {"inf", "infinite", "infinity"}


@dataclass(frozen=True)
class DegreesOfFreedom:
    """Residual degrees of freedom m = n - p, or INFINITE (sigma known)."""

    m: int | None = None

    def __post_init__(self):
        if self.m is None:
            return
        if isinstance(self.m, bool) or int(self.m) != self.m or self.m < 1:
            raise InvalidInputError(f"degrees of freedom must be a positive integer, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def is_infinite(self) -> bool:
        return self.m is None

    @classmethod
    def infinite(cls) -> "DegreesOfFreedom":
        return cls(None)

    @classmethod
    def parse(cls, value: Union["DegreesOfFreedom", int, float, str]) -> "DegreesOfFreedom":
        """Accept an int, the strings "inf"/"infinite", math.inf or an instance."""
        if isinstance(value, DegreesOfFreedom):
            return value
        if isinstance(value, str):
            token = value.strip().lower()
            if token in _INFINITE_TOKENS:
                return cls(None)
            try:
                return cls(int(token))
            except ValueError:
                raise InvalidInputError(f"cannot parse degrees of freedom from {value!r}")
        if isinstance(value, float) and math.isinf(value):
            return cls(None)
        return cls(value)

    def to_json(self) -> int | str:
        return "inf" if self.m is None else self.m

    def __str__(self) -> str:
        return "inf" if self.m is None else str(self.m)


INFINITE = DegreesOfFreedom.infinite()


def normal_pdf(x: ArrayLike):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT_2PI


def normal_cdf(x: ArrayLike):
    # ndtr switches to erfc in the tails, so Phi(-8) keeps full relative accuracy
    return special.ndtr(x)


def psi(x: ArrayLike, y: ArrayLike, mu: ArrayLike, v: float):
    """P(x <= Z <= y) for Z ~ N(mu, v)."""
    if not v > 0:
        raise InvalidInputError(f"variance must be positive, got {v}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x > y):
        raise InvalidInputError("psi requires x <= y")
    sd = math.sqrt(v)
    return special.ndtr((y - mu) / sd) - special.ndtr((x - mu) / sd)


def t_quantile(p: float, dof: DegreesOfFreedom) -> float:
    """t_{m,p}; the standard normal quantile z_p when dof is INFINITE."""
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"probability must lie in (0, 1), got {p}")
    if dof.is_infinite:
        return float(special.ndtri(p))
    return float(stats.t.ppf(p, dof.m))


def critical_value(alpha: float, dof: DegreesOfFreedom) -> float:
    """t_{m, 1 - alpha/2}, the half-width multiplier of the standard interval."""
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    return t_quantile(1.0 - alpha / 2.0, dof)


def _require_finite(dof: DegreesOfFreedom) -> int:
    if dof.is_infinite:
        raise InvalidInputError("W is degenerate at 1 when dof is infinite; use the w = 1 branch")
    return dof.m


def w_log_density(w: ArrayLike, dof: DegreesOfFreedom):
    m = _require_finite(dof)
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise InvalidInputError("w must be positive")
    half = 0.5 * m
    return (
        math.log(2.0)
        + half * math.log(half)
        + (m - 1) * np.log(w)
        - half * w * w
        - special.gammaln(half)
    )


def w_density(w: ArrayLike, dof: DegreesOfFreedom):
    """f_W(w) = 2 (m/2)^(m/2) w^(m-1) exp(-m w^2 / 2) / Gamma(m/2), evaluated in log space."""
    return np.exp(w_log_density(w, dof))


def expected_w(dof: DegreesOfFreedom) -> float:
    """E(W) = sqrt(2/m) Gamma((m+1)/2) / Gamma(m/2); exactly 1 when dof is INFINITE."""
    if dof.is_infinite:
        return 1.0
    m = dof.m
    return math.exp(0.5 * math.log(2.0 / m) + special.gammaln(0.5 * (m + 1)) - special.gammaln(0.5 * m))


def w_quantile(p: ArrayLike, dof: DegreesOfFreedom):
    """Quantile of W = chi_m / sqrt(m)."""
    if dof.is_infinite:
        return np.ones_like(np.asarray(p, dtype=float))
    return stats.chi.ppf(p, dof.m) / math.sqrt(dof.m)


def w_tail_mass(w_lo: float, w_hi: float, dof: DegreesOfFreedom) -> float:
    """P(W < w_lo) + P(W > w_hi)."""
    if dof.is_infinite:
        return 0.0 if w_lo <= 1.0 <= w_hi else 1.0
    root_m = math.sqrt(dof.m)
    return float(stats.chi.cdf(w_lo * root_m, dof.m) + stats.chi.sf(w_hi * root_m, dof.m))


def w_partial_mean_outside(w_lo: float, w_hi: float, dof: DegreesOfFreedom, power: int = 1) -> float:
    """E(W^power 1{W outside [w_lo, w_hi]}), used to bound truncation error."""
    if dof.is_infinite:
        return 0.0 if w_lo <= 1.0 <= w_hi else 1.0
    m = dof.m
    # W^power f_W is proportional to the law of chi_{m+power} / sqrt(m) = W' * scale
    scale = math.sqrt((m + power) / m)
    shifted = DegreesOfFreedom(m + power)
    moment = math.exp(
        0.5 * power * math.log(2.0 / m)
        + special.gammaln(0.5 * (m + power))
        - special.gammaln(0.5 * m)
    )
    return moment * w_tail_mass(w_lo / scale, w_hi / scale, shifted)
