"""
Monte Carlo oracle for coverage and scaled expected length.

Samples the sampling model directly: (G, H) bivariate normal with means
(0, gamma), unit variances and correlation rho, and W = sqrt(Q/m) with
Q ~ chi^2_m independent of them (W = 1 when dof is infinite). J(b, s) covers
theta exactly when l(H, W) <= G <= u(H, W) with

    l = W (b(H/W) - s(|H|/W)),   u = W (b(H/W) + s(|H|/W)).

Draws are made in blocks, each with its own child of one SeedSequence, so
estimates are reproducible bit for bit and independent of how blocks are
scheduled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy import special

from .bsfun import IntervalFunctions
from .dist_core import DegreesOfFreedom, critical_value, expected_w
from .errors import DegenerateCorrelationError, InvalidInputError
from .perfeval import EvalSettings, GridEvaluator

logger = logging.getLogger(__name__)

MIN_SAMPLES = 10_000


@dataclass(frozen=True)
class McSettings:
    sample_count: int = 1_000_000
    rng_seed: int = 0
    antithetic: bool = False
    # average the conditional slice probability instead of the 0/1 hit
    rao_blackwell: bool = False
    block_size: int = 250_000

    def __post_init__(self):
        if self.sample_count < MIN_SAMPLES:
            raise InvalidInputError(f"sample_count must be at least {MIN_SAMPLES}")
        if self.block_size < 1:
            raise InvalidInputError("block_size must be positive")
        if self.antithetic and (self.sample_count % 2 or self.block_size % 2):
            raise InvalidInputError("antithetic sampling needs even sample_count and block_size")


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    std_error: float

    def agrees_with(self, value: float, bands: float = 3.0, atol: float = 1e-6) -> bool:
        # atol covers the quadrature error when the sample is degenerate
        return abs(self.estimate - value) <= bands * self.std_error + atol


def _blocks(mc: McSettings) -> Iterator[tuple[int, np.random.Generator]]:
    sizes = [mc.block_size] * (mc.sample_count // mc.block_size)
    if mc.sample_count % mc.block_size:
        sizes.append(mc.sample_count % mc.block_size)
    children = np.random.SeedSequence(mc.rng_seed).spawn(len(sizes))
    for size, child in zip(sizes, children):
        yield size, np.random.default_rng(child)


def _draw(rng: np.random.Generator, size: int, gamma: float, rho: float, dof: DegreesOfFreedom, antithetic: bool):
    """(G, H, W) arrays; with antithetic the second half reflects the normals of the first."""
    half = size // 2 if antithetic else size
    z1 = rng.standard_normal(half)
    z2 = rng.standard_normal(half)
    if dof.is_infinite:
        w = np.ones(half)
    else:
        w = np.sqrt(rng.chisquare(dof.m, half) / dof.m)
    if antithetic:
        z1 = np.concatenate([z1, -z1])
        z2 = np.concatenate([z2, -z2])
        w = np.concatenate([w, w])
    g = rho * z2 + math.sqrt(max(0.0, 1.0 - rho * rho)) * z1
    h = gamma + z2
    return g, h, w


def _pairs(values: np.ndarray, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return values
    half = values.size // 2
    return 0.5 * (values[:half] + values[half:])


def _summarize(sums: list[float], sums_sq: list[float], counts: list[int]) -> McEstimate:
    n = sum(counts)
    mean = sum(sums) / n
    var = max(0.0, sum(sums_sq) / n - mean * mean) * n / (n - 1)
    return McEstimate(mean, math.sqrt(var / n))


def mc_coverage(
    gamma: float, bs: IntervalFunctions, rho: float, dof: DegreesOfFreedom, mc: McSettings | None = None
) -> McEstimate:
    """Monte Carlo estimate of the coverage probability at gamma with its standard error."""
    mc = mc or McSettings()
    if abs(rho) > 1:
        raise InvalidInputError("|rho| must not exceed 1")
    if mc.rao_blackwell and abs(rho) >= 1:
        raise DegenerateCorrelationError("the conditional form needs |rho| < 1")
    sums, sums_sq, counts = [], [], []
    for index, (size, rng) in enumerate(_blocks(mc)):
        g, h, w = _draw(rng, size, gamma, rho, dof, mc.antithetic)
        x = h / w
        center = w * bs.b(x)
        half = w * bs.s(np.abs(x))
        if mc.rao_blackwell:
            sd = math.sqrt(1.0 - rho * rho)
            mu = rho * (h - gamma)
            values = special.ndtr((center + half - mu) / sd) - special.ndtr((center - half - mu) / sd)
        else:
            values = ((center - half <= g) & (g <= center + half)).astype(float)
        values = _pairs(values, mc.antithetic)
        sums.append(float(values.sum()))
        sums_sq.append(float(values @ values))
        counts.append(values.size)
        logger.debug("coverage block %d: %d draws", index, size)
    return _summarize(sums, sums_sq, counts)


def mc_scaled_length(
    gamma: float, bs: IntervalFunctions, dof: DegreesOfFreedom, mc: McSettings | None = None
) -> McEstimate:
    """Monte Carlo estimate of E(s(|H|/W) W) / (t E(W)), using the exact E(W)."""
    mc = mc or McSettings()
    scale = critical_value(bs.alpha, dof) * expected_w(dof)
    sums, sums_sq, counts = [], [], []
    for size, rng in _blocks(mc):
        _, h, w = _draw(rng, size, gamma, 0.0, dof, mc.antithetic)
        values = _pairs(bs.s(np.abs(h / w)) * w / scale, mc.antithetic)
        sums.append(float(values.sum()))
        sums_sq.append(float(values @ values))
        counts.append(values.size)
    return _summarize(sums, sums_sq, counts)


@dataclass(frozen=True)
class McComparison:
    gamma: float
    quad_coverage: float
    mc_coverage: McEstimate
    quad_length: float
    mc_length: McEstimate
    bands: float = 3.0

    @property
    def coverage_ok(self) -> bool:
        return self.mc_coverage.agrees_with(self.quad_coverage, self.bands)

    @property
    def length_ok(self) -> bool:
        return self.mc_length.agrees_with(self.quad_length, self.bands)

    @property
    def passed(self) -> bool:
        return self.coverage_ok and self.length_ok

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "quad_coverage": self.quad_coverage,
            "mc_coverage": self.mc_coverage.estimate,
            "mc_coverage_se": self.mc_coverage.std_error,
            "quad_e": self.quad_length,
            "mc_e": self.mc_length.estimate,
            "mc_e_se": self.mc_length.std_error,
            "pass": self.passed,
        }


def compare_with_quadrature(
    bs: IntervalFunctions,
    rho: float,
    gammas: Sequence[float],
    mc: McSettings | None = None,
    settings: EvalSettings | None = None,
    bands: float = 3.0,
) -> list[McComparison]:
    """Quadrature against Monte Carlo at each gamma, judged at `bands` standard errors."""
    mc = mc or McSettings()
    evaluator = GridEvaluator(bs.d, bs.breakpoints, bs.alpha, bs.dof, list(gammas), settings, rho)
    quad_cov = evaluator.coverage(bs)
    quad_len = evaluator.scaled_length(bs)
    rows = []
    for j, gamma in enumerate(gammas):
        cov = mc_coverage(gamma, bs, rho, bs.dof, mc)
        length = mc_scaled_length(gamma, bs, bs.dof, mc)
        row = McComparison(float(gamma), float(quad_cov[j]), cov, float(quad_len[j]), length, bands)
        logger.info(
            "gamma %.3f: coverage quad %.6f mc %.6f +/- %.6f, %s",
            gamma, row.quad_coverage, cov.estimate, cov.std_error, "pass" if row.passed else "FAIL",
        )
        rows.append(row)
    return rows
