"""
JSON documents: run configurations and solved intervals.

A RunConfigDocument states a problem (built-in design, design CSV, data CSV
or a direct geometry), the solver settings, the quadrature settings and the
Monte Carlo settings. Unknown keys are rejected everywhere. File paths are
resolved relative to the directory of the config file.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .bsfun import BSFunctions, build_spline_bs, even_knots
from .dist_core import DegreesOfFreedom
from .errors import InvalidInputError
from .mcheck import McSettings
from .optimize import SolveConfig, SolveReport
from .perfeval import EvalSettings, PerformanceCurve
from .regress import (
    Geometry,
    RegressionProblem,
    factorial2x2,
    fit,
    geometry_from_design,
    interaction_contrast,
    simple_effect_contrast,
)
from .utils.csv_io import read_data_csv, read_design_csv, split_data

logger = logging.getLogger(__name__)

DofValue = Union[int, str]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


def _check_dof(value):
    if value is None:
        return value
    return DegreesOfFreedom.parse(value).to_json()


class DesignSpec(_Strict):
    name: Literal["factorial2x2"] = "factorial2x2"
    replicates: int = Field(default=1, ge=1)


class GeometrySpec(_Strict):
    v11: float = Field(gt=0)
    v12: float
    v22: float = Field(gt=0)
    theta_hat: Optional[float] = None
    tau_hat: Optional[float] = None
    sigma_hat: Optional[float] = Field(default=None, ge=0)


class ProblemSection(_Strict):
    a: Optional[list[float]] = None
    c: Optional[list[float]] = None
    t: float = 0.0
    alpha: float = Field(default=0.05, gt=0, lt=1)
    design: Optional[DesignSpec] = None
    design_csv: Optional[str] = None
    data_csv: Optional[str] = None
    geometry: Optional[GeometrySpec] = None
    # external variance estimate and its degrees of freedom
    sigma_hat: Optional[float] = Field(default=None, ge=0)
    dof: Optional[DofValue] = None

    @field_validator("dof")
    @classmethod
    def _parse_dof(cls, value):
        return _check_dof(value)

    @model_validator(mode="after")
    def _one_design_source(self):
        if self.geometry is not None:
            if self.design or self.design_csv or self.data_csv:
                raise ValueError("a direct geometry excludes design and data sources")
            if self.dof is None:
                raise ValueError("a direct geometry needs dof")
        elif self.design is not None and self.design_csv is not None:
            raise ValueError("give either a built-in design or a design CSV, not both")
        elif self.design is None and self.design_csv is None and self.data_csv is None:
            raise ValueError("problem needs a design, a design CSV, a data CSV or a geometry")
        if self.sigma_hat is not None and self.dof is None:
            raise ValueError("an external sigma_hat needs dof")
        if self.design is None and self.geometry is None and (self.a is None or self.c is None):
            raise ValueError("a and c are required unless a built-in design supplies them")
        return self

    def vectors(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.asarray(self.a, dtype=float) if self.a is not None else simple_effect_contrast()
        c = np.asarray(self.c, dtype=float) if self.c is not None else interaction_contrast()
        return a, c


class SolveSection(_Strict):
    label: Optional[str] = None
    lam: float = Field(default=0.2, ge=0, alias="lambda")
    d: float = Field(default=6.0, gt=0)
    knot_step: Optional[float] = Field(default=None, gt=0)
    knots: Optional[list[float]] = None
    constraint_delta: float = Field(default=0.25, gt=0)
    constraint_count: Optional[int] = Field(default=None, ge=1)
    feasibility_tol: float = Field(default=5e-4, gt=0)
    objective_tol: float = Field(default=1e-9, gt=0)
    max_iterations: int = Field(default=200, ge=1)
    fd_step: float = Field(default=1e-5, gt=0)
    verify_factor: int = Field(default=4, ge=1)
    multistart: int = Field(default=0, ge=0)
    seed: int = 0
    s_bc: Literal["natural", "not-a-knot"] = "natural"

    @model_validator(mode="after")
    def _knots_or_step(self):
        if self.knots is not None and self.knot_step is not None:
            raise ValueError("give knots or knot_step, not both")
        return self

    def knot_list(self) -> list[float]:
        if self.knots is not None:
            return list(self.knots)
        return even_knots(self.d, self.knot_step or 1.0)


class EvalSection(_Strict):
    w_truncation: Optional[tuple[float, float]] = None
    w_tail_prob: float = 1e-12
    w_panels: int = 16
    w_nodes: int = 8
    x_nodes: int = 8
    x_panel_width: float = 0.5
    target_abs_tol: float = 1e-6

    def settings(self) -> EvalSettings:
        return EvalSettings(**self.model_dump())

    @classmethod
    def from_settings(cls, settings: EvalSettings) -> "EvalSection":
        return cls(**asdict(settings))


class McSection(_Strict):
    sample_count: int = 1_000_000
    rng_seed: int = 0
    antithetic: bool = False
    rao_blackwell: bool = False
    block_size: int = 250_000

    def settings(self) -> McSettings:
        return McSettings(**self.model_dump())


class RunConfigDocument(_Strict):
    problem: ProblemSection
    solve: SolveSection = Field(default_factory=SolveSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    mc: McSection = Field(default_factory=McSection)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(by_alias=True, mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def solve_config(self, geom: Geometry) -> SolveConfig:
        s = self.solve
        return SolveConfig(
            lam=s.lam,
            d=s.d,
            knots=tuple(s.knot_list()),
            rho=geom.rho,
            alpha=self.problem.alpha,
            dof=geom.dof,
            constraint_delta=s.constraint_delta,
            constraint_count=s.constraint_count,
            eval=self.eval.settings(),
            feasibility_tol=s.feasibility_tol,
            objective_tol=s.objective_tol,
            max_iterations=s.max_iterations,
            fd_step=s.fd_step,
            verify_factor=s.verify_factor,
            multistart=s.multistart,
            seed=s.seed,
            s_bc=s.s_bc,
        )


class BSFunctionsDocument(_Strict):
    alpha: float
    dof: DofValue
    d: float
    knots: list[float]
    b_values: list[float]
    s_values: list[float]

    @field_validator("dof")
    @classmethod
    def _parse_dof(cls, value):
        return _check_dof(value)

    @classmethod
    def from_bs(cls, bs: BSFunctions) -> "BSFunctionsDocument":
        return cls(**bs.to_dict())

    def to_bs(self, s_bc: str = "natural") -> BSFunctions:
        return build_spline_bs(self.d, self.knots, self.b_values, self.s_values, self.alpha, self.dof, s_bc=s_bc)


class CurveDocument(_Strict):
    gamma: list[float]
    coverage: list[float]
    e_squared: list[float]

    @classmethod
    def from_curve(cls, curve: PerformanceCurve) -> "CurveDocument":
        return cls(gamma=curve.gamma_grid.tolist(), coverage=curve.coverage.tolist(), e_squared=curve.e_squared.tolist())

    def to_curve(self) -> PerformanceCurve:
        return PerformanceCurve(np.array(self.gamma), np.array(self.coverage), np.array(self.e_squared))


class ProvenanceDocument(_Strict):
    config_hash: str
    version: str = __version__
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())


class SolutionDocument(_Strict):
    bs: BSFunctionsDocument
    rho: float
    s_bc: Literal["natural", "not-a-knot"] = "natural"
    report: dict
    curve: Optional[CurveDocument] = None
    eval: EvalSection = Field(default_factory=EvalSection)
    provenance: ProvenanceDocument

    @classmethod
    def from_report(cls, report: SolveReport, config: SolveConfig, config_hash: str) -> "SolutionDocument":
        return cls(
            bs=BSFunctionsDocument.from_bs(report.bs),
            rho=config.rho,
            s_bc=config.s_bc,
            report=report.summary(),
            curve=CurveDocument.from_curve(report.curve) if report.curve is not None else None,
            eval=EvalSection.from_settings(config.eval),
            provenance=ProvenanceDocument(config_hash=config_hash),
        )

    def to_bs(self) -> BSFunctions:
        bs = self.bs.to_bs(self.s_bc)
        bs.check_nonnegative()
        return bs


def _parse(model, text: str, what: str):
    try:
        return model.model_validate_json(text)
    except ValidationError as exc:
        raise InvalidInputError(f"invalid {what}: {exc}") from exc


def parse_config(text: str) -> RunConfigDocument:
    return _parse(RunConfigDocument, text, "config")


def load_config(path: Union[str, Path]) -> RunConfigDocument:
    """Read a config file and resolve its file paths against the file's directory."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    doc = parse_config(path.read_text(encoding="utf-8"))
    base = path.resolve().parent
    updates = {}
    for key in ("design_csv", "data_csv"):
        value = getattr(doc.problem, key)
        if value is not None and not Path(value).is_absolute():
            updates[key] = str(base / value)
    if updates:
        doc = doc.model_copy(update={"problem": doc.problem.model_copy(update=updates)})
    return doc


def load_solution(path: Union[str, Path]) -> SolutionDocument:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"solution file not found: {path}")
    return _parse(SolutionDocument, path.read_text(encoding="utf-8"), "solution")


def build_geometry(problem: ProblemSection, data: Optional[pd.DataFrame] = None) -> Geometry:
    """Reduce a problem section to its Geometry.

    Args:
        problem: the `problem` section of a run config.
        data: data already in memory; when absent `problem.data_csv` is read if set.

    Returns:
        Geometry with estimates when data are available, design-only otherwise.
    """
    dof = DegreesOfFreedom.parse(problem.dof) if problem.dof is not None else None
    if problem.geometry is not None:
        g = problem.geometry
        return Geometry.from_moments(g.v11, g.v12, g.v22, dof, problem.alpha, g.theta_hat, g.tau_hat, g.sigma_hat)

    if problem.design is not None:
        X = factorial2x2(problem.design.replicates)
    elif problem.design_csv is not None:
        X = read_design_csv(problem.design_csv)
    else:
        X = None

    if data is None and problem.data_csv is not None:
        data = read_data_csv(problem.data_csv)
    a, c = problem.vectors()
    if data is None:
        return geometry_from_design(X, a, c, problem.alpha, dof)

    y, X_data = split_data(data)
    if X is None:
        if X_data is None:
            raise InvalidInputError("data CSV has no design columns and the config names no design")
        X = X_data
    elif X_data is not None:
        raise InvalidInputError("design given both in the config and as data CSV columns")
    if X.shape[0] != y.size:
        raise InvalidInputError(f"data has {y.size} rows but the design has {X.shape[0]}")
    if problem.sigma_hat is None and dof is not None and not dof.is_infinite and dof.m != X.shape[0] - X.shape[1]:
        raise InvalidInputError(f"dof={dof} conflicts with n - p = {X.shape[0] - X.shape[1]}")
    regression = RegressionProblem(
        X, a, c, problem.t, problem.alpha, y, problem.sigma_hat, dof if problem.sigma_hat is not None else None
    )
    return fit(regression)


def dump_json(model: BaseModel) -> str:
    return model.model_dump_json(by_alias=True, indent=2) + "\n"
