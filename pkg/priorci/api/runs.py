from typing import Optional

from fastapi import APIRouter, Depends, File, Form, HTTPException, UploadFile
from pydantic import ValidationError
from sqlmodel import Session, select

from ..database import get_session
from ..documents import EvalSection, ProblemSection, RunConfigDocument, SolutionDocument, build_geometry
from ..errors import DegenerateCorrelationError, InvalidInputError, SingularDesignError
from ..models import SolveRun
from ..optimize import solve
from ..perfeval import curve, gamma_grid
from ..regress import realize_interval, standard_interval
from ..utils.csv_io import read_data_csv

INPUT_ERRORS = (InvalidInputError, SingularDesignError, DegenerateCorrelationError)

router = APIRouter(prefix="/runs", tags=["runs"])


def _get_run(session: Session, run_id: int) -> SolveRun:
    run = session.get(SolveRun, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")
    return run


@router.post("/solve", response_model=SolveRun)
def solve_run(doc: RunConfigDocument, session: Session = Depends(get_session)):
    """Solve a config and store the result. Configs that point at files are rejected."""
    if doc.problem.design_csv or doc.problem.data_csv:
        raise HTTPException(status_code=422, detail="file paths are not accepted over HTTP; use a built-in design or a geometry")
    try:
        geom = build_geometry(doc.problem)
        config = doc.solve_config(geom)
        report = solve(config)
    except INPUT_ERRORS as e:
        raise HTTPException(status_code=422, detail=str(e))

    solution = SolutionDocument.from_report(report, config, doc.config_hash())
    run = SolveRun(
        label=doc.solve.label,
        lam=config.lam,
        d=config.d,
        rho=config.rho,
        alpha=config.alpha,
        dof=str(config.dof),
        config=doc.model_dump(by_alias=True, mode="json"),
        solution=solution.model_dump(mode="json"),
        expected_gain=report.expected_gain,
        max_potential_loss=report.max_potential_loss,
        min_coverage=report.min_coverage_on_fine_grid,
        converged=report.converged,
    )
    session.add(run)
    session.commit()
    session.refresh(run)
    return run


@router.get("/", response_model=list[SolveRun])
def read_runs(label: Optional[str] = None, session: Session = Depends(get_session)):
    stmt = select(SolveRun)
    if label:
        stmt = stmt.where(SolveRun.label == label)
    return session.exec(stmt).all()


@router.get("/{run_id}", response_model=SolveRun)
def read_run(run_id: int, session: Session = Depends(get_session)):
    return _get_run(session, run_id)


@router.get("/{run_id}/curve")
def run_curve(run_id: int, gamma_max: float = 10.0, step: float = 0.05, session: Session = Depends(get_session)):
    """Coverage and e^2 of a stored solution over 0, step, ..., gamma_max."""
    run = _get_run(session, run_id)
    try:
        solution = SolutionDocument.model_validate(run.solution)
        settings = EvalSection.model_validate(run.config.get("eval", {})).settings()
        result = curve(solution.to_bs(), solution.rho, gamma_grid(gamma_max, step), settings)
    except INPUT_ERRORS as e:
        raise HTTPException(status_code=422, detail=str(e))
    return {
        "gamma": result.gamma_grid.tolist(),
        "coverage": result.coverage.tolist(),
        "e_squared": result.e_squared.tolist(),
        "min_coverage": result.min_coverage,
        "max_e_squared": result.max_e_squared,
    }


@router.post("/{run_id}/interval")
def run_interval(
    run_id: int,
    file: UploadFile = File(...),
    sigma_hat: Optional[float] = Form(None),
    dof: Optional[str] = Form(None),
    session: Session = Depends(get_session),
):
    """Apply a stored solution to uploaded data (CSV with a 'y' column)."""
    run = _get_run(session, run_id)
    problem = dict(run.config["problem"])
    if sigma_hat is not None:
        problem["sigma_hat"] = sigma_hat
    if dof is not None:
        problem["dof"] = dof
    try:
        section = ProblemSection.model_validate(problem)
        data = read_data_csv(file.file)
        geom = build_geometry(section, data)
        solution = SolutionDocument.model_validate(run.solution)
        if abs(geom.rho - solution.rho) > 1e-9:
            raise InvalidInputError(f"run was solved for rho={solution.rho:.10g}, the data give {geom.rho:.10g}")
        new = realize_interval(geom, solution.to_bs())
        standard = standard_interval(geom)
    except ValidationError as e:
        raise HTTPException(status_code=422, detail=str(e))
    except INPUT_ERRORS as e:
        raise HTTPException(status_code=422, detail=str(e))
    return {
        "run_id": run.id,
        "theta_hat": geom.theta_hat,
        "tau_hat": geom.tau_hat,
        "sigma_hat": geom.sigma_hat,
        "standard": standard.to_dict(),
        "new": new.to_dict(),
    }


@router.delete("/")
def delete_runs(session: Session = Depends(get_session)):
    runs = session.exec(select(SolveRun)).all()
    for run in runs:
        session.delete(run)
    session.commit()
    return {"ok": True, "deleted": len(runs)}
