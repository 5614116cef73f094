from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel
from sqlmodel import Session, select

from . import __version__
from .database import engine, init_db
from .dist_core import DegreesOfFreedom, critical_value
from .models import SolveRun
from .perfeval import naive_min_coverage
from .api.runs import INPUT_ERRORS, router as runs_router


app = FastAPI(title="priorci: confidence intervals that use uncertain prior information", version=__version__)

app.include_router(runs_router)


class NaiveRequest(BaseModel):
    rho: float
    dof: int | str
    q: Optional[float] = None  # defaults to t_{m, 1 - alpha/2}
    alpha: float = 0.05
    gamma_max: float = 10.0
    step: float = 0.05


@app.on_event("startup")
def on_startup():
    init_db()


@app.get("/")
def root():
    return {"ok": True, "message": "priorci", "version": __version__, "docs": "/docs"}


@app.get("/health")
def health():
    try:
        # quick DB reachability check
        with Session(engine) as session:
            session.exec(select(SolveRun).limit(1)).first()
        return {"ok": True, "database": "reachable"}
    except Exception as e:
        return {"ok": False, "error": str(e)}


@app.post("/naive")
def naive(req: NaiveRequest):
    """Minimum coverage of the preliminary-test interval and where it occurs."""
    try:
        dof = DegreesOfFreedom.parse(req.dof)
        q = req.q if req.q is not None else critical_value(req.alpha, dof)
        found = naive_min_coverage(req.rho, q, req.alpha, dof, req.gamma_max, req.step)
    except INPUT_ERRORS as e:
        raise HTTPException(status_code=422, detail=str(e))
    return {
        "rho": req.rho,
        "q": q,
        "alpha": req.alpha,
        "dof": dof.to_json(),
        "min_coverage": found.min_coverage,
        "gamma_star": found.gamma_star,
        "gamma": found.curve.gamma_grid.tolist(),
        "coverage": found.curve.coverage.tolist(),
    }
