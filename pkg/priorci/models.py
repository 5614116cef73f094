from typing import Optional
from sqlmodel import SQLModel, Field, Column, JSON
from datetime import datetime


class SolveRun(SQLModel, table=True):
    """A solved interval together with the config that produced it."""
    id: Optional[int] = Field(default=None, primary_key=True)
    label: Optional[str] = Field(default=None, index=True)
    lam: float
    d: float
    rho: float
    alpha: float
    dof: str  # integer as text, or "inf"
    config: dict = Field(default={}, sa_column=Column(JSON))  # RunConfigDocument
    solution: dict = Field(default={}, sa_column=Column(JSON))  # SolutionDocument
    expected_gain: Optional[float] = None
    max_potential_loss: Optional[float] = None
    min_coverage: Optional[float] = None
    converged: bool = False
    created_at: datetime = Field(default_factory=datetime.utcnow)
