"""
CSV reading and writing with pandas.

Data files carry a response column `y`; any other columns are the design
matrix, used in file order. Curve and sweep files are written with a dot
decimal separator, LF line endings and 17 significant digits.
"""

from pathlib import Path
from typing import IO, Optional, Union

import numpy as np
import pandas as pd

from ..errors import InvalidInputError
from ..perfeval import PerformanceCurve

CURVE_COLUMNS = ["gamma", "coverage", "e_squared"]
SWEEP_COLUMNS = [
    "label",
    "lambda",
    "d",
    "knot_step",
    "expected_gain",
    "max_potential_loss",
    "gain_loss_ratio",
    "min_coverage",
    "converged",
    "error",
]

Source = Union[str, Path, IO]


def _read_numeric(source: Source, what: str) -> pd.DataFrame:
    if isinstance(source, (str, Path)) and not Path(source).exists():
        raise FileNotFoundError(f"{what} file not found: {source}")
    try:
        frame = pd.read_csv(source, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise InvalidInputError(f"cannot parse {what} CSV: {exc}") from exc
    if frame.empty:
        raise InvalidInputError(f"{what} CSV has no rows")
    frame.columns = [str(col).strip() for col in frame.columns]
    try:
        frame = frame.apply(pd.to_numeric)
    except (ValueError, TypeError) as exc:
        raise InvalidInputError(f"{what} CSV must be numeric: {exc}") from exc
    if frame.isna().any().any():
        raise InvalidInputError(f"{what} CSV has missing values")
    return frame


def read_data_csv(source: Source) -> pd.DataFrame:
    frame = _read_numeric(source, "data")
    if "y" not in frame.columns:
        raise InvalidInputError("data CSV needs a response column named 'y'")
    return frame


def split_data(frame: pd.DataFrame) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Response vector and, when other columns are present, the design matrix."""
    y = frame["y"].to_numpy(dtype=float)
    rest = frame.drop(columns=["y"])
    X = rest.to_numpy(dtype=float) if rest.shape[1] else None
    return y, X


def read_design_csv(source: Source) -> np.ndarray:
    return _read_numeric(source, "design").to_numpy(dtype=float)


def curve_frame(curve: PerformanceCurve) -> pd.DataFrame:
    return pd.DataFrame(
        {"gamma": curve.gamma_grid, "coverage": curve.coverage, "e_squared": curve.e_squared},
        columns=CURVE_COLUMNS,
    )


def write_curve_csv(curve: PerformanceCurve, path: Union[str, Path, IO]) -> None:
    curve_frame(curve).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_curve_csv(source: Source) -> PerformanceCurve:
    frame = _read_numeric(source, "curve")
    if list(frame.columns) != CURVE_COLUMNS:
        raise InvalidInputError(f"curve CSV header must be {','.join(CURVE_COLUMNS)}")
    return PerformanceCurve(
        frame["gamma"].to_numpy(), frame["coverage"].to_numpy(), frame["e_squared"].to_numpy()
    )


def write_sweep_csv(frame: pd.DataFrame, path: Union[str, Path, IO]) -> None:
    frame.reindex(columns=SWEEP_COLUMNS).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
