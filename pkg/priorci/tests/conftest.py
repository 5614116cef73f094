import math
from pathlib import Path

import numpy as np
import pytest

from priorci.bsfun import build_spline_bs, standard_bs
from priorci.dist_core import INFINITE, DegreesOfFreedom, critical_value
from priorci.regress import factorial2x2, geometry_from_design, interaction_contrast, simple_effect_contrast

RHO = -1.0 / math.sqrt(2.0)
CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


@pytest.fixture
def dof76():
    return DegreesOfFreedom(76)


@pytest.fixture
def factorial20_geometry():
    return geometry_from_design(factorial2x2(20), simple_effect_contrast(), interaction_contrast(), 0.05)


@pytest.fixture
def trivial_bs(dof76):
    return standard_bs(6.0, [0, 1, 2, 3, 4, 5, 6], 0.05, dof76)


def random_spline_bs(rng: np.random.Generator, dof=INFINITE, d: float = 4.0, step: float = 1.0, alpha: float = 0.05):
    """b values in [-2, 2] and s values in [0.5 t, 1.5 t] at evenly spaced knots."""
    t = critical_value(alpha, dof)
    count = int(round(d / step))
    knots = [d * i / count for i in range(count + 1)]
    b = rng.uniform(-2.0, 2.0, count - 1)
    s = rng.uniform(0.5 * t, 1.5 * t, count)
    return build_spline_bs(d, knots, b, s, alpha, dof)
