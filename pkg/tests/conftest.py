import numpy as np
import pytest

from degen_control.coefficients import (classical_coefficient, constant_drift,
                                        power_coefficient, zero_drift)
from degen_control.mesh import build_grid
from degen_control.pde import LinearProblem


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def make_problem(a=None, N=64, M=64, T=0.5, omega=(0.3, 0.9), gamma=1.0,
                 b0=0.0, c0=0.0, y0=None):
    a = a if a is not None else power_coefficient(0.5)
    grid = build_grid(N, gamma)
    drift = zero_drift() if (b0 == 0.0 and c0 == 0.0) else constant_drift(b0, c0)
    if y0 is None:
        y0 = np.sin(np.pi * grid.nodes)
    return LinearProblem(a=a, drift=drift, T=T, omega=omega, grid=grid, M=M, y0=y0)


def heat_problem(N=128, M=256, T=0.1, omega=(0.3, 0.9)):
    grid = build_grid(N, 1.0)
    return LinearProblem(a=classical_coefficient(), drift=zero_drift(), T=T,
                         omega=omega, grid=grid, M=M,
                         y0=np.sin(np.pi * grid.nodes))
