"""Implicit-Euler time integration of the linear equation and its adjoint.

The forward step solves (I + dt A(t_{n+1})) y^{n+1} = y^n + dt h^n with the
control slice h^n acting on the interval (t_n, t_{n+1}] and masked to the
control region. The adjoint is *defined* as the algebraic transpose of the
forward one-step map in the trapezoid-weighted inner product, stepping
backward from terminal data. Consequently the discrete duality identity

    <y(T), vT> - <y0, v(0)> = sum_n dt <h^n, v^n>_omega

holds to solver round-off for every (y0, h, vT), which is what the control
and observability machinery is built on (discretize-then-optimize).

Time-dependent coefficients are frozen per step at the backward node t_{n+1}.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .coefficients import DegeneracyCoefficient, DriftEnvelope
from .errors import SolverBreakdown
from .mesh import (GridSpec, active_indices, assemble_operator,
                   dirichlet_energy, l2_norm)


@dataclass
class LinearProblem:
    """Data of one linear control problem on the unit interval."""

    a: DegeneracyCoefficient
    drift: DriftEnvelope
    T: float
    omega: tuple
    grid: GridSpec
    M: int
    y0: np.ndarray
    _cache: dict = field(init=False, default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        w1, w2 = self.omega
        if not (0.0 < w1 < w2 < 1.0):
            raise ValueError(f"control region must satisfy 0 < w1 < w2 < 1, got {self.omega}")
        if self.T <= 0.0:
            raise ValueError("horizon T must be positive")
        if self.M < 8:
            raise ValueError("need at least 8 time steps")
        self.y0 = np.asarray(self.y0, dtype=float)
        if self.y0.shape != (self.grid.N,):
            raise ValueError("initial datum must be a nodal vector on the grid")

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)

    @property
    def case(self):
        return self.a.case

    def with_y0(self, y0: np.ndarray) -> "LinearProblem":
        return dataclasses.replace(self, y0=np.asarray(y0, dtype=float))

    def with_drift(self, drift: DriftEnvelope) -> "LinearProblem":
        return dataclasses.replace(self, drift=drift)

    def active(self) -> np.ndarray:
        return active_indices(self.grid, self.case)

    def omega_mask(self) -> np.ndarray:
        x = self.grid.nodes
        return (x >= self.omega[0]) & (x <= self.omega[1])


def _step_bands(p: LinearProblem):
    """Banded matrices I + dt A(t_n) and their weighted transposes, per step."""
    cache = p._cache
    if "fwd" in cache:
        return cache["fwd"], cache["adj"]
    act = p.active()
    n = act.size
    w = p.grid.weights[act]
    dt = p.dt

    def pair(t):
        op = assemble_operator(p.grid, p.a, p.drift, t)
        fwd = np.zeros((3, n))
        fwd[0, 1:] = dt * op.sup[:-1]
        fwd[1] = 1.0 + dt * op.diag
        fwd[2, :-1] = dt * op.sub[1:]
        # weighted transpose: Atil = W^{-1} A^T W, also tridiagonal
        asub = np.zeros(n)
        asub[1:] = op.sup[:-1] * w[:-1] / w[1:]
        asup = np.zeros(n)
        asup[:-1] = op.sub[1:] * w[1:] / w[:-1]
        adj = np.zeros((3, n))
        adj[0, 1:] = dt * asup[:-1]
        adj[1] = 1.0 + dt * op.diag
        adj[2, :-1] = dt * asub[1:]
        return fwd, adj

    if p.drift.time_dependent:
        pairs = [pair((k + 1) * dt) for k in range(p.M)]
        fwd_bands = [pr[0] for pr in pairs]
        adj_bands = [pr[1] for pr in pairs]
    else:
        f0, a0 = pair(dt)
        fwd_bands = [f0] * p.M
        adj_bands = [a0] * p.M
    cache["fwd"] = fwd_bands
    cache["adj"] = adj_bands
    return fwd_bands, adj_bands


def _banded_solve(ab, rhs, step):
    try:
        return solve_banded((1, 1), ab, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverBreakdown(f"singular step matrix at time index {step}: {exc}") from exc


@dataclass
class Trajectory:
    """Nodal states at times t_n = n T/M (boundary nodes zero-filled)."""

    grid: GridSpec
    times: np.ndarray
    states: np.ndarray           # (M+1, N)
    case: object
    stability_ratio: float | None = None

    def final(self) -> np.ndarray:
        return self.states[-1]

    def sup_l2(self) -> float:
        return max(l2_norm(self.grid, s) for s in self.states)

    def _time_weights(self) -> np.ndarray:
        dt = self.times[1] - self.times[0]
        tw = np.full(self.times.size, dt)
        tw[0] = tw[-1] = 0.5 * dt
        return tw

    def l2_Q(self) -> float:
        tw = self._time_weights()
        acc = sum(twn * l2_norm(self.grid, s) ** 2 for twn, s in zip(tw, self.states))
        return float(np.sqrt(acc))

    def z_norm(self, a: DegeneracyCoefficient) -> float:
        """L^2(0,T; H^1_a) norm."""
        tw = self._time_weights()
        acc = 0.0
        for twn, s in zip(tw, self.states):
            acc += twn * (l2_norm(self.grid, s) ** 2 + dirichlet_energy(self.grid, a, s))
        return float(np.sqrt(acc))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,x,value\n")
            for t, row in zip(self.times, self.states):
                for x, v in zip(self.grid.nodes, row):
                    fh.write(f"{t:.17g},{x:.17g},{v:.17g}\n")


def zero_control(p: LinearProblem) -> np.ndarray:
    return np.zeros((p.M, p.grid.N))


def control_cost(p: LinearProblem, h: np.ndarray) -> float:
    """||h||^2 over the control region and horizon (piecewise constant in t)."""
    act = p.active()
    wm = p.grid.weights[act] * p.omega_mask()[act]
    acc = 0.0
    for n in range(p.M):
        hn = h[n][act]
        acc += p.dt * float(np.sum(wm * hn * hn))
    return acc


def solve_forward(p: LinearProblem, h: np.ndarray | None = None) -> Trajectory:
    """Implicit-Euler trajectory of y_t = -A(t) y + h 1_omega, y(0) = y0.

    ``h`` has shape (M, N); slice n acts on (t_n, t_{n+1}] and is masked to
    the control region. The measured stability ratio
    sup_n ||y^n|| / (||y0|| + ||h||) is attached to the trajectory.
    """
    fwd_bands, _ = _step_bands(p)
    act = p.active()
    mask_act = p.omega_mask()[act]
    y = p.y0[act].copy()
    states = np.zeros((p.M + 1, p.grid.N))
    states[0, act] = y
    for n in range(p.M):
        rhs = y if h is None else y + p.dt * (h[n][act] * mask_act)
        y = _banded_solve(fwd_bands[n], rhs, n + 1)
        states[n + 1, act] = y
    traj = Trajectory(grid=p.grid, times=p.times, states=states, case=p.case)
    denom = l2_norm(p.grid, states[0])
    if h is not None:
        denom += float(np.sqrt(control_cost(p, h)))
    traj.stability_ratio = traj.sup_l2() / denom if denom > 0.0 else 0.0
    return traj


def solve_adjoint(p: LinearProblem, vT: np.ndarray) -> Trajectory:
    """Backward trajectory of the weighted transpose of the forward step map."""
    _, adj_bands = _step_bands(p)
    act = p.active()
    v = np.asarray(vT, dtype=float)[act].copy()
    states = np.zeros((p.M + 1, p.grid.N))
    states[p.M, act] = v
    for n in range(p.M - 1, -1, -1):
        v = _banded_solve(adj_bands[n], v, n + 1)
        states[n, act] = v
    return Trajectory(grid=p.grid, times=p.times, states=states, case=p.case)


def control_pairing(p: LinearProblem, h: np.ndarray, v: Trajectory) -> float:
    """sum_n dt <h^n, v^n> over the control region."""
    act = p.active()
    wm = p.grid.weights[act] * p.omega_mask()[act]
    acc = 0.0
    for n in range(p.M):
        acc += p.dt * float(np.sum(wm * h[n][act] * v.states[n][act]))
    return acc


def duality_residual(p: LinearProblem, y0: np.ndarray, h: np.ndarray,
                     vT: np.ndarray) -> float:
    """|<y(T), vT> - <y0, v(0)> - sum_n dt <h^n, v^n>_omega|.

    Zero up to round-off because the adjoint is the exact transpose of the
    forward map.
    """
    act = p.active()
    w = p.grid.weights[act]
    y = solve_forward(p.with_y0(y0), h)
    v = solve_adjoint(p, vT)
    t_final = float(np.sum(w * y.final()[act] * np.asarray(vT, dtype=float)[act]))
    t_init = float(np.sum(w * np.asarray(y0, dtype=float)[act] * v.states[0][act]))
    t_ctrl = control_pairing(p, h, v)
    return abs(t_final - t_init - t_ctrl)
