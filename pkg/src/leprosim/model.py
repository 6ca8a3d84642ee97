"""Uncontrolled within-host dynamics and its fixed-step integrator.

State is (S, I, B): susceptible schwann cells, infected schwann cells and
bacterial load.  The vector field is

    dS/dt = omega - beta*S*B - gamma*S - mu1*S
    dI/dt = beta*S*B - delta*I - mu1*I
    dB/dt = alpha*I - y*B - mu2*B

Everything here is a pure function; trajectories are dense uniform grids
produced by the classical 4-stage Runge-Kutta scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, DomainError
from .params import ParameterSet

#: absolute slack below zero tolerated in positivity checks (RK4 roundoff
#: can undershoot zero near extinction)
POSITIVITY_TOL = 1e-12

#: default integrator step (days); resolves the fastest baseline rate
#: (~0.87/day) comfortably
DEFAULT_STEP = 0.1


@dataclass(frozen=True)
class SimulationConfig:
    """Horizon, step and initial state of one integration."""

    t0: float
    tf: float
    step: float = DEFAULT_STEP
    initial: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.tf > self.t0:
            raise DomainError(f"need tf > t0, got [{self.t0}, {self.tf}]")
        if not self.step > 0:
            raise DomainError(f"step must be > 0, got {self.step}")
        if self.step > self.tf - self.t0:
            raise DomainError("step exceeds the horizon")
        init = tuple(float(v) for v in self.initial)
        if len(init) != 3:
            raise DomainError("initial state needs the 3 components (S, I, B)")
        object.__setattr__(self, "initial", init)


@dataclass
class Trajectory:
    """Time-indexed path on a uniform grid; states has shape (n, 3)."""

    times: np.ndarray
    states: np.ndarray
    step: float

    @property
    def s(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def i(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def b(self) -> np.ndarray:
        return self.states[:, 2]

    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def state_at(self, t: float) -> np.ndarray:
        """State at the grid point nearest to t."""
        k = int(round((t - self.times[0]) / self.step))
        k = min(max(k, 0), len(self.times) - 1)
        return self.states[k]


def derivative(params: ParameterSet, state) -> np.ndarray:
    """Right-hand side of the uncontrolled system at one state."""
    state = np.asarray(state, dtype=float)
    if state.shape != (3,):
        raise DomainError("state must have the 3 components (S, I, B)")
    if not np.all(np.isfinite(state)):
        raise DomainError(f"non-finite state {state}")
    return _rates(params, state[None, :])[0]


def _rates(params: ParameterSet, states: np.ndarray) -> np.ndarray:
    """Vector field for a batch of states, shape (k, 3) -> (k, 3)."""
    s, i, b = states[:, 0], states[:, 1], states[:, 2]
    infect = params.beta * s * b
    out = np.empty_like(states)
    out[:, 0] = params.omega - infect - params.gamma * s - params.mu1 * s
    out[:, 1] = infect - params.delta * i - params.mu1 * i
    out[:, 2] = params.alpha * i - params.y_total * b - params.mu2 * b
    return out


def _grid(t0: float, tf: float, step: float) -> np.ndarray:
    n = int(np.ceil((tf - t0) / step - 1e-9))
    return t0 + step * np.arange(n + 1)


def integrate(params: ParameterSet, config: SimulationConfig) -> Trajectory:
    """Classical RK4 integration of the uncontrolled system.

    The grid is uniform with the configured step and covers [t0, tf]
    (the last point may overshoot tf by less than one step when the
    horizon is not a step multiple).

    Raises DivergenceError identifying the first bad step if the state
    leaves the finite range.
    """
    batch = integrate_batch(params, np.asarray([config.initial], dtype=float),
                            config.t0, config.tf, config.step)
    times = _grid(config.t0, config.tf, config.step)
    return Trajectory(times=times, states=batch[:, 0, :], step=config.step)


def integrate_batch(params: ParameterSet, initials: np.ndarray,
                    t0: float, tf: float, step: float) -> np.ndarray:
    """RK4 for k initial states at once; returns shape (n_times, k, 3).

    All rows share the same parameters and grid, so ensemble scans over
    initial conditions cost one vectorized sweep.
    """
    initials = np.atleast_2d(np.asarray(initials, dtype=float))
    times = _grid(t0, tf, step)
    n = len(times)
    out = np.empty((n, initials.shape[0], 3))
    out[0] = initials
    h = step
    x = initials.copy()
    for k in range(n - 1):
        # overflow is detected explicitly below; keep numpy quiet about it
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = _rates(params, x)
            k2 = _rates(params, x + (h / 2) * k1)
            k3 = _rates(params, x + (h / 2) * k2)
            k4 = _rates(params, x + h * k3)
            x = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            bad = np.argwhere(~np.isfinite(x))[0]
            raise DivergenceError(
                f"non-finite state at step {k + 1} (t={times[k + 1]:g}), "
                f"trajectory {bad[0]}, component {bad[1]}")
        out[k + 1] = x
    return out


def asymptotic_bounds(params: ParameterSet) -> tuple[float, float]:
    """Limsup bounds: S+I <= omega/k and B <= alpha*omega/(k*(y+mu2)),
    where k = min(gamma+mu1, delta+mu1)."""
    k = min(params.gamma + params.mu1, params.delta + params.mu1)
    clear = params.y_total + params.mu2
    if k <= 0.0 or clear <= 0.0:
        raise DomainError(
            "asymptotic bounds need min(gamma+mu1, delta+mu1) > 0 and "
            "y+mu2 > 0")
    si_bound = params.omega / k
    b_bound = params.alpha * params.omega / (k * clear)
    return si_bound, b_bound


@dataclass(frozen=True)
class PositivityReport:
    clean: bool
    first_violation: int | None = None
    component: int | None = None
    value: float | None = None


def check_positivity(traj: Trajectory,
                     tol: float = POSITIVITY_TOL) -> PositivityReport:
    """Flag the first state component below -tol, if any."""
    bad = np.argwhere(traj.states < -tol)
    if bad.size == 0:
        return PositivityReport(clean=True)
    k, c = int(bad[0, 0]), int(bad[0, 1])
    return PositivityReport(clean=False, first_violation=k, component=c,
                            value=float(traj.states[k, c]))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV export: header t,S,I,B, one row per grid point, 17 significant
    digits (full double precision)."""
    with open(path, "w") as fh:
        fh.write("t,S,I,B\n")
        for t, (s, i, b) in zip(traj.times, traj.states):
            fh.write(f"{t:.17g},{s:.17g},{i:.17g},{b:.17g}\n")
