"""Multi-drug optimal scheduling via the forward-backward sweep.

Eight drug intensities act on the model (three rifampin channels under
weight P, three dapsone channels under weight Q, two clofazimine channels
under weight R) plus an optional steroid channel under weight tc.  The
running cost charges the infected-cell count, the bacterial load and the
drug intensities (squared, except the cubic d13/d23 terms matching the
amplified-action channels), and the schedule minimizing its integral is
characterized pointwise by clamped stationarity of the Hamiltonian.

The solver alternates a forward state sweep, a backward costate sweep from
the zero terminal condition, and a relaxed control update, with damping
that adapts whenever the update overshoots.  A start-of-treatment delay
tau keeps every drug channel silent on [0, tau) while the steroid acts
from day zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, DomainError
from .model import Trajectory
from .params import ParameterSet

CONTROL_NAMES = ("d11", "d12", "d13", "d21", "d22", "d23", "d31", "d33", "c")

#: default per-channel intensity cap (1/day).  Keeps the controlled
#: bacterial production alpha - d23^2 - d33 nonnegative in the flagship
#: scenario (alpha = 0.2), which the sweep needs to stay well posed.
DEFAULT_BOUND = 0.1

_MDT_COLS = slice(0, 8)


@dataclass(frozen=True)
class Weights:
    """Cost weights: p (rifampin), q (dapsone), r (clofazimine), tc (steroid)."""

    p: float = 1.0
    q: float = 1.99
    r: float = 7.1
    tc: float = 6.4230

    def __post_init__(self):
        for name in ("p", "q", "r", "tc"):
            if not getattr(self, name) > 0:
                raise DomainError(f"weight {name} must be > 0")


@dataclass(frozen=True)
class DrugMask:
    rifampin: bool = False
    dapsone: bool = False
    clofazimine: bool = False
    steroid: bool = False

    def active(self) -> np.ndarray:
        """0/1 activation per control column."""
        flags = [self.rifampin] * 3 + [self.dapsone] * 3 \
            + [self.clofazimine] * 2 + [self.steroid]
        return np.asarray(flags, dtype=float)

    def label(self) -> str:
        parts = [n for n, on in (("rifampin", self.rifampin),
                                 ("dapsone", self.dapsone),
                                 ("clofazimine", self.clofazimine),
                                 ("steroid", self.steroid)) if on]
        return "+".join(parts) if parts else "none"


MASKS = {
    "none": DrugMask(),
    "rifampin": DrugMask(rifampin=True),
    "dapsone": DrugMask(dapsone=True),
    "clofazimine": DrugMask(clofazimine=True),
    "rifampin+dapsone": DrugMask(rifampin=True, dapsone=True),
    "rifampin+clofazimine": DrugMask(rifampin=True, clofazimine=True),
    "dapsone+clofazimine": DrugMask(dapsone=True, clofazimine=True),
    "mdt": DrugMask(rifampin=True, dapsone=True, clofazimine=True),
    "mdt+steroid": DrugMask(rifampin=True, dapsone=True, clofazimine=True,
                            steroid=True),
}

#: the seven therapy combinations of the comparison table
COMPARISON_MASKS = ("rifampin", "dapsone", "clofazimine",
                    "rifampin+dapsone", "rifampin+clofazimine",
                    "dapsone+clofazimine", "mdt")


def as_bounds(bounds) -> np.ndarray:
    """Normalize a scalar / mapping / sequence into the 9 per-channel caps."""
    if bounds is None:
        return np.full(9, DEFAULT_BOUND)
    if np.isscalar(bounds):
        arr = np.full(9, float(bounds))
    elif isinstance(bounds, dict):
        arr = np.full(9, DEFAULT_BOUND)
        for key, val in bounds.items():
            if key not in CONTROL_NAMES:
                raise DomainError(f"unknown control {key!r}")
            arr[CONTROL_NAMES.index(key)] = float(val)
    else:
        arr = np.asarray(bounds, dtype=float)
        if arr.shape != (9,):
            raise DomainError("bounds sequence must have 9 entries")
        arr = arr.copy()
    if np.any(arr < 0):
        raise DomainError("control bounds must be >= 0")
    return arr


def _check_controls(u: np.ndarray, bounds: np.ndarray | None) -> None:
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise DomainError("control intensities must be finite and >= 0")
    if bounds is not None and np.any(u > bounds + 1e-15):
        raise DomainError("control intensity exceeds its configured maximum")


def controlled_derivative(params: ParameterSet, state, u,
                          bounds=None) -> np.ndarray:
    """Vector field under drug intensities (already time-shifted by the
    caller for delayed treatment).

    dS/dt = omega - beta*S*B - gamma*S - mu1*S - d11*S - d21*S + d31*S + c*S
    dI/dt = beta*S*B - delta*I - mu1*I - d12*I - d22*I
    dB/dt = (alpha - d23^2 - d33)*I - y*B - mu2*B - d13^2*B
    """
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape != (9,):
        raise DomainError("control vector needs 9 entries (d11..d33, c)")
    _check_controls(u, as_bounds(bounds) if bounds is not None else None)
    if not np.all(np.isfinite(state)):
        raise DomainError(f"non-finite state {state}")
    s, i, b = state
    return np.asarray(_controlled_rhs(params, s, i, b, u))


def _controlled_rhs(params, s, i, b, u):
    d11, d12, d13, d21, d22, d23, d31, d33, c = u
    infect = params.beta * s * b
    ds = (params.omega - infect - params.gamma * s - params.mu1 * s
          - d11 * s - d21 * s + d31 * s + c * s)
    di = infect - params.delta * i - params.mu1 * i - d12 * i - d22 * i
    db = ((params.alpha - d23 * d23 - d33) * i
          - params.y_total * b - params.mu2 * b - d13 * d13 * b)
    return ds, di, db


@dataclass
class ControlSchedule:
    """Administered drug intensities on the trajectory grid, shape (n, 9)."""

    times: np.ndarray
    values: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.values[:, CONTROL_NAMES.index(name)]


def running_cost(state, u, weights: Weights) -> float:
    """Cost integrand at one instant (u already time-shifted)."""
    d11, d12, d13, d21, d22, d23, d31, d33, c = u
    return (state[1] + state[2]
            + weights.p * (d11 ** 2 + d12 ** 2 + d13 ** 3)
            + weights.q * (d21 ** 2 + d22 ** 2 + d23 ** 3)
            + weights.r * (d31 ** 2 + d33 ** 2)
            + weights.tc * c ** 2)


def cost(states: Trajectory, schedule: ControlSchedule, weights: Weights,
         tau: float = 0.0) -> float:
    """Trapezoidal value of the cost functional.

    Drug terms are evaluated at (t - tau) and vanish for t < tau; the
    steroid column is charged undelayed.
    """
    if len(schedule.times) != len(states.times) \
            or not np.allclose(schedule.times, states.times):
        raise DomainError("trajectory and schedule grids are misaligned")
    u_eff = effective_controls(schedule.values, states.step, tau)
    integrand = np.array([
        running_cost(x, u, weights)
        for x, u in zip(states.states, u_eff)])
    return float(np.trapezoid(integrand, dx=states.step))


def effective_controls(values: np.ndarray, step: float,
                       tau: float) -> np.ndarray:
    """Drug columns shifted to their in-effect times (zero before tau);
    the steroid column is untouched."""
    if tau < 0:
        raise DomainError("tau must be >= 0")
    shift = int(round(tau / step))
    if shift == 0:
        return values
    out = np.zeros_like(values)
    out[:, 8] = values[:, 8]
    if shift < len(values):
        out[shift:, _MDT_COLS] = values[:len(values) - shift, _MDT_COLS]
    return out


def adjoint_derivative(params: ParameterSet, state, u, lam) -> np.ndarray:
    """Costate equations (negative state-gradient of the Hamiltonian)."""
    s, i, b = np.asarray(state, dtype=float)
    l1, l2, l3 = np.asarray(lam, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.asarray(_adjoint_rhs(params, s, i, b, l1, l2, l3, u))


def _adjoint_rhs(params, s, i, b, l1, l2, l3, u):
    d11, d12, d13, d21, d22, d23, d31, d33, c = u
    bb = params.beta * b
    bs = params.beta * s
    dl1 = (bb + params.mu1 + params.gamma + d11 + d21 - d31 - c) * l1 - bb * l2
    dl2 = ((params.mu1 + params.delta + d12 + d22) * l2
           - (params.alpha - d23 * d23 - d33) * l3 - 1.0)
    dl3 = (bs * l1 - bs * l2
           + (params.y_total + params.mu2 + d13 * d13) * l3 - 1.0)
    return dl1, dl2, dl3


def hamiltonian(params: ParameterSet, state, u, lam,
                weights: Weights) -> float:
    rate = controlled_derivative(params, state, u)
    return running_cost(np.asarray(state, dtype=float), u, weights) \
        + float(np.asarray(lam, dtype=float) @ rate)


def optimal_controls(state, lam, weights: Weights, bounds, mask: DrugMask,
                     printed_forms: bool = False) -> np.ndarray:
    """Pointwise minimizer of the Hamiltonian, clamped to [0, max].

    The default expressions are the stationarity conditions dH/du = 0 of
    the Hamiltonian above.  printed_forms=True switches four channels
    (d13, d23, d33, c) to an alternative published variant that does not
    satisfy stationarity, kept for side-by-side comparison.
    """
    single = np.ndim(state) == 1
    state = np.atleast_2d(np.asarray(state, dtype=float))
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    s, i, b = state[:, 0], state[:, 1], state[:, 2]
    l1, l2, l3 = lam[:, 0], lam[:, 1], lam[:, 2]
    w = weights
    if printed_forms:
        d13 = 2.0 * i * l3 / (3.0 * w.p)
        d23 = 2.0 * b * l3 / (3.0 * w.q)
        d33 = i * l2 / (2.0 * w.r)
        ster = s * l1 / (2.0 * w.tc)
    else:
        d13 = 2.0 * b * l3 / (3.0 * w.p)
        d23 = 2.0 * i * l3 / (3.0 * w.q)
        d33 = i * l3 / (2.0 * w.r)
        ster = -s * l1 / (2.0 * w.tc)
    cand = np.stack([s * l1 / (2.0 * w.p), i * l2 / (2.0 * w.p), d13,
                     s * l1 / (2.0 * w.q), i * l2 / (2.0 * w.q), d23,
                     -s * l1 / (2.0 * w.r), d33, ster],
                    axis=1)
    cand = np.clip(cand, 0.0, as_bounds(bounds)) * mask.active()
    return cand[0] if single else cand


@dataclass(frozen=True)
class FbsSettings:
    max_iter: int = 200
    tol: float = 1e-3
    relaxation: float = 0.5
    step: float = 0.1

    def __post_init__(self):
        if self.max_iter < 1 or not 0 < self.relaxation <= 1 \
                or self.tol <= 0 or self.step <= 0:
            raise DomainError("invalid sweep settings")


@dataclass(frozen=True)
class OptimalControlProblem:
    params: ParameterSet
    weights: Weights = Weights()
    mask: DrugMask = MASKS["mdt"]
    bounds: tuple = (DEFAULT_BOUND,) * 9
    initial: tuple[float, float, float] = (520.0, 275.0, 250.0)
    horizon: float = 100.0
    tau: float = 0.0
    fbs: FbsSettings = FbsSettings()
    printed_forms: bool = False

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError("horizon must be > 0")
        if self.tau < 0:
            raise DomainError("tau must be >= 0")
        object.__setattr__(self, "bounds",
                           tuple(as_bounds(self.bounds).tolist()))
        object.__setattr__(self, "initial",
                           tuple(float(v) for v in self.initial))


@dataclass
class SolveResult:
    schedule: ControlSchedule
    states: Trajectory
    adjoints: np.ndarray
    cost: float
    iterations: int
    converged: bool
    averages: np.ndarray
    mask: DrugMask


def _forward(problem: OptimalControlProblem, u: np.ndarray,
             iteration: int) -> np.ndarray:
    """RK4 state sweep under a schedule; completed steps are projected onto
    the nonnegative orthant.

    The controlled system loses positivity once d23^2 + d33 exceeds alpha
    (bacterial production flips sign), and a negative load feeds
    unbounded susceptible growth through -beta*S*B; the projection keeps
    intermediate sweeps in the biological region and is a no-op on any
    trajectory that stays nonnegative.
    """
    p = problem.params
    h = problem.fbs.step
    n = len(u)
    x = np.empty((n, 3))
    x[0] = problem.initial
    for k in range(n - 1):
        s, i, b = x[k]
        uk, uk1 = u[k], u[k + 1]
        um = 0.5 * (uk + uk1)
        a1, b1, c1 = _controlled_rhs(p, s, i, b, uk)
        a2, b2, c2 = _controlled_rhs(p, s + h / 2 * a1, i + h / 2 * b1,
                                     b + h / 2 * c1, um)
        a3, b3, c3 = _controlled_rhs(p, s + h / 2 * a2, i + h / 2 * b2,
                                     b + h / 2 * c2, um)
        a4, b4, c4 = _controlled_rhs(p, s + h * a3, i + h * b3,
                                     b + h * c3, uk1)
        ns = s + (h / 6) * (a1 + 2 * a2 + 2 * a3 + a4)
        ni = i + (h / 6) * (b1 + 2 * b2 + 2 * b3 + b4)
        nb = b + (h / 6) * (c1 + 2 * c2 + 2 * c3 + c4)
        if not (np.isfinite(ns) and np.isfinite(ni) and np.isfinite(nb)):
            raise DivergenceError(
                f"state sweep diverged at iteration {iteration}, "
                f"step {k + 1}")
        x[k + 1] = (max(ns, 0.0), max(ni, 0.0), max(nb, 0.0))
    return x


def _backward(problem: OptimalControlProblem, x: np.ndarray,
              u: np.ndarray, iteration: int) -> np.ndarray:
    """RK4 costate sweep from the zero terminal condition."""
    p = problem.params
    h = problem.fbs.step
    n = len(u)
    lam = np.zeros((n, 3))
    for k in range(n - 1, 0, -1):
        l1, l2, l3 = lam[k]
        sk, ik, bk = x[k]
        s1, i1, b1_ = x[k - 1]
        sm, im, bm = 0.5 * (sk + s1), 0.5 * (ik + i1), 0.5 * (bk + b1_)
        uk, uk1 = u[k], u[k - 1]
        um = 0.5 * (uk + uk1)
        a1, b1, c1 = _adjoint_rhs(p, sk, ik, bk, l1, l2, l3, uk)
        a2, b2, c2 = _adjoint_rhs(p, sm, im, bm, l1 - h / 2 * a1,
                                  l2 - h / 2 * b1, l3 - h / 2 * c1, um)
        a3, b3, c3 = _adjoint_rhs(p, sm, im, bm, l1 - h / 2 * a2,
                                  l2 - h / 2 * b2, l3 - h / 2 * c2, um)
        a4, b4, c4 = _adjoint_rhs(p, s1, i1, b1_, l1 - h * a3,
                                  l2 - h * b3, l3 - h * c3, uk1)
        lam[k - 1] = (l1 - (h / 6) * (a1 + 2 * a2 + 2 * a3 + a4),
                      l2 - (h / 6) * (b1 + 2 * b2 + 2 * b3 + b4),
                      l3 - (h / 6) * (c1 + 2 * c2 + 2 * c3 + c4))
        if not np.all(np.isfinite(lam[k - 1])):
            raise DivergenceError(
                f"costate sweep diverged at iteration {iteration}, "
                f"step {k - 1}")
    return lam


def forward_backward_sweep(problem: OptimalControlProblem) -> SolveResult:
    """Iterate state sweep / costate sweep / relaxed control update.

    The schedule iterate stores controls at their in-effect times: for a
    delayed problem the drug columns are pinned to zero on [0, tau) and the
    steroid column is free from day zero.  Convergence is declared when the
    pointwise optimal controls recomputed from the current sweep differ
    from the schedule by at most tol in per-channel relative L1 norm
    (denominators floored at 1, so nearly silent channels are judged
    absolutely).  The relaxation factor starts at the configured value and
    halves whenever the raw update grows, recovering geometrically while
    the iteration contracts.
    """
    cfg = problem.fbs
    bounds = np.asarray(problem.bounds)
    times = cfg.step * np.arange(int(np.ceil(problem.horizon / cfg.step
                                             - 1e-9)) + 1)
    n = len(times)
    shift = int(round(problem.tau / cfg.step))
    u = np.zeros((n, 9))
    x = _forward(problem, u, 0)
    lam = np.zeros((n, 3))
    relax = cfg.relaxation
    prev_raw = np.inf
    converged = False
    iterations = 0
    for it in range(1, cfg.max_iter + 1):
        iterations = it
        x = _forward(problem, u, it)
        lam = _backward(problem, x, u, it)
        cand = optimal_controls(x, lam, problem.weights, bounds,
                                problem.mask, problem.printed_forms)
        if shift > 0:
            cand[:min(shift, n), _MDT_COLS] = 0.0
        diff = np.abs(cand - u).sum(axis=0)
        rel = diff / np.maximum(np.abs(cand).sum(axis=0), 1.0)
        if rel.max() <= cfg.tol:
            converged = True
            break
        raw = diff.sum()
        relax = max(relax * 0.5, 1e-3) if raw > prev_raw \
            else min(relax * 1.25, cfg.relaxation)
        prev_raw = raw
        u = relax * cand + (1.0 - relax) * u
    if not converged:
        # refresh the sweeps so the returned path matches the final schedule
        x = _forward(problem, u, iterations)
        lam = _backward(problem, x, u, iterations)

    traj = Trajectory(times=times, states=x, step=cfg.step)
    schedule = ControlSchedule(times=times, values=u)
    j = cost(traj, schedule, problem.weights, tau=0.0)
    return SolveResult(schedule=schedule, states=traj, adjoints=lam,
                       cost=j, iterations=iterations, converged=converged,
                       averages=x.mean(axis=0), mask=problem.mask)


def summarize(result: SolveResult) -> np.ndarray:
    """Mean S, I, B over all grid points of the solved trajectory."""
    return result.states.states.mean(axis=0)


@dataclass
class ComparisonRow:
    mask: DrugMask
    averages: np.ndarray
    cost: float
    converged: bool
    iterations: int


def compare_combinations(problem: OptimalControlProblem,
                         masks) -> list[ComparisonRow]:
    """Solve the same problem once per drug mask, identical numerics."""
    if not masks:
        raise DomainError("need at least one drug mask")
    rows = []
    for mask in masks:
        if isinstance(mask, str):
            mask = MASKS[mask]
        sub = OptimalControlProblem(
            params=problem.params, weights=problem.weights, mask=mask,
            bounds=problem.bounds, initial=problem.initial,
            horizon=problem.horizon, tau=problem.tau, fbs=problem.fbs,
            printed_forms=problem.printed_forms)
        try:
            res = forward_backward_sweep(sub)
        except Exception as exc:
            raise type(exc)(f"[mask {mask.label()}] {exc}") from exc
        rows.append(ComparisonRow(mask=mask, averages=summarize(res),
                                  cost=res.cost, converged=res.converged,
                                  iterations=res.iterations))
    return rows


def write_solve_csv(result: SolveResult, path) -> None:
    """CSV export: t,S,I,B then the nine control columns."""
    with open(path, "w") as fh:
        fh.write("t,S,I,B," + ",".join(CONTROL_NAMES) + "\n")
        for t, x, u in zip(result.states.times, result.states.states,
                           result.schedule.values):
            vals = [t, *x, *u]
            fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")


def write_solve_summary(result: SolveResult, path) -> None:
    summary = {
        "mask": result.mask.label(),
        "J": result.cost,
        "iterations": result.iterations,
        "converged": result.converged,
        "averages": {"S": float(result.averages[0]),
                     "I": float(result.averages[1]),
                     "B": float(result.averages[2])},
    }
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
