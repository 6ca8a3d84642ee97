"""Equilibria, reproduction number, stability and validation scans.

The threshold quantity is

    R0 = alpha*beta*omega / ((gamma+mu1)(delta+mu1)(y+mu2))

R0 < 1: the infection-free state (omega/(gamma+mu1), 0, 0) attracts;
R0 > 1: it loses stability to the interior equilibrium, whose closed
forms sit in `endemic_equilibrium`.  The exchange of stability happens
through a forward transcritical bifurcation at R0 = 1, which
`bifurcation_sweep` traces numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, DomainError
from .model import Trajectory, derivative, integrate_batch
from .params import ParameterSet

#: eigenvalue real-part tolerance separating stable/unstable/marginal
EIGENVALUE_TOL = 1e-9

#: relative vector-field norm below which a state counts as an equilibrium
EQUILIBRIUM_TOL = 1e-6


def reproduction_number(params: ParameterSet) -> float:
    """Basic reproduction number from the next-generation construction."""
    f1 = params.gamma + params.mu1
    f2 = params.delta + params.mu1
    f3 = params.y_total + params.mu2
    if f1 <= 0.0 or f2 <= 0.0 or f3 <= 0.0:
        raise DomainError("R0 needs gamma+mu1, delta+mu1 and y+mu2 all > 0")
    return params.alpha * params.beta * params.omega / (f1 * f2 * f3)


def disease_free_equilibrium(params: ParameterSet) -> np.ndarray:
    """Infection-free steady state (omega/(gamma+mu1), 0, 0)."""
    loss = params.gamma + params.mu1
    if loss <= 0.0:
        raise DomainError("disease-free equilibrium needs gamma+mu1 > 0")
    return np.array([params.omega / loss, 0.0, 0.0])


def endemic_equilibrium(params: ParameterSet) -> np.ndarray | None:
    """Interior steady state; None when R0 <= 1 (it is not positive there).

    S* = (delta+mu1)(y+mu2)/(alpha*beta)
    I* = (gamma+mu1)(y+mu2)(R0-1)/(alpha*beta)
    B* = (gamma+mu1)(R0-1)/beta
    """
    r0 = reproduction_number(params)
    if r0 <= 1.0:
        return None
    if params.alpha <= 0.0 or params.beta <= 0.0:
        raise DomainError("endemic equilibrium needs alpha, beta > 0")
    g1 = params.gamma + params.mu1
    d1 = params.delta + params.mu1
    c1 = params.y_total + params.mu2
    ab = params.alpha * params.beta
    return np.array([d1 * c1 / ab,
                     g1 * c1 * (r0 - 1.0) / ab,
                     g1 * (r0 - 1.0) / params.beta])


@dataclass(frozen=True)
class EquilibriumReport:
    r0: float
    dfe: np.ndarray
    endemic: np.ndarray | None


def equilibria(params: ParameterSet) -> EquilibriumReport:
    return EquilibriumReport(r0=reproduction_number(params),
                             dfe=disease_free_equilibrium(params),
                             endemic=endemic_equilibrium(params))


def jacobian(params: ParameterSet, state) -> np.ndarray:
    """Analytic Jacobian of the vector field at an arbitrary state."""
    s, _, b = np.asarray(state, dtype=float)
    y = params.y_total
    return np.array([
        [-params.beta * b - params.gamma - params.mu1, 0.0, -params.beta * s],
        [params.beta * b, -params.delta - params.mu1, params.beta * s],
        [0.0, params.alpha, -(y + params.mu2)],
    ])


@dataclass(frozen=True)
class StabilityVerdict:
    eigenvalues: np.ndarray
    classification: str  # locally-asymptotically-stable | unstable | marginal


def classify_stability(params: ParameterSet, eq,
                       tol_eig: float = EIGENVALUE_TOL) -> StabilityVerdict:
    """Eigenvalue classification of an equilibrium.

    The input must actually be an equilibrium: the vector field norm there
    has to vanish relative to the state scale.  Eigenvalues come from the
    characteristic cubic, solved through the companion matrix.
    """
    eq = np.asarray(eq, dtype=float)
    rate = derivative(params, eq)
    scale = max(1.0, float(np.max(np.abs(eq))))
    if np.max(np.abs(rate)) > EQUILIBRIUM_TOL * scale:
        raise DomainError(
            f"state {eq} is not an equilibrium (|f| = {np.max(np.abs(rate)):g})")
    jac = jacobian(params, eq)
    # coefficients of det(J - x I) = -x^3 + c2 x^2 + c1 x + c0, solved as
    # the monic cubic x^3 - c2 x^2 - c1 x - c0 via its companion matrix
    c2 = np.trace(jac)
    c1 = -0.5 * (np.trace(jac) ** 2 - np.trace(jac @ jac))
    c0 = np.linalg.det(jac)
    companion = np.array([[c2, c1, c0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    eigs = np.linalg.eigvals(companion)
    real = eigs.real
    if np.all(real < -tol_eig):
        cls = "locally-asymptotically-stable"
    elif np.any(real > tol_eig):
        cls = "unstable"
    else:
        cls = "marginal"
    return StabilityVerdict(eigenvalues=eigs, classification=cls)


def lyapunov_descent(params: ParameterSet, traj: Trajectory,
                     which: str = "dfe") -> np.ndarray:
    """Sample an energy-like certificate along a trajectory.

    For `which='dfe'` (requires R0 < 1):

        U = S0*(S/S0 - ln(S/S0)) + I + ((delta+mu1)/alpha) * B

    For `which='endemic'` (requires R0 > 1), the same construction recentred
    on the interior equilibrium with logarithmic wells in all three
    components.  Returns rows (t, U, dU/dt) where dU/dt is the chain rule
    of U with the model vector field.
    """
    r0 = reproduction_number(params)
    if which == "dfe":
        if r0 >= 1.0:
            raise DomainError("descent to the infection-free state needs R0 < 1")
        ref = disease_free_equilibrium(params)
        log_components = (0,)
    elif which == "endemic":
        if r0 <= 1.0:
            raise DomainError("descent to the interior state needs R0 > 1")
        ref = endemic_equilibrium(params)
        log_components = (0, 1, 2)
    else:
        raise DomainError(f"which must be 'dfe' or 'endemic', got {which!r}")

    w = params.delta + params.mu1
    if params.alpha <= 0.0:
        raise DomainError("the certificate needs alpha > 0")
    weights = np.array([1.0, 1.0, w / params.alpha])

    out = np.empty((len(traj.times), 3))
    out[:, 0] = traj.times
    for k, state in enumerate(traj.states):
        u = 0.0
        grad = np.zeros(3)
        for c in range(3):
            xc, rc, wc = state[c], ref[c], weights[c]
            if c in log_components:
                if xc <= 0.0:
                    raise DomainError(
                        f"component {c} is not positive at index {k}; "
                        "the logarithmic well is undefined there")
                u += wc * rc * (xc / rc - np.log(xc / rc))
                grad[c] = wc * (1.0 - rc / xc)
            else:
                u += wc * xc
                grad[c] = wc
        rate = derivative(params, state)
        out[k, 1] = u
        out[k, 2] = float(grad @ rate)
    return out


@dataclass
class BifurcationCurve:
    """Sweep rows: parameter value, R0, both equilibria classifications."""

    param: str
    values: np.ndarray
    r0: np.ndarray
    dfe_class: list
    endemic_i: np.ndarray  # nan where the interior equilibrium is absent
    endemic_class: list    # None where absent


def bifurcation_sweep(params: ParameterSet, name: str, lo: float, hi: float,
                      step: float) -> BifurcationCurve:
    """Sweep one parameter and record equilibria with their stability.

    The interior equilibrium is reported only where R0 > 1 (at R0 = 1 it
    coincides with the infection-free state and is not a positive
    equilibrium).
    """
    if not lo < hi:
        raise DomainError("need lo < hi")
    if not step > 0:
        raise DomainError("sweep step must be > 0")
    values = lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1)
    r0s = np.empty(len(values))
    dfe_cls = []
    e_i = np.full(len(values), np.nan)
    e_cls: list = []
    for j, v in enumerate(values):
        p = params.with_updates(**{name: float(v)})
        r0s[j] = reproduction_number(p)
        dfe_cls.append(classify_stability(p, disease_free_equilibrium(p))
                       .classification)
        eq = endemic_equilibrium(p)
        if eq is None:
            e_cls.append(None)
        else:
            e_i[j] = eq[1]
            e_cls.append(classify_stability(p, eq).classification)
    return BifurcationCurve(param=name, values=values, r0=r0s,
                            dfe_class=dfe_cls, endemic_i=e_i,
                            endemic_class=e_cls)


def critical_recruitment(params: ParameterSet) -> float:
    """Recruitment rate at which R0 crosses 1 (closed form)."""
    return ((params.gamma + params.mu1) * (params.delta + params.mu1)
            * (params.y_total + params.mu2) / (params.alpha * params.beta))


@dataclass
class HeatGrid:
    alpha_values: np.ndarray
    gamma_values: np.ndarray
    b_values: np.ndarray  # shape (len(alpha), len(gamma))
    t_check: float


#: heat-map integrator step; the validation scenario has a fast infection
#: transient (rates up to ~5e3/day), far stiffer than the baseline regime
HEATMAP_STEP = 2.5e-4


def doubling_heatmap(params: ParameterSet, alpha_range, gamma_range,
                     shape: tuple[int, int], initial, t_check: float = 14.0,
                     step: float = HEATMAP_STEP) -> HeatGrid:
    """Bacterial load after t_check days over an (alpha, gamma) grid.

    Each cell integrates the model from the shared initial state with its
    own burst/cytokine rates and records B(t_check).  All cells are
    advanced together in one batched sweep.
    """
    na, ng = shape
    if na < 1 or ng < 1:
        raise DomainError("grid shape must be at least 1x1")
    lo_a, hi_a = alpha_range
    lo_g, hi_g = gamma_range
    if lo_a < 0 or lo_g < 0:
        raise DomainError("alpha and gamma ranges must be nonnegative")
    alphas = np.linspace(lo_a, hi_a, na)
    gammas = np.linspace(lo_g, hi_g, ng)
    aa, gg = np.meshgrid(alphas, gammas, indexing="ij")
    aa = aa.ravel()
    gg = gg.ravel()

    x = np.tile(np.asarray(initial, dtype=float), (na * ng, 1))
    n_steps = int(np.ceil(t_check / step - 1e-9))
    h = step
    omega, beta, mu1, delta = params.omega, params.beta, params.mu1, params.delta
    decay_b = params.y_total + params.mu2

    def rates(x):
        s, i, b = x[:, 0], x[:, 1], x[:, 2]
        infect = beta * s * b
        return np.stack([omega - infect - gg * s - mu1 * s,
                         infect - delta * i - mu1 * i,
                         aa * i - decay_b * b], axis=1)

    for k in range(n_steps):
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = rates(x)
            k2 = rates(x + (h / 2) * k1)
            k3 = rates(x + (h / 2) * k2)
            k4 = rates(x + h * k3)
            x = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(
                f"heat-map integration diverged at step {k + 1}; "
                "use a smaller step")
    return HeatGrid(alpha_values=alphas, gamma_values=gammas,
                    b_values=x[:, 2].reshape(na, ng), t_check=t_check)


def write_bifurcation_csv(curve: BifurcationCurve, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{curve.param},R0,dfe_class,I_star,endemic_class\n")
        for v, r0, dc, ei, ec in zip(curve.values, curve.r0, curve.dfe_class,
                                     curve.endemic_i, curve.endemic_class):
            istar = "" if np.isnan(ei) else f"{ei:.17g}"
            fh.write(f"{v:.17g},{r0:.17g},{dc},{istar},{ec or ''}\n")


def write_heatmap_csv(grid: HeatGrid, path) -> None:
    """Matrix CSV with axis header rows (first row alpha, first column gamma)."""
    with open(path, "w") as fh:
        fh.write("gamma\\alpha," +
                 ",".join(f"{a:.17g}" for a in grid.alpha_values) + "\n")
        for j, g in enumerate(grid.gamma_values):
            row = ",".join(f"{grid.b_values[i, j]:.17g}"
                           for i in range(len(grid.alpha_values)))
            fh.write(f"{g:.17g},{row}\n")


# re-exported for the convergence demos
def stability_ensemble(params: ParameterSet, target, initials,
                       tf: float, step: float = 0.1) -> np.ndarray:
    """Terminal distance (inf-norm, relative to the target scale) of a batch
    of trajectories from the given equilibrium."""
    target = np.asarray(target, dtype=float)
    out = integrate_batch(params, np.asarray(initials, dtype=float),
                          0.0, tf, step)
    scale = max(float(np.max(np.abs(target))), 1e-30)
    return np.max(np.abs(out[-1] - target), axis=1) / scale
