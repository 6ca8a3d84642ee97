"""Vector field, integrator and positivity/boundedness guarantees."""

import numpy as np
import pytest

from leprosim import (DivergenceError, DomainError, ParameterSet,
                      SimulationConfig, asymptotic_bounds, check_positivity,
                      derivative, integrate, preset, write_trajectory_csv)
from leprosim.model import Trajectory


def _hand_rates(p, s, i, b):
    # independent arithmetic evaluation of the three equations
    ds = p.omega - p.beta * s * b - p.gamma * s - p.mu1 * s
    di = p.beta * s * b - p.delta * i - p.mu1 * i
    db = p.alpha * i - p.y_total * b - p.mu2 * b
    return np.array([ds, di, db])


def test_derivative_recruitment_only_at_origin():
    rate = derivative(preset("table2"), (0.0, 0.0, 0.0))
    assert rate[0] == pytest.approx(1.090)
    assert rate[1] == 0.0 and rate[2] == 0.0


def test_derivative_vanishes_at_endemic_point():
    rate = derivative(preset("table3"), (38.9006, 75.2748, 17.3046))
    assert np.all(np.abs(rate) < 1e-3)


def test_derivative_matches_hand_evaluation():
    p = preset("table1")
    rate = derivative(p, (100.0, 10.0, 5.0))
    assert np.allclose(rate, _hand_rates(p, 100.0, 10.0, 5.0), rtol=0, atol=0)
    # frozen spot values from the same arithmetic
    assert rate[0] == pytest.approx(-1738.108, abs=1e-9)
    assert rate[1] == pytest.approx(1717.301, abs=1e-9)
    assert rate[2] == pytest.approx(-2.2215, abs=1e-12)


def test_derivative_rejects_non_finite_state():
    with pytest.raises(DomainError):
        derivative(preset("table1"), (np.nan, 0.0, 0.0))
    with pytest.raises(DomainError):
        derivative(preset("table1"), (np.inf, 1.0, 1.0))


def test_derivative_linear_in_recruitment():
    p = preset("table1")
    state = (3.0, 2.0, 1.0)
    base = derivative(p.with_updates(omega=0.0), state)
    bumped = derivative(p.with_updates(omega=5.0), state)
    assert bumped[0] - base[0] == pytest.approx(5.0, rel=1e-15)
    assert bumped[1] == base[1] and bumped[2] == base[2]


def test_infection_term_is_bilinear():
    # with the linear s/i losses switched off, only beta*S*B remains in the
    # first two components, and doubling beta matches doubling S exactly
    p = preset("table1").with_updates(gamma=0.0, mu1=0.0, delta=0.0)
    lhs = derivative(p.with_updates(beta=2 * p.beta), (7.0, 4.0, 3.0))
    rhs = derivative(p, (14.0, 4.0, 3.0))
    assert np.array_equal(lhs, rhs)
    # and on the full parameter set the identity holds to rounding
    q = preset("table1")
    full_lhs = derivative(q.with_updates(beta=2 * q.beta), (7.0, 4.0, 3.0))
    full_rhs = derivative(q, (14.0, 4.0, 3.0))
    assert np.allclose(full_lhs[1], full_rhs[1], rtol=1e-15)


def test_integrate_reaches_infection_free_state():
    p = preset("table2")
    cfg = SimulationConfig(t0=0.0, tf=6000.0, step=0.1,
                           initial=(100.0, 10.0, 5.0))
    traj = integrate(p, cfg)
    target = np.array([55.1899, 0.0, 0.0])
    assert np.max(np.abs(traj.final_state() - target)) < 0.005 * 55.1899


def test_integrate_reaches_endemic_state():
    p = preset("table3")
    cfg = SimulationConfig(t0=0.0, tf=2000.0, step=0.1,
                           initial=(520.0, 275.0, 250.0))
    traj = integrate(p, cfg)
    target = np.array([38.9006, 75.2748, 17.3046])
    assert np.all(np.abs(traj.final_state() / target - 1.0) < 0.005)


def test_integrate_zero_dynamics_is_constant():
    p = ParameterSet(omega=0, beta=0, gamma=0, mu1=0, delta=0, alpha=0,
                     mu2=0, y=0)
    cfg = SimulationConfig(t0=0.0, tf=10.0, step=0.5, initial=(3.0, 2.0, 1.0))
    traj = integrate(p, cfg)
    assert np.array_equal(traj.states,
                          np.tile([3.0, 2.0, 1.0], (len(traj.times), 1)))


def test_integrate_grid_covers_horizon():
    cfg = SimulationConfig(t0=1.0, tf=2.05, step=0.1, initial=(1, 1, 1))
    traj = integrate(preset("table1"), cfg)
    assert traj.times[0] == 1.0
    assert traj.times[-1] >= 2.05 - 1e-12
    assert np.allclose(np.diff(traj.times), 0.1, rtol=1e-12)


def test_integrate_reports_divergence_step():
    # an explosive configuration: huge step on a stiff transient
    p = preset("table1")
    cfg = SimulationConfig(t0=0.0, tf=200.0, step=1.0,
                           initial=(5200.0, 0.0, 40.0))
    with pytest.raises(DivergenceError, match="step"):
        integrate(p, cfg)


def test_integrator_is_fourth_order():
    p = preset("table2")
    initial = (100.0, 10.0, 5.0)
    ref = integrate(p, SimulationConfig(0.0, 10.0, 0.1 / 64, initial))
    errs = []
    for h in (0.2, 0.1):
        traj = integrate(p, SimulationConfig(0.0, 10.0, h, initial))
        errs.append(np.max(np.abs(traj.final_state() - ref.final_state())))
    factor = errs[0] / errs[1]
    assert 12.0 < factor < 20.0


def test_asymptotic_bounds_formula():
    p = preset("table1")
    si_bound, b_bound = asymptotic_bounds(p)
    assert si_bound == pytest.approx(0.022 / 0.1813, rel=1e-12)
    assert b_bound == pytest.approx(0.063 * 0.022 / (0.1813 * 0.5703),
                                    rel=1e-12)
    assert si_bound == pytest.approx(0.1213459, abs=5e-7)
    assert b_bound == pytest.approx(0.0134049, abs=5e-7)


def test_asymptotic_bounds_zero_recruitment():
    p = preset("table1").with_updates(omega=0.0)
    assert asymptotic_bounds(p) == (0.0, 0.0)


def test_asymptotic_bounds_undefined_without_decay():
    p = ParameterSet(omega=1, beta=1, gamma=0, mu1=0, delta=0, alpha=1,
                     mu2=1, y=0)
    with pytest.raises(DomainError):
        asymptotic_bounds(p)


def test_trajectories_respect_asymptotic_bounds():
    p = preset("table1")
    si_bound, b_bound = asymptotic_bounds(p)
    rng = np.random.default_rng(7)
    for _ in range(4):
        init = rng.uniform(0.0, 0.5, size=3)
        traj = integrate(p, SimulationConfig(0.0, 400.0, 0.05, tuple(init)))
        tail = traj.states[-200:]
        assert np.all(tail[:, 0] + tail[:, 1] <= si_bound * (1 + 1e-3))
        assert np.all(tail[:, 2] <= b_bound * (1 + 1e-3))


def test_positivity_clean_on_integrated_paths():
    p = preset("table2")
    traj = integrate(p, SimulationConfig(0.0, 300.0, 0.1,
                                         initial=(40.0, 30.0, 20.0)))
    assert check_positivity(traj).clean


def test_positivity_flags_constructed_violation():
    times = np.arange(3) * 1.0
    states = np.array([[1.0, 1.0, 1.0], [-1.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    report = check_positivity(Trajectory(times, states, 1.0))
    assert not report.clean
    assert report.first_violation == 1 and report.component == 0
    assert report.value == -1.0


def test_positivity_random_parameter_sweep():
    # draws over the uncertain-rate ranges with random nonnegative starts
    rng = np.random.default_rng(11)
    base = preset("table1")
    for _ in range(25):
        p = base.with_updates(
            gamma=rng.uniform(0.0538, 0.0763),
            mu1=rng.uniform(0.0305, 0.0405),
            delta=rng.uniform(0.2263, 0.3099),
            alpha=rng.uniform(0.0538, 0.0763),
            y=rng.uniform(0.0001, 0.0005))
        init = tuple(rng.uniform(0.0, 0.3, size=3))
        traj = integrate(p, SimulationConfig(0.0, 60.0, 0.1, init))
        assert check_positivity(traj).clean


def test_parameterset_aggregates_clearances():
    rates = (0.0001, 0.00005, 0.00005, 0.00004, 0.00003, 0.00002, 0.00001)
    p = ParameterSet(omega=1, beta=1, gamma=0.1, mu1=0.1, delta=0.1,
                     alpha=0.1, mu2=0.5, cytokine_clearances=rates)
    assert p.y_total == pytest.approx(sum(rates), rel=1e-15)
    with pytest.raises(DomainError):
        ParameterSet(omega=1, beta=1, gamma=0.1, mu1=0.1, delta=0.1,
                     alpha=0.1, mu2=0.5, y=0.1, cytokine_clearances=rates)
    with pytest.raises(DomainError):
        ParameterSet(omega=1, beta=1, gamma=0.1, mu1=0.1, delta=0.1,
                     alpha=0.1, mu2=0.5)


def test_parameterset_rejects_negative_rates():
    with pytest.raises(DomainError):
        ParameterSet(omega=-1, beta=1, gamma=1, mu1=1, delta=1, alpha=1,
                     mu2=1, y=0)


def test_trajectory_csv_precision(tmp_path):
    p = preset("table3")
    traj = integrate(p, SimulationConfig(0.0, 1.0, 0.5,
                                         initial=(520.0, 275.0, 250.0)))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "t,S,I,B"
    parsed = np.array([[float(v) for v in line.split(",")]
                       for line in lines[1:]])
    assert np.array_equal(parsed[:, 1:], traj.states)  # 17 digits round-trip
    assert np.array_equal(parsed[:, 0], traj.times)
