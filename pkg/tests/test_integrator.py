import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from univbound.errors import StiffnessError
from univbound.integrator import (Tolerances, Trajectory, energy_balance, geometric_grid,
                                  integrate, step)
from univbound.models import (PdeParams, State, build_galerkin_wave, build_kirchhoff,
                              build_oscillator, build_scalar_ode)


def _reference(system, state, t1, t_eval):
    def rhs(t, y):
        d = system.dim
        return np.concatenate([y[d:], system.acceleration(t, y[:d], y[d:])])

    sol = solve_ivp(rhs, (state.t, t1), np.concatenate([state.u, state.v]), method="DOP853",
                    t_eval=t_eval, rtol=1e-13, atol=1e-14)
    return sol.y.T


def test_tolerances_validation():
    with pytest.raises(ValueError):
        Tolerances(rel_tol=0.0)
    with pytest.raises(ValueError):
        Tolerances(dt_min=1.0, dt_max=0.1)


def test_geometric_grid_shape():
    g = geometric_grid(0.0, 100.0, extra=[0.01, 1.0, 10.0])
    assert g[0] == 0.0 and g[-1] == 100.0
    assert np.all(np.diff(g) > 0)
    for p in (0.01, 1.0, 10.0):
        assert np.any(g == p)
    back = geometric_grid(-10.0, 0.0)
    assert back[0] == -10.0 and back[-1] == 0.0 and np.all(np.diff(back) > 0)


def test_counterexample_endpoint():
    s = build_oscillator(1.0, 1.0, 1.0)
    tr = integrate(s, State(-10.0, [24.5], [-5.0]), (-10.0, 0.0))
    assert abs(tr.u[-1, 0] + 0.5) < 1e-6 and abs(tr.v[-1, 0]) < 1e-6
    t = tr.t
    assert np.max(np.abs(tr.u[:, 0] - (t * t / 4 - 0.5))) < 1e-6
    assert tr.energy_residuals.max() <= 1e-8


def test_counterexample_steps_respect_energy_tol():
    s = build_oscillator(1.0, 1.0, 1.0)
    tol = Tolerances()
    state, dt = State(-10.0, [24.5], [-5.0]), 1e-3
    while state.t < -9.0:
        state, dt_used, res = step(s, state, dt, tol)
        assert res <= tol.energy_tol * 1.0001
        dt = min(max(dt_used * 1.5, tol.dt_min), tol.dt_max)


def test_rest_point_is_fixed():
    s = build_scalar_ode(1.0, 3.0)
    new, _, res = step(s, State(0.0, [0.0], [0.0]), 0.1)
    assert new.u[0] == 0.0 and new.v[0] == 0.0 and res == 0.0


def test_step_dissipates_energy():
    s = build_scalar_ode(1.0, 3.0)
    st = State(0.0, [1.0], [0.0])
    new, dt, _ = step(s, st, 0.01)
    assert dt > 0
    assert s.energy(new.u, new.v) < s.energy(st.u, st.v)


def test_step_underflow_is_stiffness_error():
    s = build_scalar_ode(1.0, 3.0)
    tol = Tolerances(dt_min=0.5, dt_max=1.0)
    with pytest.raises(StiffnessError) as exc:
        step(s, State(0.0, [1e3], [0.0]), 0.5, tol)
    assert exc.value.dt < 0.5


def test_step_rejects_out_of_range_proposal():
    with pytest.raises(ValueError):
        step(build_scalar_ode(1, 3), State(0, [1.0], [0.0]), 2.0)


def test_zero_state_stays_zero(pde):
    s = build_galerkin_wave(pde)
    tr = integrate(s, State(0.0, np.zeros(16), np.zeros(16)), (0.0, 10.0))
    assert not np.any(tr.u) and not np.any(tr.v)


@pytest.mark.parametrize("system,state", [
    (build_scalar_ode(1.0, 3.0), State(0.0, [2.0], [1.0])),
    (build_kirchhoff(PdeParams(N=4, M=8)), State(0.0, [1.0, -0.5, 0.2, 0.1], [0, 0, 0, 0.3])),
])
def test_matches_dop853_reference(system, state):
    grid = np.linspace(0.0, 5.0, 21)
    tr = integrate(system, state, (0.0, 5.0), t_eval=grid)
    ref = _reference(system, state, 5.0, grid)
    got = np.hstack([tr.u, tr.v])
    assert np.max(np.abs(got - ref)) < 1e-8


def test_error_decreases_with_tolerance():
    s = build_scalar_ode(1.0, 3.0)
    st = State(0.0, [3.0], [0.0])
    ref = _reference(s, st, 3.0, [3.0])[-1]
    errs = []
    for rt in (1e-5, 1e-7, 1e-9):
        tol = Tolerances(rel_tol=rt, abs_tol=rt * 1e-2, energy_tol=1e-3)
        tr = integrate(s, st, (0.0, 3.0), tol, t_eval=[0.0, 3.0])
        errs.append(np.max(np.abs(np.array([tr.u[-1, 0], tr.v[-1, 0]]) - ref)))
    # a fifth-order pair gains roughly 100^(4/5..1) per two decades of tolerance
    assert errs[0] > 10 * errs[1] > 100 * errs[2]


def test_energy_monotone_for_dissipative_wave():
    s = build_galerkin_wave(PdeParams(N=8, M=24, mu=-0.3))
    rng = np.random.default_rng(3)
    st = State(0.0, rng.standard_normal(8) * 5, rng.standard_normal(8) * 5)
    tr = integrate(s, st, (0.0, 20.0))
    dt = np.diff(tr.t)
    etol = tr.tolerances.energy_tol
    assert np.all(np.diff(tr.energy) <= etol * dt * np.maximum(1, tr.energy[:-1]))


def test_conservative_wave_drift():
    s = build_galerkin_wave(PdeParams(N=8, M=24, b=1.0, c=0.0, mu=0.0))
    st = State(0.0, np.linspace(1, 0.1, 8), np.zeros(8))
    tr = integrate(s, st, (0.0, 20.0))
    drift = np.max(np.abs(tr.energy - tr.energy[0])) / tr.energy[0] / 20.0
    assert drift <= 1e-8
    assert energy_balance(s, tr) <= 1e-8


def test_energy_balance_scalar_and_kirchhoff():
    s = build_scalar_ode(1.0, 3.0)
    tr = integrate(s, State(0.0, [50.0], [0.0]), (0.0, 100.0))
    assert energy_balance(s, tr) <= 1e-8
    k = build_kirchhoff(PdeParams(N=4, M=8))
    tr = integrate(k, State(0.0, [3.0, 1.0, 0.5, 0.2], np.zeros(4)), (0.0, 50.0))
    assert energy_balance(k, tr) <= 1e-8


def test_energy_balance_dimension_mismatch(pde):
    tr = integrate(build_scalar_ode(1, 3), State(0.0, [1.0], [0.0]), (0.0, 1.0))
    with pytest.raises(ValueError, match="dimension"):
        energy_balance(build_galerkin_wave(pde), tr)


def test_huge_amplitude_start_stays_finite():
    s = build_scalar_ode(1.0, 3.0)
    tr = integrate(s, State(0.0, [1e6], [0.0]), (0.0, 1.0))
    assert isinstance(tr, Trajectory)
    assert math.isfinite(tr.energy[-1]) and tr.energy[-1] < 2.0
    assert tr.energy_residuals.max() <= 1e-8


def test_t_eval_must_be_monotone():
    with pytest.raises(ValueError):
        integrate(build_scalar_ode(1, 3), State(0.0, [1.0], [0.0]), (0.0, 1.0),
                  t_eval=[0.0, 0.5, 0.4, 1.0])
