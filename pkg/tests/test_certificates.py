import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from univbound import certificates as C
from univbound.errors import CertificateError, RegimeError
from univbound.integrator import Tolerances, Trajectory, integrate
from univbound.models import (PdeParams, State, build_galerkin_wave, build_kirchhoff,
                              build_oscillator, build_scalar_ode, kirchhoff_neumann_surrogate)


@pytest.fixture(scope="module")
def scalar_run():
    s = build_scalar_ode(1.0, 3.0)
    return s, integrate(s, State(0.0, [10.0], [0.0]), (0.0, 10.0))


def _synthetic(t, e, dim=1):
    n = len(t)
    return Trajectory(t=np.asarray(t, float), u=np.zeros((n, dim)), v=np.zeros((n, dim)),
                      energy=np.asarray(e, float), dissipated=np.zeros(n - 1),
                      energy_residuals=np.zeros(n - 1), tolerances=Tolerances())


# -- exponents ------------------------------------------------------------------------


def test_exponents_examples():
    e = C.exponents(1, 3)
    assert e.gamma_min == pytest.approx(0.2) and e.gamma_max == pytest.approx(0.5)
    e = C.exponents(0.5, 2)
    assert e.gamma_min == pytest.approx(0.25) and e.gamma_max == pytest.approx(0.25)
    e = C.exponents(1, 2)
    assert e.gamma_min == pytest.approx(0.125) and e.decay_rate == pytest.approx(2.0)
    assert e.bound_rate == pytest.approx(8.0) and e.strong_decay_rate == 2.0


@pytest.mark.parametrize("alpha,beta", [(1, 1), (2, 1), (0, 1), (-1, 2)])
def test_exponents_regime(alpha, beta):
    with pytest.raises(RegimeError):
        C.exponents(alpha, beta)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 10), st.floats(0.01, 10))
def test_exponent_algebra(alpha, delta):
    beta = alpha + delta
    e = C.exponents(alpha, beta)
    a, b = alpha / 2, (beta - alpha) / ((alpha + 1) * (beta + 2))
    assert e.gamma_min * e.gamma_max == pytest.approx(a * b, rel=1e-12)
    assert {e.gamma_min, e.gamma_max} == {a, b}
    assert 0 < e.gamma_min <= e.gamma_max
    assert e.gamma_min <= beta / (2 * beta + 4) * (1 + 1e-12)
    assert e.gamma_max >= alpha / 2


# -- comparison principle----------------------------------------------------------------


def test_majorant_examples():
    assert C.comparison_majorant(1, 1, 0, 2) == pytest.approx(0.5)
    assert C.comparison_majorant(0.2, 1, 0, 1) == pytest.approx(3125.0)
    assert C.comparison_majorant(0.5, 2, 0, 1e8) < 1e-10
    assert C.comparison_majorant(0.5, 2, 0, 1e-8) > 1e10
    t = np.array([0.5, 1.0])
    assert C.comparison_majorant(1, 1, 0, t).shape == (2,)


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_majorant_rejects_nonpositive_time(t):
    with pytest.raises(ValueError):
        C.comparison_majorant(1, 1, 0, t)


def test_oracle_examples():
    # exact solution 1/(t + 1e-6) stays below 1/t
    assert C.comparison_oracle(1, 1, 0, 1e6, (0.01, 100)) <= 1e-8
    assert C.comparison_oracle(1, 1, 0, 0.0) < 0
    for phi0 in (1.0, 1e3, 1e6):
        assert C.comparison_oracle(0.5, 2, 3, phi0, (0.01, 100)) <= 1e-8


def test_oracle_rejects_negative_start():
    with pytest.raises(ValueError):
        C.comparison_oracle(1, 1, 0, -1.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 2), st.floats(0.1, 10), st.floats(0, 10),
       st.sampled_from([1.0, 1e3, 1e6]))
def test_comparison_dominance(gamma, rho, M, phi0):
    assert C.comparison_oracle(gamma, rho, M, phi0, (0.01, 100)) <= 1e-8


# -- energies and epsilon -------------------------------------------------------------


def test_energies_examples():
    s = build_scalar_ode(1, 3)
    assert C.energies(s, State(0, [0.0], [0.0]), 0.0, 0.2) == (0.0, 1.0, 1.0)
    e0, _, _ = C.energies(build_scalar_ode(1, 2), State(0, [1.0], [1.0]), 0.3, 0.2)
    assert e0 == pytest.approx(0.75)
    # u orthogonal to v: Phi equals the base energy
    w = build_galerkin_wave(PdeParams(N=4, M=8))
    st_ = State(0, [1.0, 0, 0, 0], [0, 2.0, 0, 0])
    e0, ehat, phi = C.energies(w, st_, 0.7, 0.125)
    assert phi == ehat
    _, _, phi_d = C.energies(w, st_, 0.7, 0.5, mode="decay")
    assert phi_d == e0


def test_energies_inconsistent_constants():
    w = build_galerkin_wave(PdeParams(N=4, M=8, lam=3.0))
    bad = dataclasses.replace(w, declared_constants=dataclasses.replace(
        w.declared_constants, c1=0.0))
    with pytest.raises(CertificateError, match="C1"):
        C.energies(bad, State(0, [0.5, 0, 0, 0], np.zeros(4)), 0.0, 0.1)


def test_energies_need_constants_in_bound_mode():
    with pytest.raises(CertificateError):
        C.energies(build_oscillator(1, 1, 1), State(0, [1.0], [0.0]), 0.1, 0.2)


def test_calibrate_trivial_cross_term():
    s = build_scalar_ode(1, 3)
    tr = _synthetic(np.linspace(0, 1, 5), np.zeros(5))
    assert C.calibrate_epsilon(s, tr, 0.2) == 1.0
    assert C.calibrate_epsilon(s, tr, 0.2, eps_max=0.3) == 0.3


def test_calibrate_scalar(scalar_run):
    s, tr = scalar_run
    g = C.exponents(1, 3).gamma_min
    eps = C.calibrate_epsilon(s, tr, g, "bound")
    assert eps > 0
    assert np.all(C.sandwich_margins(C.certificate_series(s, tr, eps, g, "bound")) >= 0)
    assert np.any(C.sandwich_margins(C.certificate_series(s, tr, 2 * eps, g, "bound")) < 0)


def test_calibrate_matches_closed_form(scalar_run):
    s, tr = scalar_run
    g = 0.2
    base = tr.energy + 1.0
    cross = tr.u[:, 0] * tr.v[:, 0]
    m = cross != 0
    limit = np.min(0.5 * base[m] / (base[m] ** g * np.abs(cross[m])))
    eps = C.calibrate_epsilon(s, tr, g, "bound", eps_max=10 * limit)
    assert 0.99 * limit <= eps <= limit


# -- differential inequality ----------------------------------------------------------


def test_rest_state_residual():
    s = build_scalar_ode(1, 3)
    tr = _synthetic(np.linspace(0, 1, 4), np.zeros(4))
    chk = C.differential_inequality_residual(s, tr, 0.5, 0.2, "bound")
    expected = 0.5 * 5 / 8 * (2 / 3) ** 1.2 * 1.0 - 2.0
    assert np.allclose(chk.residuals, expected)
    assert chk.ok


def test_inequality_holds_at_half_epsilon(scalar_run):
    s, tr = scalar_run
    g = 0.2
    eps = C.calibrate_epsilon(s, tr, g)
    chk = C.differential_inequality_residual(s, tr, eps / 2, g, t_min=0.01)
    assert chk.ok and chk.max_normalized <= 0
    big = C.differential_inequality_residual(s, tr, 1e3 * eps, g, t_min=0.01)
    assert not big.ok and big.residuals[big.worst_index] > 0


def test_inequality_needs_constants():
    s = build_oscillator(1, 1, 1)
    tr = integrate(s, State(0, [1.0], [0.0]), (0, 1))
    with pytest.raises(CertificateError):
        C.differential_inequality_residual(s, tr, 0.1, 0.2)


def test_sandwich_transfers_inequality(scalar_run):
    s, tr = scalar_run
    g = 0.2
    eps = 0.5 * C.calibrate_epsilon(s, tr, g)
    ser = C.certificate_series(s, tr, eps, g, "bound")
    e_res = C.e_form_residual(s, ser)
    phi_res = C.differential_inequality_residual(s, tr, eps, g).residuals
    sandwich = C.sandwich_margins(ser) >= 0
    both = sandwich & (e_res <= 0)
    assert both.sum() > len(tr) // 2
    # base >= 2 Phi / 3, so the Phi form is weaker than the base form wherever Phi <= 3 base / 2
    assert np.all(phi_res[both] <= 1e-12 * np.maximum(1, np.abs(ser.dPhi[both])))


@pytest.mark.parametrize("system,u0,v0", [
    (build_scalar_ode(1, 3), [3.0], [1.0]),
    (build_galerkin_wave(PdeParams(N=6, M=12, mu=-0.5)), np.linspace(2, 0, 6), np.ones(6)),
    (build_kirchhoff(PdeParams(N=4, M=8)), [1.0, 0.5, 0, 0], [0, 1.0, 0, 0]),
])
def test_dissipation_sign(system, u0, v0):
    tr = integrate(system, State(0, u0, v0), (0, 5))
    for mode in C.MODES:
        ser = C.certificate_series(system, tr, 0.0, 0.3, mode)
        dis = np.array([np.dot(system.damping(t, v), v) for t, v in zip(tr.t, tr.v)])
        assert np.allclose(ser.dPhi, -dis, rtol=1e-12, atol=1e-300)
        assert np.all(ser.dPhi <= 0)


def test_analytic_derivative_matches_differences(scalar_run):
    s, tr = scalar_run
    dense = integrate(s, State(0.0, [10.0], [0.0]), (0.0, 2.0), t_eval=np.linspace(0, 2, 4001))
    ser = C.certificate_series(s, dense, 0.1, 0.2, "bound")
    fd = np.gradient(ser.Phi, dense.t)
    # skip the initial transient, where second-order differences are too coarse
    inner = slice(100, -10)
    scale = np.maximum(np.abs(ser.dPhi[inner]), 1.0)
    assert np.max(np.abs(fd[inner] - ser.dPhi[inner]) / scale) < 1e-3


# -- bound and decay fits -------------------------------------------------------------


def test_zero_energy_gives_zero_constant():
    tr = _synthetic(np.geomspace(1, 100, 20), np.zeros(20))
    rep = C.verify_bound(tr, C.exponents(1, 3), "decay")
    assert rep.pooled.coef == 0.0


def test_decay_fit_is_minimax(scalar_run):
    s = build_scalar_ode(1, 3)
    tr = integrate(s, State(0, [5.0], [0.0]), (0, 100))
    rep = C.verify_bound(tr, C.exponents(1, 3), "decay", window=(1, 100))
    m = tr.window(1, 100)
    assert rep.pooled.coef == np.max(tr.energy[m] * tr.t[m] ** 2)


def test_ubp_fit_covers_samples(scalar_run):
    s, tr = scalar_run
    rep = C.verify_bound(tr, C.exponents(1, 3), "ubp", window=(0.01, 1.0))
    m = tr.window(0.01, 1.0)
    assert np.all(rep.pooled.envelope(tr.t[m]) >= tr.energy[m] + 1.0)


def test_oscillator_has_no_universal_bound():
    s = build_oscillator(1, 1, 1)
    amps = [1.0, 10.0, 100.0, 1e3, 1e4]
    trs = [integrate(s, State(0, [a], [0.0]), (0, 2)) for a in amps]
    rep = C.verify_bound(trs, mode="ubp", rate=5.0, window=(0.01, 2.0), amplitudes=amps)
    assert not rep.universal and rep.saturation > 100


def test_scalar_decay_constant_stable():
    s = build_scalar_ode(1, 3)
    amps = [1.0, 1e2, 1e4]
    trs = [integrate(s, State(0, [a], [0.0]), (0, 1000)) for a in amps]
    rep = C.verify_bound(trs, C.exponents(1, 3), "decay", window=(10, 1000))
    assert rep.spread <= 2.0 and rep.universal


def test_verify_bound_needs_rate():
    with pytest.raises(ValueError):
        C.verify_bound(_synthetic([1, 2], [1, 1]), mode="decay")


def test_fit_synthetic_power_law():
    t = np.geomspace(1, 1000, 60)
    fit = C.fit_decay_exponent((t, 7 * t ** -2.0), (1, 1000))
    assert fit.slope == pytest.approx(-2.0, abs=1e-10)


def test_fit_refuses_vanishing_energy():
    t = np.geomspace(1, 100, 30)
    e = np.where(t > 50, 0.0, 1 / t)
    with pytest.raises(CertificateError):
        C.fit_decay_exponent((t, e), (1, 100))
    with pytest.raises(ValueError):
        C.fit_decay_exponent((t, 1 / t), (1, 1.2))


@pytest.mark.parametrize("beta,tolerance", [(3.0, 0.1), (1.2, 0.15)])
def test_scalar_decay_slope(beta, tolerance):
    s = build_scalar_ode(1.0, beta)
    tr = integrate(s, State(0, [10.0], [0.0]), (0, 1000))
    rate = C.exponents(1.0, beta).decay_rate
    assert C.fit_decay_exponent(tr, (10, 1000)).slope <= -rate * (1 - tolerance)


# -- assumption checks ----------------------------------------------------------------


@pytest.fixture(scope="module")
def reports():
    p = PdeParams(N=8, M=24)
    return {
        "scalar": C.verify_assumptions(build_scalar_ode(1, 3), 1000),
        "kirchhoff": C.verify_assumptions(build_kirchhoff(p), 1000),
        "surrogate": C.verify_assumptions(kirchhoff_neumann_surrogate(p), 1000),
        "neumann": C.verify_assumptions(
            build_galerkin_wave(PdeParams(N=8, M=24, boundary="neumann", lam=0.5)), 1000),
    }


def test_scalar_assumptions(reports):
    r = reports["scalar"]
    assert r["F3"].holds and r["F3"].fitted["coef"] == pytest.approx(5.0, rel=1e-9)
    assert r["norms"].holds and r["norms"].fitted["coef"] <= 1.0
    for name in ("F2", "G2", "G3"):
        assert r[name].holds


def test_neumann_wave_needs_additive_constant(reports):
    f2 = reports["neumann"]["F2"]
    assert f2.holds
    assert f2.holds_with_zero_constant is False


def test_surrogate_coercivity_fails(reports):
    f2 = reports["surrogate"]["F2"]
    assert not f2.holds and f2.fitted["coef"] == 0.0
    w = f2.worst_state.u
    assert abs(w[0]) == pytest.approx(np.linalg.norm(w))


@pytest.mark.parametrize("name", ["scalar", "kirchhoff", "surrogate", "neumann"])
def test_fitted_constants_cover_samples(reports, name):
    for chk in reports[name].checks.values():
        if not chk.fitted_valid:
            continue
        coef = chk.fitted["coef"]
        c = chk.fitted.get("C", 0.0)
        kind = "upper" if chk.kind.endswith("upper") else "lower"
        margin, scale = C._slack(chk.lhs, chk.rhs, coef, c, kind)
        assert np.all(margin >= -(1e-9 * scale + 1e-12)), chk.name


def test_assumption_sampling_deterministic():
    s = build_scalar_ode(1, 3)
    a = C.verify_assumptions(s, 100, seed=4)
    b = C.verify_assumptions(s, 100, seed=4)
    assert np.array_equal(a["F2"].lhs, b["F2"].lhs)


def test_certify_scalar(scalar_run):
    s, tr = scalar_run
    rep = C.certify(s, tr)
    assert rep.verdicts == {"sandwich": True, "differential_inequality": True,
                            "decay_inequality": True}
    assert rep.epsilon == pytest.approx(rep.epsilon_star / 2)
    assert "decay_1_over_gamma_max" in rep.decay_fits
