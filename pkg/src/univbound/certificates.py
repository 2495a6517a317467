"""Energies, exponents and inequality certificates along trajectories.

Two modes are used throughout:

``"bound"``
    base energy ``Ehat = E0 + C1 + 1`` and the differential inequality
    ``Phi' <= -eps (delta2/8) (2/3)^(g+1) Phi^(g+1) + 3 C3/2 + 2``;
``"decay"``
    base energy ``E0`` and ``Phi' <= -eps (delta2/4) (2/3)^(g+1) Phi^(g+1)``.

In both modes ``Phi = base + eps * base^g * <u, u'>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats
from scipy.integrate import solve_ivp
from scipy.optimize import linprog

from .errors import CertificateError, RegimeError
from .integrator import Trajectory
from .models import AssumptionConstants, EvolutionSystem, State

MODES = ("bound", "decay")
VANISHING = 1e-300
REL_TOL = 1e-9
ABS_TOL = 1e-12


# -- exponents ------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponents:
    alpha: float
    beta: float
    gamma_min: float
    gamma_max: float

    @property
    def bound_rate(self) -> float:
        return 1.0 / self.gamma_min

    @property
    def decay_rate(self) -> float:
        return 1.0 / self.gamma_max

    @property
    def strong_decay_rate(self) -> float:
        return 2.0 / self.alpha


def exponents(alpha: float, beta: float) -> Exponents:
    """Exponents of the bound (minimum) and decay (maximum) estimates."""
    if not (math.isfinite(alpha) and math.isfinite(beta)):
        raise ValueError("exponents must be finite")
    if not 0 < alpha < beta:
        raise RegimeError(f"need 0 < alpha < beta, got alpha={alpha}, beta={beta}; "
                          "for alpha >= beta universal bounds fail already for scalar ODEs")
    first = alpha / 2.0
    second = (beta - alpha) / ((alpha + 1.0) * (beta + 2.0))
    return Exponents(alpha, beta, min(first, second), max(first, second))


# -- comparison principle----------------------------------------------------------------


def comparison_majorant(gamma: float, rho: float, M: float, t):
    """``(1/(gamma rho t))^(1/gamma) + (M/rho)^(1/(1+gamma))``, super-solution of
    ``Phi' = -rho Phi^(1+gamma) + M`` that is infinite at ``t = 0+``."""
    if gamma <= 0 or rho <= 0 or M < 0:
        raise ValueError(f"need gamma, rho > 0 and M >= 0 (got {gamma}, {rho}, {M})")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("the majorant is only defined for t > 0")
    val = (1.0 / (gamma * rho * t_arr)) ** (1.0 / gamma) + (M / rho) ** (1.0 / (1.0 + gamma))
    return float(val) if np.ndim(val) == 0 else val


def comparison_oracle(gamma: float, rho: float, M: float, phi0: float,
                      t_span: tuple[float, float] = (0.01, 100.0), n_eval: int = 400,
                      rtol: float = 1e-12, atol: float = 1e-14) -> float:
    """Integrate ``Phi' = -rho Phi^(1+gamma) + M`` from ``Phi(0) = phi0`` and return
    ``max (Phi - Psi)`` over ``n_eval`` log-spaced times in ``t_span``.

    A negative return value means the majorant dominates everywhere.
    """
    if phi0 < 0:
        raise ValueError("phi0 must be nonnegative")
    lo, hi = t_span
    if not 0 < lo < hi:
        raise ValueError(f"bad evaluation window {t_span}")
    t_eval = np.geomspace(lo, hi, n_eval)
    psi = comparison_majorant(gamma, rho, M, t_eval)
    if phi0 == 0 and M == 0:
        return float(np.max(-psi))

    def rhs(_, y):
        p = max(y[0], 0.0)
        return [-rho * p ** (1.0 + gamma) + M]

    def jac(_, y):
        p = max(y[0], 0.0)
        return [[-rho * (1.0 + gamma) * p ** gamma]]

    sol = solve_ivp(rhs, (0.0, hi), [float(phi0)], method="LSODA", jac=jac, t_eval=t_eval,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"comparison ODE failed: {sol.message}")
    return float(np.max(sol.y[0] - psi))


# -- energies -------------------------------------------------------------------------


def _constants(system: EvolutionSystem) -> AssumptionConstants:
    if system.declared_constants is None:
        raise CertificateError(f"{system.name} has no declared assumption constants")
    return system.declared_constants


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def energies(system: EvolutionSystem, state: State, epsilon: float, gamma: float,
             mode: str = "bound") -> tuple[float, float, float]:
    """Return ``(E0, Ehat, Phi)`` at one state."""
    _check_mode(mode)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    e0 = system.energy(state.u, state.v)
    if mode == "bound" or system.declared_constants is not None:
        c1 = _constants(system).c1
        ehat = e0 + c1 + 1.0
        if ehat < 1.0 - 1e-12 * max(1.0, abs(e0)):
            raise CertificateError(f"Ehat={ehat:.6g} < 1: the potential dips below -C1={-c1:.6g}, "
                                   "inconsistent with the declared coercivity constants")
    else:
        ehat = math.nan
    base = ehat if mode == "bound" else max(e0, 0.0)
    cross = float(np.dot(state.u, state.v))
    phi = base + epsilon * base ** gamma * cross if base > 0 else base
    return e0, ehat, phi


@dataclass(frozen=True, eq=False)
class CertificateSeries:
    """Per-sample energies and the analytic time derivative of ``Phi``."""

    t: np.ndarray
    E0: np.ndarray
    Ehat: np.ndarray
    base: np.ndarray
    cross: np.ndarray
    Phi: np.ndarray
    dPhi: np.ndarray
    epsilon: float
    gamma: float
    mode: str


def certificate_series(system: EvolutionSystem, trajectory: Trajectory, epsilon: float,
                       gamma: float, mode: str = "bound") -> CertificateSeries:
    """Evaluate ``E0``, ``Ehat``, ``Phi`` and ``Phi'`` at every sample.

    ``Phi'`` is the closed form obtained from the equation of motion::

        Phi' = -<g,u'> (1 + g eps B^(g-1) <u,u'>) + eps B^g (|u'|^2 - <grad F(u), u>)
               - eps B^g <g, u>

    with ``B`` the base energy; no numerical differencing is involved.
    """
    _check_mode(mode)
    t = trajectory.t
    n = len(trajectory)
    E0 = np.array([system.energy(u, v) for u, v in zip(trajectory.u, trajectory.v)])
    if system.declared_constants is not None:
        Ehat = E0 + system.declared_constants.c1 + 1.0
    elif mode == "bound":
        raise CertificateError(f"{system.name} has no declared constants; Ehat needs C1")
    else:
        Ehat = np.full(n, np.nan)
    base = Ehat if mode == "bound" else np.maximum(E0, 0.0)
    cross = np.einsum("ij,ij->i", trajectory.u, trajectory.v)
    dPhi = np.empty(n)
    Phi = np.empty(n)
    for i in range(n):
        u, v = trajectory.u[i], trajectory.v[i]
        g = system.damping(t[i], v)
        dis = float(np.dot(g, v))
        B = base[i]
        if B <= VANISHING:
            Phi[i] = B
            dPhi[i] = -dis
            continue
        Bg = B ** gamma
        Phi[i] = B + epsilon * Bg * cross[i]
        dPhi[i] = (-dis * (1.0 + gamma * epsilon * Bg / B * cross[i])
                   + epsilon * Bg * (float(np.dot(v, v))
                                     - float(np.dot(system.grad_potential(u), u)))
                   - epsilon * Bg * float(np.dot(g, u)))
    return CertificateSeries(t=t, E0=E0, Ehat=Ehat, base=base, cross=cross, Phi=Phi, dPhi=dPhi,
                             epsilon=epsilon, gamma=gamma, mode=mode)


def _sandwich_ok(base, cross, eps, gamma):
    pos = base > VANISHING
    b = base[pos]
    phi = b + eps * b ** gamma * cross[pos]
    return bool(np.all(phi >= 0.5 * b) and np.all(phi <= 1.5 * b))


def sandwich_margins(series: CertificateSeries) -> np.ndarray:
    """Distance of ``Phi / base`` from the nearer end of ``[1/2, 3/2]`` (>= 0 means inside)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(series.base > VANISHING, series.Phi / series.base, 1.0)
    return np.minimum(r - 0.5, 1.5 - r)


def calibrate_epsilon(system: EvolutionSystem, trajectory: Trajectory, gamma: float,
                      mode: str = "bound", eps_max: float = 1.0, rel: float = 0.01,
                      t_min: Optional[float] = None) -> float:
    """Largest ``eps <= eps_max`` (bisection to ``rel``) keeping ``base/2 <= Phi <= 3 base/2``
    at every sample (with ``t >= t_min`` when given)."""
    _check_mode(mode)
    if len(trajectory) == 0:
        raise ValueError("empty trajectory")
    mask = np.ones(len(trajectory), bool) if t_min is None else trajectory.t >= t_min
    E0 = np.array([system.energy(u, v) for u, v in zip(trajectory.u[mask], trajectory.v[mask])])
    if mode == "bound":
        base = E0 + _constants(system).c1 + 1.0
    else:
        base = np.maximum(E0, 0.0)
    cross = np.einsum("ij,ij->i", trajectory.u[mask], trajectory.v[mask])
    if _sandwich_ok(base, cross, eps_max, gamma):
        return float(eps_max)
    hi = eps_max
    lo = hi / 2.0
    for _ in range(2000):
        if _sandwich_ok(base, cross, lo, gamma):
            break
        hi, lo = lo, lo / 2.0
    else:
        raise CertificateError("no positive epsilon satisfies the energy sandwich")
    while (hi - lo) > rel * lo:
        mid = 0.5 * (lo + hi)
        if _sandwich_ok(base, cross, mid, gamma):
            lo = mid
        else:
            hi = mid
    return float(lo)


# -- differential inequality ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InequalityCheck:
    t: np.ndarray
    residuals: np.ndarray
    normalized: np.ndarray
    dominant: np.ndarray
    ok: bool
    worst_index: int
    series: CertificateSeries

    @property
    def max_normalized(self) -> float:
        return float(self.normalized.max()) if self.normalized.size else -math.inf


def _verdict(t, res, dominant, series):
    normalized = res / np.maximum(dominant, ABS_TOL)
    ok = bool(np.all(res <= REL_TOL * dominant + ABS_TOL))
    worst = int(np.argmax(normalized)) if normalized.size else -1
    return InequalityCheck(t=t, residuals=res, normalized=normalized, dominant=dominant, ok=ok,
                           worst_index=worst, series=series)


def differential_inequality_residual(system: EvolutionSystem, trajectory: Trajectory,
                                     epsilon: float, gamma: float, mode: str = "bound",
                                     t_min: Optional[float] = None) -> InequalityCheck:
    """Residual of the modified-energy differential inequality at every sample.

    A residual <= 0 means the inequality holds at that sample.
    """
    c = _constants(system)
    if c.delta2 <= 0:
        raise CertificateError("delta2 is not declared")
    series = certificate_series(system, trajectory, epsilon, gamma, mode)
    coef = epsilon * c.delta2 / (8.0 if mode == "bound" else 4.0) * (2.0 / 3.0) ** (gamma + 1.0)
    const = 1.5 * c.c3 + 2.0 if mode == "bound" else 0.0
    mask = np.ones(len(trajectory), bool) if t_min is None else trajectory.t >= t_min
    phi = np.maximum(series.Phi[mask], 0.0)
    dphi = series.dPhi[mask]
    sink = coef * phi ** (gamma + 1.0)
    res = dphi + sink - const
    if mode == "decay":
        res = np.where(series.base[mask] <= VANISHING, 0.0, res)
    dominant = np.maximum.reduce([np.abs(dphi), sink, np.full(dphi.shape, const)])
    return _verdict(trajectory.t[mask], res, dominant, series)


def e_form_residual(system: EvolutionSystem, series: CertificateSeries) -> np.ndarray:
    """Residual of the inequality written with the base energy instead of ``Phi``:
    ``Phi' + eps (delta2/k) B^(g+1) - const``."""
    c = _constants(system)
    coef = series.epsilon * c.delta2 / (8.0 if series.mode == "bound" else 4.0)
    const = 1.5 * c.c3 + 2.0 if series.mode == "bound" else 0.0
    return series.dPhi + coef * series.base ** (series.gamma + 1.0) - const


# -- bound and decay fits -------------------------------------------------------------


@dataclass(frozen=True)
class BoundFit:
    """Fitted constants for one trajectory (or a pooled set)."""

    mode: str
    rate: float
    coef: float  # Gamma in "ubp" mode, D in decay modes
    offset: float = 0.0  # Gamma_* in "ubp" mode

    def envelope(self, t):
        return self.coef * np.asarray(t, dtype=float) ** -self.rate + self.offset


@dataclass(frozen=True, eq=False)
class BoundReport:
    mode: str
    rate: float
    window: tuple
    fits: list
    pooled: BoundFit
    spread: float
    saturation: float
    ratio_max: float
    universal: bool
    amplitudes: Optional[list] = None
    notes: list = field(default_factory=list)


def _fit_ubp(t, y, rate):
    """Minimise Gamma + Gamma_* subject to Gamma t^-rate + Gamma_* >= y (all samples)."""
    if np.all(y <= 0):
        return 0.0, 0.0
    # rescale columns to keep the LP well conditioned
    s = np.max(t ** -rate)
    A = -np.column_stack([t ** -rate / s, np.ones_like(t)])
    ys = np.max(np.abs(y))
    res = linprog(c=[1.0 / s, 1.0], A_ub=A, b_ub=-y / ys, bounds=[(0, None), (0, None)],
                  method="highs")
    if not res.success:
        raise CertificateError(f"bound fit failed: {res.message}")
    g, gs = res.x
    g, gs = g / s * ys, gs * ys
    # close the remaining LP tolerance gap so the envelope covers every sample
    gap = np.max(y - (g * t ** -rate + gs))
    if gap > 0:
        gs += gap
    return float(g), float(gs)


def _fit_decay(t, y, rate):
    return float(np.max(y * t ** rate)) if y.size else 0.0


def _saturation(values, amplitudes, decades):
    if amplitudes is None or len(values) < 2:
        return math.nan
    amps = np.asarray(amplitudes, dtype=float)
    vals = np.asarray(values, dtype=float)
    top = amps.max()
    sel = amps >= top / 10.0 ** decades * (1 - 1e-12)
    ref = vals[sel][np.argmin(amps[sel])]
    if ref <= 0:
        return math.inf if np.max(vals[sel]) > 0 else 1.0
    return float(np.max(vals[sel]) / ref)


def verify_bound(trajectories: Union[Trajectory, Sequence[Trajectory]],
                 exps: Optional[Exponents] = None, mode: str = "ubp",
                 window: Optional[tuple[float, float]] = None, c1: float = 0.0,
                 rate: Optional[float] = None, amplitudes: Optional[Sequence[float]] = None,
                 ratio_max: float = 2.0, decades: int = 3) -> BoundReport:
    """Fit the smallest constants of the bound or decay envelope.

    ``mode`` is ``"ubp"`` (``E0 + C1 + 1 <= Gamma t^-r + Gamma_*``, r = 1/gamma_min),
    ``"decay"`` (``E0 <= D t^-r``, r = 1/gamma_max) or ``"strong_decay"``
    (r = 2/alpha).  Constants are minimax (smallest covering every sample).
    With several trajectories ``spread`` is max/min of the per-trajectory
    constant and ``saturation`` compares the top ``decades`` of
    ``amplitudes`` against the lowest amplitude in that range.
    """
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    if mode not in ("ubp", "decay", "strong_decay"):
        raise ValueError(f"unknown mode {mode!r}")
    if rate is None:
        if exps is None:
            raise ValueError("need exponents or an explicit rate")
        rate = {"ubp": exps.bound_rate, "decay": exps.decay_rate,
                "strong_decay": exps.strong_decay_rate}[mode]
    if window is None:
        t_end = max(tr.t.max() for tr in trajectories)
        t_first = min(tr.t[tr.t > 0].min() for tr in trajectories)
        window = (t_first, t_end) if mode == "ubp" else (1.0, t_end)
    lo, hi = window
    fits = []
    ts, ys = [], []
    for tr in trajectories:
        m = (tr.t >= lo) & (tr.t <= hi) & (tr.t > 0)
        if not np.any(m):
            raise ValueError(f"no samples in window {window}")
        t, e0 = tr.t[m], tr.energy[m]
        if mode == "ubp":
            y = e0 + c1 + 1.0
            g, gs = _fit_ubp(t, y, rate)
            fits.append(BoundFit(mode, rate, g, gs))
        else:
            y = np.where(e0 < VANISHING, 0.0, e0)
            fits.append(BoundFit(mode, rate, _fit_decay(t, y, rate)))
        ts.append(t)
        ys.append(y)
    t_all, y_all = np.concatenate(ts), np.concatenate(ys)
    if mode == "ubp":
        pooled = BoundFit(mode, rate, *_fit_ubp(t_all, y_all, rate))
        stat = [f.coef * 1.0 + f.offset for f in fits]  # envelope value at t = 1
    else:
        pooled = BoundFit(mode, rate, _fit_decay(t_all, y_all, rate))
        stat = [f.coef for f in fits]
    stat = np.asarray(stat)
    pos = stat[stat > 0]
    spread = float(stat.max() / pos.min()) if pos.size and stat.max() > 0 else 1.0
    sat = _saturation(stat, amplitudes, decades)
    measure = sat if amplitudes is not None else spread
    return BoundReport(mode=mode, rate=float(rate), window=(lo, hi), fits=fits, pooled=pooled,
                       spread=spread, saturation=sat, ratio_max=ratio_max,
                       universal=bool(math.isfinite(measure) and measure <= ratio_max),
                       amplitudes=None if amplitudes is None else list(amplitudes))


@dataclass(frozen=True)
class DecayFit:
    slope: float
    stderr: float
    intercept: float
    n: int


def fit_decay_exponent(trajectory: Union[Trajectory, tuple], window: tuple[float, float],
                       min_samples: int = 10) -> DecayFit:
    """Least-squares slope of ``log E0`` against ``log t`` on ``window``.

    ``trajectory`` may also be a ``(t, E0)`` pair of arrays.
    """
    if isinstance(trajectory, Trajectory):
        t, e = trajectory.t, trajectory.energy
    else:
        t, e = (np.asarray(a, dtype=float) for a in trajectory)
    lo, hi = window
    m = (t >= lo) & (t <= hi)
    if m.sum() < min_samples:
        raise ValueError(f"only {int(m.sum())} samples in window {window}, need {min_samples}")
    if np.any(t[m] <= 0):
        raise ValueError("window must lie in t > 0")
    if np.any(e[m] <= VANISHING):
        raise CertificateError("energy vanishes inside the fit window; decay is trivial there")
    r = stats.linregress(np.log(t[m]), np.log(e[m]))
    return DecayFit(slope=float(r.slope), stderr=float(r.stderr), intercept=float(r.intercept),
                    n=int(m.sum()))


# -- assumption checks ----------------------------------------------------------------

# (name, kind, declared constant names); "lower": L >= d R - C, "upper": L <= d R + C,
# the "homogeneous" kinds carry no additive constant.
_ASSUMPTIONS = (
    ("F2", "lower", ("delta1", "c1")),
    ("F3", "lower", ("delta2", "c2")),
    ("F4", "homogeneous", ("delta4", None)),
    ("G2", "lower", ("delta3", "c3")),
    ("G3", "upper", ("d4", "c4")),
    ("norms", "homogeneous_upper", ("c5", None)),
)


@dataclass(frozen=True, eq=False)
class AssumptionCheck:
    """Outcome for one structural inequality.

    ``holds`` is evaluated at the declared constants when they exist and
    otherwise says whether a meaningful constant set could be fitted.
    ``fitted`` always satisfies the inequality on every sample.
    """

    name: str
    holds: bool
    declared: Optional[dict]
    fitted: dict
    fitted_valid: bool
    holds_with_zero_constant: Optional[bool]
    worst_index: int
    worst_margin: float
    worst_state: Optional[State]
    lhs: np.ndarray = field(repr=False, default=None)
    rhs: np.ndarray = field(repr=False, default=None)
    kind: str = "lower"


@dataclass(frozen=True, eq=False)
class AssumptionReport:
    system_name: str
    sample_count: int
    amplitude_range: tuple
    seed: int
    checks: dict

    @property
    def all_hold(self) -> bool:
        return all(c.holds for c in self.checks.values())

    def __getitem__(self, name) -> AssumptionCheck:
        return self.checks[name]


def _directions(rng, n, dim):
    """Unit vectors: every fourth one along a basis vector (cycling through all of
    them), the rest random with a decaying modal spectrum."""
    out = np.empty((n, dim))
    k = np.arange(1, dim + 1, dtype=float)
    for i in range(n):
        if i % 4 == 0:
            w = np.zeros(dim)
            w[(i // 4) % dim] = 1.0
        else:
            w = rng.standard_normal(dim) / k
        nrm = np.linalg.norm(w)
        out[i] = w / nrm if nrm > 0 else np.eye(dim)[0]
    return out


def _slack(L, R, d, C, kind):
    """Signed margin (>= 0 means satisfied) and the scale used for tolerances."""
    if kind in ("upper", "homogeneous_upper"):
        margin = d * R + C - L
    else:
        margin = L - d * R + C
    scale = np.maximum.reduce([np.abs(L), np.abs(d * R), np.full(L.shape, abs(C))])
    return margin, scale


def _fit(L, R, kind, top):
    pos = R > 0
    if kind == "homogeneous_upper":
        if np.any(L[~pos] > 0):
            return {"coef": math.inf}, False
        return {"coef": float(np.max(L[pos] / R[pos])) if np.any(pos) else 0.0}, True
    if kind == "upper":
        sel = pos & top
        d = float(np.max(L[sel] / R[sel])) if np.any(sel) else 0.0
        d = max(d, 0.0)
        C = float(max(0.0, np.max(L - d * R)))
        d0 = float(np.max(L[pos] / R[pos])) if np.any(pos) else 0.0
        zero_ok = bool(np.all(L[~pos] <= 0))
        return {"coef": d, "C": C, "coef_at_C0": d0 if zero_ok else math.inf}, math.isfinite(d)
    sel = pos & top
    d = float(np.min(L[sel] / R[sel])) if np.any(sel) else 0.0
    d = max(d, 0.0)
    C = float(max(0.0, np.max(d * R - L)))
    ratios = L[pos] / R[pos]
    d0 = max(float(np.min(ratios)), 0.0) if ratios.size else 0.0
    if np.any(L[~pos] < 0):
        d0 = 0.0
    if kind == "homogeneous":
        return {"coef": d0}, d0 > 0
    return {"coef": d, "C": C, "coef_at_C0": d0}, d > 0


def verify_assumptions(system: EvolutionSystem, sample_count: int = 1000,
                       amplitude_range: tuple[float, float] = (1e-3, 1e3), seed: int = 0,
                       t_range: tuple[float, float] = (0.0, 10.0)) -> AssumptionReport:
    """Sample random states and test the structural inequalities.

    Position and velocity amplitudes (in the ``H`` norm) are drawn
    log-uniformly from ``amplitude_range``; every fourth direction is a basis
    vector and is also evaluated at the top amplitude.  Fitted coefficients
    use the samples in the top amplitude decade, additive constants all
    samples.  Violations are reported, not raised.
    """
    if sample_count < 10:
        raise ValueError("sample_count must be at least 10")
    lo, hi = amplitude_range
    if not 0 < lo < hi:
        raise ValueError(f"bad amplitude range {amplitude_range}")
    rng = np.random.default_rng(seed)
    n, dim, nm = sample_count, system.dim, system.norms
    au = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    av = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    Ud = _directions(rng, n, dim)
    Vd = _directions(rng, n, dim)
    T = rng.uniform(*t_range, n)
    # basis-vector directions are probed again at the top amplitude, where the
    # coefficients of the inequalities are decided
    probe = np.arange(0, n, 4)
    au = np.concatenate([au, np.full(probe.size, hi)])
    av = np.concatenate([av, np.full(probe.size, hi)])
    U = np.vstack([Ud, Ud[probe]]) * au[:, None]
    V = np.vstack([Vd, Vd[probe]]) * av[:, None]
    T = np.concatenate([T, T[probe]])
    a, b = system.alpha, system.beta

    F = np.array([system.potential(u) for u in U])
    gradu = np.array([float(np.dot(system.grad_potential(u), u)) for u in U])
    G = [system.damping(t, v) for t, v in zip(T, V)]
    Hu = np.array([nm.norm_H(u) for u in U])
    Xu = np.array([nm.norm_X(u) for u in U])
    Yu = np.array([nm.norm_Y(u) for u in U])
    Xv = np.array([nm.norm_X(v) for v in V])
    gv = np.array([float(np.dot(g, v)) for g, v in zip(G, V)])
    gdual = np.array([nm.norm_X_dual(g) for g in G])

    sides = {
        "F2": (F, Yu ** (b + 2.0), au),
        "F3": (gradu, F, au),
        "F4": (F, Hu ** 2, au),
        "G2": (gv, Xv ** (a + 2.0), av),
        "G3": (gdual, Xv ** (a + 1.0), av),
        "norms": (Xu ** (a + 2.0), Hu ** 2 + Yu ** (b + 2.0), au),
    }
    consts = system.declared_constants
    checks = {}
    for name, kind, (dname, cname) in _ASSUMPTIONS:
        L, R, amp = sides[name]
        top = amp >= hi / 10.0
        fitted, valid = _fit(L, R, kind, top)
        declared = None
        if consts is not None:
            d_decl = getattr(consts, dname)
            if not (name == "F4" and d_decl == 0) and not (name == "norms" and d_decl == 0):
                declared = {dname: d_decl}
                if cname:
                    declared[cname] = getattr(consts, cname)
        if declared is not None:
            d_decl = declared[dname]
            C_decl = declared.get(cname, 0.0) if cname else 0.0
            margin, scale = _slack(L, R, d_decl, C_decl, kind)
            ok = margin >= -(REL_TOL * scale + ABS_TOL)
            holds = bool(np.all(ok))
            m0, s0 = _slack(L, R, d_decl, 0.0, kind)
            zero_ok = bool(np.all(m0 >= -(REL_TOL * s0 + ABS_TOL)))
        else:
            C_fit = fitted.get("C", 0.0)
            margin, scale = _slack(L, R, fitted["coef"], C_fit, kind)
            holds = valid
            zero_ok = None
        norm_margin = margin / np.maximum(scale, ABS_TOL)
        w = int(np.argmin(norm_margin))
        checks[name] = AssumptionCheck(
            name=name, holds=holds, declared=declared, fitted=fitted, fitted_valid=valid,
            holds_with_zero_constant=zero_ok, worst_index=w,
            worst_margin=float(norm_margin[w]), worst_state=State(T[w], U[w], V[w]),
            lhs=L, rhs=R, kind=kind)
    return AssumptionReport(system_name=system.name, sample_count=n,
                            amplitude_range=(lo, hi), seed=seed, checks=checks)


# -- single-trajectory report ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CertificateReport:
    """Certificates for one trajectory.

    The bound-mode series is evaluated at ``epsilon`` (half the calibrated
    value); decay-mode entries are ``None`` when the run never reaches
    ``t = 1`` or the system has no decay constants.
    """

    exponents: Exponents
    series: CertificateSeries
    epsilon_star: float
    epsilon: float
    margins: np.ndarray
    inequality: InequalityCheck
    decay_epsilon: Optional[float]
    decay_inequality: Optional[InequalityCheck]
    ubp_fit: BoundFit
    decay_fits: dict
    verdicts: dict


def certify(system: EvolutionSystem, trajectory: Trajectory, t_min: float = 0.01,
            eps_max: float = 1.0) -> CertificateReport:
    """Calibrate epsilon, check the sandwich and the differential inequality at
    ``epsilon*/2`` and fit the bound/decay envelopes of one trajectory."""
    c = _constants(system)
    exps = exponents(system.alpha, system.beta)
    eps_star = calibrate_epsilon(system, trajectory, exps.gamma_min, "bound", eps_max)
    eps = 0.5 * eps_star
    check = differential_inequality_residual(system, trajectory, eps, exps.gamma_min, "bound",
                                             t_min=t_min)
    margins = sandwich_margins(check.series)
    verdicts = {"sandwich": bool(np.all(margins >= 0)), "differential_inequality": check.ok}
    t = trajectory.t
    ubp = verify_bound(trajectory, exps, "ubp", window=(max(t_min, t[t > 0].min()), t.max()),
                       c1=c.c1).pooled
    decay_eps = decay_check = None
    fits = {}
    if t.max() > 1.0 and c.c1 == 0 and c.c2 == 0 and c.c3 == 0 and c.c4 == 0:
        late = t >= 1.0
        try:
            decay_eps = 0.5 * calibrate_epsilon(system, trajectory, exps.gamma_max, "decay",
                                                eps_max, t_min=1.0)
            decay_check = differential_inequality_residual(system, trajectory, decay_eps,
                                                           exps.gamma_max, "decay", t_min=1.0)
            verdicts["decay_inequality"] = decay_check.ok
        except CertificateError:
            verdicts["decay_inequality"] = False
        if np.count_nonzero(late) > 0:
            fits["decay_1_over_gamma_max"] = verify_bound(trajectory, exps, "decay",
                                                          window=(1.0, t.max())).pooled
            if c.delta4 > 0 and c.c5 > 0:
                fits["decay_2_over_alpha"] = verify_bound(trajectory, exps, "strong_decay",
                                                          window=(1.0, t.max())).pooled
    return CertificateReport(exponents=exps, series=check.series, epsilon_star=eps_star,
                             epsilon=eps, margins=margins, inequality=check,
                             decay_epsilon=decay_eps, decay_inequality=decay_check,
                             ubp_fit=ubp, decay_fits=fits, verdicts=verdicts)
