"""Finite-dimensional second-order systems ``u'' + grad F(u) + g(t, u') = 0``.

Builders return an immutable :class:`EvolutionSystem`.  PDE models live on
the interval (0, pi) and are truncated to ``N`` modes of an orthonormal
eigenbasis, so the H scalar product is the Euclidean product of modal
coefficients.  Power nonlinearities are evaluated on a uniform grid and
projected back with trapezoidal weights; the discrete potential is defined
first and its gradient is the exact gradient of that discrete potential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels as kern
from .errors import ConfigError, UnsupportedModelError

Vector = np.ndarray


@dataclass(frozen=True)
class AssumptionConstants:
    """Constants of the structural inequalities.

    A ``delta`` equal to 0 means the corresponding inequality is not
    declared to hold (for example ``delta4 = 0`` when the potential is not
    bounded below by a multiple of ``|u|_H^2``).
    """

    delta1: float = 0.0
    delta2: float = 0.0
    delta3: float = 0.0
    delta4: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0
    c5: float = 0.0
    d4: float = 1.0

    def __post_init__(self):
        for name in ("delta1", "delta2", "delta3", "delta4", "c1", "c2", "c3", "c4", "c5"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise ValueError(f"{name} must be a finite nonnegative number, got {val}")
        if not (math.isfinite(self.d4) and self.d4 > 0):
            raise ValueError(f"d4 must be positive, got {self.d4}")

    @property
    def standard(self) -> bool:
        """True when the inequalities hold with every additive constant zero."""
        return self.c1 == self.c2 == self.c3 == self.c4 == 0.0


@dataclass(frozen=True)
class NormSet:
    """Norm evaluators of the chain V < Y < X < H on the truncated space."""

    norm_H: Callable[[Vector], float]
    norm_X: Callable[[Vector], float]
    norm_Y: Callable[[Vector], float]
    norm_V: Callable[[Vector], float]
    norm_X_dual: Callable[[Vector], float]
    pairing: Callable[[Vector, Vector], float] = field(default=lambda a, b: float(np.dot(a, b)))


@dataclass(frozen=True)
class State:
    t: float
    u: Vector
    v: Vector

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if u.shape != v.shape or u.ndim != 1:
            raise ValueError(f"position and velocity shapes differ: {u.shape} vs {v.shape}")
        if not (math.isfinite(self.t) and np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("state has non-finite entries")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True)
class PdeParams:
    """Parameters of the 1D wave / plate / Kirchhoff truncations.

    ``M`` is the number of grid subintervals of (0, pi); the grid has
    ``M + 1`` nodes including both endpoints.  The forcing is
    ``h(t, x) = h0(x) * cos(forcing_freq * t)`` with ``h0`` given either as
    grid values (``forcing``) or left as ``None`` for no forcing.
    """

    N: int = 16
    M: int = 48
    boundary: str = "dirichlet"
    b: float = 1.0
    c: float = 1.0
    lam: float = 0.0
    mu: float = 0.0
    alpha: float = 1.0
    beta: float = 2.0
    forcing: Optional[tuple] = None
    forcing_freq: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError("N", f"must be a positive integer, got {self.N}")
        if int(self.M) != self.M or self.M < 2 * self.N:
            raise ConfigError("M", f"must be an integer >= 2N = {2 * self.N}, got {self.M}")
        if self.boundary not in ("dirichlet", "neumann", "hinged", "clamped"):
            raise ConfigError("boundary", f"unknown boundary condition {self.boundary!r}")
        for name in ("b", "c", "alpha", "beta"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise ConfigError(name, f"must be finite and nonnegative, got {val}")
        if self.alpha == 0:
            raise ConfigError("alpha", "must be positive")
        for name in ("lam", "mu", "forcing_freq"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(name, "must be finite")
        if self.forcing is not None and len(self.forcing) != self.M + 1:
            raise ConfigError("forcing", f"needs M + 1 = {self.M + 1} grid values")

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, np.pi, self.M + 1)


@dataclass(frozen=True, eq=False)
class EvolutionSystem:
    name: str
    dim: int
    alpha: float
    beta: float
    potential: Callable[[Vector], float]
    grad_potential: Callable[[Vector], Vector]
    damping: Callable[[float, Vector], Vector]
    norms: NormSet
    declared_constants: Optional[AssumptionConstants]
    kernel: tuple = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    lambda1: float = 0.0
    basis: Optional[np.ndarray] = field(default=None, repr=False)
    params: dict = field(default_factory=dict)

    def energy(self, u: Vector, v: Vector) -> float:
        """Classical energy ``|v|_H^2 / 2 + F(u)``."""
        return kern.energy(self.kernel, _vec(u), _vec(v))

    def acceleration(self, t: float, u: Vector, v: Vector) -> Vector:
        return kern.accel(self.kernel, float(t), _vec(u), _vec(v))

    def dissipation(self, t: float, v: Vector) -> float:
        """Dissipation rate ``<g(t, v), v>``."""
        v = _vec(v)
        return float(np.dot(self.damping(t, v), v))

    def to_function(self, a: Vector) -> np.ndarray:
        """Grid values of the function with modal coefficients ``a``."""
        if self.basis is None:
            raise UnsupportedModelError(f"{self.name} has no spatial grid")
        return self.basis @ _vec(a)


def _vec(a) -> np.ndarray:
    return np.ascontiguousarray(np.atleast_1d(np.asarray(a, dtype=float)))


def _kernel_tuple(kind, alpha, beta, b, c, lam, mu, freq, degenerate, eig, B, q, hmod):
    p = np.array([alpha, beta, b, c, lam, mu, freq, 1.0 if degenerate else 0.0], dtype=float)
    return (int(kind), p, np.ascontiguousarray(eig, dtype=float),
            np.ascontiguousarray(B, dtype=float), np.ascontiguousarray(q, dtype=float),
            np.ascontiguousarray(hmod, dtype=float))


def _callables(K):
    def potential(u):
        return float(kern.potential(K, _vec(u)))

    def grad_potential(u):
        u = _vec(u)
        out = np.empty_like(u)
        kern.grad_potential(K, u, out)
        return out

    def damping(t, v):
        v = _vec(v)
        out = np.empty_like(v)
        kern.damping(K, float(t), v, out)
        return out

    return potential, grad_potential, damping


def _check_exponent(name, value, allow_zero=False):
    if not math.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        kind = "nonnegative" if allow_zero else "positive"
        raise ConfigError(name, f"must be a finite {kind} number, got {value}")


def _abs_norms():
    absn = lambda a: float(np.abs(_vec(a))[0])  # noqa: E731
    return NormSet(absn, absn, absn, absn, absn)


def build_scalar_ode(alpha: float, beta: float) -> EvolutionSystem:
    """``u'' + |u'|^alpha u' + |u|^beta u = 0`` as a one-dimensional system."""
    _check_exponent("alpha", alpha)
    _check_exponent("beta", beta, allow_zero=True)
    K = _kernel_tuple(kern.COLLOCATION, alpha, beta, 1.0, 1.0, 0.0, 0.0, 0.0, False,
                      np.zeros(1), np.ones((1, 1)), np.ones(1), np.zeros(1))
    pot, grad, damp = _callables(K)
    consts = AssumptionConstants(delta1=1.0 / (beta + 2.0), delta2=beta + 2.0, delta3=1.0,
                                 delta4=0.0, c5=1.0, d4=1.0)
    return EvolutionSystem(
        name="scalar_ode", dim=1, alpha=float(alpha), beta=float(beta), potential=pot,
        grad_potential=grad, damping=damp, norms=_abs_norms(), declared_constants=consts,
        kernel=K, eigenvalues=np.zeros(1), params={"alpha": alpha, "beta": beta})


def build_oscillator(omega: float, delta: float, rho: float) -> EvolutionSystem:
    """Linear oscillator with superlinear damping ``delta |u'|^rho u'``.

    The restoring force is only linear, so the system sits outside the
    superlinear framework; ``declared_constants`` is ``None``.
    """
    if not math.isfinite(omega):
        raise ConfigError("omega", "must be finite")
    _check_exponent("delta", delta)
    _check_exponent("rho", rho)
    K = _kernel_tuple(kern.COLLOCATION, rho, 0.0, 0.0, delta, 0.0, 0.0, 0.0, False,
                      np.array([omega * omega]), np.ones((1, 1)), np.ones(1), np.zeros(1))
    pot, grad, damp = _callables(K)
    return EvolutionSystem(
        name="oscillator", dim=1, alpha=float(rho), beta=0.0, potential=pot,
        grad_potential=grad, damping=damp, norms=_abs_norms(), declared_constants=None,
        kernel=K, eigenvalues=np.array([omega * omega]),
        params={"omega": omega, "delta": delta, "rho": rho})


# -- 1D eigenbases on (0, pi) ---------------------------------------------------------


def _trapezoid_weights(M):
    q = np.full(M + 1, np.pi / M)
    q[0] = q[-1] = 0.5 * np.pi / M
    return q


def _sine_basis(N, x):
    k = np.arange(1, N + 1)
    return math.sqrt(2.0 / math.pi) * np.sin(np.outer(x, k)), k.astype(float)


def _cosine_basis(N, x):
    k = np.arange(N)
    B = math.sqrt(2.0 / math.pi) * np.cos(np.outer(x, k))
    B[:, 0] = 1.0 / math.sqrt(math.pi)
    return B, k.astype(float)


def _lp_norm(values, q, p):
    return float(np.dot(q, np.abs(values) ** p) ** (1.0 / p))


def _collocation_norms(B, q, alpha, beta, v_weights):
    pa, pb = alpha + 2.0, beta + 2.0
    sigma = pa / (pa - 1.0)

    def norm_H(a):
        return float(np.linalg.norm(_vec(a)))

    def norm_X(a):
        return _lp_norm(B @ _vec(a), q, pa)

    def norm_Y(a):
        return _lp_norm(B @ _vec(a), q, pb)

    def norm_V(a):
        a = _vec(a)
        return float(np.sqrt(np.dot(v_weights, a * a)))

    def norm_X_dual(g):
        return _discrete_dual_norm(_vec(g), B, q, pa, sigma)

    return NormSet(norm_H, norm_X, norm_Y, norm_V, norm_X_dual)


def _discrete_dual_norm(g, B, q, p, sigma):
    """sup <g, w> / |w|_X over the truncated space (convex, solved numerically)."""
    from scipy.optimize import minimize

    if not np.any(g):
        return 0.0
    # the grid function B g is a representer of g; its L^sigma norm is an upper bound
    upper = _lp_norm(B @ g, q, sigma)
    x = B @ g
    w0 = B.T @ (q * np.sign(x) * np.abs(x) ** (sigma - 1.0))
    if not np.any(w0):
        w0 = g.copy()

    def objective(w):
        y = B @ w
        nrm = np.dot(q, np.abs(y) ** p) ** (1.0 / p)
        val = np.dot(g, w)
        dn = (B.T @ (q * np.sign(y) * np.abs(y) ** (p - 1.0))) * nrm ** (1.0 - p)
        return -val / nrm, -(g / nrm - val * dn / nrm ** 2)

    res = minimize(objective, w0 / max(np.linalg.norm(w0), 1e-300), jac=True, method="BFGS",
                   options={"gtol": 1e-12, "maxiter": 500})
    return float(min(-res.fun, upper)) if np.isfinite(res.fun) else upper


def _forcing_modal(params, B, q):
    if params.forcing is None:
        return np.zeros(B.shape[1])
    return B.T @ (q * np.asarray(params.forcing, dtype=float))


def _hoelder(alpha):
    # |w|_{L^sigma(0,pi)} <= pi^(1/sigma - 1/(alpha+2)) |w|_{L^(alpha+2)}
    pa = alpha + 2.0
    sigma = pa / (pa - 1.0)
    return math.pi ** (1.0 / sigma - 1.0 / pa), sigma


def _collocation_constants(params, lambda1):
    """Constants for the wave/plate truncations, following the 1D verifications."""
    a, be, b, c, lam, mu = params.alpha, params.beta, params.b, params.c, params.lam, params.mu
    if b <= 0 or c <= 0:
        return None
    h0 = np.zeros(params.M + 1) if params.forcing is None else np.abs(np.asarray(params.forcing))
    h_l2 = math.sqrt(float(np.dot(_trapezoid_weights(params.M), h0 ** 2)))
    # (F2): absorb (lam - lambda1)/2 |u|^2 into half of the L^(beta+2) term when needed
    if lam <= lambda1:
        delta1, c1 = b / (be + 2.0), 0.0
    else:
        k = 0.5 * (lam - lambda1)
        delta1 = b / (2.0 * (be + 2.0))
        # pointwise: min_y delta1 y^(beta+2) - k y^2, times |Omega| = pi
        y = (2.0 * k / (delta1 * (be + 2.0))) ** (1.0 / be)
        c1 = -math.pi * (delta1 * y ** (be + 2.0) - k * y * y)
    delta2, c2 = 2.0, 0.0
    kx, sigma = _hoelder(a)
    # |v|_H <= pi^(alpha/(2(alpha+2))) |v|_X
    kh = math.pi ** (a / (2.0 * (a + 2.0)))
    if mu <= 0 and h_l2 == 0:
        delta3, c3 = c, 0.0
    else:
        delta3 = 0.5 * c
        mup = max(mu, 0.0)
        from scipy.optimize import minimize_scalar

        f = lambda r: delta3 * r ** (a + 2) - mup * kh ** 2 * r ** 2 - h_l2 * kh * r  # noqa: E731
        rmax = max(1.0, (2 * (mup * kh ** 2 + h_l2 * kh) / delta3) ** (1.0 / a) * 4)
        res = minimize_scalar(f, bounds=(0.0, rmax), method="bounded",
                              options={"xatol": 1e-12})
        c3 = max(0.0, -float(res.fun)) * (1 + 1e-9) + 1e-12
    h_sigma = math.pi ** (1.0 / sigma - 0.5) * h_l2
    d4 = c + abs(mu) * kx
    c4 = abs(mu) * kx + h_sigma
    delta4 = 0.5 * (lambda1 - lam) if lam < lambda1 else 0.0
    return AssumptionConstants(delta1=delta1, delta2=delta2, delta3=delta3, delta4=delta4,
                               c1=c1, c2=c2, c3=c3, c4=c4, c5=1.0 if a < be else 0.0, d4=d4)


def _build_collocation(params: PdeParams, name: str, basis_fn, power: int) -> EvolutionSystem:
    x = params.grid()
    B, k = basis_fn(params.N, x)
    q = _trapezoid_weights(params.M)
    eig = k ** power
    hmod = _forcing_modal(params, B, q)
    K = _kernel_tuple(kern.COLLOCATION, params.alpha, params.beta, params.b, params.c,
                      params.lam, params.mu, params.forcing_freq, False, eig, B, q, hmod)
    pot, grad, damp = _callables(K)
    neumann = params.boundary == "neumann"
    lambda1 = 0.0 if neumann else 1.0
    v_weights = eig + 1.0 if neumann else eig
    norms = _collocation_norms(B, q, params.alpha, params.beta, v_weights)
    consts = _collocation_constants(params, lambda1)
    return EvolutionSystem(
        name=name, dim=params.N, alpha=float(params.alpha), beta=float(params.beta),
        potential=pot, grad_potential=grad, damping=damp, norms=norms,
        declared_constants=consts, kernel=K, eigenvalues=eig, lambda1=lambda1, basis=B,
        params=_params_dict(params))


def _params_dict(params):
    d = dict(params.__dict__)
    if d.get("forcing") is not None:
        d["forcing"] = list(d["forcing"])
    return d


def build_galerkin_wave(params: PdeParams, require_f4: bool = False) -> EvolutionSystem:
    """Semilinear wave equation on (0, pi), Dirichlet (sine) or Neumann (cosine) basis."""
    if params.boundary == "dirichlet":
        basis_fn = _sine_basis
    elif params.boundary == "neumann":
        if require_f4 and not params.lam < 0:
            raise ConfigError("lam", "Neumann wave satisfies F >= delta4 |u|_H^2 only for lam < 0")
        basis_fn = _cosine_basis
    else:
        raise ConfigError("boundary",
                          f"wave equation needs dirichlet or neumann, got {params.boundary!r}")
    return _build_collocation(params, f"wave_{params.boundary}", basis_fn, 2)


def build_galerkin_plate(params: PdeParams) -> EvolutionSystem:
    """Semilinear plate equation with hinged ends (bi-Laplacian on the sine basis)."""
    if params.boundary == "clamped":
        raise UnsupportedModelError("clamped plate: the bi-Laplacian is not diagonal in a "
                                    "sine or cosine basis; only hinged ends are supported")
    if params.boundary not in ("hinged", "dirichlet"):
        raise ConfigError("boundary", f"plate equation needs hinged ends, got {params.boundary!r}")
    return _build_collocation(params, "plate_hinged", _sine_basis, 4)


_KIRCHHOFF_NEUMANN = (
    "Kirchhoff equation with Neumann conditions is refused: every constant function is a "
    "stationary solution (lam = 0, h = 0) and no norm Y makes F >= delta1 |u|_Y^(beta+2) - C1 "
    "hold, because the gradient term cannot control constants")


def _kirchhoff_system(params: PdeParams, degenerate: bool, neumann: bool) -> EvolutionSystem:
    N = params.N
    if neumann:
        k = np.arange(N, dtype=float)
        x = params.grid()
        B, _ = _cosine_basis(N, x)
    else:
        k = np.arange(1, N + 1, dtype=float)
        x = params.grid()
        B, _ = _sine_basis(N, x)
    eig = k ** 2
    q = _trapezoid_weights(params.M)
    hmod = _forcing_modal(params, B, q)
    K = _kernel_tuple(kern.KIRCHHOFF, params.alpha, params.beta, params.b, params.c,
                      params.lam, params.mu, params.forcing_freq, degenerate, eig,
                      np.zeros((0, N)), np.zeros(0), hmod)
    pot, grad, damp = _callables(K)
    v_weights = eig + 1.0 if neumann else eig

    def norm_l2(a):
        return float(np.linalg.norm(_vec(a)))

    def norm_weighted(a):
        a = _vec(a)
        return float(np.sqrt(np.dot(v_weights, a * a)))

    norms = NormSet(norm_l2, norm_l2, norm_weighted, norm_weighted, norm_l2)
    consts = None
    a, be, b, c, lam = params.alpha, params.beta, params.b, params.c, params.lam
    clean = params.mu == 0 and params.forcing is None
    if not neumann and b > 0 and c > 0 and clean and lam <= 1.0:
        if degenerate:
            if lam == 0:
                consts = AssumptionConstants(delta1=b / (be + 2.0), delta2=be + 2.0, delta3=c,
                                             c5=1.0 if a < be else 0.0, d4=c)
        else:
            consts = AssumptionConstants(delta1=b / (be + 2.0), delta2=2.0, delta3=c,
                                         delta4=0.5 * (1.0 - lam) if lam < 1 else 0.0,
                                         c5=1.0 if a < be else 0.0, d4=c)
    name = "kirchhoff_neumann_surrogate" if neumann else (
        "kirchhoff_degenerate" if degenerate else "kirchhoff")
    return EvolutionSystem(
        name=name, dim=N, alpha=float(a), beta=float(be), potential=pot,
        grad_potential=grad, damping=damp, norms=norms, declared_constants=consts, kernel=K,
        eigenvalues=eig, lambda1=0.0 if neumann else 1.0, basis=B,
        params={**_params_dict(params), "degenerate": bool(degenerate)})


def build_kirchhoff(params: PdeParams, degenerate: bool = False) -> EvolutionSystem:
    """Kirchhoff equation with averaged damping, reduced exactly to ``N`` Dirichlet modes.

    ``degenerate=True`` drops the linear ``-u_xx`` term.
    """
    if params.boundary == "neumann":
        raise UnsupportedModelError(_KIRCHHOFF_NEUMANN)
    if params.boundary != "dirichlet":
        raise ConfigError("boundary",
                          f"Kirchhoff equation needs dirichlet, got {params.boundary!r}")
    return _kirchhoff_system(params, degenerate, neumann=False)


def kirchhoff_neumann_surrogate(params: PdeParams) -> EvolutionSystem:
    """Neumann Kirchhoff potential on the cosine basis (constant mode included).

    Only for diagnosing the failure of the coercivity assumption; never
    integrate it for certificates.
    """
    return _kirchhoff_system(params, degenerate=False, neumann=True)


def build_model(model: str, **kw) -> EvolutionSystem:
    """Dispatch by model name (used by the harness)."""
    if model == "scalar":
        return build_scalar_ode(kw["alpha"], kw["beta"])
    if model == "oscillator":
        return build_oscillator(kw.get("omega", 1.0), kw.get("delta", 1.0), kw.get("rho", 1.0))
    params = kw["pde"]
    if model == "wave":
        return build_galerkin_wave(params)
    if model == "plate":
        return build_galerkin_plate(params)
    if model == "kirchhoff":
        return build_kirchhoff(params, kw.get("degenerate", False))
    raise ConfigError("model", f"unknown model {model!r}")
