"""Adaptive time stepping certified against the energy identity.

Each step is a Dormand-Prince 5(4) step.  The dissipated energy
``int <g(t, v), v> dt`` is integrated with the same stage weights, and a
step is accepted only when both the embedded error estimate and the
energy-balance residual ``|dE + dissipated|`` are within tolerance.
Residuals are reported relative to ``max(1, |E|)`` at the start of the
step or interval, so that runs started at huge amplitudes are judged on the
same footing as unit-amplitude runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels as kern
from .errors import DivergenceError, IntegrationError, StiffnessError
from .models import EvolutionSystem, State


@dataclass(frozen=True)
class Tolerances:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    energy_tol: float = 1e-9
    dt_min: float = 1e-10
    dt_max: float = 1.0

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "energy_tol", "dt_min", "dt_max"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val}")
        if self.dt_min > self.dt_max:
            raise ValueError(f"dt_min={self.dt_min} exceeds dt_max={self.dt_max}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples of a numerical solution.

    ``energy_residuals[i]`` is the energy-balance residual on the interval
    ``[t[i], t[i+1]]``, relative to ``max(1, |E0(t[i])|)`` and divided by the
    interval length.  ``dissipated[i]`` is the integral of ``<g, v>`` over
    the same interval.
    """

    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    energy: np.ndarray
    dissipated: np.ndarray
    energy_residuals: np.ndarray
    tolerances: Tolerances
    system_name: str = ""
    nsteps: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.shape[0]

    @property
    def dim(self) -> int:
        return self.u.shape[1]

    @property
    def samples(self) -> list[State]:
        return [State(t, u, v) for t, u, v in zip(self.t, self.u, self.v)]

    def window(self, t_lo: float, t_hi: float) -> np.ndarray:
        """Boolean mask of samples with ``t_lo <= t <= t_hi``."""
        return (self.t >= t_lo) & (self.t <= t_hi)

    def at(self, t: float) -> State:
        i = int(np.argmin(np.abs(self.t - t)))
        if not math.isclose(self.t[i], t, rel_tol=1e-12, abs_tol=1e-15):
            raise KeyError(f"t={t} is not a sample time")
        return State(self.t[i], self.u[i], self.v[i])


def geometric_grid(t0: float, t1: float, first: Optional[float] = None,
                   ratio: float = 1.05, extra: Sequence[float] = ()) -> np.ndarray:
    """Output times ``t0 + first * ratio**k``, dense near ``t0``, plus both endpoints.

    ``extra`` times inside the span are merged in.
    """
    span = t1 - t0
    if span == 0:
        raise ValueError("degenerate time span")
    length = abs(span)
    if first is None:
        first = min(1e-3, 1e-3 * length)
    n = int(math.floor(math.log(length / first) / math.log(ratio))) + 1 if first < length else 0
    offsets = first * ratio ** np.arange(max(n, 0))
    offsets = offsets[offsets < length]
    sign = 1.0 if span > 0 else -1.0
    pts = [t0 + sign * offsets, [t0, t1]]
    for e in extra:
        if (e - t0) * sign >= 0 and (t1 - e) * sign >= 0:
            pts.append([e])
    grid = np.unique(np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in pts]))
    if sign < 0:
        grid = grid[::-1]
    # drop points closer than a few ulps to a neighbour (keeps endpoints exact)
    keep = np.concatenate([[True], np.abs(np.diff(grid)) > 1e-13 * max(1.0, abs(t0), abs(t1))])
    grid = grid[keep]
    grid[-1] = t1
    return grid


def _amplitude(u, v):
    return max(1.0, float(np.max(np.abs(u))), float(np.max(np.abs(v))))


def _effective_dt_min(system, tol, u, v):
    return tol.dt_min * _amplitude(u, v) ** -(1.0 + system.alpha / 2.0)


def _initial_dt(system, tol, u, v, span):
    h = 1e-2 * _amplitude(u, v) ** -(1.0 + system.alpha / 2.0)
    return min(h, tol.dt_max, abs(span))


def step(system: EvolutionSystem, state: State, dt_proposed: float,
         tol: Optional[Tolerances] = None) -> tuple[State, float, float]:
    """Take one accepted step starting from a trial of size ``dt_proposed``.

    A negative ``dt_proposed`` steps backwards in time.  Returns the new
    state, the step size actually used and the relative energy residual of
    the step.
    """
    tol = tol or Tolerances()
    if not (tol.dt_min <= abs(dt_proposed) <= tol.dt_max):
        raise ValueError(f"|dt_proposed|={abs(dt_proposed)} outside [dt_min, dt_max]")
    u = np.ascontiguousarray(state.u, dtype=float)
    v = np.ascontiguousarray(state.v, dtype=float)
    e = kern.energy(system.kernel, u, v)
    status, h_used, _, un, vn, _, _, res = kern.adaptive_step(
        system.kernel, state.t, u, v, e, float(dt_proposed), tol.rel_tol, tol.abs_tol,
        tol.energy_tol, tol.dt_min, tol.dt_max, abs(float(dt_proposed)),
        kern.workspace(u.shape[0]))
    if status == kern.UNDERFLOW:
        raise StiffnessError(state.t, u, v, abs(h_used))
    if status == kern.NONFINITE:
        raise DivergenceError(state.t)
    return State(state.t + h_used, un.copy(), vn.copy()), float(h_used), float(res)


def integrate(system: EvolutionSystem, state0: State, t_span: tuple[float, float],
              tol: Optional[Tolerances] = None, t_eval: Optional[Sequence[float]] = None,
              extra_times: Sequence[float] = (), max_steps: int = 50_000_000) -> Trajectory:
    """Integrate from ``state0`` (at ``t_span[0]``) to ``t_span[1]``.

    Samples are taken on ``t_eval`` when given, otherwise on
    :func:`geometric_grid` with ``extra_times`` merged in.
    """
    tol = tol or Tolerances()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t0 == t1:
        raise ValueError("degenerate time span")
    if not math.isclose(state0.t, t0, rel_tol=0, abs_tol=1e-12 * max(1.0, abs(t0))):
        raise ValueError(f"initial state time {state0.t} differs from span start {t0}")
    if t_eval is None:
        grid = geometric_grid(t0, t1, extra=extra_times)
    else:
        grid = np.asarray(t_eval, dtype=float)
        sgn = np.sign(t1 - t0)
        if np.any(np.diff(grid) * sgn <= 0):
            raise ValueError("t_eval must be strictly monotone in the direction of integration")
        if grid[0] != t0:
            grid = np.concatenate([[t0], grid])
        if grid[-1] != t1:
            grid = np.concatenate([grid, [t1]])
    K = system.kernel
    u = np.ascontiguousarray(state0.u, dtype=float).copy()
    v = np.ascontiguousarray(state0.v, dtype=float).copy()
    n = grid.shape[0]
    U = np.empty((n, u.shape[0]))
    V = np.empty((n, u.shape[0]))
    E = np.empty(n)
    W = np.zeros(n - 1)
    R = np.zeros(n - 1)
    U[0], V[0] = u, v
    E[0] = kern.energy(K, u, v)
    dt_min = _effective_dt_min(system, tol, u, v)
    h = math.copysign(_initial_dt(system, tol, u, v, t1 - t0), t1 - t0)
    total = 0
    for i in range(n - 1):
        status, u, v, h, dis, _, ns, t_reached = kern.advance(
            K, grid[i], grid[i + 1], u, v, h, tol.rel_tol, tol.abs_tol, tol.energy_tol,
            dt_min, tol.dt_max, max_steps - total)
        total += ns
        if status == kern.UNDERFLOW:
            raise StiffnessError(t_reached, u, v, abs(h))
        if status == kern.NONFINITE:
            raise DivergenceError(t_reached)
        if status == kern.MAX_STEPS:
            raise IntegrationError(f"step budget {max_steps} exhausted at t={t_reached:.6g}")
        U[i + 1], V[i + 1] = u, v
        E[i + 1] = kern.energy(K, u, v)
        W[i] = dis
        R[i] = abs(E[i + 1] - E[i] + dis) / max(1.0, abs(E[i])) / abs(grid[i + 1] - grid[i])
    return Trajectory(t=grid, u=U, v=V, energy=E, dissipated=W, energy_residuals=R,
                      tolerances=tol, system_name=system.name, nsteps=total)


def energy_balance(system: EvolutionSystem, trajectory: Trajectory) -> float:
    """Max over sample intervals of ``|dE0 + int <g, v>| / max(1, |E0|) / dt``.

    The energies are recomputed from the stored states with ``system``.
    """
    if trajectory.dim != system.dim:
        raise ValueError(f"trajectory dimension {trajectory.dim} does not match "
                         f"system dimension {system.dim}")
    if len(trajectory) < 2:
        return 0.0
    K = system.kernel
    E = np.array([kern.energy(K, np.ascontiguousarray(u), np.ascontiguousarray(v))
                  for u, v in zip(trajectory.u, trajectory.v)])
    dt = np.abs(np.diff(trajectory.t))
    res = np.abs(np.diff(E) + trajectory.dissipated) / np.maximum(1.0, np.abs(E[:-1])) / dt
    return float(res.max())
