"""Amplitude sweeps, the oscillator regression and persisted runs."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from .. import certificates as cert
from ..errors import CertificateError, IntegrationError, RegimeError
from ..integrator import Trajectory, Tolerances, geometric_grid, integrate
from ..models import (EvolutionSystem, State, build_galerkin_plate, build_galerkin_wave,
                      build_kirchhoff, build_oscillator, build_scalar_ode,
                      kirchhoff_neumann_surrogate)
from . import plotting
from .config import RunConfig, validate

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "E0", "Ehat", "Phi", "norm_H_v", "norm_X_v", "norm_Y_u", "energy_residual")


def build_system(cfg: RunConfig) -> EvolutionSystem:
    model = cfg.model
    if model == "scalar":
        return build_scalar_ode(cfg.alpha, cfg.beta)
    if model == "oscillator":
        return build_oscillator(cfg.omega, cfg.delta, cfg.rho)
    params = cfg.pde_params()
    if model == "wave":
        return build_galerkin_wave(params)
    if model == "plate":
        return build_galerkin_plate(params)
    if model == "kirchhoff":
        return build_kirchhoff(params)
    if model == "kirchhoff_degenerate":
        return build_kirchhoff(params, degenerate=True)
    return kirchhoff_neumann_surrogate(params)


def initial_state(system: EvolutionSystem, cfg: RunConfig, amplitude: float) -> State:
    """Initial data of the configured shape scaled to ``amplitude`` (zero velocity).

    ``random_modal`` draws one seeded direction ``xi_k / k^2`` shared by all
    amplitudes, so that a sweep only changes the scale.
    """
    t0 = cfg.t_start
    shape = cfg.shape
    dim = system.dim
    if shape == "scalar":
        u0 = amplitude if cfg.u0 is None else cfg.u0
        v0 = 0.0 if cfg.v0 is None else cfg.v0
        return State(t0, [u0], [v0])
    a = np.zeros(dim)
    if shape == "single_mode":
        a[cfg.mode - 1] = amplitude
    elif shape == "spatial_constant":
        a[0] = amplitude * math.sqrt(math.pi)
    else:
        rng = np.random.default_rng(cfg.seed)
        k = np.arange(1, dim + 1, dtype=float)
        xi = rng.standard_normal(dim) / k ** 2
        a = amplitude * xi / np.linalg.norm(xi)
    return State(t0, a, np.zeros(dim))


def sample_times(cfg: RunConfig) -> np.ndarray:
    return geometric_grid(cfg.t_start, cfg.t_end, extra=cfg.probe_times)


def _run_cell(values: dict, amplitude: float):
    cfg = validate(values)
    system = build_system(cfg)
    try:
        traj = integrate(system, initial_state(system, cfg, amplitude),
                         (cfg.t_start, cfg.t_end), cfg.tolerances, t_eval=sample_times(cfg))
        return amplitude, traj, None
    except IntegrationError as exc:
        return amplitude, None, f"{type(exc).__name__}: {exc}"


def _run_cells(cfg: RunConfig, amplitudes):
    if cfg.jobs > 1 and len(amplitudes) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(amplitudes))) as pool:
            results = list(pool.map(_run_cell, [cfg.values] * len(amplitudes), amplitudes))
    else:
        results = [_run_cell(cfg.values, a) for a in amplitudes]
    return results


# -- sweeps ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SweepReport:
    """E0 at probe times for every amplitude plus universality statistics.

    ``energies[i, j]`` is E0 at ``probe_times[j]`` for ``amplitudes[i]``
    (NaN when the cell failed; see ``errors``).
    """

    amplitudes: list
    probe_times: list
    energies: np.ndarray
    saturation: list
    universal: bool
    decay_fits: list
    errors: dict
    trajectories: list
    bound: Optional[cert.BoundReport] = None
    decay: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


def _saturation(values, amplitudes, decades):
    return cert._saturation(values, amplitudes, decades)


def _decay_window(cfg):
    return max(1.0, cfg.t_end / 100.0), cfg.t_end


def amplitude_sweep(cfg: RunConfig) -> SweepReport:
    """Integrate every configured amplitude and measure saturation at probe times.

    The verdict ``universal`` requires the saturation ratio (max over the top
    ``saturation_decades`` of amplitudes divided by the value at the lowest
    amplitude in that range) to be at most ``ratio_max`` at every probe time.
    Failed cells are recorded in ``errors`` and count as a failed verdict.
    """
    amps = list(cfg.amplitudes)
    probes = list(cfg.probe_times)
    results = _run_cells(cfg, amps)
    system = build_system(cfg)
    E = np.full((len(amps), len(probes)), np.nan)
    errors, trajs, fits = {}, [], []
    for i, (amp, traj, err) in enumerate(results):
        trajs.append(traj)
        if err is not None:
            errors[amp] = err
            fits.append(None)
            continue
        for j, tp in enumerate(probes):
            E[i, j] = traj.energy[int(np.argmin(np.abs(traj.t - tp)))]
        try:
            fits.append(cert.fit_decay_exponent(traj, _decay_window(cfg)))
        except (ValueError, CertificateError):
            fits.append(None)
    sat = [_saturation(E[:, j], amps, cfg.saturation_decades) for j in range(len(probes))]
    universal = not errors and all(math.isfinite(s) and s <= cfg.ratio_max for s in sat)
    verdicts = {"universal_bound": "pass" if universal else "fail"}
    notes = []
    bound = None
    decay = {}
    good = [t for t in trajs if t is not None]
    consts = system.declared_constants
    try:
        exps = cert.exponents(system.alpha, system.beta)
    except RegimeError as exc:
        exps = None
        notes.append(f"no certificate exponents: {exc}")
    if exps is not None and good:
        lo = max(cfg.certificate_t_min, min(t.t[t.t > 0].min() for t in good))
        hi = min(1.0, cfg.t_end)
        if lo < hi:
            bound = cert.verify_bound(good, exps, "ubp", window=(lo, hi),
                                      c1=consts.c1 if consts else 0.0)
        if cfg.t_end > 1.0 and not errors:
            names = [("decay_1_over_gamma_max", "decay")]
            if consts is not None and consts.delta4 > 0 and consts.c5 > 0:
                names.append(("decay_2_over_alpha", "strong_decay"))
            for name, mode in names:
                rep = cert.verify_bound(good, exps, mode, window=(1.0, cfg.t_end),
                                        amplitudes=amps, ratio_max=cfg.decay_ratio_max,
                                        decades=cfg.saturation_decades)
                decay[name] = rep
                verdicts[name] = "pass" if rep.universal else "fail"
    return SweepReport(amplitudes=amps, probe_times=probes, energies=E, saturation=sat,
                       universal=universal, decay_fits=fits, errors=errors, trajectories=trajs,
                       bound=bound, decay=decay, verdicts=verdicts, notes=notes)


# -- oscillator counterexample --------------------------------------------------------


def counterexample_trajectory(tol: Optional[Tolerances] = None) -> Trajectory:
    """Oscillator with unit coefficients started at ``(24.5, -5)`` at ``t = -10``.

    The exact solution is ``u = t^2/4 - 1/2``, ``u' = t/2``: the damping
    ``|u'| u' = t|t|/4`` and the restoring force balance ``u'' = 1/2``.
    """
    system = build_oscillator(1.0, 1.0, 1.0)
    grid = np.linspace(-10.0, 0.0, 101)
    return integrate(system, State(-10.0, [24.5], [-5.0]), (-10.0, 0.0), tol, t_eval=grid)


def counterexample_regression(tol: Optional[Tolerances] = None) -> float:
    """Max deviation of the numerical solution from the parabola at the output times."""
    tr = counterexample_trajectory(tol)
    t = tr.t
    du = np.abs(tr.u[:, 0] - (t * t / 4.0 - 0.5))
    dv = np.abs(tr.v[:, 0] - t / 2.0)
    return float(max(du.max(), dv.max()))


# -- persistence ----------------------------------------------------------------------


@dataclass
class RunResult:
    out_dir: Path
    manifest: dict
    exit_code: int
    sweep: Optional[SweepReport] = None
    certificate: Optional[cert.CertificateReport] = None
    assumptions: Optional[cert.AssumptionReport] = None


def _fmt(x) -> str:
    return repr(float(x))


def trajectory_rows(system: EvolutionSystem, traj: Trajectory,
                    report: Optional[cert.CertificateReport] = None):
    nm = system.norms
    consts = system.declared_constants
    n = len(traj)
    if report is not None:
        ehat, phi = report.series.Ehat, report.series.Phi
    else:
        ehat = traj.energy + consts.c1 + 1.0 if consts is not None else np.full(n, np.nan)
        phi = np.full(n, np.nan)
    res = np.concatenate([[0.0], traj.energy_residuals])
    for i in range(n):
        yield (traj.t[i], traj.energy[i], ehat[i], phi[i], nm.norm_H(traj.v[i]),
               nm.norm_X(traj.v[i]), nm.norm_Y(traj.u[i]), res[i])


def write_trajectory_csv(path, system, traj, report=None) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in trajectory_rows(system, traj, report):
            w.writerow([_fmt(x) for x in row])
    return Path(path)


def read_trajectory_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    header = rows[0]
    cols = {name: np.array([float(r[i]) for r in rows[1:]]) for i, name in enumerate(header)}
    return cols


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions():
    import matplotlib
    import numba
    import scipy

    return {"univbound": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__,
            "matplotlib": matplotlib.__version__}


def _simulate(cfg, out, files):
    system = build_system(cfg)
    amp = cfg.amplitudes[-1]
    traj = integrate(system, initial_state(system, cfg, amp), (cfg.t_start, cfg.t_end),
                     cfg.tolerances, t_eval=sample_times(cfg))
    verdicts = {"energy_balance": float(traj.energy_residuals.max()),
                "energy_residual_ok": bool(traj.energy_residuals.max() <= 1e-8)}
    report = None
    violation = not verdicts["energy_residual_ok"]
    if system.declared_constants is not None and cfg.t_start >= 0:
        try:
            report = cert.certify(system, traj, t_min=cfg.certificate_t_min)
        except RegimeError as exc:
            verdicts["certificates"] = f"skipped: {exc}"
    else:
        verdicts["certificates"] = "skipped: no declared constants"
    if report is not None:
        verdicts.update({k: "pass" if v else "fail" for k, v in report.verdicts.items()})
        verdicts["epsilon_star"] = report.epsilon_star
        verdicts["ubp_fit"] = {"Gamma": report.ubp_fit.coef, "Gamma_star": report.ubp_fit.offset,
                               "rate": report.ubp_fit.rate}
        for name, fit in report.decay_fits.items():
            verdicts[name] = {"D": fit.coef, "rate": fit.rate}
        violation |= not all(report.verdicts.values())
    files.append(write_trajectory_csv(out / "trajectory.csv", system, traj, report))
    if cfg.plots:
        env = {}
        if report is not None:
            tp = traj.t[traj.t > 0]
            f = report.ubp_fit
            env[f"$\\Gamma t^{{-{f.rate:g}}}+\\Gamma_* - C_1 - 1$"] = (
                tp, f.envelope(tp) - system.declared_constants.c1 - 1.0)
            for name, fit in report.decay_fits.items():
                tl = tp[tp >= 1.0]
                env[f"$D t^{{-{fit.rate:g}}}$"] = (tl, fit.envelope(tl))
        files.append(plotting.plot_energy(traj.t, traj.energy, out / "energy.svg", env,
                                          title=f"{system.name}, A={amp:g}"))
    return verdicts, violation, report


def _sweep(cfg, out, files):
    rep = amplitude_sweep(cfg)
    system = build_system(cfg)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["amplitude"] + [f"E0_t={tp:g}" for tp in rep.probe_times] + ["decay_slope"])
        for i, amp in enumerate(rep.amplitudes):
            fit = rep.decay_fits[i]
            w.writerow([_fmt(amp)] + [_fmt(x) for x in rep.energies[i]]
                       + [_fmt(fit.slope if fit else math.nan)])
    files.append(out / "sweep.csv")
    curves = []
    for i, (amp, traj) in enumerate(zip(rep.amplitudes, rep.trajectories)):
        if traj is None:
            continue
        p = out / f"traj_{i:02d}.csv"
        files.append(write_trajectory_csv(p, system, traj))
        curves.append((amp, traj.t, traj.energy))
    verdicts = dict(rep.verdicts)
    verdicts["saturation"] = {f"{tp:g}": s for tp, s in zip(rep.probe_times, rep.saturation)}
    verdicts["expected_universal"] = cfg.expect_universal
    if rep.bound is not None:
        verdicts["ubp_fit"] = {"Gamma": rep.bound.pooled.coef,
                               "Gamma_star": rep.bound.pooled.offset,
                               "rate": rep.bound.rate, "window": list(rep.bound.window)}
    for name, d in rep.decay.items():
        verdicts[f"{name}_fit"] = {"D": d.pooled.coef, "saturation": d.saturation,
                                   "spread": d.spread}
    if rep.errors:
        verdicts["errors"] = {f"{a:g}": e for a, e in rep.errors.items()}
    if rep.notes:
        verdicts["notes"] = rep.notes
    if cfg.plots and curves:
        env = None
        if rep.bound is not None:
            tb = np.geomspace(*rep.bound.window, 100)
            c1 = system.declared_constants.c1 if system.declared_constants else 0.0
            env = (tb, rep.bound.pooled.envelope(tb) - c1 - 1.0, "pooled bound")
        files.append(plotting.plot_sweep(curves, out / "sweep_energy.svg", env,
                                         title=f"{system.name} amplitude sweep"))
        files.append(plotting.plot_saturation(rep.amplitudes, rep.probe_times, rep.energies,
                                              out / "saturation.svg"))
    violation = rep.universal != cfg.expect_universal
    if cfg.expect_universal:
        violation |= any(v == "fail" for k, v in rep.verdicts.items() if k.startswith("decay"))
    return verdicts, violation, rep


def _assumptions(cfg, out, files):
    system = build_system(cfg)
    rep = cert.verify_assumptions(system, cfg.sample_count,
                                  (cfg.sample_amplitude_min, cfg.sample_amplitude_max),
                                  seed=cfg.seed)
    with open(out / "assumptions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["assumption", "holds", "holds_with_zero_constant", "declared", "fitted",
                    "worst_margin"])
        for c in rep.checks.values():
            w.writerow([c.name, c.holds, c.holds_with_zero_constant,
                        json.dumps(c.declared, sort_keys=True),
                        json.dumps(c.fitted, sort_keys=True), _fmt(c.worst_margin)])
    files.append(out / "assumptions.csv")
    verdicts = {c.name: "pass" if c.holds else "fail" for c in rep.checks.values()}
    return verdicts, False, rep


def run_experiment(cfg: RunConfig, out: Optional[Path] = None) -> RunResult:
    """Run the configured experiment and persist CSVs, SVGs and ``manifest.json``.

    Exit code 2 flags a certificate violation (or a sweep verdict that
    contradicts ``expect_universal``) when ``fail_on_violation`` is set.
    """
    start = time.perf_counter()
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files: list = []
    kind = cfg.experiment
    result = RunResult(out_dir=out, manifest={}, exit_code=0)
    if kind == "simulate":
        verdicts, violation, result.certificate = _simulate(cfg, out, files)
    elif kind == "sweep":
        verdicts, violation, result.sweep = _sweep(cfg, out, files)
    else:
        verdicts, violation, result.assumptions = _assumptions(cfg, out, files)
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "verdicts": verdicts,
        "files": [{"path": Path(f).relative_to(out).as_posix(), "sha256": _sha256(f)}
                  for f in files],
        "wall_time_s": time.perf_counter() - start,
        "versions": _versions(),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=False, default=_json_default)
        fh.write("\n")
    result.manifest = manifest
    if violation and cfg.fail_on_violation:
        result.exit_code = 2
    log.info("%s run written to %s (%.1f s)", kind, out, manifest["wall_time_s"])
    return result


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")
