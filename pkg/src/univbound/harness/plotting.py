"""SVG figures (matplotlib, Agg backend), one file per figure."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp so identical data give identical files
matplotlib.rcParams["svg.hashsalt"] = "univbound"
_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return Path(path)


def _positive(t, y):
    m = (t > 0) & (y > 0) & np.isfinite(y)
    return t[m], y[m]


def plot_energy(t, E0, path, envelopes: Optional[dict] = None, title: str = ""):
    """E0(t) on log-log axes with optional named envelope curves ``{label: (t, y)}``."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(*_positive(np.asarray(t), np.asarray(E0)), lw=1.5, label="$E_0(t)$")
    for label, (te, ye) in (envelopes or {}).items():
        ax.loglog(*_positive(np.asarray(te), np.asarray(ye)), "--", lw=1, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_sweep(curves: Sequence[tuple], path, envelope: Optional[tuple] = None, title: str = ""):
    """Energy curves ``(amplitude, t, E0)`` of an amplitude sweep, log-log."""
    fig, ax = plt.subplots(figsize=(6, 4))
    cmap = plt.get_cmap("viridis")
    n = max(len(curves) - 1, 1)
    for i, (amp, t, e) in enumerate(curves):
        ax.loglog(*_positive(np.asarray(t), np.asarray(e)), color=cmap(i / n), lw=1,
                  label=f"A={amp:g}")
    if envelope is not None:
        te, ye, label = envelope
        ax.loglog(*_positive(np.asarray(te), np.asarray(ye)), "k--", lw=1, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("$E_0(t)$")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=7, ncol=2)
    return _save(fig, path)


def plot_saturation(amplitudes, probe_times, energies, path, title: str = ""):
    """E0 at each probe time against the initial amplitude."""
    fig, ax = plt.subplots(figsize=(6, 4))
    amps = np.asarray(amplitudes, dtype=float)
    E = np.asarray(energies, dtype=float)
    for j, tp in enumerate(probe_times):
        a, y = _positive(amps, E[:, j])
        ax.loglog(a, y, "o-", ms=3, lw=1, label=f"t={tp:g}")
    ax.set_xlabel("initial amplitude A")
    ax.set_ylabel("$E_0$ at probe time")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)
