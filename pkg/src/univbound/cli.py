"""Command-line interface.

Exit codes: 0 success, 1 runtime or validation error, 2 certificate
violation (disable with ``--set run.fail_on_violation=false``).  Diagnostics
go to standard error; data only to files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import certificates as cert
from .errors import UnivBoundError
from .harness import load_config, run_experiment
from .harness import plotting
from .harness.experiments import read_trajectory_csv

log = logging.getLogger("univbound")


def _common(p):
    p.add_argument("--config", help="INI-style run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration key (dotted section.key; repeatable)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--jobs", type=int, help="parallel sweep cells")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="univbound", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "integrate one trajectory and check its certificates"),
                        ("sweep", "amplitude sweep probing universality"),
                        ("verify-assumptions", "sample the structural inequalities")):
        _common(sub.add_parser(name, help=help_))
    fit = sub.add_parser("fit-decay", help="log-log decay slope of E0 from a trajectory CSV")
    fit.add_argument("--out", help="directory for fit_decay.json (default: next to the CSV)")
    fit.add_argument("-v", "--verbose", action="count", default=0)
    fit.add_argument("csv", help="CSV with columns t and E0")
    fit.add_argument("--window", nargs=2, type=float, metavar=("T_LO", "T_HI"),
                     help="fit window (default: last two decades of the data)")
    rep = sub.add_parser("report", help="render a run directory to report.txt and SVG")
    rep.add_argument("run_dir")
    rep.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _config(args, experiment):
    return load_config(args.config, [f"run.experiment={experiment}"] + list(args.overrides),
                       seed=args.seed, jobs=args.jobs, out=args.out)


def _run(args, experiment):
    cfg = _config(args, experiment)
    result = run_experiment(cfg)
    for key, val in result.manifest["verdicts"].items():
        if val == "fail":
            log.warning("%s: %s", key, val)
        elif isinstance(val, str):
            log.info("%s: %s", key, val)
    print(f"wrote {result.out_dir}", file=sys.stderr)
    return result.exit_code


def _fit_decay(args):
    path = Path(args.csv)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    cols = read_trajectory_csv(path)
    if "t" not in cols or "E0" not in cols:
        raise ValueError(f"{path} needs columns 't' and 'E0'")
    t, e = cols["t"], cols["E0"]
    window = tuple(args.window) if args.window else (max(t.max() / 100.0, t[t > 0].min()),
                                                      t.max())
    fit = cert.fit_decay_exponent((t, e), window)
    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    data = {"csv": str(path), "window": list(window), "slope": fit.slope, "stderr": fit.stderr,
            "intercept": fit.intercept, "samples": fit.n}
    with open(out / "fit_decay.json", "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
    print(f"slope {fit.slope:.6g} +- {fit.stderr:.2g} on [{window[0]:g}, {window[1]:g}] "
          f"({fit.n} samples)", file=sys.stderr)
    return 0


def _fmt_verdict(val, indent="  "):
    if isinstance(val, dict):
        return "".join(f"\n{indent}  {k}: {_fmt_verdict(v, indent + '  ')}" for k, v in val.items())
    if isinstance(val, float):
        return f"{val:.6g}"
    return str(val)


def render_report(run_dir: Path) -> Path:
    """Summarise a run directory into ``report.txt`` and re-plot its trajectories."""
    run_dir = Path(run_dir)
    mf = run_dir / "manifest.json"
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory not found: {run_dir}")
    if not mf.is_file():
        raise FileNotFoundError(f"no manifest.json in {run_dir}")
    manifest = json.loads(mf.read_text())
    cfg = manifest["config"]
    lines = [f"run directory: {run_dir}",
             f"experiment: {cfg['run']['experiment']}   model: {cfg['model']['name']}   "
             f"seed: {manifest['seed']}",
             f"wall time: {manifest['wall_time_s']:.2f} s", "", "verdicts:"]
    for key, val in manifest["verdicts"].items():
        lines.append(f"  {key}: {_fmt_verdict(val)}")
    lines += ["", "files:"]
    curves = []
    for entry in manifest["files"]:
        lines.append(f"  {entry['path']}  sha256={entry['sha256'][:16]}...")
        p = run_dir / entry["path"]
        if p.suffix == ".csv" and p.is_file():
            cols = read_trajectory_csv(p)
            if "t" in cols and "E0" in cols and len(cols["t"]):
                curves.append((p.stem, cols["t"], cols["E0"]))
                tail = cols["t"] >= 1.0
                if np.count_nonzero(tail) >= 2 and np.all(cols["E0"][tail] > 0):
                    d = float(np.max(cols["E0"][tail] * cols["t"][tail] ** 2))
                    lines.append(f"    max E0 t^2 on t >= 1: {d:.6g}; "
                                 f"max energy residual {np.nanmax(cols['energy_residual']):.3g}")
    (run_dir / "report.txt").write_text("\n".join(lines) + "\n")
    for stem, t, e in curves:
        plotting.plot_energy(t, e, run_dir / f"report_{stem}.svg", title=stem)
    return run_dir / "report.txt"


def _report(args):
    path = render_report(Path(args.run_dir))
    print(f"wrote {path}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        if args.command == "simulate":
            return _run(args, "simulate")
        if args.command == "sweep":
            return _run(args, "sweep")
        if args.command == "verify-assumptions":
            return _run(args, "assumptions")
        if args.command == "fit-decay":
            return _fit_decay(args)
        return _report(args)
    except (UnivBoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
