"""Run configuration: INI-style key-value files plus dotted ``section.key=value`` overrides."""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ..errors import ConfigError, UnsupportedModelError
from ..integrator import Tolerances
from ..models import PdeParams

EXPERIMENTS = ("simulate", "sweep", "assumptions")
MODELS = ("scalar", "oscillator", "wave", "plate", "kirchhoff", "kirchhoff_degenerate",
          "kirchhoff_neumann")
SHAPES = ("auto", "scalar", "single_mode", "random_modal", "spatial_constant")
ONE_DIM = ("scalar", "oscillator")

KIRCHHOFF_NEUMANN_REFUSAL = (
    "Kirchhoff with Neumann conditions cannot be run: all constant functions are stationary "
    "solutions and the potential does not control u in terms of its gradient, so no "
    "coercivity constants exist (use verify-assumptions on the surrogate to see the failure)")


def _float(key, raw):
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if not math.isfinite(val):
        raise ConfigError(key, f"must be finite, got {raw!r}")
    return val


def _int(key, raw):
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    if val != int(val):
        raise ConfigError(key, f"expected an integer, got {raw!r}")
    return int(val)


def _bool(key, raw):
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected true/false, got {raw!r}")


def _floats(key, raw):
    if isinstance(raw, (list, tuple)):
        return [_float(key, x) for x in raw]
    parts = [p for p in str(raw).replace(",", " ").split() if p]
    return [_float(key, p) for p in parts]


def _str(key, raw):
    return str(raw).strip()


def _opt_float(key, raw):
    if raw is None or str(raw).strip().lower() in ("", "none"):
        return None
    return _float(key, raw)


# section -> {key: (parser, default)}
SCHEMA = {
    "run": {
        "experiment": (_str, "simulate"),
        "amplitudes": (_floats, [1.0]),
        "t_start": (_float, 0.0),
        "t_end": (_float, 100.0),
        "probe_times": (_floats, [0.01, 0.1, 1.0, 10.0, 100.0]),
        "seed": (_int, 0),
        "out": (_str, "runs/latest"),
        "jobs": (_int, 1),
        "ratio_max": (_float, 2.0),
        "decay_ratio_max": (_float, 2.0),
        "saturation_decades": (_int, 3),
        "expect_universal": (_bool, True),
        "fail_on_violation": (_bool, True),
        "plots": (_bool, True),
        "sample_count": (_int, 1000),
        "sample_amplitude_min": (_float, 1e-3),
        "sample_amplitude_max": (_float, 1e3),
        "certificate_t_min": (_float, 0.01),
    },
    "model": {
        "name": (_str, "scalar"),
        "alpha": (_float, 1.0),
        "beta": (_float, 3.0),
        "omega": (_float, 1.0),
        "delta": (_float, 1.0),
        "rho": (_float, 1.0),
    },
    "pde": {
        "N": (_int, 16),
        "M": (_int, 48),
        "boundary": (_str, "dirichlet"),
        "b": (_float, 1.0),
        "c": (_float, 1.0),
        "lam": (_float, 0.0),
        "mu": (_float, 0.0),
        "forcing": (_floats, []),
        "forcing_freq": (_float, 0.0),
    },
    "initial": {
        "shape": (_str, "auto"),
        "mode": (_int, 1),
        "u0": (_opt_float, None),
        "v0": (_opt_float, None),
    },
    "tolerances": {f.name: (_float, f.default) for f in dataclasses.fields(Tolerances)},
}


@dataclass(frozen=True)
class RunConfig:
    """Validated experiment configuration (one flat value per schema key)."""

    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        vals = object.__getattribute__(self, "values")
        for section in SCHEMA:
            key = f"{section}.{name}"
            if key in vals:
                return vals[key]
        raise AttributeError(name)

    def get(self, dotted: str):
        return self.values[dotted]

    @property
    def model(self) -> str:
        return self.values["model.name"]

    @property
    def one_dimensional(self) -> bool:
        return self.model in ONE_DIM

    @property
    def tolerances(self) -> Tolerances:
        return Tolerances(**{k: self.values[f"tolerances.{k}"] for k in SCHEMA["tolerances"]})

    @property
    def shape(self) -> str:
        s = self.values["initial.shape"]
        if s == "auto":
            return "scalar" if self.one_dimensional else "random_modal"
        return s

    def pde_params(self) -> PdeParams:
        v = self.values
        forcing = v["pde.forcing"]
        M = v["pde.M"]
        if len(forcing) == 1:
            forcing = forcing * (M + 1)
        try:
            return PdeParams(N=v["pde.N"], M=M, boundary=v["pde.boundary"], b=v["pde.b"],
                             c=v["pde.c"], lam=v["pde.lam"], mu=v["pde.mu"],
                             alpha=v["model.alpha"], beta=v["model.beta"],
                             forcing=tuple(forcing) if forcing else None,
                             forcing_freq=v["pde.forcing_freq"])
        except ConfigError as exc:
            section = "model" if exc.key in ("alpha", "beta") else "pde"
            raise ConfigError(f"{section}.{exc.key}", str(exc).split(": ", 1)[1]) from None

    def to_dict(self) -> dict:
        """Nested plain dict (JSON-serialisable echo of every value)."""
        out: dict = {}
        for key, val in self.values.items():
            section, name = key.split(".", 1)
            out.setdefault(section, {})[name] = val
        return out

    def replace(self, **dotted) -> "RunConfig":
        vals = dict(self.values)
        for k, v in dotted.items():
            vals[resolve_key(k.replace("__", "."))] = v
        return validate(vals)


def resolve_key(key: str) -> str:
    """Map ``section.key`` or a bare key to its dotted schema name."""
    key = key.strip()
    if "." in key:
        section, name = key.split(".", 1)
        if section not in SCHEMA or name not in SCHEMA[section]:
            raise ConfigError(key, "unknown configuration key")
        return key
    hits = [s for s in SCHEMA if key in SCHEMA[s]]
    if not hits:
        raise ConfigError(key, "unknown configuration key")
    if len(hits) > 1:
        raise ConfigError(key, f"ambiguous key, use one of {[f'{h}.{key}' for h in hits]}")
    return f"{hits[0]}.{key}"


def _parse(raw: dict) -> dict:
    vals = {}
    for section, keys in SCHEMA.items():
        for name, (parser, default) in keys.items():
            vals[f"{section}.{name}"] = default
    for key, value in raw.items():
        dotted = resolve_key(key)
        section, name = dotted.split(".", 1)
        parser = SCHEMA[section][name][0]
        vals[dotted] = value if _already_parsed(parser, value) else parser(dotted, value)
    return vals


def _already_parsed(parser, value):
    if parser is _floats:
        return isinstance(value, list) and all(isinstance(x, float) for x in value)
    if parser is _float:
        return isinstance(value, float)
    if parser is _int:
        return isinstance(value, int) and not isinstance(value, bool)
    if parser is _bool:
        return isinstance(value, bool)
    return False


def validate(raw: dict) -> RunConfig:
    """Parse, fill defaults and cross-check every field."""
    v = _parse(raw)
    raw = {resolve_key(k) for k in raw}
    if v["run.experiment"] not in EXPERIMENTS:
        raise ConfigError("run.experiment", f"must be one of {EXPERIMENTS}")
    model = v["model.name"]
    if model not in MODELS:
        raise ConfigError("model.name", f"must be one of {MODELS}")
    if model == "kirchhoff_neumann" or (model.startswith("kirchhoff")
                                        and v["pde.boundary"] == "neumann"):
        if v["run.experiment"] != "assumptions":
            raise UnsupportedModelError(KIRCHHOFF_NEUMANN_REFUSAL)
    amps = v["run.amplitudes"]
    if not amps:
        raise ConfigError("run.amplitudes", "amplitude list is empty")
    if any(a < 0 for a in amps):
        raise ConfigError("run.amplitudes", "amplitudes must be nonnegative")
    # stored sorted, so that a permuted list describes the same experiment
    amps = sorted(amps)
    if any(b == a for a, b in zip(amps, amps[1:])):
        raise ConfigError("run.amplitudes", "duplicate amplitude")
    v["run.amplitudes"] = amps
    t0, t1 = v["run.t_start"], v["run.t_end"]
    if t1 <= t0:
        raise ConfigError("run.t_end", f"must exceed t_start={t0}")
    probes = v["run.probe_times"]
    if "run.probe_times" not in raw:
        probes = [p for p in probes if t0 <= p <= t1] or [t1]
        v["run.probe_times"] = probes
    if any(b <= a for a, b in zip(probes, probes[1:])):
        raise ConfigError("run.probe_times", "probe times must be strictly increasing")
    if any(p < t0 or p > t1 for p in probes):
        raise ConfigError("run.probe_times", f"probe times must lie in [{t0}, {t1}]")
    for key in ("run.jobs", "run.saturation_decades"):
        if v[key] < 1:
            raise ConfigError(key, "must be at least 1")
    for key in ("run.ratio_max", "run.decay_ratio_max", "run.certificate_t_min"):
        if v[key] <= 0:
            raise ConfigError(key, "must be positive")
    if v["run.sample_count"] < 10:
        raise ConfigError("run.sample_count", "must be at least 10")
    if not 0 < v["run.sample_amplitude_min"] < v["run.sample_amplitude_max"]:
        raise ConfigError("run.sample_amplitude_max", "need 0 < sample_amplitude_min < max")
    if v["model.alpha"] <= 0 and model != "oscillator":
        raise ConfigError("model.alpha", f"must be positive, got {v['model.alpha']}")
    if v["model.beta"] < 0:
        raise ConfigError("model.beta", f"must be nonnegative, got {v['model.beta']}")
    if model == "oscillator":
        for key in ("model.delta", "model.rho"):
            if v[key] <= 0:
                raise ConfigError(key, "must be positive")
    shape = v["initial.shape"]
    if shape not in SHAPES:
        raise ConfigError("initial.shape", f"must be one of {SHAPES}")
    if model in ONE_DIM and shape not in ("auto", "scalar"):
        raise ConfigError("initial.shape", f"{model} only takes scalar initial data")
    if model not in ONE_DIM:
        if shape == "scalar":
            raise ConfigError("initial.shape", "scalar data needs the scalar or oscillator model")
        if shape == "spatial_constant" and v["pde.boundary"] != "neumann":
            raise ConfigError("initial.shape", "spatial_constant data needs Neumann conditions")
        if not 1 <= v["initial.mode"] <= v["pde.N"]:
            raise ConfigError("initial.mode", f"must lie in 1..N={v['pde.N']}")
        if (v["initial.u0"], v["initial.v0"]) != (None, None):
            raise ConfigError("initial.u0", "explicit u0/v0 only apply to one-dimensional models")
    try:
        Tolerances(**{k: v[f"tolerances.{k}"] for k in SCHEMA["tolerances"]})
    except ValueError as exc:
        raise ConfigError("tolerances", str(exc)) from None
    cfg = RunConfig(v)
    if model not in ONE_DIM:
        cfg.pde_params()
    return cfg


def parse_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(text, "override must look like key=value")
    key, value = text.split("=", 1)
    return resolve_key(key), value.strip()


def load_config(path: Optional[str | Path] = None, overrides: Sequence[str] = (),
                **extra) -> RunConfig:
    """Read an INI file (sections run/model/pde/initial/tolerances), then apply
    ``key=value`` overrides in order (last writer wins) and ``extra`` values."""
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError("config", f"file not found: {p}")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read(p)
        except configparser.Error as exc:
            raise ConfigError("config", f"cannot parse {p}: {exc}") from None
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(section, f"unknown section in {p}")
            for name, value in parser.items(section):
                raw[resolve_key(f"{section}.{name}")] = value
    for text in overrides:
        key, value = parse_override(text)
        raw[key] = value
    for key, value in extra.items():
        if value is not None:
            raw[resolve_key(key)] = value
    return validate(raw)
