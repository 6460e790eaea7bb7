"""Experiment configuration: INI files with JSON-valued entries.

A config has a ``[domain]`` section and optional ``[mc]``, ``[pde]``,
``[asymptotics]``, ``[verify]`` and ``[output]`` sections.  Values are parsed
as JSON when possible (lists, numbers, ``"inf"`` strings), else kept as text.

Example::

    [domain]
    preset = window_gap
    a = 1.0

    [mc]
    N = 20000
    checkpoints = [1, 2, 4]
    x = [[0, 1]]
"""
from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import geometry as G
from .io import config_hash
from .sampler import SimConfig


class ConfigError(ValueError):
    pass


PRESETS = {
    "two_halfspace": G.two_halfspace,
    "slit_plane": G.slit_plane,
    "segment_exterior": G.segment_exterior,
    "window_gap": G.window_gap,
    "shrinking_windows": G.shrinking_windows,
}

MC_DEFAULTS = {
    "h": 1e-2, "delta_geo": 1e-4, "N": 10_000, "seed": 0, "checkpoints": [1.0],
    "block_size": 10_000, "x": [[0.0, 1.0]], "y": [], "h_f": None,
}
PDE_DEFAULTS = {
    "L": 20.0, "dx": 0.05, "core": None, "ratio": 1.05, "dt": 0.0025, "dt_rel": 0.01,
    "dt_max": 1.0, "t_grid": [1.0], "t0": None, "x": [[0.0, 1.0]], "y": [], "compact": True,
    "far_data": "AbsXd", "rtol": 1e-10, "horizon_factor": 3.0, "dx_ladder": [0.2, 0.1, 0.05],
}
ASYM_DEFAULTS = {
    "source": "pde", "window": None, "model": None, "slope_tol": 0.05, "slope_min": 0.10,
    "mixing_time": 1.0, "min_decades": 1.5, "n_boot": 200, "seed": 0, "series": "survival",
}
VERIFY_DEFAULTS = {"source": "pde", "tolerances": {}, "t": [1.0], "s": 1.0, "pde": None}


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text.strip()


def times(v) -> list[float]:
    """A time list, or ``{"geomspace": [start, stop, num]}`` rounded to 6 significant digits."""
    if isinstance(v, dict):
        if set(v) != {"geomspace"} or len(v["geomspace"]) != 3:
            raise ConfigError(f"cannot read a time grid from {v!r}")
        a, b, n = v["geomspace"]
        return [float(f"{t:.6g}") for t in np.geomspace(float(a), float(b), int(n))]
    return [float(t) for t in v]


TIME_KEYS = {"checkpoints", "t_grid", "t"}


def _section(cp, name, defaults):
    out = dict(defaults)
    if cp.has_section(name):
        for k, v in cp.items(name):
            key = next((d for d in defaults if d.lower() == k), k)
            out[key] = _value(v)
            if key in TIME_KEYS:
                out[key] = times(out[key])
    return out


@dataclass
class ExperimentConfig:
    domain_spec: dict
    mc: dict = field(default_factory=lambda: dict(MC_DEFAULTS))
    pde: dict = field(default_factory=lambda: dict(PDE_DEFAULTS))
    asymptotics: dict = field(default_factory=lambda: dict(ASYM_DEFAULTS))
    verify: dict = field(default_factory=lambda: dict(VERIFY_DEFAULTS))
    output: str = "out"
    source: str = ""

    def pde_for(self, section: str) -> dict:
        """PDE settings with a section's ``pde`` overrides applied (e.g. a finer box for checks)."""
        over = getattr(self, section).get("pde") or {}
        return {**self.pde, **over}

    def domain(self) -> G.BenedicksDomain:
        return build_domain(self.domain_spec)

    def sim_config(self, **over) -> SimConfig:
        m = self.mc
        kw = dict(h=float(m["h"]), delta_geo=float(m["delta_geo"]), N=int(m["N"]), seed=int(m["seed"]),
                  checkpoints=tuple(float(t) for t in m["checkpoints"]), block_size=int(m["block_size"]))
        kw.update(over)
        return SimConfig(**kw)

    def to_dict(self) -> dict:
        return {"domain": self.domain_spec, "mc": self.mc, "pde": self.pde,
                "asymptotics": self.asymptotics, "verify": self.verify}

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def validate(self) -> None:
        """Raise ConfigError on internal inconsistencies (domain, grid, horizon)."""
        dom = self.domain()
        rep = G.validate_domain(dom)
        if not rep.valid:
            raise ConfigError("; ".join(rep.failures()))
        p = self.pde
        L, dx = float(p["L"]), float(p["dx"])
        if not (L > 0 and dx > 0):
            raise ConfigError("pde: L and dx must be positive")
        span = float(p["core"]) if p["core"] is not None else L
        if abs(span / dx - round(span / dx)) > 1e-9:
            raise ConfigError(f"pde: dx = {dx} does not divide {span}")
        horizon = (L / float(p["horizon_factor"])) ** 2
        if p["t_grid"] and max(p["t_grid"]) > horizon:
            raise ConfigError(f"pde: t_grid reaches {max(p['t_grid'])} beyond the box horizon (L/{p['horizon_factor']})^2 = {horizon:.4g}")
        try:
            self.sim_config()
        except ValueError as e:
            raise ConfigError(f"mc: {e}") from e


def build_domain(spec: dict) -> G.BenedicksDomain:
    spec = dict(spec)
    preset = spec.pop("preset", None)
    label = spec.pop("label", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        try:
            dom = PRESETS[preset](**spec)
        except TypeError as e:
            raise ConfigError(f"preset {preset}: {e}") from e
    else:
        try:
            d = int(spec["d"])
            variant = spec["variant"]
            boxes = spec["boxes"]
        except KeyError as e:
            raise ConfigError(f"domain needs a preset or d, variant and boxes (missing {e})") from e
        try:
            if variant == "holes":
                hs = G.holes(*boxes)
            elif variant == "windows":
                hs = G.windows(*boxes)
            else:
                raise ConfigError(f"variant must be holes or windows, got {variant!r}")
            dom = G.BenedicksDomain(d, hs, label or "")
        except G.DomainError as e:
            raise ConfigError(str(e)) from e
    if label:
        dom = G.BenedicksDomain(dom.d, dom.holes, label)
    return dom


def load_config(path) -> ExperimentConfig:
    """Read a config file; bundled names (``slit_plane.cfg``) resolve to the package copies."""
    path = resolve(path)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    if not cp.has_section("domain"):
        raise ConfigError(f"{path}: missing [domain] section")
    cfg = ExperimentConfig(
        domain_spec={k: _value(v) for k, v in cp.items("domain")},
        mc=_section(cp, "mc", MC_DEFAULTS),
        pde=_section(cp, "pde", PDE_DEFAULTS),
        asymptotics=_section(cp, "asymptotics", ASYM_DEFAULTS),
        verify=_section(cp, "verify", VERIFY_DEFAULTS),
        output=cp.get("output", "dir", fallback="out"),
        source=str(path),
    )
    return cfg


def bundled(name: str) -> Path:
    return Path(str(resources.files("benedicks") / "configs" / name))


def resolve(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    b = bundled(p.name if p.suffix else p.name + ".cfg")
    return b if b.exists() else p

