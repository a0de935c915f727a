"""Run configuration, text serialization, validation and built-in presets.

The file format is INI: ``[section]`` headers with ``key = value`` lines,
addressed elsewhere as dotted keys ``section.key``.  Values are JSON when
they parse as JSON and plain strings otherwise.
"""

from __future__ import annotations

import configparser
import copy
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

from .errors import ConfigError

ENGINES = ("picard", "etd", "heat_only")
DATUM_KINDS = ("gaussian", "two_bump", "annulus")
SCHEMES = ("strang", "euler")

_RUN_KEYS = ("name", "engine", "T", "seed", "output_dir")
_GRID_KEYS = ("dim", "n_per_axis", "box_length")
_SECTIONS = ("initial", "time_mesh", "solver", "picard", "diagnostics")


def _default_solver():
    return {"scheme": "strang", "dt_max": 0.01, "dt_rel": 0.0, "tail_tol": 1e-10, "collapse_tol": 1e-2}


def _default_picard():
    return {"max_iters": 30, "tol": 1e-8, "n_mesh": 48, "quad_nodes": 32}


@dataclass
class RunConfig:
    name: str = "custom"
    dim: int = 2
    n_per_axis: int = 256
    box_length: float = 32.0
    engine: str = "etd"
    T: float = 1.0
    seed: int = 0
    output_dir: str = "runs"
    initial: dict = field(default_factory=lambda: {"kind": "gaussian", "mass": 1.0, "sigma": 0.5})
    time_mesh: dict = field(default_factory=lambda: {"kind": "linear", "count": 10})
    solver: dict = field(default_factory=_default_solver)
    picard: dict = field(default_factory=_default_picard)
    diagnostics: dict = field(default_factory=dict)

    # -- flat dotted view -------------------------------------------------

    def to_flat(self) -> dict:
        out = {}
        for k in _RUN_KEYS:
            out[f"run.{k}"] = getattr(self, k)
        for k in _GRID_KEYS:
            out[f"grid.{k}"] = getattr(self, k)
        for sec in _SECTIONS:
            for k, v in getattr(self, sec).items():
                out[f"{sec}.{k}"] = v
        return out

    def get(self, key: str):
        sec, _, name = key.partition(".")
        if sec == "run" and name in _RUN_KEYS or sec == "grid" and name in _GRID_KEYS:
            return getattr(self, name)
        if sec in _SECTIONS:
            return getattr(self, sec).get(name)
        raise ConfigError(f"unknown config key {key!r}")

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """Copy with dotted-key overrides applied (strings are parsed like file values)."""
        new = copy.deepcopy(self)
        for key, value in overrides.items():
            if isinstance(value, str):
                value = parse_value(value)
            sec, _, name = key.partition(".")
            if not name:
                raise ConfigError(f"config keys are dotted (section.key), got {key!r}")
            if sec == "run" and name in _RUN_KEYS or sec == "grid" and name in _GRID_KEYS:
                setattr(new, name, value)
            elif sec in _SECTIONS:
                getattr(new, sec)[name] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return new

    # -- text -------------------------------------------------------------

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        sections = {"run": {k: getattr(self, k) for k in _RUN_KEYS}, "grid": {k: getattr(self, k) for k in _GRID_KEYS}}
        for sec in _SECTIONS:
            sections[sec] = getattr(self, sec)
        for sec, items in sections.items():
            cp[sec] = {k: format_value(v) for k, v in sorted(items.items())}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        unknown = set(cp.sections()) - {"run", "grid", *_SECTIONS}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        base = cls(initial={}, time_mesh={}, solver=_default_solver(), picard=_default_picard(), diagnostics={})
        flat = {f"{sec}.{k}": v for sec in cp.sections() for k, v in cp[sec].items()}
        return base.with_overrides(flat)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]

    def as_dict(self) -> dict:
        return asdict(self)


def format_value(v: Any) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, float) and math.isinf(v):
        return '"inf"'
    return json.dumps(v)


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def as_q(v) -> float:
    """Exponent from config: numbers, or the strings 'inf' / '4/3'."""
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "infinity"):
            return math.inf
        if "/" in s:
            a, b = s.split("/")
            return float(a) / float(b)
        return float(s)
    return float(v)


# ---------------------------------------------------------------------------
# validation


def validate(cfg: RunConfig) -> RunConfig:
    """Raise :class:`ConfigError` on anything the engines would reject."""
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.dim in (1, 2, 3), f"grid.dim must be 1, 2 or 3, got {cfg.dim}")
    need(isinstance(cfg.n_per_axis, int) and cfg.n_per_axis >= 8 and cfg.n_per_axis % 2 == 0, "grid.n_per_axis must be an even integer >= 8")
    need(isinstance(cfg.box_length, (int, float)) and cfg.box_length > 0, "grid.box_length must be positive")
    need(cfg.engine in ENGINES, f"run.engine must be one of {ENGINES}, got {cfg.engine!r}")
    need(isinstance(cfg.T, (int, float)) and cfg.T > 0, "run.T must be positive")
    need(isinstance(cfg.seed, int), "run.seed must be an integer")

    ini = cfg.initial
    kind = ini.get("kind")
    need(kind in DATUM_KINDS, f"initial.kind must be one of {DATUM_KINDS}, got {kind!r}")
    need(_pos(ini.get("mass")), "initial.mass must be positive")
    need(_pos(ini.get("sigma")), "initial.sigma must be positive")
    if "center" in ini:
        need(_vec(ini["center"], cfg.dim), f"initial.center must be a list of {cfg.dim} numbers")
    if kind == "two_bump":
        need(_pos(ini.get("separation")), "initial.separation must be positive for two_bump")
    if kind == "annulus":
        need(_pos(ini.get("radius")), "initial.radius must be positive for annulus")

    tm = cfg.time_mesh
    tk = tm.get("kind", "linear")
    need(tk in ("linear", "geometric", "list"), f"time_mesh.kind must be linear, geometric or list, got {tk!r}")
    if tk == "list":
        ts = tm.get("times")
        need(isinstance(ts, list) and ts and all(_pos(t) for t in ts), "time_mesh.times must be a list of positive times")
    else:
        need(isinstance(tm.get("count", 10), int) and tm.get("count", 10) >= 1, "time_mesh.count must be a positive integer")
    if tk == "geometric":
        need(_pos(tm.get("t_min")) and tm["t_min"] < cfg.T, "time_mesh.t_min must lie in (0, T)")
    extra = tm.get("extra", [])
    need(isinstance(extra, list) and all(_pos(t) and t <= cfg.T for t in extra), "time_mesh.extra must be times in (0, T]")

    sv = cfg.solver
    need(sv.get("scheme", "strang") in SCHEMES, f"solver.scheme must be one of {SCHEMES}")
    need(_pos(sv.get("dt_max")), "solver.dt_max must be positive")
    need(isinstance(sv.get("dt_rel", 0.0), (int, float)) and sv.get("dt_rel", 0.0) >= 0, "solver.dt_rel must be >= 0")

    pc = cfg.picard
    need(isinstance(pc.get("max_iters"), int) and pc["max_iters"] >= 1, "picard.max_iters must be a positive integer")
    need(_pos(pc.get("tol")), "picard.tol must be positive")
    need(isinstance(pc.get("n_mesh"), int) and pc["n_mesh"] >= 4, "picard.n_mesh must be an integer >= 4")
    need(isinstance(pc.get("quad_nodes"), int) and pc["quad_nodes"] >= 2, "picard.quad_nodes must be an integer >= 2")

    dg = cfg.diagnostics
    known = {"decay_fits", "decay_window", "analyticity", "growth_t", "growth_jmax", "blow_up", "hls", "theta_q", "k_max"}
    need(set(dg) <= known, f"unknown diagnostics keys: {sorted(set(dg) - known)}")
    for item in dg.get("decay_fits", []):
        need(isinstance(item, list) and len(item) == 3, "diagnostics.decay_fits entries are [beta, k, q]")
        beta, k, q = item
        need(_vec(beta, cfg.dim) and all(isinstance(b, int) and b >= 0 for b in beta), f"decay_fits beta must have {cfg.dim} nonnegative entries")
        need(isinstance(k, int) and k >= 0, "decay_fits k must be a nonnegative integer")
        try:
            need(as_q(q) >= 1, "decay_fits q must be >= 1")
        except ValueError as exc:
            raise ConfigError(f"bad q {q!r}") from exc
    if "decay_window" in dg:
        w = dg["decay_window"]
        need(isinstance(w, list) and len(w) == 2 and 0 < w[0] < w[1], "diagnostics.decay_window must be [t_lo, t_hi]")
    return cfg


def _pos(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 and math.isfinite(v)


def _vec(v, n) -> bool:
    return isinstance(v, list) and len(v) == n and all(isinstance(x, (int, float)) for x in v)


# ---------------------------------------------------------------------------
# presets

EIGHT_PI = 8 * math.pi


def _small_mass_2d():
    return RunConfig(
        name="small_mass_2d",
        dim=2,
        n_per_axis=512,
        box_length=64.0,
        engine="etd",
        T=16.0,
        initial={"kind": "gaussian", "mass": 0.1 * EIGHT_PI, "sigma": 0.45},
        time_mesh={"kind": "geometric", "t_min": 1.0, "count": 13, "extra": [0.5]},
        solver={**_default_solver(), "dt_max": 0.02, "dt_rel": 0.02},
        diagnostics={
            "decay_fits": [[[0, 0], 0, 2], [[0, 0], 0, 4], [[0, 0], 0, "inf"], [[1, 0], 0, "inf"], [[0, 0], 1, "inf"]],
            "analyticity": True,
            "growth_t": 1.0,
            "growth_jmax": 6,
            "blow_up": True,
            "hls": True,
        },
    )


def _small_mass_picard_2d():
    cfg = _small_mass_2d()
    cfg.name = "small_mass_picard_2d"
    cfg.engine = "picard"
    cfg.T = 0.5
    cfg.time_mesh = {"kind": "list", "times": [0.5]}
    cfg.diagnostics = {"hls": True, "theta_q": [1, "4/3", 2, "inf"]}
    return cfg


def _supercritical_2d():
    return RunConfig(
        name="supercritical_2d",
        dim=2,
        n_per_axis=512,
        box_length=8.0,
        engine="etd",
        T=2.0,
        initial={"kind": "gaussian", "mass": 1.25 * EIGHT_PI, "sigma": 0.5},
        time_mesh={"kind": "linear", "count": 20},
        solver={**_default_solver(), "dt_max": 0.01},
        diagnostics={"blow_up": True},
    )


def _subcritical_2d():
    cfg = _supercritical_2d()
    cfg.name = "subcritical_2d"
    cfg.initial = {**cfg.initial, "mass": 0.5 * EIGHT_PI}
    return cfg


def _heat_oracle(dim):
    return RunConfig(
        name=f"heat_oracle_{dim}d",
        dim=dim,
        n_per_axis=64 if dim == 3 else 128,
        box_length=24.0,
        engine="heat_only",
        T=1.0,
        initial={"kind": "gaussian", "mass": 1.0, "sigma": 1.0},
        time_mesh={"kind": "linear", "count": 4},
        diagnostics={},
    )


def _bounded_window_2d():
    return RunConfig(
        name="bounded_window_2d",
        dim=2,
        n_per_axis=256,
        box_length=32.0,
        engine="etd",
        T=2.0,
        initial={"kind": "two_bump", "mass": 0.5 * EIGHT_PI, "sigma": 0.5, "separation": 2.0},
        time_mesh={"kind": "linear", "count": 10},
        solver={**_default_solver(), "dt_max": 0.01},
        diagnostics={"blow_up": True, "hls": True},
    )


def _mpks_boundary(dim):
    mass = 2 * dim**2 * math.pi
    n, L, sigma = {1: (1024, 64.0, 0.5), 2: (256, 32.0, 1.0), 3: (96, 20.0, 1.25)}[dim]
    return RunConfig(
        name=f"mpks_boundary_{dim}d",
        dim=dim,
        n_per_axis=n,
        box_length=L,
        engine="etd",
        T=0.5,
        initial={"kind": "gaussian", "mass": mass, "sigma": sigma},
        time_mesh={"kind": "linear", "count": 10},
        solver={**_default_solver(), "dt_max": 0.005},
        diagnostics={"blow_up": True},
    )


def _small_mass(dim):
    crit = 2 * dim**2 * math.pi
    n, L, sigma, T = {1: (1024, 64.0, 0.45, 16.0), 3: (64, 16.0, 1.0, 1.0)}[dim]
    return RunConfig(
        name=f"small_mass_{dim}d",
        dim=dim,
        n_per_axis=n,
        box_length=L,
        engine="etd",
        T=T,
        initial={"kind": "gaussian", "mass": 0.1 * crit, "sigma": sigma},
        time_mesh={"kind": "linear", "count": 8},
        solver={**_default_solver(), "dt_max": 0.02, "dt_rel": 0.02},
        diagnostics={"blow_up": False},
    )


_PRESETS = {
    "small_mass_2d": (_small_mass_2d, "d=2 Gaussian of mass 0.1*8pi, decay window [1, 16]; small-mass global regime"),
    "small_mass_picard_2d": (_small_mass_picard_2d, "small_mass_2d datum solved by Picard iteration on (0, 0.5]"),
    "small_mass_1d": (lambda: _small_mass(1), "d=1 Gaussian of mass 0.1*2pi"),
    "small_mass_3d": (lambda: _small_mass(3), "d=3 Gaussian of mass 0.1*18pi, short run"),
    "supercritical_2d": (_supercritical_2d, "d=2 Gaussian of mass 1.25*8pi on a tight box; expected to concentrate"),
    "subcritical_2d": (_subcritical_2d, "supercritical_2d geometry at mass 0.5*8pi; expected to decay"),
    "heat_oracle_1d": (lambda: _heat_oracle(1), "drift-free Gaussian against the closed-form heat solution, d=1"),
    "heat_oracle_2d": (lambda: _heat_oracle(2), "drift-free Gaussian against the closed-form heat solution, d=2"),
    "heat_oracle_3d": (lambda: _heat_oracle(3), "drift-free Gaussian against the closed-form heat solution, d=3"),
    "bounded_window_2d": (_bounded_window_2d, "moderate-mass two-bump datum over a short bounded window"),
    "mpks_boundary_2d": (lambda: _mpks_boundary(2), "d=2 Gaussian at mass 2*d^2*pi"),
    "mpks_boundary_3d": (lambda: _mpks_boundary(3), "d=3 Gaussian at mass 2*d^2*pi"),
}


def preset_list() -> list:
    """(name, description) for every built-in scenario."""
    return [(k, v[1]) for k, v in _PRESETS.items()]


def preset(name: str) -> RunConfig:
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(_PRESETS)}")
    return _PRESETS[name][0]()
