"""JSON run configuration with field-path validation.

Example::

    {
      "mode": "qnsp",
      "grid": {"dim": 1, "n": 128, "length": 1.0},
      "physics": {"gamma": 2.0, "eps": 0.2, "delta_floor": 1e-8},
      "initial": {"rho0": {"family": "cosine", "mean": 1.0, "amplitude": 0.3, "wavenumber": 1},
                  "u0": "zero",
                  "g": {"family": "constant", "value": 1.0}},
      "time": {"t_end": 0.02, "cfl": 0.4, "record_every": 0.001},
      "output": {"dir": "out", "plots": false}
    }
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .fields import read_checkpoint
from .grid import PeriodicGrid, make_grid

MODES = ("qnsp", "qdd", "sweep", "verify")
FAMILIES = ("constant", "cosine", "gaussian", "checkpoint")
U0_MODES = ("zero", "hilbert")


@dataclass(frozen=True)
class GridConfig:
    dim: int = 1
    n: int = 128
    length: float = 1.0


@dataclass(frozen=True)
class PhysicsConfig:
    gamma: float = 2.0
    eps: float | None = None
    eps_list: tuple | None = None
    delta_floor: float = 1e-8


@dataclass(frozen=True)
class FieldSpec:
    """Named analytic family.

    ``constant``: ``value``.  ``cosine``: ``mean + amplitude cos(2 pi k.x / L)``
    with integer ``wavenumber`` (scalar or per-axis list).  ``gaussian``:
    ``base + amplitude exp(-|x - center|^2 / (2 width^2))`` summed over
    periodic images.  ``checkpoint``: density (or doping) read from a
    checkpoint file at ``path``.
    """

    family: str = "constant"
    value: float = 1.0
    mean: float = 1.0
    amplitude: float = 0.0
    wavenumber: tuple = (1,)
    base: float = 1.0
    center: tuple | None = None
    width: float = 0.1
    path: str | None = None


@dataclass(frozen=True)
class InitialConfig:
    rho0: FieldSpec = field(default_factory=lambda: FieldSpec(family="cosine", mean=1.0, amplitude=0.3))
    u0: str = "zero"
    g: FieldSpec = field(default_factory=FieldSpec)


@dataclass(frozen=True)
class TimeConfig:
    t_end: float = 0.02
    cfl: float = 0.4
    record_every: float | None = None
    dt: float | None = None


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    plots: bool = False


@dataclass(frozen=True)
class VerifyConfig:
    seed: int = 0
    n: int = 128
    n_2d: int = 32
    bohm_samples: int = 100
    log_hessian_samples: int = 100
    log_hessian_samples_2d: int = 25
    interpolation_samples: int = 200
    derivative_fault: float = 0.0


@dataclass(frozen=True)
class Config:
    mode: str
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def make_grid(self) -> PeriodicGrid:
        return make_grid(self.grid.dim, self.grid.n, self.grid.length)


# ----------------------------------------------------------------------
# parsing

def _num(d, key, path, default, *, integer=False, positive=False, allow_none=False):
    if key not in d:
        return default
    v = d[key]
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{path}.{key}", "must be finite")
    if integer:
        if int(v) != v:
            raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
    if positive and not v > 0:
        raise ConfigError(f"{path}.{key}", f"must be positive, got {v!r}")
    return v


def _section(d, key, path):
    v = d.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(f"{path}{key}", "expected an object")
    return v


def _no_extra(d, allowed, path):
    extra = set(d) - set(allowed)
    if extra:
        raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown field")


def _int_tuple(v, path):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v or any(isinstance(x, bool) or not isinstance(x, (int, float)) or int(x) != x for x in v):
        raise ConfigError(path, "expected an integer or a list of integers")
    return tuple(int(x) for x in v)


def _float_tuple(v, path):
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
        raise ConfigError(path, "expected a list of numbers")
    return tuple(float(x) for x in v)


def _field_spec(d, path) -> FieldSpec:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object with a 'family' field")
    fam = d.get("family")
    if fam not in FAMILIES:
        raise ConfigError(f"{path}.family", f"expected one of {FAMILIES}, got {fam!r}")
    _no_extra(d, [f for f in FieldSpec.__dataclass_fields__], path)
    spec = FieldSpec(
        family=fam,
        value=_num(d, "value", path, 1.0),
        mean=_num(d, "mean", path, 1.0),
        amplitude=_num(d, "amplitude", path, 0.0),
        wavenumber=_int_tuple(d["wavenumber"], f"{path}.wavenumber") if "wavenumber" in d else (1,),
        base=_num(d, "base", path, 1.0),
        center=_float_tuple(d["center"], f"{path}.center") if d.get("center") is not None else None,
        width=_num(d, "width", path, 0.1, positive=True),
        path=d.get("path"),
    )
    if fam == "checkpoint" and not isinstance(spec.path, str):
        raise ConfigError(f"{path}.path", "checkpoint family needs a file path")
    return spec


def parse_config(text: str) -> Config:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw) -> Config:
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be an object")
    _no_extra(raw, ["mode", "grid", "physics", "initial", "time", "output", "verify"], "$")
    mode = raw.get("mode")
    if mode not in MODES:
        raise ConfigError("mode", f"expected one of {MODES}, got {mode!r}")

    g = _section(raw, "grid", "")
    _no_extra(g, ["dim", "n", "length"], "grid")
    grid = GridConfig(
        dim=_num(g, "dim", "grid", 1, integer=True),
        n=_num(g, "n", "grid", 128, integer=True),
        length=_num(g, "length", "grid", 1.0, positive=True),
    )
    if grid.dim not in (1, 2, 3):
        raise ConfigError("grid.dim", f"must be 1, 2 or 3, got {grid.dim}")
    if grid.n < 8 or grid.n % 2:
        raise ConfigError("grid.n", f"must be even and >= 8, got {grid.n}")

    p = _section(raw, "physics", "")
    _no_extra(p, ["gamma", "eps", "eps_list", "delta_floor"], "physics")
    gamma = _num(p, "gamma", "physics", 2.0)
    if not gamma > 1:
        raise ConfigError("physics.gamma", "gamma > 1 required by rho^gamma/(gamma-1)")
    eps = _num(p, "eps", "physics", None, positive=True, allow_none=True)
    eps_list = None
    if p.get("eps_list") is not None:
        eps_list = _float_tuple(p["eps_list"], "physics.eps_list")
        if len(eps_list) == 0 or any(e <= 0 for e in eps_list):
            raise ConfigError("physics.eps_list", "entries must be positive")
        if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
            raise ConfigError("physics.eps_list", "must be strictly decreasing")
    physics = PhysicsConfig(gamma=gamma, eps=eps, eps_list=eps_list,
                            delta_floor=_num(p, "delta_floor", "physics", 1e-8, positive=True))
    if mode == "qnsp" and eps is None:
        raise ConfigError("physics.eps", "required for mode 'qnsp'")
    if mode == "sweep" and eps_list is None:
        raise ConfigError("physics.eps_list", "required for mode 'sweep'")

    i = _section(raw, "initial", "")
    _no_extra(i, ["rho0", "u0", "g"], "initial")
    u0 = i.get("u0", "zero")
    if u0 not in U0_MODES:
        raise ConfigError("initial.u0", f"expected one of {U0_MODES}, got {u0!r}")
    initial = InitialConfig(
        rho0=_field_spec(i["rho0"], "initial.rho0") if "rho0" in i else InitialConfig().rho0,
        u0=u0,
        g=_field_spec(i["g"], "initial.g") if "g" in i else FieldSpec(),
    )

    t = _section(raw, "time", "")
    _no_extra(t, ["t_end", "cfl", "record_every", "dt"], "time")
    time_cfg = TimeConfig(
        t_end=_num(t, "t_end", "time", 0.02),
        cfl=_num(t, "cfl", "time", 0.4, positive=True),
        record_every=_num(t, "record_every", "time", None, positive=True, allow_none=True),
        dt=_num(t, "dt", "time", None, positive=True, allow_none=True),
    )
    if time_cfg.t_end < 0:
        raise ConfigError("time.t_end", "must be nonnegative")

    o = _section(raw, "output", "")
    _no_extra(o, ["dir", "plots"], "output")
    if not isinstance(o.get("dir", "out"), str):
        raise ConfigError("output.dir", "expected a string")
    if not isinstance(o.get("plots", False), bool):
        raise ConfigError("output.plots", "expected true or false")
    output = OutputConfig(dir=o.get("dir", "out"), plots=o.get("plots", False))

    v = _section(raw, "verify", "")
    _no_extra(v, list(VerifyConfig.__dataclass_fields__), "verify")
    vd = VerifyConfig()
    verify = VerifyConfig(**{
        k: _num(v, k, "verify", getattr(vd, k), integer=isinstance(getattr(vd, k), int))
        for k in VerifyConfig.__dataclass_fields__
    })
    return Config(mode=mode, grid=grid, physics=physics, initial=initial,
                  time=time_cfg, output=output, verify=verify)


def _plain(obj):
    if isinstance(obj, tuple):
        return [_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items() if v is not None}
    return obj


def serialize(cfg: Config) -> str:
    return json.dumps(_plain(asdict(cfg)), indent=2)


# ----------------------------------------------------------------------
# initial fields

def build_field(spec: FieldSpec, grid: PeriodicGrid, kind: str = "rho") -> np.ndarray:
    """Sample a named family on the grid.  ``kind`` picks the checkpoint field."""
    if spec.family == "constant":
        return np.full(grid.shape, spec.value)
    x = grid.coords()
    if spec.family == "cosine":
        k = spec.wavenumber
        if len(k) == 1:
            k = k + (0,) * (grid.dim - 1)
        if len(k) != grid.dim:
            raise ConfigError("initial.wavenumber", f"expected {grid.dim} entries")
        phase = sum(kj * xj for kj, xj in zip(k, x)) * (2.0 * np.pi / grid.length)
        return spec.mean + spec.amplitude * np.cos(phase)
    if spec.family == "gaussian":
        center = spec.center if spec.center is not None else (0.5 * grid.length,) * grid.dim
        if len(center) != grid.dim:
            raise ConfigError("initial.center", f"expected {grid.dim} entries")
        out = np.zeros(grid.shape)
        shifts = range(-2, 3)
        for img in np.ndindex(*(len(shifts),) * grid.dim):
            r2 = 0.0
            for j in range(grid.dim):
                r2 = r2 + (x[j] - center[j] + shifts[img[j]] * grid.length) ** 2
            out += np.exp(-r2 / (2.0 * spec.width ** 2))
        return spec.base + spec.amplitude * out
    if spec.family == "checkpoint":
        state = read_checkpoint(spec.path)
        if state.grid.shape != grid.shape:
            raise ConfigError("initial.path", "checkpoint grid does not match the configured grid")
        return np.array(state.g if kind == "g" else state.rho)
    raise ConfigError("initial.family", f"unknown family {spec.family!r}")
