"""State containers, vacuum floor, doping projection and checkpoints."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields

import numpy as np

from .grid import PeriodicGrid, make_grid
from .poisson import solve_poisson

DEFAULT_DELTA_FACTOR = 1e-8


def enforce_floor(rho, delta: float):
    """``max(rho, delta)``; for use inside divisions and logarithms only."""
    return np.maximum(rho, delta)


def velocity_from_momentum(m, rho, delta: float):
    return m / np.maximum(rho, delta)


def project_doping(grid: PeriodicGrid, g_raw, rho0):
    """Shift ``g_raw`` by a constant so that its mean matches that of ``rho0``."""
    return g_raw + (grid.mean(rho0) - grid.mean(g_raw))


def mass(grid: PeriodicGrid, rho) -> float:
    return float(grid.integrate(rho))


def default_delta(rho0) -> float:
    return DEFAULT_DELTA_FACTOR * float(np.max(rho0))


@dataclass
class QnspState:
    grid: PeriodicGrid
    rho: np.ndarray
    m: np.ndarray          # shape (dim, *grid.shape)
    V: np.ndarray
    eps: float
    gamma: float
    g: np.ndarray
    delta_floor: float
    t: float = 0.0

    @classmethod
    def create(cls, grid, rho, g=None, m=None, *, eps, gamma, delta_floor=None, t=0.0):
        """Build a state, projecting ``g`` onto compatibility and solving for ``V``."""
        rho = np.asarray(rho, dtype=float)
        g = np.full_like(rho, grid.mean(rho)) if g is None else project_doping(grid, np.asarray(g, float), rho)
        if m is None:
            m = np.zeros((grid.dim,) + grid.shape)
        m = np.asarray(m, dtype=float).reshape((grid.dim,) + grid.shape)
        if delta_floor is None:
            delta_floor = default_delta(rho)
        if eps <= 0:
            raise ValueError("eps must be positive")
        if gamma <= 1:
            raise ValueError("gamma must exceed 1")
        V = solve_poisson(grid, rho, g)
        return cls(grid, rho, m, V, float(eps), float(gamma), g, float(delta_floor), float(t))

    @property
    def u(self):
        return velocity_from_momentum(self.m, self.rho, self.delta_floor)

    def replace(self, **kw) -> "QnspState":
        return dataclasses.replace(self, **kw)


@dataclass
class QddState:
    grid: PeriodicGrid
    rho: np.ndarray
    V: np.ndarray
    gamma: float
    g: np.ndarray
    delta_floor: float
    t: float = 0.0

    @classmethod
    def create(cls, grid, rho, g=None, *, gamma, delta_floor=None, t=0.0):
        rho = np.asarray(rho, dtype=float)
        g = np.full_like(rho, grid.mean(rho)) if g is None else project_doping(grid, np.asarray(g, float), rho)
        if delta_floor is None:
            delta_floor = default_delta(rho)
        if gamma <= 1:
            raise ValueError("gamma must exceed 1")
        V = solve_poisson(grid, rho, g)
        return cls(grid, rho, V, float(gamma), g, float(delta_floor), float(t))

    def replace(self, **kw) -> "QddState":
        return dataclasses.replace(self, **kw)


@dataclass
class DiagnosticsRecord:
    """One time sample of the monitored functionals.

    Field order is the NDJSON key order.  Entries that do not apply to a
    given solver are NaN (e.g. ``kinetic`` for QDD).  ``cum_*`` columns
    are time integrals of dissipation rates from the start of the run
    and ``*_defect`` the corresponding balance defects.
    """

    t: float = 0.0
    mass: float = float("nan")
    energy: float = float("nan")
    bd_entropy: float = float("nan")
    fisher: float = float("nan")
    pressure_energy: float = float("nan")
    potential_energy: float = float("nan")
    kinetic: float = float("nan")
    free_energy: float = float("nan")
    diss_visc: float = float("nan")
    diss_antisym: float = float("nan")
    diss_damp: float = float("nan")
    diss_log: float = float("nan")
    diss_pressure: float = float("nan")
    diss_charge: float = float("nan")
    diss_qdd: float = float("nan")
    appendixA_lhs: float = float("nan")
    appendixA_rhs: float = float("nan")
    rho_gamma: float = float("nan")
    hess_V: float = float("nan")
    min_rho: float = float("nan")
    cum_energy_diss: float = float("nan")
    cum_bd_diss: float = float("nan")
    cum_damp_scaled: float = float("nan")
    energy_defect: float = float("nan")
    bd_defect: float = float("nan")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in self.keys()}

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticsRecord":
        return cls(**{k: float(d[k]) if d.get(k) is not None else float("nan") for k in cls.keys()})

    def __eq__(self, other):
        if not isinstance(other, DiagnosticsRecord):
            return NotImplemented
        a, b = self.to_dict(), other.to_dict()
        return all(a[k] == b[k] or (np.isnan(a[k]) and np.isnan(b[k])) for k in a)


# ----------------------------------------------------------------------
# checkpoints

def _encode(arr):
    return np.asarray(arr, dtype=float).ravel().tolist()


def checkpoint_dict(state) -> dict:
    grid = state.grid
    m = getattr(state, "m", None)
    return {
        "t": state.t,
        "n": grid.n,
        "dim": grid.dim,
        "L": grid.length,
        "eps": getattr(state, "eps", None),
        "gamma": state.gamma,
        "delta": state.delta_floor,
        "rho": _encode(state.rho),
        "m": None if m is None else _encode(m),
        "V": _encode(state.V),
        "g": _encode(state.g),
    }


def write_checkpoint(state, path) -> None:
    """One NDJSON line; floats are written with ``repr`` precision so reading back is bit-exact."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(checkpoint_dict(state), allow_nan=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc


def state_from_checkpoint(d: dict):
    grid = make_grid(int(d["dim"]), int(d["n"]), float(d["L"]))
    shape = grid.shape
    rho = np.array(d["rho"], dtype=float).reshape(shape)
    V = np.array(d["V"], dtype=float).reshape(shape)
    g = np.array(d["g"], dtype=float).reshape(shape)
    if d.get("m") is not None and d.get("eps") is not None:
        m = np.array(d["m"], dtype=float).reshape((grid.dim,) + shape)
        return QnspState(grid, rho, m, V, float(d["eps"]), float(d["gamma"]), g,
                         float(d["delta"]), float(d["t"]))
    return QddState(grid, rho, V, float(d["gamma"]), g, float(d["delta"]), float(d["t"]))


def read_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        line = fh.readline()
    return state_from_checkpoint(json.loads(line))
