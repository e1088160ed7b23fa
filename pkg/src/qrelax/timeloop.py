"""Shared pieces of the QNSP and QDD run loops."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NaNError
from .grid import PeriodicGrid

TIME_TOL = 1e-13


@dataclass
class DtPolicy:
    """Step-size policy.

    With ``dt`` set, that fixed step is used (and checked against the
    stability bound); otherwise ``cfl`` times the solver's bound is
    recomputed every step.  Steps are shortened to land exactly on record
    times.
    """

    cfl: float = 0.4
    dt: float | None = None

    def __post_init__(self):
        if not self.cfl > 0:
            raise ValueError("cfl must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")


def as_policy(policy) -> DtPolicy:
    if policy is None:
        return DtPolicy()
    if isinstance(policy, DtPolicy):
        return policy
    return DtPolicy(dt=float(policy))


@dataclass
class Trajectory:
    """Snapshots at record times.  ``m`` is None for QDD runs."""

    grid: PeriodicGrid
    t: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    V: list = field(default_factory=list)
    m: list | None = None
    eps: float | None = None
    gamma: float | None = None
    g: np.ndarray | None = None
    delta_floor: float | None = None

    def append(self, state):
        self.t.append(float(state.t))
        self.rho.append(np.array(state.rho, copy=True))
        self.V.append(np.array(state.V, copy=True))
        if self.m is not None:
            self.m.append(np.array(state.m, copy=True))

    def __len__(self):
        return len(self.t)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.t)


def record_times(t0: float, t_end: float, record_every: float | None) -> list[float]:
    """Record times after ``t0``: multiples of the cadence up to ``t_end``, plus ``t_end``."""
    out = []
    if record_every is not None:
        if not record_every > 0:
            raise ValueError("record_every must be positive")
        j = 1
        while True:
            tj = t0 + j * record_every
            if tj > t_end - TIME_TOL * max(1.0, abs(t_end)):
                break
            out.append(tj)
            j += 1
    if t_end > t0 + TIME_TOL:
        out.append(t_end)
    return out


def check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NaNError("non-finite values in the state")
