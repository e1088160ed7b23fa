"""Static SVG plots of series, sweep reports and density snapshots."""
from __future__ import annotations

import logging
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fields import DiagnosticsRecord  # noqa: E402
from .relaxation import SweepReport  # noqa: E402
from .timeloop import Trajectory  # noqa: E402

log = logging.getLogger(__name__)

SERIES_KEYS = ("energy", "bd_entropy", "free_energy", "fisher")


def _series_plot(records, out_dir, stem, errors):
    if not records:
        log.warning("empty series: no plot written")
        return []
    t = np.array([r.t for r in records])
    keys = [k for k in SERIES_KEYS if not all(math.isnan(getattr(r, k)) for r in records)]
    vals = {k: np.array([getattr(r, k) for r in records]) for k in keys}
    bad = [k for k in keys if not np.all(np.isfinite(vals[k]))] + \
        (["t"] if not np.all(np.isfinite(t)) else [])
    if bad:
        errors.append(f"{stem}: non-finite values in {', '.join(bad)}; plot skipped")
        log.error(errors[-1])
        return []
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in keys:
        ax.plot(t, vals[k], label=k)
    ax.set_xlabel("t")
    ax.legend()
    path = os.path.join(out_dir, f"{stem}.svg")
    fig.savefig(path)
    plt.close(fig)
    return [path]


def _sweep_plot(rep: SweepReport, out_dir, stem, errors):
    eps = np.array(rep.eps_list)
    err = np.array(rep.err_rho)
    ok = np.isfinite(err) & (err > 0)
    if not ok.any():
        errors.append(f"{stem}: no finite errors; plot skipped")
        log.error(errors[-1])
        return []
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(eps[ok], err[ok], "o", label="err_rho")
    if math.isfinite(rep.fitted_rate):
        c = np.mean(np.log(err[ok]) - rep.fitted_rate * np.log(eps[ok]))
        e = np.geomspace(eps[ok].min(), eps[ok].max(), 50)
        ax.loglog(e, np.exp(c) * e ** rep.fitted_rate, "-", label=f"slope {rep.fitted_rate:.2f}")
    ax.set_xlabel("eps")
    ax.set_ylabel("error")
    ax.legend()
    path = os.path.join(out_dir, f"{stem}.svg")
    fig.savefig(path)
    plt.close(fig)
    return [path]


def _snapshot_plot(traj: Trajectory, out_dir, stem, errors):
    if len(traj) == 0:
        log.warning("empty trajectory: no plot written")
        return []
    if traj.grid.dim != 1:
        log.warning("density snapshots are drawn for 1D grids only")
        return []
    if not all(np.all(np.isfinite(r)) for r in traj.rho):
        errors.append(f"{stem}: non-finite density; plot skipped")
        log.error(errors[-1])
        return []
    x = traj.grid.coords()[0]
    idx = np.unique(np.linspace(0, len(traj) - 1, min(6, len(traj))).astype(int))
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in idx:
        ax.plot(x, traj.rho[i], label=f"t={traj.t[i]:.4g}")
    ax.set_xlabel("x")
    ax.set_ylabel("rho")
    ax.legend()
    path = os.path.join(out_dir, f"{stem}.svg")
    fig.savefig(path)
    plt.close(fig)
    return [path]


def emit_plots(obj, out_dir, stem: str | None = None, errors: list | None = None) -> list[str]:
    """Write SVG files for a record list, a sweep report or a trajectory.

    Returns the written paths.  Plots that cannot be drawn are skipped;
    the reason is logged and appended to ``errors`` when given.
    """
    errors = errors if errors is not None else []
    os.makedirs(out_dir, exist_ok=True)
    if isinstance(obj, SweepReport):
        return _sweep_plot(obj, out_dir, stem or "sweep_err_rho", errors)
    if isinstance(obj, Trajectory):
        return _snapshot_plot(obj, out_dir, stem or "density_snapshots", errors)
    records = list(obj)
    if records and not isinstance(records[0], DiagnosticsRecord):
        raise TypeError("expected DiagnosticsRecord items")
    return _series_plot(records, out_dir, stem or "functionals", errors)
