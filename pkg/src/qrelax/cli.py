"""Command line entry point: ``qrelax {qnsp,qdd,sweep,verify}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import qdd as qdd_mod
from . import qnsp as qnsp_mod
from .config import Config, VerifyConfig, build_field, config_from_dict, parse_config
from .errors import ConfigError, NumericalError, QrelaxError
from .fields import QddState, QnspState, project_doping, write_checkpoint
from .relaxation import SweepConfig, bound_variation, hilbert_velocity, run_qdd_reference, run_sweep
from .series import write_series
from .timeloop import DtPolicy
from .verify import run_verify

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2
EXIT_PROPERTY = 3

log = logging.getLogger("qrelax")


def _load_config(args, mode) -> Config:
    if args.config is None:
        if mode == "verify":
            return config_from_dict({"mode": "verify"})
        raise ConfigError("--config", f"mode '{mode}' needs a config file")
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {args.config}: {exc}") from exc
    cfg = parse_config(text)
    if cfg.mode != mode:
        raise ConfigError("mode", f"config is for '{cfg.mode}' but subcommand is '{mode}'")
    return cfg


def _initial(cfg: Config):
    grid = cfg.make_grid()
    rho0 = build_field(cfg.initial.rho0, grid, "rho")
    g = build_field(cfg.initial.g, grid, "g")
    if np.min(rho0) <= 0:
        raise ConfigError("initial.rho0", "initial density must be positive")
    return grid, rho0, project_doping(grid, g, rho0)


def _policy(cfg: Config) -> DtPolicy:
    return DtPolicy(cfl=cfg.time.cfl, dt=cfg.time.dt)


def _out_dir(args, cfg):
    out = args.out or cfg.output.dir
    os.makedirs(out, exist_ok=True)
    return out


def _write_snapshots(traj, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, t in enumerate(traj.t):
            rec = {"t": t, "n": traj.grid.n, "dim": traj.grid.dim, "L": traj.grid.length,
                   "eps": traj.eps, "gamma": traj.gamma, "delta": traj.delta_floor,
                   "rho": traj.rho[i].ravel().tolist(),
                   "m": None if traj.m is None else traj.m[i].ravel().tolist(),
                   "V": traj.V[i].ravel().tolist(), "g": traj.g.ravel().tolist()}
            fh.write(json.dumps(rec) + "\n")


def _maybe_plot(args, cfg, items, out):
    if not (args.plots or cfg.output.plots):
        return []
    from .plots import emit_plots
    files, errors = [], []
    for obj, stem in items:
        files += emit_plots(obj, out, stem, errors)
    for e in errors:
        print(f"plot skipped: {e}", file=sys.stderr)
    return files


def cmd_qnsp(args) -> int:
    cfg = _load_config(args, "qnsp")
    grid, rho0, g = _initial(cfg)
    state = QnspState.create(grid, rho0, g, eps=cfg.physics.eps, gamma=cfg.physics.gamma,
                             delta_floor=cfg.physics.delta_floor)
    if cfg.initial.u0 == "hilbert":
        u = hilbert_velocity(grid, rho0, state.V, state.gamma, state.eps, state.delta_floor)
        state = state.replace(m=rho0 * u)
    traj, recs = qnsp_mod.qnsp_run(state, cfg.time.t_end, _policy(cfg), cfg.time.record_every)
    out = _out_dir(args, cfg)
    write_series(recs, os.path.join(out, "series.ndjson"))
    _write_snapshots(traj, os.path.join(out, "snapshots.ndjson"))
    final = state.replace(rho=traj.rho[-1], m=traj.m[-1], V=traj.V[-1], t=traj.t[-1])
    write_checkpoint(final, os.path.join(out, "final_checkpoint.ndjson"))
    _maybe_plot(args, cfg, [(recs, "functionals"), (traj, "density_snapshots")], out)
    last = recs[-1]
    print(f"qnsp t={last.t:.6g} energy={last.energy:.10g} energy_defect={last.energy_defect:.3e} "
          f"bd_defect={last.bd_defect:.3e} mass={last.mass:.15g}")
    return EXIT_OK


def cmd_qdd(args) -> int:
    cfg = _load_config(args, "qdd")
    grid, rho0, g = _initial(cfg)
    state = QddState.create(grid, rho0, g, gamma=cfg.physics.gamma, delta_floor=cfg.physics.delta_floor)
    traj, recs = qdd_mod.qdd_run(state, cfg.time.t_end, _policy(cfg), cfg.time.record_every)
    out = _out_dir(args, cfg)
    write_series(recs, os.path.join(out, "series.ndjson"))
    _write_snapshots(traj, os.path.join(out, "snapshots.ndjson"))
    final = state.replace(rho=traj.rho[-1], V=traj.V[-1], t=traj.t[-1])
    write_checkpoint(final, os.path.join(out, "final_checkpoint.ndjson"))
    _maybe_plot(args, cfg, [(recs, "functionals"), (traj, "density_snapshots")], out)
    last = recs[-1]
    print(f"qdd t={last.t:.6g} energy={last.energy:.10g} energy_defect={last.energy_defect:.3e} "
          f"free_energy_defect={last.bd_defect:.3e} mass={last.mass:.15g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args, "sweep")
    grid, rho0, g = _initial(cfg)
    if cfg.time.record_every is None:
        raise ConfigError("time.record_every", "required for mode 'sweep'")
    scfg = SweepConfig(rho0=rho0, g=g, eps_list=list(cfg.physics.eps_list), t_end=cfg.time.t_end,
                       record_every=cfg.time.record_every, dim=grid.dim, n=grid.n,
                       length=grid.length, gamma=cfg.physics.gamma,
                       preparation="well" if cfg.initial.u0 == "hilbert" else "ill",
                       cfl=cfg.time.cfl, qdd_dt=cfg.time.dt, delta_floor=cfg.physics.delta_floor)
    out = _out_dir(args, cfg)
    ref = run_qdd_reference(scfg)
    write_series(ref[1], os.path.join(out, "qdd_series.ndjson"))
    plots = [(ref[1], "qdd_functionals")]

    def member(eps, traj, recs):
        write_series(recs, os.path.join(out, f"qnsp_eps{eps:g}_series.ndjson"))
        plots.append((recs, f"qnsp_eps{eps:g}_functionals"))

    rep = run_sweep(scfg, sequential=args.sequential or args.workers <= 1, workers=args.workers,
                    reference=ref, on_member=member)
    doc = rep.to_dict()
    doc["bound_variation"] = bound_variation(rep) if rep.bounds_table else {}
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    _maybe_plot(args, cfg, [(rep, "sweep_err_rho")] + plots, out)
    for e, a, b, c in zip(rep.eps_list, rep.err_rho, rep.err_V, rep.err_lambda):
        print(f"eps={e:g} err_rho={a:.6e} err_V={b:.6e} err_lambda={c:.6e}")
    print(f"fitted_rate={rep.fitted_rate:.4f}")
    if rep.partial:
        for k, v in rep.failures.items():
            print(f"eps={k} failed: {v}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load_config(args, "verify")
    v: VerifyConfig = cfg.verify
    seed = args.seed if args.seed is not None else v.seed
    rep = run_verify(seed=seed, n=v.n, n_2d=v.n_2d, bohm_samples=v.bohm_samples,
                     log_hessian_samples=v.log_hessian_samples, log_hessian_samples_2d=v.log_hessian_samples_2d,
                     interpolation_samples=v.interpolation_samples,
                     derivative_fault=v.derivative_fault)
    for line in rep.lines():
        print(line)
    return EXIT_OK if rep.passed else EXIT_PROPERTY


COMMANDS = {"qnsp": cmd_qnsp, "qdd": cmd_qdd, "sweep": cmd_sweep, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qrelax", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--out", help="output directory (overrides output.dir)")
        s.add_argument("--seed", type=int, help="seed for randomized ensembles")
        s.add_argument("--sequential", action="store_true", help="run sweep members one by one")
        s.add_argument("--workers", type=int, default=1, help="processes for sweep members")
        s.add_argument("--plots", action="store_true", help="write SVG plots")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except QrelaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
