"""Command-line front end: ``rieszflow [command] [--config FILE] [--key value ...]``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort, 4 I/O error.
``RIESZFLOW_THREADS`` caps the BLAS/OpenMP thread pools.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as cfgmod
from .dynamics import FlowConfig, FlowState, _eulerian_monitor, regularity_monitor, run_flow
from .energy import mmd_energy, pl_report, velocity_field, write_reports_jsonl
from .errors import (
    ConfigError,
    DomainMismatch,
    IoError,
    MassMismatch,
    NonzeroMean,
    RieszFlowError,
    SizeExceeded,
    TorusUnsupported,
    ValidationError,
)
from .jko import jko_step
from .kernels import HeatKernelSpec, Kernel, eval_kernel, heat_kernel, torus_green, wrap_difference
from .measures import (
    GridMeasure,
    ParticleMeasure,
    holder_seminorm,
    load_grid,
    load_particles_csv,
    save_grid,
    save_particles_csv,
    support_radius,
)
from .plotdata import emit_plotdata
from .probe import criticality_exponent, lagrangian_critical_check, no_local_min_scan

log = logging.getLogger("rieszflow")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
_CONFIG_LIKE = (ConfigError, DomainMismatch, TorusUnsupported, NonzeroMean, MassMismatch, SizeExceeded)


# --- building objects from a config ------------------------------------------------


def build_kernel(cfg: cfgmod.RunConfig) -> Kernel:
    if cfg.domain == "torus":
        return Kernel.coulomb(cfg.dim, torus=True)
    if cfg.kernel == "coulomb":
        return Kernel.coulomb(cfg.dim)
    if cfg.kernel == "energy_distance":
        return Kernel.energy_distance(cfg.dim)
    if cfg.kernel == "log":
        return Kernel.log(cfg.dim)
    return Kernel.riesz(cfg.kernel_s, cfg.dim)


def _load_file(path: str, cfg):
    if path.endswith(".csv"):
        return load_particles_csv(path, torus=cfg.domain == "torus")
    g = load_grid(path)
    if g.dim != cfg.dim or g.torus != (cfg.domain == "torus"):
        raise ValidationError("init", f"{path} holds a {g.domain} {g.dim} grid")
    return g


def build_measure(spec: cfgmod.MeasureSpec, cfg: cfgmod.RunConfig, rng: np.random.Generator, particles=False):
    """Grid density on the torus (particles at cell centers when ``particles``),
    seeded samples on ``R^d``."""
    if spec.kind == "file":
        m = _load_file(spec.path, cfg)
        if particles and isinstance(m, GridMeasure):
            return ParticleMeasure(*m.atoms(), torus=m.torus)
        return m
    if cfg.domain == "torus":
        if spec.kind == "cosine":
            mode, amp = spec.get("mode", 1.0), spec.get("amp", 0.5)
            func = lambda x: 1.0 + amp * np.cos(2 * np.pi * mode * x[..., 0])  # noqa: E731
        elif spec.kind == "uniform":
            func = lambda x: np.ones(x.shape[:-1])  # noqa: E731
        else:
            mean, std = spec.get("mean", 0.5), spec.get("std", 0.1)
            func = lambda x: 1e-12 + np.exp(-np.sum(wrap_difference(x - mean) ** 2, -1) / (2 * std**2))  # noqa: E731
        g = GridMeasure.from_function(func, cfg.grid, torus=True)
        return ParticleMeasure(*g.atoms(), torus=True) if particles else g
    n, d = cfg.n_particles, cfg.dim
    if spec.kind == "gaussian":
        log.info("rng draw: normal size=(%d, %d)", n, d)
        pts = rng.normal(spec.get("mean", 0.0), spec.get("std", 1.0), size=(n, d))
    else:
        log.info("rng draw: uniform size=(%d, %d)", n, d)
        pts = rng.uniform(spec.get("lo", 0.0), spec.get("hi", 1.0), size=(n, d))
    return ParticleMeasure.uniform(pts)


def build_problem(cfg: cfgmod.RunConfig, particles=False):
    rng = np.random.default_rng(cfg.seed)
    log.info("rng seed %d", cfg.seed)
    k = build_kernel(cfg)
    mu = build_measure(cfg.init, cfg, rng, particles)
    nu = build_measure(cfg.target, cfg, rng)
    if abs(mu.mass - nu.mass) > 1e-9:
        raise MassMismatch(f"init mass {mu.mass} differs from target mass {nu.mass}")
    return k, mu, nu


def auto_dt(k, init, nu, cfg) -> float:
    """``dt = 0.25 / sup |Dv|`` at start-up (half the enforced CFL limit), at most ``t_end / 100``,
    rounded so that ``t_end`` is a whole number of steps."""
    if isinstance(init, GridMeasure):
        sup_dv = _eulerian_monitor(init, k, nu, cfg.gamma).sup_dv
    else:
        sup_dv = regularity_monitor(k, init, nu, cfg.gamma).sup_dv
    dt = min(0.25 / max(sup_dv, 1e-12), cfg.t_end / 100.0)
    return cfg.t_end / math.ceil(cfg.t_end / dt - 1e-9)


def flow_config(cfg: cfgmod.RunConfig) -> FlowConfig:
    k, mu, nu = build_problem(cfg)
    if cfg.scheme == "eulerian":
        if not isinstance(mu, GridMeasure):
            raise ValidationError("init", "the eulerian scheme needs a grid density")
        init = mu
    else:
        init = FlowState.from_density(mu) if isinstance(mu, GridMeasure) else FlowState.from_particles(mu)
    dt = cfg.dt if cfg.dt is not None else auto_dt(k, init, nu, cfg)
    log.info("dt = %g", dt)
    return FlowConfig(k, nu, init, dt, cfg.t_end, cfg.record_every, cfg.gamma, cfg.scheme, cfg.order)


# --- subcommands -----------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {a: _jsonable(b) for a, b in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    return v


def _write_jsonl(path, records):
    try:
        with open(path, "w") as fh:
            for r in records:
                fh.write(json.dumps(_jsonable(r)) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def cmd_simulate(cfg, out: Path, stdout) -> int:
    fc = flow_config(cfg)
    traj = run_flow(fc)
    traj.to_csv(out / "trajectory.csv")
    try:
        write_reports_jsonl([r.report for r in traj.records], out / "reports.jsonl")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    for kind in ("energy", "pl", "bounds"):
        emit_plotdata(traj, kind, out, stem="plot")
    final = traj.final_state
    if isinstance(final, GridMeasure):
        save_grid(final, out / "final_density.bin")
    else:
        save_particles_csv(final.measure(), out / "final_particles.csv")
    last = traj.records[-1]
    print(f"t={last.t:.6g} energy={last.report.energy:.6e} records={len(traj)} dt={fc.dt:.4g}", file=stdout)
    if traj.error is not None:
        print(f"aborted: {traj.error}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_jko(cfg, out: Path, stdout) -> int:
    k, mu, nu = build_problem(cfg, particles=True)
    rows = [("step", "energy", "w2_cost", "proximal_value")]
    rows.append((0, mmd_energy(k, mu, nu), 0.0, float("nan")))
    for i in range(1, cfg.steps + 1):
        res = jko_step(k, mu, nu, cfg.tau, solver=cfg.solver, epsilon=cfg.epsilon)
        mu = res.measure
        rows.append((i, res.energy, res.w2_cost, res.proximal_value))
        if res.stationary:
            log.info("jko: no decrease at step %d", i)
    try:
        with open(out / "jko.csv", "w") as fh:
            fh.write(",".join(rows[0]) + "\n")
            for r in rows[1:]:
                fh.write(f"{r[0]}," + ",".join(repr(float(v)) for v in r[1:]) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    save_particles_csv(mu, out / "final_particles.csv")
    print(f"steps={cfg.steps} energy={rows[-1][1]:.6e}", file=stdout)
    return EXIT_OK


def cmd_probe(cfg, out: Path, stdout) -> int:
    k, mu, nu = build_problem(cfg)
    t_grid = np.geomspace(cfg.t_min, cfg.t_max, cfg.t_points)
    if cfg.mode == "critical":
        if not (isinstance(mu, GridMeasure) and isinstance(nu, GridMeasure)):
            raise ValidationError("mode", "critical mode needs grid measures (torus domain)")
        summary = {"kind": "summary", "t_star": None, "delta_hat": None, "q_hat": None}
        summary.update(lagrangian_critical_check(k, mu, nu))
        records = [summary]
    else:
        scan = no_local_min_scan(k, mu, nu, t_grid)
        records = list(scan.records())
        summary = {"kind": "summary", "status": scan.status, "t_star": scan.t_star, "delta_hat": None, "q_hat": None}
        if cfg.mode == "exponent":
            rep = criticality_exponent(k, mu, nu, t_grid, seed=cfg.seed)
            summary.update(delta_hat=rep.delta_hat, q_hat=rep.q_hat, prefactor=rep.prefactor, flags=rep.flags)
            emit_plotdata(rep, "exponent", out, stem="plot")
        records.append(summary)
    _write_jsonl(out / "probe.jsonl", records)
    print(json.dumps(_jsonable(summary)), file=stdout)
    return EXIT_OK


def cmd_diagnose(cfg, out: Path, stdout) -> int:
    k, mu, nu = build_problem(cfg)
    if isinstance(mu, GridMeasure):
        rep = pl_report(k, mu, nu)
        info = rep.to_record()
        info["holder_mu"] = holder_seminorm(mu, cfg.gamma)
    else:
        v = velocity_field(k, mu, nu, mu.points, exclude_coincident=True)
        info = {
            "energy": mmd_energy(k, mu, nu),
            "grad_norm_sq": float(np.sum(mu.weights * np.sum(v * v, axis=1))),
            "sup_v": float(np.max(np.linalg.norm(v, axis=1))),
            "support_radius": support_radius(mu) if not mu.torus else None,
        }
    info["kernel"] = k.describe()
    try:
        (out / "diagnose.json").write_text(json.dumps(_jsonable(info), indent=1) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    print(json.dumps(_jsonable(info)), file=stdout)
    return EXIT_OK


def green_table(cfg) -> list[tuple]:
    """Rows ``(r, G(r), K_t(r))`` along the first axis; ``r`` in ``[0, 1/2]`` on the torus, ``(0, 2]`` on R^d."""
    k = build_kernel(cfg)
    h = HeatKernelSpec(cfg.dim, torus=cfg.domain == "torus")
    if cfg.domain == "torus":
        r = np.linspace(0.0, 0.5, cfg.rows)
    else:
        r = np.linspace(2.0 / cfg.rows, 2.0, cfg.rows)
    pts = np.zeros((cfg.rows, cfg.dim))
    pts[:, 0] = r
    if cfg.domain == "torus":
        g = np.atleast_1d(torus_green(k, pts))
    else:
        g = np.atleast_1d(eval_kernel(k, pts, np.zeros(cfg.dim)))
    heat = np.atleast_1d(heat_kernel(h, cfg.heat_t, pts, np.zeros(cfg.dim)))
    return [(float(a), float(b), float(c)) for a, b, c in zip(r, g, heat)]


def cmd_green(cfg, out: Path, stdout) -> int:
    rows = green_table(cfg)
    print(f"# {build_kernel(cfg).describe()}, heat time t={cfg.heat_t:g}", file=stdout)
    print(f"{'r':>12} {'G(r)':>16} {'K_t(r)':>16}", file=stdout)
    for r, g, h in rows:
        print(f"{r:12.6f} {g:16.9e} {h:16.9e}", file=stdout)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "jko": cmd_jko,
    "probe": cmd_probe,
    "diagnose": cmd_diagnose,
    "green": cmd_green,
}


# --- argument parsing ------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    defaults = cfgmod.parse_config("")
    p = argparse.ArgumentParser(
        prog="rieszflow",
        description="Wasserstein gradient flows of Riesz MMD energies.",
        epilog="Flags override values read from --config.  Exit codes: 0 ok, 2 config, 3 numerical abort, 4 io.",
    )
    p.add_argument("command", nargs="?", choices=cfgmod.COMMANDS, help="subcommand (default: from config, else simulate)")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and random draws")
    for f in fields(cfgmod.RunConfig):
        if f.name in ("command", "dim", "kernel_s"):
            continue
        shown = getattr(defaults, f.name)
        if f.name == "domain":
            shown = f"torus {defaults.dim}"
        elif isinstance(shown, cfgmod.MeasureSpec):
            shown = f"{shown.to_text()} (torus); {cfgmod.DEFAULT_MEASURES['euclidean'][0 if f.name == 'init' else 1].to_text()} (euclidean)"
        elif f.name == "grid":
            shown = "256"
        elif f.name == "dt":
            shown = "auto (from the CFL bound)"
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, metavar="V", help=f"default: {shown}")
    return p


def load_config(args) -> cfgmod.RunConfig:
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise IoError(f"cannot read config: {exc}") from exc
    overrides = [
        (f.name, getattr(args, f.name))
        for f in fields(cfgmod.RunConfig)
        if f.name not in ("command", "dim", "kernel_s") and getattr(args, f.name) is not None
    ]
    if args.command:
        overrides.insert(0, ("command", args.command))
    return cfgmod.parse_config(text, overrides)


def _thread_limit():
    raw = os.environ.get("RIESZFLOW_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError("RIESZFLOW_THREADS", f"not an integer: {raw!r}") from None
    if n < 1:
        raise ValidationError("RIESZFLOW_THREADS", "must be >= 1")
    return n


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        threads = _thread_limit()
        out = Path(cfg.output_dir)
        if cfg.command != "green":
            try:
                out.mkdir(parents=True, exist_ok=True)
                (out / "config.txt").write_text(cfg.to_text())
            except OSError as exc:
                raise IoError(str(exc)) from exc
        with threadpool_limits(limits=threads):
            return COMMANDS[cfg.command](cfg, out, stdout)
    except _CONFIG_LIKE as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IoError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RieszFlowError, ArithmeticError, ValueError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
