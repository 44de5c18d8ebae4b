"""Command-line front end: ``diukit <command> --config FILE [--seed N] [--threads N] [--out DIR]``.

Each command writes its data files plus a ``manifest.json`` holding the
resolved configuration; passing that manifest back as ``--config`` reruns
the same command and reproduces the data files byte for byte.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 partial sweep.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (SweepSpec, count_modes, glucose_distribution, hopf_scan,
                       meal_lyapunov, sweep_lambda_max)
from .config import ConfigError, defaults, load_config, params_of, validate
from .forcing import (ForcingError, RngStream, empty_schedule, meal_square_driver,
                      periodic_schedule, poisson_schedule, uniform_amplitude_schedule)
from .integrate import (IntegrationError, IntegratorConfig, run_kick_relaxation, samples_to_csv,
                        time_T_map_samples)
from .lyapunov import LyapunovConfig, lyapunov_ensemble, max_lyapunov
from .model import REFERENCE_STATE, ModelError, default_initial_state
from .shearflow import (DDEError, ShearParams, characteristic_root, dde_heatmap)

COMMANDS = ("simulate", "lyapunov", "sweep", "hopf", "dde", "attractor", "hist")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("diukit")


class _Run:
    """Collects outputs for the manifest of one command invocation."""

    def __init__(self, command: str, cfg: dict, out: Path):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.outputs: list[str] = []
        self.summary: dict = {}
        self.status = "ok"
        self.error: str | None = None

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def manifest(self, duration: float) -> dict:
        files = []
        for name in self.outputs:
            p = self.out / name
            if p.exists():
                files.append({"path": name, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
        man = {
            "command": self.command,
            "version": __version__,
            "status": self.status,
            "config": self.cfg,
            "outputs": files,
            "summary": self.summary,
            "duration_s": round(duration, 3),
        }
        if self.error:
            man["error"] = self.error
        return man


def _integ(cfg) -> IntegratorConfig:
    return IntegratorConfig(**cfg["integrator"])


def _lyap(cfg) -> LyapunovConfig:
    return LyapunovConfig(**cfg["lyapunov"])


def _initial(kind: str, p):
    return np.array(REFERENCE_STATE if kind == "reference" else default_initial_state(p))


def _forcing(cfg, n: int, stream: RngStream):
    """(schedule, drive) for the configured forcing with n kick-relaxation cycles."""
    f = cfg["forcing"]
    n = f["n"] or n
    kind = f["kind"]
    if kind == "periodic":
        return periodic_schedule(f["A"], f["T"], n), None
    if kind == "poisson":
        return poisson_schedule(f["A"], f["T"], n, stream), None
    if kind == "uniform":
        return uniform_amplitude_schedule(f["lo"], f["hi"], f["T"], n, stream), None
    if kind == "meal":
        drive = meal_square_driver(f["A"], n)
        return empty_schedule(n * drive.period), drive
    return empty_schedule(n * f["T"]), None


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(run: _Run, threads: int) -> int:
    cfg = run.cfg
    p = params_of(cfg)
    s = cfg["simulate"]
    f = cfg["forcing"]
    horizon = s["horizon"]
    period = 1440.0 if f["kind"] == "meal" else f["T"]
    n = max(1, int(math.ceil(horizon / period)) + 1)
    if f["kind"] == "poisson":
        n = max(n, int(math.ceil(2 * horizon / f["T"])) + 50)
    sched, drive = _forcing(cfg, n, RngStream(cfg["lyapunov"]["seed"], 0))
    traj = run_kick_relaxation(p, sched, drive, _initial(s["initial"], p), horizon, _integ(cfg),
                               sample_dt=s["sample_dt"])
    traj.to_csv(run.path("trajectory.csv"))
    traj.events_to_csv(run.path("events.csv"))
    sched.to_csv(run.path("schedule.csv"))
    run.summary = {"rows": len(traj.t), "kicks": len(traj.events)}
    return EXIT_OK


def _random_forcing(cfg) -> bool:
    f = cfg["forcing"]
    return f["kind"] == "poisson" or (f["kind"] == "uniform" and f["hi"] > f["lo"])


def cmd_lyapunov(run: _Run, threads: int) -> int:
    cfg = run.cfg
    p = params_of(cfg)
    lc, integ = _lyap(cfg), _integ(cfg)
    n = lc.burn_in + lc.cycles
    f = cfg["forcing"]
    if _random_forcing(cfg):
        if f["kind"] == "poisson":
            gen = lambda stream: poisson_schedule(f["A"], f["T"], f["n"] or n, stream)  # noqa: E731
        else:
            gen = lambda stream: uniform_amplitude_schedule(  # noqa: E731
                f["lo"], f["hi"], f["T"], f["n"] or n, stream)
        ens = lyapunov_ensemble(p, gen, None, lc, integ, threads=threads)
        if not len(ens.exponents):
            raise IntegrationError("all realizations failed", float("nan"), np.full(6, np.nan))
        ens.to_csv(run.path("realizations.csv"))
        rec = ens.to_record()
        _write_json(run.path("ensemble.json"), rec)
        run.summary = {"mean": rec["mean"], "std": rec["std"], "failures": ens.failures}
        return EXIT_OK
    stream = RngStream(lc.seed, 0)
    if f["kind"] == "meal":
        est = meal_lyapunov(p, f["A"], lc, integ, stream)
    else:
        sched, drive = _forcing(cfg, n, stream)
        est = max_lyapunov(p, sched, drive, lc, integ, stream=stream)
    _write_json(run.path("estimate.json"), est.to_record())
    est.series_to_csv(run.path("log_growth.csv"))
    run.summary = {"lambda_max": est.lambda_max, "stderr": est.stderr}
    return EXIT_OK


def cmd_sweep(run: _Run, threads: int) -> int:
    cfg = run.cfg
    f, sw = cfg["forcing"], cfg["sweep"]
    if f["kind"] == "none":
        raise ConfigError("[forcing] kind = none has nothing to sweep")
    spec = SweepSpec(f["kind"], tuple(sw["A_values"]), tuple(sw["T_values"]), sw["width"],
                     cfg["lyapunov"]["realizations"])
    grid = sweep_lambda_max(params_of(cfg), spec, _lyap(cfg), _integ(cfg), threads)
    grid.to_csv(run.path("sweep.csv"))
    run.summary = {"failed_cells": [list(c) for c in grid.failed]}
    if grid.partial:
        run.status = "partial"
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_hopf(run: _Run, threads: int) -> int:
    cfg = run.cfg
    h = cfg["hopf"]
    res = hopf_scan(params_of(cfg), h["td_values"], h["transient"], h["window"], _integ(cfg),
                    h["threshold"], threads=threads)
    res.to_csv(run.path("hopf.csv"))
    run.summary = {"bracket": list(res.bracket) if res.bracket else None}
    return EXIT_OK


def cmd_dde(run: _Run, threads: int) -> int:
    cfg = run.cfg
    d = cfg["dde"]
    base = ShearParams(lam=d["lam"], sigma=d["sigma"], A=d["A"], tau=0.0, T=d["Ts"][0])
    hm = dde_heatmap(base, d["taus"], d["Ts"], _lyap(cfg), d["m"], threads=threads)
    hm.to_csv(run.path("heatmap.csv"), zero_band=d["zero_band"])
    with open(run.path("roots.csv"), "w", newline="", encoding="utf-8") as fh:
        fh.write("lambda,tau,re_gamma,im_gamma,residual\n")
        for tau in d["taus"]:
            r = characteristic_root(d["lam"], tau)
            fh.write(f"{d['lam']!r},{tau!r},{r.gamma.real!r},{r.gamma.imag!r},{r.residual!r}\n")
    nan = int(np.isnan(hm.values).sum())
    run.summary = {"diverged_cells": nan}
    if nan:
        run.status = "partial"
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_attractor(run: _Run, threads: int) -> int:
    cfg = run.cfg
    p = params_of(cfg)
    a, f = cfg["attractor"], cfg["forcing"]
    if f["kind"] != "periodic":
        raise ConfigError("[forcing] attractor sampling needs kind = periodic")
    sched = periodic_schedule(f["A"], f["T"], max(1, a["burn_in"] + a["keep"]))
    times, states = time_T_map_samples(p, sched, _initial(a["initial"], p), a["burn_in"],
                                       a["keep"], _integ(cfg))
    samples_to_csv(run.path("samples.csv"), times, states)
    run.summary = {"samples": int(a["keep"])}
    return EXIT_OK


def cmd_hist(run: _Run, threads: int) -> int:
    cfg = run.cfg
    p = params_of(cfg)
    h, f = cfg["hist"], cfg["forcing"]
    period = 1440.0 if f["kind"] == "meal" else f["T"]
    n = int(math.ceil(h["horizon"] / period)) + 1
    if f["kind"] == "poisson":
        n = max(n, int(math.ceil(2 * h["horizon"] / f["T"])) + 50)
    sched, drive = _forcing(cfg, n, RngStream(cfg["lyapunov"]["seed"], 0))
    traj = run_kick_relaxation(p, sched, drive, _initial(h["initial"], p), h["horizon"],
                               _integ(cfg), sample_dt=h["sample_dt"])
    dist = glucose_distribution(traj, h["bins"], h["sample_dt"], h["burn_in"], h["bandwidth"])
    dist.modes = count_modes(dist, prominence=h["prominence"])
    dist.to_csv(run.path("histogram.csv"))
    run.summary = {"modes": dist.modes,
                   "modes_half_prominence": count_modes(dist, prominence=h["prominence"] / 2)}
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "lyapunov": cmd_lyapunov,
    "sweep": cmd_sweep,
    "hopf": cmd_hopf,
    "dde": cmd_dde,
    "attractor": cmd_attractor,
    "hist": cmd_hist,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diukit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=(HANDLERS[name].__doc__ or name))
        sp.add_argument("--config", help="INI config or a manifest.json from an earlier run")
        sp.add_argument("--seed", type=int, help="override [lyapunov] seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
        sp.add_argument("--out", help="output directory (overrides [output] dir)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.config:
            cfg, man_cmd = load_config(args.config)
            if man_cmd is not None and man_cmd != args.command:
                raise ConfigError(f"manifest was written by {man_cmd!r}, not {args.command!r}")
        else:
            cfg = defaults()
        if args.seed is not None:
            cfg["lyapunov"]["seed"] = args.seed
        if args.out:
            cfg["output"]["dir"] = args.out
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(args.command, cfg, out)
    t0 = time.perf_counter()
    try:
        code = HANDLERS[args.command](run, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ForcingError, ModelError, ValueError) as exc:
        # parameter combinations rejected by a module precondition
        run.status, run.error, code = "failed", str(exc), EXIT_CONFIG
        print(f"config error: {exc}", file=sys.stderr)
    except (IntegrationError, DDEError, FloatingPointError) as exc:
        run.status, run.error, code = "failed", str(exc), EXIT_NUMERIC
        print(f"numerical failure: {exc}", file=sys.stderr)
    _write_json(out / "manifest.json", run.manifest(time.perf_counter() - t0))
    log.info("wrote %s", out / "manifest.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
