"""Adaptive integration between kicks and the hybrid kick-relaxation runner.

Steps are clamped so that kicks, drive discontinuities and the end of the
interval are hit exactly; no event root-finding is needed because every
discontinuity time is known in advance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels as K
from .forcing import DriveSignal, KickSchedule, apply_kick, basal_drive
from .model import STATE_NAMES, UltradianParams

METHODS = {"dopri5": K.DOPRI5, "rosenbrock": K.ROS23}


class IntegrationError(RuntimeError):
    """Integration aborted; ``t`` and ``state`` hold the last good point."""

    def __init__(self, reason: str, t: float, state):
        super().__init__(f"integration failed at t={t:.6g}: {reason}")
        self.reason = reason
        self.t = t
        self.state = np.array(state, dtype=float)


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    h0: float = 0.1
    hmax: float = 2.0
    max_steps: int = 10_000_000
    method: str = "dopri5"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("integrator tolerances must be > 0")
        if not (self.hmax > 0 and self.h0 > 0):
            raise ValueError("integrator step sizes must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown integrator method {self.method!r}; "
                             f"choose from {sorted(METHODS)}")

    @property
    def method_code(self) -> int:
        return METHODS[self.method]

    def halved(self) -> "IntegratorConfig":
        return IntegratorConfig(self.rtol / 2, self.atol / 2, self.h0, self.hmax,
                                self.max_steps, self.method)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_status(status, t, y):
    if status != K.OK:
        raise IntegrationError(K.STATUS[status], t, y)


class _Stepper:
    """Dispatches one constant-drive piece to the compiled or interpreted core."""

    def __init__(self, rhs, cfg: IntegratorConfig, jac=None):
        self.cfg = cfg
        if isinstance(rhs, UltradianParams):
            self.p = rhs.as_array()
            code = cfg.method_code

            def step(y, t0, t1, drive, h, t_out, y_out, i_out):
                return K.ultradian_segment(code, y, t0, t1, self.p, drive, cfg.rtol, cfg.atol,
                                           h, cfg.hmax, cfg.max_steps, t_out, y_out, i_out)
        elif callable(rhs):
            self.p = np.empty(0)
            dopri, ros = K.python_steppers(rhs, jac)
            core = ros if cfg.method == "rosenbrock" else dopri

            def step(y, t0, t1, drive, h, t_out, y_out, i_out):
                return core(y, t0, t1, self.p, drive, cfg.rtol, cfg.atol, h, cfg.hmax,
                            cfg.max_steps, t_out, y_out, i_out)
        else:
            raise TypeError("rhs must be UltradianParams or a callable rhs(t, y, drive)")
        self.step = step

    def advance(self, y, t0, t1, drive: DriveSignal, h=None, t_out=None, y_out=None, i_out=0):
        """Integrate y in place over [t0, t1]; restarts the step size at each drive edge."""
        if t_out is None:
            t_out = np.empty(0)
            y_out = np.empty((0, y.shape[0]))
        h = self.cfg.h0 if h is None else h
        for k, (a, b, level) in enumerate(drive.pieces(t0, t1)):
            if k > 0:
                h = self.cfg.h0
            status, t, h, _, i_out = self.step(y, a, b, level, h, t_out, y_out, i_out)
            _check_status(status, t, y)
        return h, i_out


def integrate(rhs, s0, t0: float, t1: float, cfg: IntegratorConfig | None = None,
              drive: DriveSignal | None = None, jac=None) -> np.ndarray:
    """State at ``t1`` starting from ``s0`` at ``t0``.

    ``rhs`` is either :class:`UltradianParams` (compiled Ultradian field; the
    state may stack several 6-vectors) or a callable ``rhs(t, y, drive)``.
    ``drive`` supplies the piecewise-constant inflow passed to the field.
    """
    y, _ = integrate_dense(rhs, s0, t0, t1, None, cfg, drive, jac)
    return y


def integrate_dense(rhs, s0, t0: float, t1: float, t_eval=None,
                    cfg: IntegratorConfig | None = None, drive: DriveSignal | None = None,
                    jac=None) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`integrate`, also returning interpolated states at ``t_eval``."""
    if t1 < t0:
        raise ValueError(f"t1={t1} precedes t0={t0}")
    cfg = cfg or IntegratorConfig()
    drive = drive or basal_drive(rhs.I_0 if isinstance(rhs, UltradianParams) else 0.0)
    y = np.array(s0, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite initial state", t0, y)
    t_out = np.empty(0) if t_eval is None else np.asarray(t_eval, dtype=float)
    y_out = np.full((len(t_out), len(y)), np.nan)
    _Stepper(rhs, cfg, jac).advance(y, float(t0), float(t1), drive, t_out=t_out, y_out=y_out)
    return y, y_out


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    events: list[tuple[float, float]] = field(default_factory=list)
    final_state: np.ndarray | None = None
    final_time: float = 0.0

    @property
    def glucose(self) -> np.ndarray:
        return self.states[:, 2]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "Ip", "Ii", "G", "h1", "h2", "h3"])
            for t, row in zip(self.t, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])

    def events_to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "amplitude"])
            for t, a in self.events:
                w.writerow([repr(float(t)), repr(float(a))])


Observer = Callable[[float, np.ndarray, str], None]


def run_kick_relaxation(p: UltradianParams, sched: KickSchedule, drive: DriveSignal | None,
                        s0, horizon: float, cfg: IntegratorConfig | None = None,
                        observer: Observer | None = None, t0: float = 0.0,
                        sample_dt: float | None = 1.0) -> Trajectory:
    """Alternate smooth relaxation with instantaneous glucose kicks up to ``horizon``.

    The observer is called as ``observer(t, state, "pre"|"post")`` around
    every kick. Samples are taken every ``sample_dt`` minutes (none if None);
    a sample coinciding with a kick records the pre-kick state.
    """
    cfg = cfg or IntegratorConfig()
    drive = drive or basal_drive(p.I_0)
    if horizon < t0:
        raise ValueError(f"horizon {horizon} precedes start time {t0}")
    stepper = _Stepper(p, cfg)
    y = np.array(s0, dtype=float).ravel()
    if sample_dt:
        n = int(math.floor((horizon - t0) / sample_dt + 1e-9)) + 1
        t_out = t0 + sample_dt * np.arange(n)
    else:
        t_out = np.empty(0)
    y_out = np.full((len(t_out), 6), np.nan)
    events = []
    t, h, i_out = float(t0), cfg.h0, 0
    for tk, A in sched.within(t0, horizon):
        h, i_out = stepper.advance(y, t, tk, drive, h, t_out, y_out, i_out)
        t = tk
        if observer is not None:
            observer(t, y.copy(), "pre")
        y = apply_kick(y, A)
        events.append((tk, A))
        if observer is not None:
            observer(t, y.copy(), "post")
    h, i_out = stepper.advance(y, t, float(horizon), drive, h, t_out, y_out, i_out)
    return Trajectory(t_out, y_out, events, y.copy(), float(horizon))


def time_T_map_samples(p: UltradianParams, sched: KickSchedule, s0, burn_in: int, keep: int,
                       cfg: IntegratorConfig | None = None,
                       drive: DriveSignal | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Iterates of the time-T map: the state just before each kick once ``burn_in`` cycles are done.

    Cycle k is the kick at T_k followed by relaxation up to T_{k+1} (the
    schedule end for the last kick). Returns (times, states) for cycles
    burn_in .. burn_in + keep - 1, each taken at the end of the cycle.
    """
    if burn_in < 0 or keep < 0:
        raise ValueError("burn_in and keep must be >= 0")
    if burn_in + keep > len(sched):
        raise ValueError(f"schedule has {len(sched)} kicks, need burn_in + keep = {burn_in + keep}")
    cfg = cfg or IntegratorConfig()
    drive = drive or basal_drive(p.I_0)
    stepper = _Stepper(p, cfg)
    edges = sched.cycle_bounds()
    y = np.array(s0, dtype=float).ravel()
    h = cfg.h0
    if edges[0] > 0:
        h, _ = stepper.advance(y, 0.0, float(edges[0]), drive, h)
    times = np.empty(keep)
    out = np.empty((keep, 6))
    for k in range(burn_in + keep):
        y[2] += sched.amplitudes[k]
        h, _ = stepper.advance(y, float(edges[k]), float(edges[k + 1]), drive, h)
        if k >= burn_in:
            times[k - burn_in] = edges[k + 1]
            out[k - burn_in] = y
    return times, out


def samples_to_csv(path: str | Path, times, states) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "t", "Ip", "Ii", "G", "h1", "h2", "h3"])
        for n, (t, row) in enumerate(zip(times, states)):
            w.writerow([n, repr(float(t))] + [repr(float(v)) for v in row])


__all__ = ["IntegratorConfig", "IntegrationError", "Trajectory", "integrate", "integrate_dense",
           "run_kick_relaxation", "time_T_map_samples", "samples_to_csv", "STATE_NAMES"]
