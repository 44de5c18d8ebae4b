"""Maximal Lyapunov exponent per kick-relaxation cycle.

A base and a secondary trajectory, initially ``d0`` apart, are carried
through each cycle (kick both, relax both). At the end of the cycle the
separation d1 is measured, log(d1/d0) is stored and the secondary is pulled
back to distance d0 along the current separation direction. The exponent
is the mean of the stored values, in units of 1/cycle.

Both copies are integrated as one stacked 12-dimensional system so they
share every step; with G of order 1e4 mg and d0 = 1e-8, independently
step-controlled copies would bury the separation under truncation error.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels as K
from .forcing import DriveSignal, KickSchedule, RngStream, basal_drive
from .integrate import IntegrationError, IntegratorConfig
from .model import UltradianParams, default_initial_state


@dataclass(frozen=True)
class LyapunovConfig:
    d0: float = 1e-8
    cycles: int = 1000
    burn_in: int = 100
    seed: int = 0
    realizations: int = 100
    # batches for the batch-means standard error
    batches: int = 20

    def __post_init__(self):
        if not self.d0 > 0:
            raise ValueError(f"d0 must be > 0, got {self.d0}")
        if self.cycles < 1:
            raise ValueError(f"cycles must be >= 1, got {self.cycles}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.realizations < 1:
            raise ValueError(f"realizations must be >= 1, got {self.realizations}")
        if self.batches < 2:
            raise ValueError(f"batches must be >= 2, got {self.batches}")

    def to_dict(self) -> dict:
        return asdict(self)


def batch_means_stderr(x: np.ndarray, batches: int = 20) -> float:
    """Standard error of the mean from non-overlapping batch means.

    Per-cycle growth rates along a limit cycle are strongly correlated
    (their partial sums telescope), so the i.i.d. formula is far too pessimistic
    or optimistic depending on the regime. Falls back to the i.i.d. formula
    when there are fewer than two values per batch.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        return float("nan")
    if n < 2 * batches:
        return float(np.std(x, ddof=1) / math.sqrt(n))
    size = n // batches
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(batches))


@dataclass
class LyapunovEstimate:
    lambda_max: float
    log_growth: np.ndarray
    stderr: float
    cycles: int
    burn_in: int
    d0: float
    seed: int
    index: int = 0
    schedule: dict = field(default_factory=dict)
    flagged_cycles: list[int] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "lambda_max": self.lambda_max,
            "stderr": self.stderr,
            "cycles": self.cycles,
            "burn_in": self.burn_in,
            "d0": self.d0,
            "seed": self.seed,
            "index": self.index,
            "schedule": self.schedule,
            "flagged_cycles": list(self.flagged_cycles),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_record(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    def series_to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cycle", "log_growth"])
            for k, v in enumerate(self.log_growth):
                w.writerow([self.burn_in + k, repr(float(v))])


def initial_perturbation(s0, d0: float, rng: np.random.Generator) -> np.ndarray:
    """``s0`` displaced by ``d0`` along a uniformly random unit direction."""
    s0 = np.asarray(s0, dtype=float)
    if d0 == 0:
        return s0.copy()
    u = rng.standard_normal(s0.shape)
    u /= np.linalg.norm(u)
    return s0 + d0 * u


def _cycle_plan(sched: KickSchedule, drive: DriveSignal, n_cycles: int):
    """Flatten cycles into (kicks, seg_ptr, seg_t0, seg_t1, seg_drive, lead-in pieces)."""
    if len(sched):
        if len(sched) < n_cycles:
            raise ValueError(f"schedule has {len(sched)} kicks, need at least {n_cycles}")
        edges = sched.cycle_bounds()[: n_cycles + 1]
        kicks = np.array(sched.amplitudes[:n_cycles], dtype=float)
    elif drive.period:
        edges = drive.period * np.arange(n_cycles + 1, dtype=float)
        kicks = np.zeros(n_cycles)
    else:
        raise ValueError("need kicks or a periodic drive to define cycles")
    seg_ptr = np.zeros(n_cycles + 1, dtype=np.int64)
    t0s, t1s, lv = [], [], []
    for c in range(n_cycles):
        for a, b, level in drive.pieces(float(edges[c]), float(edges[c + 1])):
            t0s.append(a)
            t1s.append(b)
            lv.append(level)
        seg_ptr[c + 1] = len(t0s)
    lead = drive.pieces(0.0, float(edges[0])) if edges[0] > 0 else []
    return kicks, seg_ptr, np.array(t0s), np.array(t1s), np.array(lv), lead


def max_lyapunov(p: UltradianParams, sched: KickSchedule, drive: DriveSignal | None = None,
                 cfg: LyapunovConfig | None = None, integ: IntegratorConfig | None = None,
                 s0=None, stream: RngStream | None = None) -> LyapunovEstimate:
    """Two-trajectory estimate of the maximal exponent (1/cycle).

    Cycles are the kick-relaxation intervals of ``sched``; with an empty
    schedule, a drive with a ``period`` (e.g. daily meals) defines the cycles.
    """
    cfg = cfg or LyapunovConfig()
    integ = integ or IntegratorConfig()
    drive = drive or basal_drive(p.I_0)
    stream = stream or RngStream(cfg.seed, 0)
    n = cfg.burn_in + cfg.cycles
    kicks, seg_ptr, st0, st1, sdr, lead = _cycle_plan(sched, drive, n)
    pv = p.as_array()
    base = np.array(default_initial_state(p) if s0 is None else s0, dtype=float)
    y = np.empty(12)
    y[:6] = base
    no_out, no_yout = np.empty(0), np.empty((0, 12))
    # the direction stream depends on the seed only, so realizations differ
    # solely through their schedules
    rng = RngStream(stream.seed, 0).generator(sub=1)
    y[6:] = initial_perturbation(base, cfg.d0, rng)
    for a, b, level in lead:
        status, t, *_ = K.ultradian_segment(integ.method_code, y, a, b, pv, level, integ.rtol,
                                            integ.atol, integ.h0, integ.hmax, integ.max_steps,
                                            no_out, no_yout, 0)
        if status != K.OK:
            raise IntegrationError(K.STATUS[status], t, y[:6])

    log_growth = np.full(n, np.nan)
    flagged = []
    c = 0
    while c < n:
        status, c_fail = K.ultradian_pair_cycles(
            integ.method_code, y, pv, c, n, kicks, seg_ptr, st0, st1, sdr, cfg.d0,
            integ.rtol, integ.atol, integ.h0, integ.hmax, integ.max_steps, log_growth)
        if status == K.OK:
            break
        if status == K.ZERO_SEPARATION:
            # separation collapsed below resolution: record the floor, re-seed direction
            log_growth[c_fail] = math.log(integ.atol / cfg.d0)
            flagged.append(int(c_fail))
            y[6:] = initial_perturbation(y[:6], cfg.d0, rng)
            c = c_fail + 1
            continue
        raise IntegrationError(K.STATUS[status], float(c_fail), y[:6])
    kept = log_growth[cfg.burn_in:]
    return LyapunovEstimate(
        lambda_max=float(np.mean(kept)),
        log_growth=kept,
        stderr=batch_means_stderr(kept, cfg.batches),
        cycles=cfg.cycles,
        burn_in=cfg.burn_in,
        d0=cfg.d0,
        seed=int(stream.seed),
        index=int(stream.index),
        schedule=dict(sched.descriptor) if len(sched) else {"drive": drive.to_dict()},
        flagged_cycles=flagged,
    )


@dataclass
class LyapunovEnsemble:
    exponents: np.ndarray
    estimates: list[LyapunovEstimate]
    failures: int = 0
    failed_indices: list[int] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.exponents)) if len(self.exponents) else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.exponents, ddof=1)) if len(self.exponents) > 1 else 0.0

    def quantiles(self, qs=(0.05, 0.25, 0.5, 0.75, 0.95)) -> dict[float, float]:
        return {q: float(np.quantile(self.exponents, q)) for q in qs}

    def histogram(self, bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
        return np.histogram(self.exponents, bins=bins)

    def to_record(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "realizations": len(self.estimates) + self.failures,
            "failures": self.failures,
            "failed_indices": self.failed_indices,
            "quantiles": {str(q): v for q, v in self.quantiles().items()} if len(self.exponents) else {},
        }

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["realization", "lambda_max"])
            for est in self.estimates:
                w.writerow([est.index, repr(est.lambda_max)])


def lyapunov_ensemble(p: UltradianParams, schedule_generator: Callable[[RngStream], KickSchedule],
                      drive: DriveSignal | None = None, cfg: LyapunovConfig | None = None,
                      integ: IntegratorConfig | None = None, realizations: int | None = None,
                      base_seed: int | None = None, threads: int = 1, s0=None) -> LyapunovEnsemble:
    """One exponent per realization; realization r uses stream (base_seed, r).

    Results are collected in stream-index order, so they do not depend on
    ``threads``.
    """
    cfg = cfg or LyapunovConfig()
    realizations = cfg.realizations if realizations is None else realizations
    base_seed = cfg.seed if base_seed is None else base_seed
    if realizations < 1:
        raise ValueError(f"realizations must be >= 1, got {realizations}")
    s0 = default_initial_state(p) if s0 is None else s0

    def one(r: int):
        stream = RngStream(base_seed, r)
        try:
            return max_lyapunov(p, schedule_generator(stream), drive, cfg, integ, s0, stream)
        except IntegrationError:
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(realizations)))
    else:
        results = [one(r) for r in range(realizations)]
    good = [e for e in results if e is not None]
    failed = [r for r, e in enumerate(results) if e is None]
    return LyapunovEnsemble(np.array([e.lambda_max for e in good]), good, len(failed), failed)
