"""Experiment-level procedures built on the model, integrators and estimators.

Delay scans for the Hopf bifurcation, exponent sweeps over kick amplitude
and inter-kick time, and empirical glucose distributions with a simple
prominence-filtered mode count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks

from .forcing import (DriveSignal, RngStream, meal_square_driver, periodic_schedule,
                      poisson_schedule, uniform_amplitude_schedule, empty_schedule)
from .integrate import IntegrationError, IntegratorConfig, Trajectory, integrate, integrate_dense
from .lyapunov import LyapunovConfig, lyapunov_ensemble, max_lyapunov
from .model import REFERENCE_STATE, UltradianParams

HOPF_TRANSIENT = 5000.0
HOPF_WINDOW = 2000.0
HOPF_THRESHOLD = 1.0
MODE_PROMINENCE = 0.05
MODE_BANDWIDTH = 2.0


def _pool_map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# Hopf scan


@dataclass
class HopfScanResult:
    td: np.ndarray
    amplitude: np.ndarray
    threshold: float = HOPF_THRESHOLD

    @property
    def oscillating(self) -> np.ndarray:
        return self.amplitude > self.threshold

    @property
    def bracket(self) -> tuple[float, float] | None:
        """(last t_d below threshold, first t_d above it), scanning in increasing t_d."""
        order = np.argsort(self.td)
        td, osc = self.td[order], self.oscillating[order]
        for k in range(len(td) - 1):
            if not osc[k] and osc[k + 1]:
                return float(td[k]), float(td[k + 1])
        return None

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["td", "amplitude"])
            for td, a in zip(self.td, self.amplitude):
                w.writerow([repr(float(td)), repr(float(a))])


def hopf_scan(p_base: UltradianParams, td_values, transient: float = HOPF_TRANSIENT,
              window: float = HOPF_WINDOW, cfg: IntegratorConfig | None = None,
              threshold: float = HOPF_THRESHOLD, s0=REFERENCE_STATE,
              threads: int = 1) -> HopfScanResult:
    """Post-transient peak-to-peak glucose amplitude of the unforced model per delay.

    Every run starts from ``s0`` (the reference state by default, so that an
    unstable equilibrium is not sat on), integrates with zero inflow for
    ``transient`` minutes and records max(G) - min(G) on a 1-minute grid over
    the following ``window`` minutes.
    """
    if window < 300:
        raise ValueError("window must cover at least three ~100-minute oscillation periods")
    td_values = np.asarray(td_values, dtype=float)
    zero = DriveSignal(0.0)
    grid = transient + np.arange(int(window) + 1, dtype=float)

    def one(td):
        p = p_base.with_delay(float(td))
        y = integrate(p, s0, 0.0, transient, cfg, zero)
        _, samples = integrate_dense(p, y, transient, transient + window, grid, cfg, zero)
        G = samples[:, 2]
        return float(np.max(G) - np.min(G))

    amps = np.array(_pool_map(one, list(td_values), threads))
    return HopfScanResult(td_values, amps, threshold)


# ---------------------------------------------------------------------------
# exponent sweeps

FORCING_KINDS = ("periodic", "poisson", "uniform", "meal")


@dataclass(frozen=True)
class SweepSpec:
    """What to sweep: forcing kind plus amplitude and inter-kick-time axes.

    For ``uniform`` the amplitudes are drawn from [A - width, A + width];
    for ``meal`` A is the pulse height and the T axis is ignored (one
    cycle per day).
    """

    kind: str
    A_values: tuple[float, ...]
    T_values: tuple[float, ...] = (0.0,)
    width: float = 0.0
    realizations: int = 1

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise ValueError(f"unknown forcing kind {self.kind!r}; choose from {FORCING_KINDS}")
        if not self.A_values or not self.T_values:
            raise ValueError("sweep axes must be nonempty")
        if self.kind != "meal" and any(not T > 0 for T in self.T_values):
            raise ValueError("inter-kick times must be > 0")

    @property
    def random(self) -> bool:
        return self.kind in ("poisson",) or (self.kind == "uniform" and self.width > 0)


def schedule_generator(kind: str, A: float, T: float, n: int, width: float = 0.0):
    """Factory ``RngStream -> KickSchedule`` for the kicked forcing kinds."""
    if kind == "periodic":
        return lambda stream: periodic_schedule(A, T, n)
    if kind == "poisson":
        return lambda stream: poisson_schedule(A, T, n, stream)
    if kind == "uniform":
        return lambda stream: uniform_amplitude_schedule(A - width, A + width, T, n, stream)
    raise ValueError(f"no kick schedule for forcing kind {kind!r}")


@dataclass
class SweepGrid:
    A_values: np.ndarray
    T_values: np.ndarray
    values: np.ndarray  # (len(A), len(T))
    stderr: np.ndarray
    failed: list[tuple[int, int]] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failed)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["A", "T", "lambda_max", "stderr"])
            for i, A in enumerate(self.A_values):
                for j, T in enumerate(self.T_values):
                    w.writerow([repr(float(A)), repr(float(T)), repr(float(self.values[i, j])),
                                repr(float(self.stderr[i, j]))])


def meal_lyapunov(p: UltradianParams, A: float, cfg: LyapunovConfig,
                  integ: IntegratorConfig | None = None, stream: RngStream | None = None):
    """Exponent per day under the three-meal square-pulse driver."""
    days = cfg.burn_in + cfg.cycles
    drive = meal_square_driver(A, days)
    return max_lyapunov(p, empty_schedule(days * drive.period), drive, cfg, integ,
                        stream=stream)


def lambda_cell(p: UltradianParams, kind: str, A: float, T: float, cfg: LyapunovConfig,
                integ: IntegratorConfig | None = None, width: float = 0.0,
                realizations: int = 1, threads: int = 1) -> tuple[float, float]:
    """(Lambda_max, standard error) for one forcing setting.

    Random schedules give the ensemble mean over ``realizations`` streams and
    its standard error; deterministic ones a single estimate.
    """
    n = cfg.burn_in + cfg.cycles
    if kind == "meal":
        est = meal_lyapunov(p, A, cfg, integ, RngStream(cfg.seed, 0))
        return est.lambda_max, est.stderr
    gen = schedule_generator(kind, A, T, n, width)
    if kind == "periodic" or (kind == "uniform" and width == 0):
        est = max_lyapunov(p, gen(RngStream(cfg.seed, 0)), None, cfg, integ,
                           stream=RngStream(cfg.seed, 0))
        return est.lambda_max, est.stderr
    ens = lyapunov_ensemble(p, gen, None, cfg, integ, realizations, cfg.seed, threads)
    if not len(ens.exponents):
        raise IntegrationError("all realizations failed", float("nan"), np.full(6, np.nan))
    return ens.mean, ens.std / math.sqrt(len(ens.exponents))


def sweep_lambda_max(p: UltradianParams, spec: SweepSpec, cfg: LyapunovConfig | None = None,
                     integ: IntegratorConfig | None = None, threads: int = 1) -> SweepGrid:
    """Lambda_max on the A x T grid of ``spec``; failed cells are NaN and listed."""
    cfg = cfg or LyapunovConfig()
    A = np.asarray(spec.A_values, dtype=float)
    T = np.asarray(spec.T_values, dtype=float)
    cells = [(i, j) for i in range(len(A)) for j in range(len(T))]

    def one(cell):
        i, j = cell
        try:
            return lambda_cell(p, spec.kind, float(A[i]), float(T[j]), cfg, integ, spec.width,
                               spec.realizations)
        except IntegrationError:
            return None

    results = _pool_map(one, cells, threads)
    vals = np.full((len(A), len(T)), np.nan)
    errs = np.full((len(A), len(T)), np.nan)
    failed = []
    for (i, j), r in zip(cells, results):
        if r is None:
            failed.append((i, j))
        else:
            vals[i, j], errs[i, j] = r
    return SweepGrid(A, T, vals, errs, failed)


def sign_changes(values) -> list[int]:
    """Indices k where sign(values[k]) != sign(values[k+1]) (zeros count as a sign)."""
    s = np.sign(np.asarray(values, dtype=float))
    return [k for k in range(len(s) - 1) if s[k] != s[k + 1]]


# ---------------------------------------------------------------------------
# empirical distributions


@dataclass
class EmpiricalDistribution:
    edges: np.ndarray
    mass: np.ndarray
    bandwidth: float = MODE_BANDWIDTH
    modes: int = 0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "mass"])
            for a, b, m in zip(self.edges[:-1], self.edges[1:], self.mass):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(m))])


def count_modes(d: EmpiricalDistribution, bandwidth: float | None = None,
                prominence: float = MODE_PROMINENCE) -> int:
    """Local maxima of the Gaussian-smoothed histogram with prominence above
    ``prominence`` times the smoothed maximum. ``bandwidth`` is in bins."""
    bw = d.bandwidth if bandwidth is None else bandwidth
    mass = np.asarray(d.mass, dtype=float)
    if mass.sum() <= 0:
        return 0
    pad = int(math.ceil(4 * bw)) + 2
    x = np.concatenate([np.zeros(pad), mass, np.zeros(pad)])
    if bw > 0:
        x = gaussian_filter1d(x, bw, mode="constant")
    peaks, _ = find_peaks(x, prominence=prominence * x.max())
    return max(len(peaks), 1)


def glucose_distribution(traj: Trajectory, bins: int = 100, sample_dt: float = 1.0,
                         burn_in: float = 0.0, bandwidth: float = MODE_BANDWIDTH
                         ) -> EmpiricalDistribution:
    """Histogram of glucose resampled every ``sample_dt`` minutes after ``burn_in``.

    Masses sum to one. A constant signal falls into a single bin.
    """
    t = np.asarray(traj.t, dtype=float)
    G = np.asarray(traj.glucose, dtype=float)
    ok = np.isfinite(G)
    t, G = t[ok], G[ok]
    if len(t) < 2:
        raise ValueError("trajectory has no samples to bin")
    t_start = t[0] + burn_in
    if t[-1] - t_start < 100 * sample_dt:
        raise ValueError("window after burn-in is shorter than 100 sample intervals")
    grid = t_start + sample_dt * np.arange(int(math.floor((t[-1] - t_start) / sample_dt)) + 1)
    g = np.interp(grid, t, G)
    lo, hi = float(g.min()), float(g.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(g, bins=bins, range=(lo, hi))
    mass = counts / counts.sum()
    d = EmpiricalDistribution(edges, mass, bandwidth)
    d.modes = count_modes(d)
    return d
