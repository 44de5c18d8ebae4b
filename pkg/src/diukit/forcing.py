"""Nutritional forcing: kick schedules, piecewise-constant drives, kicks.

Random schedules draw from :class:`RngStream`, a (seed, index) pair mapped
onto an independent numpy ``SeedSequence`` child, so Monte Carlo
realization ``r`` always sees the same numbers no matter which worker runs it.
"""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .model import UltradianState

MINUTES_PER_DAY = 1440.0
# meal onsets (minutes after midnight) and duration
MEAL_STARTS = (480.0, 720.0, 1080.0)
MEAL_DURATION = 30.0


class ForcingError(ValueError):
    pass


@dataclass(frozen=True)
class RngStream:
    seed: int
    index: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ForcingError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.index) < 0:
            raise ForcingError(f"stream index must be >= 0, got {self.index}")

    def generator(self, sub: int = 0) -> np.random.Generator:
        """Generator for this stream; ``sub`` selects an independent sub-stream."""
        key = (int(self.index),) if sub == 0 else (int(self.index), int(sub))
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=key)
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class KickSchedule:
    """Kick instants ``times`` (min) with glucose jumps ``amplitudes``.

    ``end`` closes the relaxation interval after the last kick, so a schedule
    of n kicks describes n complete kick-relaxation cycles.
    """

    times: np.ndarray
    amplitudes: np.ndarray
    end: float
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        a = np.asarray(self.amplitudes, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "amplitudes", a)
        t.flags.writeable = False
        a.flags.writeable = False
        if t.ndim != 1 or t.shape != a.shape:
            raise ForcingError("times and amplitudes must be 1-D sequences of equal length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(a))):
            raise ForcingError("schedule contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise ForcingError("kick times must be strictly increasing")
        if np.any(a < 0):
            raise ForcingError("kick amplitudes must be >= 0")
        if len(t) and not self.end > t[-1]:
            raise ForcingError("schedule end must follow the last kick")

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, KickSchedule):
            return NotImplemented
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.amplitudes, other.amplitudes)
                and self.end == other.end)

    def cycle_bounds(self) -> np.ndarray:
        """Cycle edges: the kick times followed by ``end``."""
        return np.append(self.times, self.end)

    def within(self, t0: float, t1: float) -> Iterator[tuple[float, float]]:
        """Kicks with t0 <= T_n <= t1, as (time, amplitude) pairs."""
        lo = np.searchsorted(self.times, t0, side="left")
        hi = np.searchsorted(self.times, t1, side="right")
        for k in range(lo, hi):
            yield float(self.times[k]), float(self.amplitudes[k])

    def regenerate(self) -> "KickSchedule":
        return schedule_from_descriptor(self.descriptor)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "time_min", "amplitude"])
            for k, (t, a) in enumerate(zip(self.times, self.amplitudes)):
                w.writerow([k, repr(float(t)), repr(float(a))])


def read_schedule_csv(path: str | Path, end: float | None = None) -> KickSchedule:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["time_min"]) for r in rows])
    a = np.array([float(r["amplitude"]) for r in rows])
    if end is None:
        if len(t) == 0:
            end = 0.0
        else:
            # assume the last gap repeats
            end = float(t[-1] + (t[-1] - t[-2] if len(t) > 1 else 1.0))
    return KickSchedule(t, a, end, {"kind": "csv", "path": str(path)})


def periodic_schedule(A: float, T: float, n: int) -> KickSchedule:
    """n kicks of size A at t = 0, T, ..., (n-1)T."""
    if not T > 0:
        raise ForcingError(f"inter-kick time T must be > 0, got {T}")
    if A < 0:
        raise ForcingError(f"kick amplitude must be >= 0, got {A}")
    if n < 1:
        raise ForcingError(f"kick count must be >= 1, got {n}")
    times = np.arange(n, dtype=float) * T
    return KickSchedule(times, np.full(n, float(A)), n * float(T),
                        {"kind": "periodic", "A": float(A), "T": float(T), "n": int(n)})


def poisson_schedule(A: float, meanT: float, n: int, rng: RngStream) -> KickSchedule:
    """Kicks separated by i.i.d. exponential gaps (inverse-CDF sampling).

    The first kick falls after the first sampled gap; one extra gap closes
    the final relaxation interval.
    """
    if not meanT > 0:
        raise ForcingError(f"mean inter-kick time must be > 0, got {meanT}")
    if A < 0:
        raise ForcingError(f"kick amplitude must be >= 0, got {A}")
    if n < 1:
        raise ForcingError(f"kick count must be >= 1, got {n}")
    u = rng.generator().random(n + 1)
    gaps = -float(meanT) * np.log1p(-u)
    edges = np.cumsum(gaps)
    desc = {"kind": "poisson", "A": float(A), "T": float(meanT), "n": int(n),
            "seed": int(rng.seed), "index": int(rng.index)}
    return KickSchedule(edges[:n], np.full(n, float(A)), float(edges[n]), desc)


def uniform_amplitude_schedule(lo: float, hi: float, T: float, n: int,
                               rng: RngStream) -> KickSchedule:
    """Periodic kicks with i.i.d. Uniform[lo, hi] amplitudes."""
    if not 0 <= lo <= hi:
        raise ForcingError(f"need 0 <= lo <= hi, got lo={lo}, hi={hi}")
    if not T > 0:
        raise ForcingError(f"inter-kick time T must be > 0, got {T}")
    if n < 1:
        raise ForcingError(f"kick count must be >= 1, got {n}")
    if lo == hi:
        amps = np.full(n, float(lo))
    else:
        amps = lo + (hi - lo) * rng.generator().random(n)
    desc = {"kind": "uniform", "lo": float(lo), "hi": float(hi), "T": float(T), "n": int(n),
            "seed": int(rng.seed), "index": int(rng.index)}
    return KickSchedule(np.arange(n, dtype=float) * T, amps, n * float(T), desc)


def empty_schedule(end: float = 0.0) -> KickSchedule:
    return KickSchedule(np.empty(0), np.empty(0), float(end), {"kind": "none", "end": float(end)})


def schedule_from_descriptor(desc: dict) -> KickSchedule:
    kind = desc.get("kind")
    if kind == "periodic":
        return periodic_schedule(desc["A"], desc["T"], desc["n"])
    if kind == "poisson":
        return poisson_schedule(desc["A"], desc["T"], desc["n"],
                                RngStream(desc["seed"], desc["index"]))
    if kind == "uniform":
        return uniform_amplitude_schedule(desc["lo"], desc["hi"], desc["T"], desc["n"],
                                          RngStream(desc["seed"], desc["index"]))
    if kind == "none":
        return empty_schedule(desc.get("end", 0.0))
    raise ForcingError(f"cannot regenerate schedule of kind {kind!r}")


@dataclass(frozen=True)
class DriveSignal:
    """Smooth part of the glucose inflow: basal level plus square pulses.

    ``period`` (optional) is the natural cycle length of the pulse train,
    used to define cycles when no kicks are present.
    """

    basal: float = 0.0
    pulses: tuple[tuple[float, float, float], ...] = ()
    period: float | None = None

    def __post_init__(self):
        ps = tuple(sorted((float(a), float(b), float(lv)) for a, b, lv in self.pulses))
        object.__setattr__(self, "pulses", ps)
        if self.basal < 0:
            raise ForcingError(f"basal level must be >= 0, got {self.basal}")
        prev_end = -np.inf
        for a, b, lv in ps:
            if not a < b:
                raise ForcingError(f"pulse interval [{a}, {b}) is empty")
            if a < prev_end:
                raise ForcingError(f"pulse starting at {a} overlaps the previous pulse")
            if lv < 0:
                raise ForcingError(f"pulse level must be >= 0, got {lv}")
            prev_end = b
        if self.period is not None and not self.period > 0:
            raise ForcingError(f"drive period must be > 0, got {self.period}")
        object.__setattr__(self, "_starts", [a for a, _, _ in ps])
        object.__setattr__(self, "_ends", tuple(sorted({x for a, b, _ in ps for x in (a, b)})))

    def __call__(self, t: float) -> float:
        k = bisect.bisect_right(self._starts, t) - 1
        if k >= 0 and t < self.pulses[k][1]:
            return self.basal + self.pulses[k][2]
        return self.basal

    @property
    def endpoints(self) -> tuple[float, ...]:
        return self._ends

    def pieces(self, t0: float, t1: float) -> list[tuple[float, float, float]]:
        """Split [t0, t1] at discontinuities into (start, stop, level) pieces."""
        if t1 <= t0 or not self.pulses:
            return [(t0, t1, self(t0))]
        lo = bisect.bisect_right(self._ends, t0)
        hi = bisect.bisect_left(self._ends, t1)
        cuts = [t0, *self._ends[lo:hi], t1]
        return [(a, b, self(a)) for a, b in zip(cuts[:-1], cuts[1:])]

    def to_dict(self) -> dict:
        return {"basal": self.basal, "pulses": [list(p) for p in self.pulses],
                "period": self.period}


def basal_drive(I_0: float = 0.0) -> DriveSignal:
    return DriveSignal(basal=float(I_0))


def meal_square_driver(A: float, days: int) -> DriveSignal:
    """Three 30-minute pulses of height A per day at 8:00, 12:00 and 18:00 (t=0 is midnight)."""
    if A < 0:
        raise ForcingError(f"pulse height must be >= 0, got {A}")
    if days < 1:
        raise ForcingError(f"days must be >= 1, got {days}")
    pulses = [(MINUTES_PER_DAY * d + s, MINUTES_PER_DAY * d + s + MEAL_DURATION, float(A))
              for d in range(days) for s in MEAL_STARTS]
    return DriveSignal(0.0, tuple(pulses), MINUTES_PER_DAY)


def apply_kick(s, A: float):
    """Instantaneous glucose jump ``G -> G + A``; other components untouched."""
    if isinstance(s, UltradianState):
        return s._replace(G=s.G + A)
    y = np.array(s, dtype=float)
    y[2] += A
    return y
