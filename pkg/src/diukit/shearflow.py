"""Kicked delay linear shear flow on the cylinder.

Between kicks::

    z'(t)     = -lam * z(t - tau)
    theta'(t) = 1 + sigma * z(t)

and at each kick ``z -> z + A * Phi(theta)``. The circle coordinate has
period 1.

The history over ``[t - tau, t]`` is stored as a chain of cubic Hermite
pieces (values and derivatives at both ends of each piece, so a kick is a
jump between consecutive pieces). A step of length h <= tau/m advances z by
``-lam`` times the exact integral of the stored history over the delayed
window (method of steps), and theta by the integral of the new z piece.
Derivative discontinuities, which sit one and two delays after every jump,
are step breakpoints.
"""

from __future__ import annotations

import bisect
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numba as nb
import numpy as np

from .lyapunov import LyapunovConfig, LyapunovEstimate, batch_means_stderr

DEFAULT_MESH = 64
_CHUNK_STEPS = 4096

# layout of the per-piece value array V[piece, slot, copy]
_ZA, _ZB, _DZA, _DZB, _THA, _THB, _DTHA, _DTHB = range(8)

_G = 0.5 / math.sqrt(3.0)  # two-point Gauss nodes at 1/2 -+ _G


class DDEError(RuntimeError):
    pass


def constant_profile(theta: float) -> float:
    """Kick profile Phi = 1."""
    return 1.0


@dataclass(frozen=True)
class ShearParams:
    lam: float = 0.1
    sigma: float = 3.0
    tau: float = 0.0
    A: float = 0.1
    T: float = 10.0
    Phi: Callable[[float], float] = field(default=constant_profile, compare=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"contraction rate lam must be > 0, got {self.lam}")
        if not self.tau >= 0:
            raise ValueError(f"delay tau must be >= 0, got {self.tau}")
        if not self.T > 0:
            raise ValueError(f"inter-kick time T must be > 0, got {self.T}")
        for name in ("lam", "sigma", "tau", "A", "T"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def constant_kick(self) -> bool:
        return self.Phi is constant_profile

    def to_dict(self) -> dict:
        return {"lam": self.lam, "sigma": self.sigma, "tau": self.tau, "A": self.A, "T": self.T,
                "Phi": getattr(self.Phi, "__name__", repr(self.Phi))}


def hyperbolicity_factor(A: float, sigma: float, lam: float) -> float:
    """Kick amplitude times shear over contraction, A*sigma/lam."""
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    return A * sigma / lam


# ---------------------------------------------------------------------------
# characteristic equation


class CharacteristicRootError(DDEError):
    def __init__(self, msg: str, last: complex):
        super().__init__(msg)
        self.last = last


@dataclass(frozen=True)
class CharacteristicRoot:
    gamma: complex
    residual: float
    iterations: int


def _newton_root(lam: float, tau: float, g: complex, max_iter: int):
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.exp(-g * tau)
            F = g + lam * e
            dF = 1.0 - lam * tau * e
            if dF == 0:
                return g, abs(F), it, False
            g_new = g - F / dF
        if not (np.isfinite(g_new.real) and np.isfinite(g_new.imag)):
            return g, abs(F), it, False
        if abs(g_new - g) <= 1e-15 * max(1.0, abs(g_new)):
            g = g_new
            return g, abs(g + lam * np.exp(-g * tau)), it, True
        g = g_new
    res = abs(g + lam * np.exp(-g * tau))
    return g, res, max_iter, res < 1e-12


def characteristic_root(lam: float, tau: float, max_iter: int = 200) -> CharacteristicRoot:
    """Root of gamma + lam*exp(-gamma*tau) = 0 with the largest real part.

    Newton's method in the complex plane from -lam (the delay-free root)
    and from i*pi/(2*tau) (the root at the stability boundary); the
    converged root with the larger real part wins. The imaginary part is
    reported non-negative (roots come in conjugate pairs).
    """
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    if not tau >= 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if tau == 0:
        return CharacteristicRoot(complex(-lam), 0.0, 0)
    best, last = None, None
    for g0 in (complex(-lam), 1j * math.pi / (2.0 * tau)):
        g, res, it, ok = _newton_root(lam, tau, g0, max_iter)
        last = g
        if ok and res < 1e-12 and (best is None or g.real > best.gamma.real):
            best = CharacteristicRoot(complex(g.real, abs(g.imag)), float(res), it)
    if best is None:
        raise CharacteristicRootError(
            f"characteristic root for lam={lam}, tau={tau} did not converge", complex(last))
    return best


# ---------------------------------------------------------------------------
# compiled history kernels


@nb.njit(cache=True, nogil=True)
def _herm(ta, tb, fa, fb, da, db, s):
    H = tb - ta
    if H <= 0.0:
        return fa
    u = (s - ta) / H
    u2 = u * u
    u3 = u2 * u
    return ((2 * u3 - 3 * u2 + 1) * fa + (u3 - 2 * u2 + u) * H * da
            + (-2 * u3 + 3 * u2) * fb + (u3 - u2) * H * db)


@nb.njit(cache=True, nogil=True)
def _herm_int(ta, tb, fa, fb, da, db, s0, s1):
    # two-point Gauss is exact for the cubic
    L = s1 - s0
    if L <= 0.0:
        return 0.0
    m = 0.5 * (s0 + s1)
    return 0.5 * L * (_herm(ta, tb, fa, fb, da, db, m - _G * L)
                      + _herm(ta, tb, fa, fb, da, db, m + _G * L))


@nb.njit(cache=True, nogil=True)
def _locate(t_a, t_b, ptr, n, s, tol, right):
    # piece holding s; at a piece boundary pick the later piece if right else the earlier
    j = ptr
    if right:
        while j < n - 1 and t_b[j] <= s + tol:
            j += 1
    else:
        while j < n - 1 and t_b[j] < s - tol:
            j += 1
    return j


@nb.njit(cache=True, nogil=True)
def _z_at(t_a, t_b, V, j, k, s):
    s = min(max(s, t_a[j]), t_b[j])
    return _herm(t_a[j], t_b[j], V[j, _ZA, k], V[j, _ZB, k], V[j, _DZA, k], V[j, _DZB, k], s)


@nb.njit(cache=True, nogil=True)
def _advance(t_a, t_b, V, n, ptr, z_now, th_now, t1, dt, lam, sig, tau, breaks, ib):
    """Append pieces from the present time t_b[n-1] up to t1.

    Returns (n, ptr, ib, status); status 0 ok, 2 non-finite state.
    """
    K = V.shape[2]
    t = t_b[n - 1]
    while t1 - t > 1e-12 * max(1.0, abs(t1)):
        h = min(dt, t1 - t)
        while ib < breaks.shape[0] and breaks[ib] <= t + 1e-12 * max(1.0, abs(t)):
            ib += 1
        if ib < breaks.shape[0] and breaks[ib] < t + h:
            h = breaks[ib] - t
        t_new = t1 if h == t1 - t else t + h
        s0 = t - tau
        s1 = t_new - tau
        tol = 1e-9 * h + 4e-16 * max(1.0, abs(s1))
        jr = _locate(t_a, t_b, ptr, n, s0, tol, True)
        jl = _locate(t_a, t_b, jr, n, s1, tol, False)
        for k in range(K):
            integ = 0.0
            for j in range(jr, jl + 1):
                a = max(s0, t_a[j])
                b = min(s1, t_b[j])
                integ += _herm_int(t_a[j], t_b[j], V[j, _ZA, k], V[j, _ZB, k],
                                   V[j, _DZA, k], V[j, _DZB, k], a, b)
            za = z_now[k]
            zb = za - lam * integ
            dza = -lam * _z_at(t_a, t_b, V, jr, k, s0)
            dzb = -lam * _z_at(t_a, t_b, V, jl, k, s1)
            hh = t_new - t
            thb = th_now[k] + hh + sig * (0.5 * hh * (za + zb) + hh * hh * (dza - dzb) / 12.0)
            if not (math.isfinite(zb) and math.isfinite(thb)):
                return n, ptr, ib, 2
            V[n, _ZA, k] = za
            V[n, _ZB, k] = zb
            V[n, _DZA, k] = dza
            V[n, _DZB, k] = dzb
            V[n, _THA, k] = th_now[k]
            V[n, _THB, k] = thb
            V[n, _DTHA, k] = 1.0 + sig * za
            V[n, _DTHB, k] = 1.0 + sig * zb
            z_now[k] = zb
            th_now[k] = thb
        t_a[n] = t
        t_b[n] = t_new
        n += 1
        t = t_new
        s_next = t - tau
        while ptr < n - 1 and t_b[ptr] < s_next - 1e-9 * dt:
            ptr += 1
    return n, ptr, ib, 0


@nb.njit(cache=True, nogil=True)
def _sample(t_a, t_b, V, ptr, n, times, out_z, out_th):
    K = V.shape[2]
    j = ptr
    for i in range(times.shape[0]):
        s = times[i]
        while j < n - 1 and t_b[j] < s:
            j += 1
        sc = min(max(s, t_a[j]), t_b[j])
        for k in range(K):
            out_z[i, k] = _herm(t_a[j], t_b[j], V[j, _ZA, k], V[j, _ZB, k],
                                V[j, _DZA, k], V[j, _DZB, k], sc)
            out_th[i, k] = _herm(t_a[j], t_b[j], V[j, _THA, k], V[j, _THB, k],
                                 V[j, _DTHA, k], V[j, _DTHB, k], sc)


# ---------------------------------------------------------------------------
# history


def _circ(x):
    """Signed circle difference in [-1/2, 1/2)."""
    return (np.asarray(x) + 0.5) % 1.0 - 0.5


class CylinderHistory:
    """Trajectory segment over ``[t - tau, t]`` on the cylinder (one or more copies).

    ``nodes()`` samples the window on the uniform mesh of ``m + 1`` points
    (spacing tau/m); the present endpoint is always exact. With ``tau = 0``
    only the present point is kept.
    """

    def __init__(self, tau: float, m: int, t: float, t_a, t_b, V, z_now, th_now, breaks=()):
        if tau < 0:
            raise ValueError(f"tau must be >= 0, got {tau}")
        if m < 1:
            raise ValueError(f"mesh size m must be >= 1, got {m}")
        self.tau = float(tau)
        self.m = int(m)
        self.t = float(t)
        self._ta = np.asarray(t_a, dtype=float)
        self._tb = np.asarray(t_b, dtype=float)
        self._V = np.asarray(V, dtype=float)
        self._n = len(self._ta)
        self._ptr = 0
        self.z_now = np.array(z_now, dtype=float).ravel()
        self.th_now = np.array(th_now, dtype=float).ravel()
        self._breaks = sorted(float(b) for b in breaks if b > t)

    # construction -------------------------------------------------------

    @classmethod
    def from_function(cls, tau: float, func: Callable[[float], tuple[float, float]],
                      m: int = DEFAULT_MESH, t0: float = 0.0,
                      derivative: Callable[[float], tuple[float, float]] | None = None
                      ) -> "CylinderHistory":
        """Sample ``func(t) -> (theta, z)`` on the mesh over ``[t0 - tau, t0]``.

        Node derivatives come from ``derivative`` or, if omitted, central
        differences of ``func``.
        """
        th0, z0 = func(t0)
        if tau == 0:
            return cls(0.0, m, t0, [], [], np.empty((0, 8, 1)), [z0], [th0])
        nodes = t0 - tau + tau * np.arange(m + 1) / m
        vals = np.array([func(s) for s in nodes], dtype=float)
        if derivative is None:
            eps = 1e-6 * tau / m
            ders = np.array([(np.asarray(func(s + eps)) - np.asarray(func(s - eps))) / (2 * eps)
                             for s in nodes])
        else:
            ders = np.array([derivative(s) for s in nodes], dtype=float)
        V = np.empty((m, 8, 1))
        V[:, _ZA, 0], V[:, _ZB, 0] = vals[:-1, 1], vals[1:, 1]
        V[:, _DZA, 0], V[:, _DZB, 0] = ders[:-1, 1], ders[1:, 1]
        V[:, _THA, 0], V[:, _THB, 0] = vals[:-1, 0], vals[1:, 0]
        V[:, _DTHA, 0], V[:, _DTHB, 0] = ders[:-1, 0], ders[1:, 0]
        t_b = nodes[1:].copy()
        t_b[-1] = t0
        # the present value may differ from the history's end; the flow reads
        # the present value, so a mismatch is a jump at t0
        return cls(tau, m, t0, nodes[:-1], t_b, V, [z0], [th0], [t0 + tau, t0 + 2 * tau])

    @classmethod
    def constant(cls, tau: float, theta: float, z: float, m: int = DEFAULT_MESH,
                 t0: float = 0.0) -> "CylinderHistory":
        return cls.from_function(tau, lambda s: (theta, z), m, t0,
                                 derivative=lambda s: (0.0, 0.0))

    @classmethod
    def quadratic(cls, tau: float, m: int = DEFAULT_MESH) -> "CylinderHistory":
        """h(t) = (theta, z) = (0, t^2) on [-tau, 0]."""
        return cls.from_function(tau, lambda s: (0.0, s * s), m, 0.0,
                                 derivative=lambda s: (0.0, 2.0 * s))

    def copy(self) -> "CylinderHistory":
        h = CylinderHistory.__new__(CylinderHistory)
        h.tau, h.m, h.t = self.tau, self.m, self.t
        h._ta, h._tb = self._ta[: self._n].copy(), self._tb[: self._n].copy()
        h._V = self._V[: self._n].copy()
        h._n, h._ptr = self._n, min(self._ptr, max(self._n - 1, 0))
        h.z_now, h.th_now = self.z_now.copy(), self.th_now.copy()
        h._breaks = list(self._breaks)
        return h

    def stacked(self, copies: int) -> "CylinderHistory":
        """The same history repeated ``copies`` times along the copy axis."""
        h = self.copy()
        h._V = np.repeat(h._V[:, :, :1], copies, axis=2)
        h.z_now = np.repeat(h.z_now[:1], copies)
        h.th_now = np.repeat(h.th_now[:1], copies)
        return h

    @property
    def copies(self) -> int:
        return len(self.z_now)

    # access --------------------------------------------------------------

    @property
    def present(self) -> tuple[float, float]:
        """(theta mod 1, z) at the present time, first copy."""
        return float(self.th_now[0] % 1.0), float(self.z_now[0])

    def mesh_times(self) -> np.ndarray:
        if self.tau == 0:
            return np.array([self.t])
        ts = self.t - self.tau + self.tau * np.arange(self.m + 1) / self.m
        ts[-1] = self.t
        return ts

    def nodes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(times, theta, z) on the uniform mesh; theta unwrapped, shape (m+1, copies)."""
        ts = self.mesh_times()
        K = self.copies
        if self.tau == 0:
            return ts, self.th_now[None, :].copy(), self.z_now[None, :].copy()
        z = np.empty((len(ts), K))
        th = np.empty((len(ts), K))
        _sample(self._ta, self._tb, self._V, 0, self._n, ts[:-1], z[:-1], th[:-1])
        z[-1], th[-1] = self.z_now, self.th_now
        return ts, th, z

    def z_at(self, s: float, copy: int = 0) -> float:
        if s == self.t or self.tau == 0:
            return float(self.z_now[copy])
        if not self.t - self.tau - 1e-12 <= s <= self.t:
            raise ValueError(f"time {s} lies outside the stored window")
        out_z, out_th = np.empty((1, self.copies)), np.empty((1, self.copies))
        _sample(self._ta, self._tb, self._V, 0, self._n, np.array([s]), out_z, out_th)
        return float(out_z[0, copy])

    # mutation (used by the public functional wrappers) --------------------

    def _reserve(self, extra: int):
        # drop pieces entirely before the delayed window, then grow if needed
        keep = max(self._ptr - 1, 0)
        if keep > 0:
            n = self._n - keep
            self._ta[:n] = self._ta[keep: self._n]
            self._tb[:n] = self._tb[keep: self._n]
            self._V[:n] = self._V[keep: self._n]
            self._n, self._ptr = n, self._ptr - keep
        need = self._n + extra
        if need > len(self._ta):
            cap = max(need, 2 * len(self._ta))
            ta, tb = np.empty(cap), np.empty(cap)
            V = np.empty((cap, 8, self._V.shape[2]))
            ta[: self._n], tb[: self._n], V[: self._n] = (self._ta[: self._n],
                                                           self._tb[: self._n],
                                                           self._V[: self._n])
            self._ta, self._tb, self._V = ta, tb, V

    def _advance(self, lam: float, sigma: float, t1: float):
        if t1 < self.t:
            raise ValueError(f"t1={t1} precedes the present time {self.t}")
        if t1 == self.t:
            return
        if self.tau == 0:
            dt = t1 - self.t
            e = math.exp(-lam * dt)
            z0 = self.z_now
            self.th_now = self.th_now + dt + sigma * z0 * (-math.expm1(-lam * dt)) / lam
            self.z_now = z0 * e
            self.t = t1
            if not (np.all(np.isfinite(self.z_now)) and np.all(np.isfinite(self.th_now))):
                raise DDEError(f"non-finite state at t={t1}")
            return
        dt = self.tau / self.m
        # advance in chunks so that pieces older than the delayed window are
        # released regularly (matters when tau is tiny relative to t1 - t)
        chunk = max(8 * self.m, _CHUNK_STEPS) * dt
        while self.t < t1:
            t_next = t1 if t1 - self.t <= chunk else self.t + chunk
            lo = bisect.bisect_right(self._breaks, self.t)
            hi = bisect.bisect_left(self._breaks, t_next)
            breaks = np.array(self._breaks[lo:hi], dtype=float)
            self._reserve(int(math.ceil((t_next - self.t) / dt)) + len(breaks) + 2)
            n, ptr, _, status = _advance(self._ta, self._tb, self._V, self._n, self._ptr,
                                         self.z_now, self.th_now, float(t_next), dt, float(lam),
                                         float(sigma), self.tau, breaks, 0)
            self._n, self._ptr = n, ptr
            self.t = float(t_next)
            self._breaks = self._breaks[hi:]
            if status != 0:
                raise DDEError(f"non-finite state before t={t_next}")

    def _jump(self, dz):
        self.z_now = self.z_now + np.asarray(dz, dtype=float)
        if self.tau > 0:
            for b in (self.t + self.tau, self.t + 2 * self.tau):
                bisect.insort(self._breaks, b)

    def _wrap_theta(self):
        # shift all copies by the same whole number of turns (differences unchanged)
        w = math.floor(self.th_now[0])
        if w:
            self.th_now = self.th_now - w
            if self._n:
                self._V[: self._n, _THA:_THB + 1] -= w


def dde_integrate(p: ShearParams, h: CylinderHistory, t1: float) -> CylinderHistory:
    """History at ``t1`` under the unforced flow (the input is not modified)."""
    out = h.copy()
    out._advance(p.lam, p.sigma, t1)
    return out


def dde_kick(h: CylinderHistory, A: float, Phi: Callable[[float], float] = constant_profile
             ) -> CylinderHistory:
    """Move the present point (theta, z) to (theta, z + A*Phi(theta)); the past is untouched."""
    out = h.copy()
    if A != 0:
        out._jump([A * Phi(float(th % 1.0)) for th in out.th_now])
    return out


def history_distance(h: CylinderHistory, a: int = 0, b: int = 1) -> float:
    """RMS over mesh nodes of the (circle theta, z) difference between two copies."""
    _, th, z = h.nodes()
    dth = _circ(th[:, b] - th[:, a])
    dz = z[:, b] - z[:, a]
    return float(math.sqrt(np.mean(dth * dth + dz * dz)))


def _rescale(h: CylinderHistory, factor: float):
    # secondary <- base + factor * (secondary - base), everywhere it is stored
    V = h._V[: h._n]
    for s in (_ZA, _ZB, _DZA, _DZB, _DTHA, _DTHB):
        V[:, s, 1] = V[:, s, 0] + factor * (V[:, s, 1] - V[:, s, 0])
    for s in (_THA, _THB):
        V[:, s, 1] = V[:, s, 0] + factor * _circ(V[:, s, 1] - V[:, s, 0])
    h.z_now[1] = h.z_now[0] + factor * (h.z_now[1] - h.z_now[0])
    h.th_now[1] = h.th_now[0] + factor * _circ(h.th_now[1] - h.th_now[0])


def _offset_z(h: CylinderHistory, d0: float):
    h._V[: h._n, _ZA, 1] = h._V[: h._n, _ZA, 0] + d0
    h._V[: h._n, _ZB, 1] = h._V[: h._n, _ZB, 0] + d0
    h.z_now[1] = h.z_now[0] + d0


def dde_lyapunov(p: ShearParams, h0: CylinderHistory, cfg: LyapunovConfig | None = None
                 ) -> LyapunovEstimate:
    """Two-history maximal exponent per kick-relaxation cycle (kicks at t = 0, T, 2T, ...).

    The secondary history is the base with z offset by d0 at every node;
    distances are RMS over the mesh nodes.
    """
    cfg = cfg or LyapunovConfig()
    h = h0.stacked(2)
    _offset_z(h, cfg.d0)
    n = cfg.burn_in + cfg.cycles
    log_growth = np.empty(n)
    flagged = []
    t = h.t
    for c in range(n):
        h._jump([p.A * p.Phi(float(th % 1.0)) for th in h.th_now])
        t = h0.t + (c + 1) * p.T
        h._advance(p.lam, p.sigma, t)
        d1 = history_distance(h)
        if not math.isfinite(d1):
            raise DDEError(f"non-finite separation in cycle {c}")
        if d1 == 0.0:
            log_growth[c] = math.log(np.finfo(float).eps / cfg.d0)
            flagged.append(c)
            _offset_z(h, cfg.d0)
        else:
            log_growth[c] = math.log(d1 / cfg.d0)
            _rescale(h, cfg.d0 / d1)
        h._wrap_theta()
    kept = log_growth[cfg.burn_in:]
    return LyapunovEstimate(
        lambda_max=float(np.mean(kept)),
        log_growth=kept,
        stderr=batch_means_stderr(kept, cfg.batches),
        cycles=cfg.cycles,
        burn_in=cfg.burn_in,
        d0=cfg.d0,
        seed=cfg.seed,
        schedule={"kind": "periodic", "A": p.A, "T": p.T, "shear": p.to_dict(), "m": h0.m},
        flagged_cycles=flagged,
    )


def delay_free_time_T_map(p: ShearParams, theta: float, z: float) -> tuple[float, float]:
    """Closed-form kick-then-relax map for tau = 0."""
    zk = z + p.A * p.Phi(theta % 1.0)
    e = math.exp(-p.lam * p.T)
    return (theta + p.T + p.sigma * zk * (1 - e) / p.lam) % 1.0, zk * e


@dataclass
class DDEHeatmap:
    taus: np.ndarray
    Ts: np.ndarray
    values: np.ndarray  # shape (len(taus), len(Ts))

    def signs(self, zero_band: float = 0.0) -> np.ndarray:
        """Sign per cell; 0 inside the zero band, also 0 for diverged (NaN) cells."""
        v = np.nan_to_num(self.values, nan=0.0)
        s = np.sign(v)
        s[np.abs(v) <= zero_band] = 0
        return s.astype(int)

    def to_csv(self, path: str | Path, zero_band: float = 0.0) -> None:
        """Rows ``tau,T,lambda_max,sign``; |lambda_max| <= zero_band is labelled 0."""
        signs = self.signs(zero_band)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "T", "lambda_max", "sign"])
            for i, tau in enumerate(self.taus):
                for j, T in enumerate(self.Ts):
                    w.writerow([repr(float(tau)), repr(float(T)), repr(float(self.values[i, j])),
                                int(signs[i, j])])


def dde_heatmap(base: ShearParams, taus, Ts, cfg: LyapunovConfig | None = None,
                m: int = DEFAULT_MESH,
                history: Callable[[float, int], CylinderHistory] = CylinderHistory.quadratic,
                threads: int = 1) -> DDEHeatmap:
    """Lambda_max over a (tau, T) grid; cells are independent, assembly is order-fixed.

    Cells whose integration diverges are stored as NaN.
    """
    from dataclasses import replace

    taus = np.asarray(taus, dtype=float)
    Ts = np.asarray(Ts, dtype=float)
    cells = [(i, j) for i in range(len(taus)) for j in range(len(Ts))]

    def one(cell):
        i, j = cell
        p = replace(base, tau=float(taus[i]), T=float(Ts[j]))
        try:
            return dde_lyapunov(p, history(p.tau, m), cfg).lambda_max
        except DDEError:
            return float("nan")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(one, cells))
    else:
        vals = [one(c) for c in cells]
    return DDEHeatmap(taus, Ts, np.array(vals).reshape(len(taus), len(Ts)))
