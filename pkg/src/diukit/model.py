"""Ultradian glucose-insulin model: state, parameters and vector field.

The six-dimensional state is ``(I_p, I_i, G, h1, h2, h3)``: plasma insulin,
interstitial insulin, glucose mass and the three stages of the linear filter
that delays the insulin signal reaching hepatic glucose production.

Everything here is a pure function of its arguments. Forcing schedules and
integrators live in :mod:`diukit.forcing` and :mod:`diukit.integrate`.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

STATE_NAMES = ("I_p", "I_i", "G", "h1", "h2", "h3")

# sigmoid exponents beyond this are replaced by the asymptote
EXP_CLAMP = 500.0

# initial guess for equilibrium search and fallback initial condition
REFERENCE_STATE = (100.0, 100.0, 10000.0, 100.0, 100.0, 100.0)


class ModelError(ValueError):
    """Invalid parameters or non-finite model input."""


class UltradianState(NamedTuple):
    I_p: float
    I_i: float
    G: float
    h1: float
    h2: float
    h3: float

    @classmethod
    def from_array(cls, y) -> "UltradianState":
        y = np.asarray(y, dtype=float)
        if y.shape != (6,):
            raise ModelError(f"expected 6 state components, got shape {y.shape}")
        return cls(*(float(v) for v in y))

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


@dataclass(frozen=True)
class UltradianParams:
    """Physiological constants (nominal values from the model's standard table).

    ``I_0`` is the basal glucose infusion rate (mg/min); the kicked
    experiments run with ``I_0 = 0``.
    """

    V_p: float = 3.0
    V_i: float = 11.0
    V_g: float = 10.0
    E: float = 0.2
    t_p: float = 6.0
    t_i: float = 100.0
    t_d: float = 12.0
    R_m: float = 209.0
    a_1: float = 6.6
    C_1: float = 300.0
    C_2: float = 144.0
    C_3: float = 100.0
    C_4: float = 80.0
    C_5: float = 26.0
    U_b: float = 72.0
    U_0: float = 4.0
    U_m: float = 94.0
    R_g: float = 180.0
    alpha: float = 7.5
    beta: float = 1.772
    I_0: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ModelError(f"parameter {f.name} must be a finite number, got {v!r}")
        positive = ("V_p", "V_i", "V_g", "E", "t_p", "t_i", "t_d", "R_m", "R_g",
                    "U_b", "U_0", "U_m", "C_1", "C_2", "C_3", "C_4", "C_5")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ModelError(f"parameter {name} must be > 0, got {getattr(self, name)}")
        if self.I_0 < 0:
            raise ModelError(f"parameter I_0 must be >= 0, got {self.I_0}")

    @property
    def kappa(self) -> float:
        return (1.0 / self.C_4) * (1.0 / self.V_i - 1.0 / (self.E * self.t_i))

    def with_delay(self, t_d: float) -> "UltradianParams":
        return replace(self, t_d=float(t_d))

    def as_array(self) -> np.ndarray:
        """Packed parameter vector in field order, consumed by the compiled kernels."""
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


PARAM_NAMES = tuple(f.name for f in fields(UltradianParams))


def params_from_mapping(values: dict[str, object]) -> UltradianParams:
    """Build parameters from a mapping; omitted keys keep their nominal values."""
    unknown = sorted(set(values) - set(PARAM_NAMES))
    if unknown:
        raise ModelError(f"unknown model parameter(s): {', '.join(unknown)}")
    kwargs = {}
    for key, raw in values.items():
        try:
            kwargs[key] = float(raw)
        except (TypeError, ValueError):
            raise ModelError(f"parameter {key}: cannot parse {raw!r} as a number") from None
    return UltradianParams(**kwargs)


def load_params(path: str | Path, section: str = "model") -> UltradianParams:
    """Read model parameters from the ``[model]`` section of an INI-style file."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    if not cp.has_section(section):
        return UltradianParams()
    return params_from_mapping(dict(cp.items(section)))


def _logistic(scale: float, exponent: float) -> float:
    # scale / (1 + e^x), clamped so trial steps never produce inf/nan
    if exponent > EXP_CLAMP:
        return 0.0
    if exponent < -EXP_CLAMP:
        return scale
    return scale / (1.0 + math.exp(exponent))


def f1(G: float, p: UltradianParams) -> float:
    """Insulin secretion rate, a sigmoid in glucose saturating at ``R_m``."""
    return _logistic(p.R_m, -G / (p.V_g * p.C_1) + p.a_1)


def f2(G: float, p: UltradianParams) -> float:
    """Insulin-independent glucose utilization."""
    return p.U_b * (1.0 - math.exp(-G / (p.C_2 * p.V_g)))


def f3(I_i: float, p: UltradianParams) -> float:
    """Insulin-dependent glucose utilization per unit glucose (1/min).

    At ``I_i <= 0`` the Hill term vanishes and the lower limit
    ``U_0 / (C_3 V_g)`` is returned.
    """
    lo = p.U_0 / (p.C_3 * p.V_g)
    if I_i <= 0.0:
        return lo
    x = p.kappa * I_i
    if x <= 0.0:
        return lo
    log_term = -p.beta * math.log(x)
    if log_term > EXP_CLAMP:
        return lo
    hill = 1.0 / (1.0 + math.exp(log_term))
    return (p.U_0 + (p.U_m - p.U_0) * hill) / (p.C_3 * p.V_g)


def f4(h3: float, p: UltradianParams) -> float:
    """Hepatic glucose production, suppressed by the delayed insulin signal ``h3``."""
    return _logistic(p.R_g, p.alpha * (h3 / (p.C_5 * p.V_p) - 1.0))


def ultradian_rhs(s, p: UltradianParams, drive: float) -> np.ndarray:
    """Time derivative of the state under a smooth glucose inflow ``drive`` (mg/min).

    Instantaneous kicks are not part of the vector field; see
    :func:`diukit.forcing.apply_kick`.
    """
    y = np.asarray(s, dtype=float)
    if y.shape != (6,):
        raise ModelError(f"expected 6 state components, got shape {y.shape}")
    for name, v in zip(STATE_NAMES, y):
        if not math.isfinite(v):
            raise ModelError(f"non-finite state component {name}={v}")
    if not math.isfinite(drive):
        raise ModelError(f"non-finite drive {drive}")
    Ip, Ii, G, h1, h2, h3 = y
    exchange = p.E * (Ip / p.V_p - Ii / p.V_i)
    return np.array([
        f1(G, p) - exchange - Ip / p.t_p,
        exchange - Ii / p.t_i,
        f4(h3, p) + drive - f2(G, p) - f3(Ii, p) * G,
        (Ip - h1) / p.t_d,
        (h1 - h2) / p.t_d,
        (h2 - h3) / p.t_d,
    ])


def ultradian_jacobian(s, p: UltradianParams) -> np.ndarray:
    """Analytic Jacobian of :func:`ultradian_rhs` with respect to the state."""
    Ip, Ii, G, h1, h2, h3 = np.asarray(s, dtype=float)
    J = np.zeros((6, 6))
    J[0, 0] = -p.E / p.V_p - 1.0 / p.t_p
    J[0, 1] = p.E / p.V_i
    u1 = -G / (p.V_g * p.C_1) + p.a_1
    if abs(u1) < EXP_CLAMP:
        e = math.exp(u1)
        J[0, 2] = p.R_m * e / (1.0 + e) ** 2 / (p.V_g * p.C_1)
    J[1, 0] = p.E / p.V_p
    J[1, 1] = -p.E / p.V_i - 1.0 / p.t_i
    # dG/dt
    J[2, 2] = -p.U_b * math.exp(-G / (p.C_2 * p.V_g)) / (p.C_2 * p.V_g) - f3(Ii, p)
    if Ii > 0.0:
        x = p.kappa * Ii
        lt = -p.beta * math.log(x)
        if abs(lt) < EXP_CLAMP:
            q = math.exp(lt)
            dhill = p.beta * q / Ii / (1.0 + q) ** 2
            J[2, 1] = -G * (p.U_m - p.U_0) * dhill / (p.C_3 * p.V_g)
    u4 = p.alpha * (h3 / (p.C_5 * p.V_p) - 1.0)
    if abs(u4) < EXP_CLAMP:
        e = math.exp(u4)
        J[2, 5] = -p.R_g * e / (1.0 + e) ** 2 * p.alpha / (p.C_5 * p.V_p)
    k = 1.0 / p.t_d
    J[3, 0], J[3, 3] = k, -k
    J[4, 3], J[4, 4] = k, -k
    J[5, 4], J[5, 5] = k, -k
    return J


def find_equilibrium(
    p: UltradianParams,
    drive: float = 0.0,
    guess=REFERENCE_STATE,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> UltradianState:
    """Damped Newton iteration on the vector field.

    Converged when the max-norm of the vector field drops below ``tol``.
    Steps are halved until the residual norm decreases.
    """
    y = np.array(guess, dtype=float)
    r = ultradian_rhs(y, p, drive)
    for _ in range(max_iter):
        res = np.max(np.abs(r))
        if res < tol:
            return UltradianState.from_array(y)
        step = np.linalg.solve(ultradian_jacobian(y, p), -r)
        lam = 1.0
        while lam > 1e-6:
            trial = y + lam * step
            if np.all(np.isfinite(trial)):
                rt = ultradian_rhs(trial, p, drive)
                if np.max(np.abs(rt)) < res:
                    break
            lam *= 0.5
        else:
            break
        y, r = trial, rt
    if np.max(np.abs(r)) < tol:
        return UltradianState.from_array(y)
    raise ModelError(f"equilibrium search did not converge (residual {np.max(np.abs(r)):.3e})")


def is_stable_equilibrium(p: UltradianParams, s) -> bool:
    return bool(np.max(np.linalg.eigvals(ultradian_jacobian(s, p)).real) < 0.0)


def default_initial_state(p: UltradianParams) -> UltradianState:
    """Drive-free equilibrium when it is stable, else the reference state.

    Callers starting from the reference state are expected to discard a
    burn-in of at least 50 kick-relaxation cycles.
    """
    try:
        eq = find_equilibrium(p)
    except ModelError:
        return UltradianState(*REFERENCE_STATE)
    if is_stable_equilibrium(p, eq):
        return eq
    return UltradianState(*REFERENCE_STATE)
