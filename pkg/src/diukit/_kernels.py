"""Compiled inner loops.

The steppers are written once as plain Python inside factory functions.
Compiled with numba they drive the Ultradian fast path; left interpreted
they integrate arbitrary Python vector fields with identical arithmetic.

Vector-field signature: ``fun(t, y, out, params, drive)`` writing dy/dt
into ``out``. Jacobian signature: ``jac(t, y, J, params, drive)``.

Stepper return codes are listed in ``STATUS``.
"""

import math

import numba as nb
import numpy as np

OK, MAX_STEPS, NON_FINITE, STEP_UNDERFLOW, ZERO_SEPARATION = 0, 1, 2, 3, 4
STATUS = {
    OK: "ok",
    MAX_STEPS: "step-count limit exceeded",
    NON_FINITE: "non-finite state",
    STEP_UNDERFLOW: "step size underflow",
    ZERO_SEPARATION: "trajectories coincide",
}

jit = nb.njit(cache=True, nogil=True)

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                          22 / 525, -1 / 40)
# continuous extension (Hairer & Wanner, dopri5 contd5)
D1, D3, D4, D5, D6, D7 = (-12715105075 / 11282082432, 87487479700 / 32700410799,
                          -10690763975 / 1880347072, 701980252875 / 199316789632,
                          -1453857185 / 822651844, 69997945 / 29380423)

# Rosenbrock 2(3) constants (Shampine & Reichelt 1997)
ROS_D = 1.0 / (2.0 + math.sqrt(2.0))
ROS_E32 = 6.0 + math.sqrt(2.0)


# ---------------------------------------------------------------- Ultradian


def _ultradian_field(t, y, out, p, drive):
    Vp, Vi, Vg, E, tp, ti, td = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    Rm, a1, C1, C2_, C3_, C4_, C5_ = p[7], p[8], p[9], p[10], p[11], p[12], p[13]
    Ub, U0, Um, Rg, al, be = p[14], p[15], p[16], p[17], p[18], p[19]
    kap = (1.0 / C4_) * (1.0 / Vi - 1.0 / (E * ti))
    lo3 = U0 / (C3_ * Vg)
    for k in range(y.shape[0] // 6):
        o = 6 * k
        Ip, Ii, G, h1, h2, h3 = y[o], y[o + 1], y[o + 2], y[o + 3], y[o + 4], y[o + 5]
        u = -G / (Vg * C1) + a1
        if u > 500.0:
            f1 = 0.0
        elif u < -500.0:
            f1 = Rm
        else:
            f1 = Rm / (1.0 + math.exp(u))
        f2 = Ub * (1.0 - math.exp(-G / (C2_ * Vg)))
        f3 = lo3
        if Ii > 0.0 and kap * Ii > 0.0:
            lt = -be * math.log(kap * Ii)
            if lt <= 500.0:
                f3 = (U0 + (Um - U0) / (1.0 + math.exp(lt))) / (C3_ * Vg)
        u = al * (h3 / (C5_ * Vp) - 1.0)
        if u > 500.0:
            f4 = 0.0
        elif u < -500.0:
            f4 = Rg
        else:
            f4 = Rg / (1.0 + math.exp(u))
        x = E * (Ip / Vp - Ii / Vi)
        out[o] = f1 - x - Ip / tp
        out[o + 1] = x - Ii / ti
        out[o + 2] = f4 + drive - f2 - f3 * G
        out[o + 3] = (Ip - h1) / td
        out[o + 4] = (h1 - h2) / td
        out[o + 5] = (h2 - h3) / td


def _ultradian_jac(t, y, J, p, drive):
    Vp, Vi, Vg, E, tp, ti, td = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    Rm, a1, C1, C2_, C3_, C4_, C5_ = p[7], p[8], p[9], p[10], p[11], p[12], p[13]
    Ub, U0, Um, Rg, al, be = p[14], p[15], p[16], p[17], p[18], p[19]
    kap = (1.0 / C4_) * (1.0 / Vi - 1.0 / (E * ti))
    J[:, :] = 0.0
    for k in range(y.shape[0] // 6):
        o = 6 * k
        Ii, G, h3 = y[o + 1], y[o + 2], y[o + 5]
        J[o, o] = -E / Vp - 1.0 / tp
        J[o, o + 1] = E / Vi
        u = -G / (Vg * C1) + a1
        if abs(u) < 500.0:
            e = math.exp(u)
            J[o, o + 2] = Rm * e / (1.0 + e) ** 2 / (Vg * C1)
        J[o + 1, o] = E / Vp
        J[o + 1, o + 1] = -E / Vi - 1.0 / ti
        f3 = U0 / (C3_ * Vg)
        if Ii > 0.0 and kap * Ii > 0.0:
            lt = -be * math.log(kap * Ii)
            if lt <= 500.0:
                q = math.exp(lt)
                f3 = (U0 + (Um - U0) / (1.0 + q)) / (C3_ * Vg)
                J[o + 2, o + 1] = -G * (Um - U0) * be * q / Ii / (1.0 + q) ** 2 / (C3_ * Vg)
        J[o + 2, o + 2] = -Ub * math.exp(-G / (C2_ * Vg)) / (C2_ * Vg) - f3
        u = al * (h3 / (C5_ * Vp) - 1.0)
        if abs(u) < 500.0:
            e = math.exp(u)
            J[o + 2, o + 5] = -Rg * e / (1.0 + e) ** 2 * al / (C5_ * Vp)
        r = 1.0 / td
        J[o + 3, o] = r
        J[o + 3, o + 3] = -r
        J[o + 4, o + 3] = r
        J[o + 4, o + 4] = -r
        J[o + 5, o + 4] = r
        J[o + 5, o + 5] = -r


ultradian_field = jit(_ultradian_field)
ultradian_jac = jit(_ultradian_jac)


# ---------------------------------------------------------------- steppers


def _make_dopri5(fun):
    def dopri5(y, t0, t1, p, drive, rtol, atol, h, hmax, max_steps, t_out, y_out, i_out):
        """Advance ``y`` in place from t0 to t1; returns (status, t, h, steps, i_out)."""
        n = y.shape[0]
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        k5 = np.empty(n)
        k6 = np.empty(n)
        k7 = np.empty(n)
        yt = np.empty(n)
        yn = np.empty(n)
        t = t0
        n_out = t_out.shape[0]
        while i_out < n_out and t_out[i_out] <= t0:
            if t_out[i_out] == t0:
                for i in range(n):
                    y_out[i_out, i] = y[i]
            i_out += 1
        if t1 <= t0:
            return 0, t, h, 0, i_out
        fun(t, y, k1, p, drive)
        errold = 1e-4
        steps = 0
        hmin = 16.0 * 2.2e-16 * max(abs(t0), abs(t1), 1.0)
        h = min(h, hmax, t1 - t0)
        reject = False
        while t < t1:
            if steps >= max_steps:
                return 1, t, h, steps, i_out
            last = False
            if t + h >= t1 - hmin:
                h = t1 - t
                last = True
            if h < hmin:
                return 3, t, h, steps, i_out
            for i in range(n):
                yt[i] = y[i] + h * A21 * k1[i]
            fun(t + C2 * h, yt, k2, p, drive)
            for i in range(n):
                yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
            fun(t + C3 * h, yt, k3, p, drive)
            for i in range(n):
                yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            fun(t + C4 * h, yt, k4, p, drive)
            for i in range(n):
                yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            fun(t + C5 * h, yt, k5, p, drive)
            for i in range(n):
                yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                    + A64 * k4[i] + A65 * k5[i])
            fun(t + h, yt, k6, p, drive)
            for i in range(n):
                yn[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i]
                                    + B5 * k5[i] + B6 * k6[i])
            fun(t + h, yn, k7, p, drive)
            steps += 1
            err = 0.0
            finite = True
            for i in range(n):
                if not math.isfinite(yn[i]):
                    finite = False
                sk = atol + rtol * max(abs(y[i]), abs(yn[i]))
                e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                         + E6 * k6[i] + E7 * k7[i]) / sk
                err += e * e
            err = math.sqrt(err / n)
            if not finite or not math.isfinite(err):
                # treat as a failed trial step; give up only once h collapses
                h *= 0.1
                reject = True
                if h < hmin:
                    return 2, t, h, steps, i_out
                continue
            fac11 = err ** 0.17
            if err <= 1.0:
                tn = t1 if last else t + h
                while i_out < n_out and t_out[i_out] <= tn:
                    s = (t_out[i_out] - t) / h
                    s1 = 1.0 - s
                    for i in range(n):
                        ydiff = yn[i] - y[i]
                        bspl = h * k1[i] - ydiff
                        r4 = ydiff - h * k7[i] - bspl
                        r5 = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i]
                                  + D6 * k6[i] + D7 * k7[i])
                        y_out[i_out, i] = y[i] + s * (ydiff + s1 * (bspl + s * (r4 + s1 * r5)))
                    i_out += 1
                for i in range(n):
                    y[i] = yn[i]
                    k1[i] = k7[i]
                fac = fac11 / errold ** 0.04
                fac = max(0.1, min(5.0, fac / 0.9))
                hnew = h / fac
                if reject:
                    hnew = min(hnew, h)
                reject = False
                errold = max(err, 1e-4)
                t = tn
                if not last:
                    h = min(hnew, hmax)
            else:
                h = h / min(5.0, fac11 / 0.9)
                reject = True
        return 0, t, h, steps, i_out

    return dopri5


def _make_ros23(fun, jac):
    def ros23(y, t0, t1, p, drive, rtol, atol, h, hmax, max_steps, t_out, y_out, i_out):
        """Linearly implicit Rosenbrock 2(3) pair; same contract as dopri5."""
        n = y.shape[0]
        F0 = np.empty(n)
        F1 = np.empty(n)
        F2 = np.empty(n)
        yt = np.empty(n)
        yn = np.empty(n)
        J = np.empty((n, n))
        t = t0
        n_out = t_out.shape[0]
        while i_out < n_out and t_out[i_out] <= t0:
            if t_out[i_out] == t0:
                for i in range(n):
                    y_out[i_out, i] = y[i]
            i_out += 1
        if t1 <= t0:
            return 0, t, h, 0, i_out
        fun(t, y, F0, p, drive)
        steps = 0
        hmin = 16.0 * 2.2e-16 * max(abs(t0), abs(t1), 1.0)
        h = min(h, hmax, t1 - t0)
        need_jac = True
        while t < t1:
            if steps >= max_steps:
                return 1, t, h, steps, i_out
            if need_jac:
                jac(t, y, J, p, drive)
                need_jac = False
            last = False
            if t + h >= t1 - hmin:
                h = t1 - t
                last = True
            if h < hmin:
                return 3, t, h, steps, i_out
            W = np.eye(n) - (h * ROS_D) * J
            Winv = np.linalg.inv(W)
            k1 = Winv @ F0
            for i in range(n):
                yt[i] = y[i] + 0.5 * h * k1[i]
            fun(t + 0.5 * h, yt, F1, p, drive)
            k2 = Winv @ (F1 - k1) + k1
            for i in range(n):
                yn[i] = y[i] + h * k2[i]
            fun(t + h, yn, F2, p, drive)
            k3 = Winv @ (F2 - ROS_E32 * (k2 - F1) - 2.0 * (k1 - F0))
            steps += 1
            err = 0.0
            finite = True
            for i in range(n):
                if not math.isfinite(yn[i]):
                    finite = False
                sk = atol + rtol * max(abs(y[i]), abs(yn[i]))
                e = h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]) / sk
                err += e * e
            err = math.sqrt(err / n)
            if not finite or not math.isfinite(err):
                h *= 0.1
                if h < hmin:
                    return 2, t, h, steps, i_out
                continue
            if err <= 1.0:
                tn = t1 if last else t + h
                c = 1.0 / (1.0 - 2.0 * ROS_D)
                while i_out < n_out and t_out[i_out] <= tn:
                    s = (t_out[i_out] - t) / h
                    a = s * (1.0 - s) * c
                    b = s * (s - 2.0 * ROS_D) * c
                    for i in range(n):
                        y_out[i_out, i] = y[i] + h * (a * k1[i] + b * k2[i])
                    i_out += 1
                for i in range(n):
                    y[i] = yn[i]
                    F0[i] = F2[i]
                t = tn
                need_jac = True
                if not last:
                    h = min(h * min(5.0, 0.8 * err ** (-1.0 / 3.0)) if err > 0 else 5.0 * h, hmax)
            else:
                h = h * max(0.1, 0.8 * err ** (-1.0 / 3.0))
        return 0, t, h, steps, i_out

    return ros23


dopri5_ultradian = jit(_make_dopri5(ultradian_field))
ros23_ultradian = jit(_make_ros23(ultradian_field, ultradian_jac))

DOPRI5, ROS23 = 0, 1


@jit
def ultradian_segment(method, y, t0, t1, p, drive, rtol, atol, h, hmax, max_steps,
                      t_out, y_out, i_out):
    if method == ROS23:
        return ros23_ultradian(y, t0, t1, p, drive, rtol, atol, h, hmax, max_steps,
                               t_out, y_out, i_out)
    return dopri5_ultradian(y, t0, t1, p, drive, rtol, atol, h, hmax, max_steps,
                            t_out, y_out, i_out)


@jit
def ultradian_pair_cycles(method, y, p, c_start, c_stop, kicks, seg_ptr, seg_t0, seg_t1,
                          seg_drive, d0, rtol, atol, h0, hmax, max_steps, log_growth):
    """Advance base (y[:6]) and secondary (y[6:]) through cycles [c_start, c_stop).

    Cycle c: kick both copies by ``kicks[c]`` on G, integrate segments
    ``seg_ptr[c]:seg_ptr[c+1]``, record log(d1/d_start), pull the secondary back
    to distance d0 along the separation direction. d_start is the separation
    actually stored after the kick; it equals d0 up to rounding at the scale of
    the state (G ~ 1e4 mg puts that at ~1e-4 d0), which would otherwise leak
    into every record. Returns (status, cycle).
    """
    no_out = np.empty(0)
    no_yout = np.empty((0, 12))
    h = h0
    for c in range(c_start, c_stop):
        y[2] += kicks[c]
        y[8] += kicks[c]
        d_start = 0.0
        for i in range(6):
            d_start += (y[6 + i] - y[i]) ** 2
        d_start = math.sqrt(d_start)
        if d_start == 0.0:
            return 4, c
        first = True
        for s in range(seg_ptr[c], seg_ptr[c + 1]):
            if not first:
                h = h0
            first = False
            status, _, h, _, _ = ultradian_segment(method, y, seg_t0[s], seg_t1[s], p,
                                                   seg_drive[s], rtol, atol, h, hmax,
                                                   max_steps, no_out, no_yout, 0)
            if status != 0:
                return status, c
        d = 0.0
        for i in range(6):
            d += (y[6 + i] - y[i]) ** 2
        d = math.sqrt(d)
        if not math.isfinite(d):
            return 2, c
        if d == 0.0:
            return 4, c
        log_growth[c] = math.log(d / d_start)
        scale = d0 / d
        for i in range(6):
            y[6 + i] = y[i] + (y[6 + i] - y[i]) * scale
    return 0, c_stop


# ---------------------------------------------------------------- generic path


def python_steppers(rhs, jac=None):
    """Interpreted steppers around a Python callable ``rhs(t, y, drive)``."""

    def fun(t, y, out, p, drive):
        out[:] = rhs(t, y, drive)

    def fd_jac(t, y, J, p, drive):
        f0 = np.asarray(rhs(t, y, drive), dtype=float)
        for j in range(y.shape[0]):
            dy = 1e-7 * max(1.0, abs(y[j]))
            yp = y.copy()
            yp[j] += dy
            J[:, j] = (np.asarray(rhs(t, yp, drive), dtype=float) - f0) / dy

    if jac is None:
        jacf = fd_jac
    else:
        def jacf(t, y, J, p, drive):
            J[:, :] = jac(t, y, drive)

    return _make_dopri5(fun), _make_ros23(fun, jacf)
