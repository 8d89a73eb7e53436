"""Closed-form single-pair coherence kernels.

Every kernel is evaluated through one complex-valued code path built on the
pair of bounded exponentials

    P = exp((-g + i s) t / 2),   M = exp((-g - i s) t / 2),   s = sqrt(V^2 - g^2)

whose moduli never exceed 1 for admissible rates, so the under- and
over-damped branches share the same arithmetic and cannot disagree.  Near
the degenerate point |V| = g the formulas switch to a 4th-order Taylor
expansion in x = V^2 - g^2 (threshold |x| <= 1e-6 V^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IMAG_TOL = 1e-12
_DEGENERATE_REL = 1e-6


@dataclass(frozen=True)
class KernelParams:
    """Single NV-electron pair parameters, all in internal units.

    v_dd: signed dipolar coupling (rad/us); gamma_e1, gamma_e2: electron
    depolarization / dephasing rates (rad/us); t: total free-precession
    time (us).  gamma_e2 drops out of the closed forms and is carried for
    the master-equation cross-checks.
    """

    v_dd: float
    gamma_e1: float = 0.0
    gamma_e2: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        for name in ("v_dd", "gamma_e1", "gamma_e2", "t"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.gamma_e1 < 0 or self.gamma_e2 < 0:
            raise ValueError("rates must be non-negative")
        if self.t < 0:
            raise ValueError("t must be non-negative")


@dataclass(frozen=True)
class NvRelaxation:
    """NV depolarization and dephasing rates (rad/us)."""

    gamma_v1: float = 0.0
    gamma_v2: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.gamma_v1) and np.isfinite(self.gamma_v2)):
            raise ValueError("NV rates must be finite")
        if self.gamma_v1 < 0 or self.gamma_v2 < 0:
            raise ValueError("NV rates must be non-negative")


def _check_imag(values, scale=1.0):
    resid = np.max(np.abs(np.imag(values))) if np.size(values) else 0.0
    if resid > IMAG_TOL * max(scale, 1.0):
        raise FloatingPointError(
            f"complex kernel evaluation left imaginary residue {resid:.3e}"
        )
    return np.real(values)


def _kernel_pair(v, gamma1, t):
    """(f_deer, f_echo) arrays for broadcastable v, gamma1, t."""
    v = np.asarray(v, dtype=float)
    g = np.asarray(gamma1, dtype=float)
    t = np.asarray(t, dtype=float)
    v, g, t = np.broadcast_arrays(v, g, t)

    v2 = v * v
    x = v2 - g * g
    u = 0.5 * t
    deg = np.abs(x) <= _DEGENERATE_REL * v2

    f_deer = np.empty(v.shape, dtype=float)
    f_echo = np.empty(v.shape, dtype=float)

    reg = ~deg
    if np.any(reg):
        xr = x[reg]
        gr = g[reg]
        tr = t[reg]
        ur = u[reg]
        s = np.sqrt(xr.astype(complex))
        p = np.exp((-gr + 1j * s) * ur)
        m = np.exp((-gr - 1j * s) * ur)
        env = np.exp(-gr * ur)
        cos_term = 0.5 * (p + m)                      # e^{-g t/2} cos(t s / 2)
        # e^{-g t/2} sin(t s / 2)/s; s is bounded away from 0 here
        sin_term = (p - m) / (2j * s)
        deer = cos_term + gr * sin_term
        echo = (v2[reg] * env - gr * gr * cos_term) / xr + gr * sin_term
        scale = float(np.max(np.abs(v2[reg]) + 1.0))
        f_deer[reg] = _check_imag(deer, scale)
        f_echo[reg] = _check_imag(echo, scale)

    if np.any(deg):
        # Taylor in x about the degenerate point, 4th order.
        xd = x[deg]
        gd = g[deg]
        ud = u[deg]
        u2 = ud * ud
        z = xd * u2
        env = np.exp(-gd * ud)
        cos_ser = 1.0 + z * (-0.5 + z * (1.0 / 24 + z * (-1.0 / 720 + z / 40320)))
        sinc_ser = ud * (
            1.0 + z * (-1.0 / 6 + z * (1.0 / 120 + z * (-1.0 / 5040 + z / 362880)))
        )
        # (1 - cos(u sqrt(x)))/x
        one_m_cos = u2 * (
            0.5 + z * (-1.0 / 24 + z * (1.0 / 720 + z * (-1.0 / 40320 + z / 3628800)))
        )
        f_deer[deg] = env * (cos_ser + gd * sinc_ser)
        f_echo[deg] = env * (1.0 + gd * gd * one_m_cos + gd * sinc_ser)

    return f_deer, f_echo


def f_deer(p: KernelParams) -> float:
    """DEER coherence factor for one pair; 1 at t = 0, damped oscillation
    at sqrt(V^2 - gamma^2)/2 with envelope exp(-gamma t / 2)."""
    return float(_kernel_pair(p.v_dd, p.gamma_e1, p.t)[0])


def f_echo(p: KernelParams) -> float:
    """Hahn-echo coherence factor for one pair; exactly 1 when gamma_e1 = 0."""
    return float(_kernel_pair(p.v_dd, p.gamma_e1, p.t)[1])


def f_deer_minus_echo(p: KernelParams) -> float:
    """Difference of the two kernels, computed from the constituent closed
    forms.  Non-positive for all admissible parameters."""
    d, e = _kernel_pair(p.v_dd, p.gamma_e1, p.t)
    return float(d - e)


def _pair_field_fast(v, gamma1, t):
    """All-real evaluation of (f_deer, f_echo) for large arrays.

    Algebraically identical to the complex path in ``_kernel_pair`` (the
    bounded exponentials are expanded per sign of V^2 - g^2); equality is
    enforced by tests so the branches cannot drift apart.
    """
    v = np.asarray(v, dtype=float)
    g = np.asarray(gamma1, dtype=float)
    t = np.asarray(t, dtype=float)
    v, g, t = np.broadcast_arrays(v, g, t)
    v2 = v * v
    x = v2 - g * g
    u = 0.5 * t

    f_deer = np.empty(v.shape, dtype=float)
    f_echo = np.empty(v.shape, dtype=float)

    deg = np.abs(x) <= _DEGENERATE_REL * v2
    under = (~deg) & (x > 0)
    over = (~deg) & (x <= 0)

    if np.any(under):
        xu = x[under]
        gu = g[under]
        uu = u[under]
        s = np.sqrt(xu)
        env = np.exp(-gu * uu)
        arg = uu * s
        cp = env * np.cos(arg)
        sp = env * np.sin(arg) / s
        f_deer[under] = cp + gu * sp
        f_echo[under] = (v2[under] * env - gu * gu * cp) / xu + gu * sp

    if np.any(over):
        xo = x[over]
        go = g[over]
        uo = u[over]
        k = np.sqrt(-xo)
        ea = np.exp((k - go) * uo)      # bounded: k <= g here
        eb = np.exp(-(k + go) * uo)
        ch = 0.5 * (ea + eb)            # e^{-g u} cosh(k u)
        sh = (ea - eb) / (2.0 * k)      # e^{-g u} sinh(k u)/k
        env = np.exp(-go * uo)
        f_deer[over] = ch + go * sh
        f_echo[over] = (v2[over] * env - go * go * ch) / xo + go * sh

    if np.any(deg):
        xd = x[deg]
        gd = g[deg]
        ud = u[deg]
        z = xd * ud * ud
        env = np.exp(-gd * ud)
        cos_ser = 1.0 + z * (-0.5 + z * (1.0 / 24 + z * (-1.0 / 720 + z / 40320)))
        sinc_ser = ud * (
            1.0 + z * (-1.0 / 6 + z * (1.0 / 120 + z * (-1.0 / 5040 + z / 362880)))
        )
        one_m_cos = ud * ud * (
            0.5 + z * (-1.0 / 24 + z * (1.0 / 720 + z * (-1.0 / 40320 + z / 3628800)))
        )
        f_deer[deg] = env * (cos_ser + gd * sinc_ser)
        f_echo[deg] = env * (1.0 + gd * gd * one_m_cos + gd * sinc_ser)

    return f_deer, f_echo


def deer_minus_echo_field(v, gamma1, t):
    """Vectorized f_deer - f_echo over arrays of couplings/rates/times.

    gamma1 = 0 short-circuits to cos(V t / 2) - 1.
    """
    if np.ndim(gamma1) == 0 and float(gamma1) == 0.0:
        v = np.asarray(v, dtype=float)
        t = np.asarray(t, dtype=float)
        return np.cos(0.5 * v * t) - 1.0
    d, e = _pair_field_fast(v, gamma1, t)
    return d - e


def deer_echo_fields(v, gamma1, t):
    """Vectorized (f_deer, f_echo) pair (fast all-real path)."""
    return _pair_field_fast(v, gamma1, t)


def _damped_sinc(x, gamma_half, t):
    """exp(-gamma_half * t) * sin(t sqrt(x) / 2) / sqrt(x), overflow-safe.

    Valid whenever gamma_half >= sqrt(max(-x, 0)) / 2, which holds for the
    probe-segment factor where gamma_half >= gamma_e1 / 2 >= |Im s| / 2.
    """
    x = np.asarray(x, dtype=float)
    gh = np.asarray(gamma_half, dtype=float)
    t = np.asarray(t, dtype=float)
    x, gh, t = np.broadcast_arrays(x, gh, t)
    u = 0.5 * t
    out = np.empty(x.shape, dtype=float)
    deg = np.abs(x) * u * u < 1e-8
    reg = ~deg
    if np.any(reg):
        s = np.sqrt(x[reg].astype(complex))
        p = np.exp((-2.0 * gh[reg] + 1j * s) * u[reg])
        m = np.exp((-2.0 * gh[reg] - 1j * s) * u[reg])
        out[reg] = _check_imag((p - m) / (2j * s))
    if np.any(deg):
        z = x[deg] * u[deg] * u[deg]
        out[deg] = np.exp(-2.0 * gh[deg] * u[deg]) * u[deg] * (
            1.0 + z * (-1.0 / 6 + z / 120)
        )
    return out


def t1_sequence_signal(
    p: KernelParams, nv: NvRelaxation, tau: float, t: float
) -> float:
    """Nuclear-modulation-free T1 channel difference (pi minus no-pi).

    exp(-(gv1+ge1) tau) * [exp(-((gv1+ge1)/2 + gv2) t) * |V| sin(t s/2)/s]^2
    with s = sqrt(V^2 - ge1^2) continued through the over-damped regime.
    """
    if tau < 0 or t < 0:
        raise ValueError("tau and t must be non-negative")
    big_gamma = nv.gamma_v1 + p.gamma_e1
    x = p.v_dd**2 - p.gamma_e1**2
    bracket = abs(p.v_dd) * _damped_sinc(x, 0.5 * big_gamma + nv.gamma_v2, t)
    return float(np.exp(-big_gamma * tau) * bracket**2)


def composite_t1_signal(f_y_pi, f_y_0, f_my_pi, f_my_0) -> float:
    """Common-mode-rejecting combination of the four readout channels."""
    return float((f_y_pi - f_y_0) - (f_my_pi - f_my_0))
