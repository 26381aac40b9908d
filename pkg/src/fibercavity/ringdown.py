"""Cavity ring-down in the reflection geometry.

A one-sided cavity is driven through its output coupler with a resonant field
of amplitude s0 that is switched off at t = 0 with decay rate kappa_s
(> kappa). In the frame rotating at the carrier, the field amplitude obeys

    da/dt = -kappa a + sqrt(2 kappa2) s_in(t),
    s_out = -s_in + sqrt(2 kappa2) a,

with s_in = s0 for t < 0 and s0 exp(-kappa_s t) for t >= 0. The closed-form
solution is a pair of exponentials:

    a(t>=0)  = (sqrt(2 kappa2)/kappa) s0 [ (1 + r) e^{-kappa t} - r e^{-kappa_s t} ],
               r = kappa / (kappa_s - kappa)

    |s_out|^2(t>=0) = | (2 kappa2/kappa + q) e^{-kappa t} - (1 + q) e^{-kappa_s t} |^2 s0^2,
               q = 2 kappa2 / (kappa_s - kappa)

and |s_out|^2 = |2 kappa2/kappa - 1|^2 s0^2 in the steady state (t < 0). The
pre-switch reflection vanishes exactly at critical coupling, and every trace
decays at rate 2 kappa once t >> 1/(kappa_s - kappa).

The same equation is integrated numerically (adaptive Runge-Kutta) as an
independent cross-check of the closed form. The optical carrier exp(i w0 t)
is factored out everywhere: it cancels in all intensities and would be
numerically intractable at ~2e15 rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .units import ParameterError, from_two_pi_mhz

DEFAULT_KAPPA_S = from_two_pi_mhz(50.0)  # rad/s, default switch-off rate


class IntegrationError(RuntimeError):
    """The adaptive integrator failed to reach the requested accuracy."""


@dataclass(frozen=True)
class RingdownParams:
    """Rates (rad/s) and drive amplitude for a reflection ring-down."""

    kappa1: float
    kappa2: float
    kappa_loss: float
    kappa_s: float = DEFAULT_KAPPA_S
    s0: float = 1.0
    omega0: float = 0.0

    @property
    def kappa(self) -> float:
        return self.kappa1 + self.kappa2 + self.kappa_loss

    def __post_init__(self):
        for name in ("kappa1", "kappa2", "kappa_loss"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ParameterError(f"decay rates non-negative: {name} is {value!r}")
        if self.kappa <= 0.0:
            raise ParameterError("total kappa must be positive")
        if not self.kappa_s > self.kappa:
            raise ParameterError(
                "kappa_s must exceed kappa (closed form is singular at kappa_s = kappa)"
            )
        if not self.s0 > 0.0:
            raise ParameterError("s0 must be positive")


@dataclass(frozen=True)
class RingdownTrace:
    """Sampled (time, reflected intensity) record; times strictly increasing."""

    times: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        intensities = np.asarray(self.intensities, dtype=float)
        if times.shape != intensities.shape or times.ndim != 1:
            raise ParameterError("times and intensities must be 1-d and equal length")
        if times.size >= 2 and not np.all(np.diff(times) > 0.0):
            raise ParameterError("times must be strictly increasing")
        if np.any(intensities < 0.0):
            raise ParameterError("intensities must be non-negative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "intensities", intensities)

    def __len__(self) -> int:
        return self.times.size


def cavity_field_analytic(params: RingdownParams, t):
    """Closed-form intracavity amplitude a(t); complex, scalar or ndarray t."""
    t = np.asarray(t, dtype=float)
    kappa, kappa_s, s0 = params.kappa, params.kappa_s, params.s0
    steady = math.sqrt(2.0 * params.kappa2) * s0 / kappa
    r = kappa / (kappa_s - kappa)
    after = steady * (
        (1.0 + r) * np.exp(-kappa * np.maximum(t, 0.0))
        - r * np.exp(-kappa_s * np.maximum(t, 0.0))
    )
    field = np.where(t < 0.0, steady, after).astype(complex)
    if params.omega0 != 0.0:
        field = field * np.exp(1j * params.omega0 * t)
    return complex(field) if field.ndim == 0 else field


def reflected_field_analytic(params: RingdownParams, t):
    """Closed-form reflected amplitude s_out(t) in the rotating frame."""
    t = np.asarray(t, dtype=float)
    kappa, kappa2, kappa_s, s0 = (
        params.kappa,
        params.kappa2,
        params.kappa_s,
        params.s0,
    )
    q = 2.0 * kappa2 / (kappa_s - kappa)
    tc = np.maximum(t, 0.0)
    after = s0 * (
        (2.0 * kappa2 / kappa + q) * np.exp(-kappa * tc)
        - (1.0 + q) * np.exp(-kappa_s * tc)
    )
    before = s0 * (2.0 * kappa2 / kappa - 1.0)
    out = np.where(t < 0.0, before, after)
    return float(out) if out.ndim == 0 else out


def reflected_intensity_analytic(params: RingdownParams, t):
    """Closed-form reflected intensity |s_out(t)|^2."""
    field = reflected_field_analytic(params, t)
    return np.abs(field) ** 2 if np.ndim(field) else abs(field) ** 2


def analytic_trace(params: RingdownParams, t_grid) -> RingdownTrace:
    t_grid = np.asarray(t_grid, dtype=float)
    return RingdownTrace(t_grid, reflected_intensity_analytic(params, t_grid))


def integrate_ringdown(
    params: RingdownParams, t_grid, rtol: float = 1e-9
) -> RingdownTrace:
    """Numerically integrate the ring-down and sample it on t_grid.

    Adaptive explicit Runge-Kutta (DOP853) in the rotating frame; the system
    is linear and non-stiff at physical rate ratios. Points with t < 0 get
    the steady-state value. Raises IntegrationError with the offending time
    if the integrator cannot proceed.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ParameterError("t_grid must be a non-empty 1-d array")
    if t_grid.size >= 2 and not np.all(np.diff(t_grid) > 0.0):
        raise ParameterError("t_grid must be strictly increasing")

    kappa, kappa2, kappa_s, s0 = (
        params.kappa,
        params.kappa2,
        params.kappa_s,
        params.s0,
    )
    root2k2 = math.sqrt(2.0 * kappa2)
    steady = root2k2 * s0 / kappa

    def s_in(t):
        return s0 * math.exp(-kappa_s * t)

    def rhs(t, y):
        return [-kappa * y[0] + root2k2 * s_in(t)]

    positive = t_grid[t_grid >= 0.0]
    amplitudes = np.full(t_grid.shape, steady)
    if positive.size:
        t_end = float(positive[-1])
        if t_end == 0.0:
            field = np.array([steady])
        else:
            sol = solve_ivp(
                rhs,
                (0.0, t_end),
                [steady],
                method="DOP853",
                t_eval=positive,
                rtol=rtol,
                atol=rtol * max(steady, s0) * 1e-3,
            )
            if not sol.success:
                reached = sol.t[-1] if sol.t.size else 0.0
                raise IntegrationError(
                    f"ring-down integration failed near t = {reached:.3e} s: "
                    f"{sol.message}"
                )
            field = sol.y[0]
        amplitudes[t_grid >= 0.0] = field

    s_in_grid = np.where(t_grid < 0.0, s0, s0 * np.exp(-kappa_s * np.maximum(t_grid, 0.0)))
    s_out = -s_in_grid + root2k2 * amplitudes
    return RingdownTrace(t_grid, s_out**2)


def lifetime_from_kappa(kappa: float) -> float:
    """Photon lifetime (2 kappa)^-1 in seconds."""
    if not kappa > 0.0:
        raise ParameterError("kappa must be positive")
    return 1.0 / (2.0 * float(kappa))


def kappa_from_lifetime(lifetime_s: float) -> float:
    """Total field decay rate from a photon lifetime: kappa = 1/(2 tau)."""
    if not lifetime_s > 0.0:
        raise ParameterError("lifetime must be positive")
    return 1.0 / (2.0 * float(lifetime_s))


def kappa2_linear_model(temperature_c: float, anchors) -> float:
    """Linear interpolation of kappa2 versus mirror temperature.

    This is a convenience *model*, not measured physics: the reflection-band
    edge of a fiber Bragg grating shifts with temperature, so kappa2(T) is
    monotone over a small range, but no functional form is implied by the
    device. ``anchors`` is a sequence of (temperature_c, kappa2_rad_s) pairs;
    interpolation is linear between anchors and clamped outside them.
    """
    anchors = sorted((float(t), float(k)) for t, k in anchors)
    if len(anchors) < 2:
        raise ParameterError("kappa2 interpolation needs at least two anchors")
    temps = [t for t, _ in anchors]
    rates = [k for _, k in anchors]
    return float(np.interp(temperature_c, temps, rates))
