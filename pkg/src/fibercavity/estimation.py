"""Nonlinear least-squares engine and the fit recipes used by this toolkit.

The minimizer is damped Gauss-Newton with a Levenberg-Marquardt damping
schedule: the damping multiplies the diagonal of J^T J, grows x10 when a step
fails and shrinks /10 when it succeeds, starting from 1e-3. Convergence is
declared when the relative change of the weighted squared-residual sum drops
below 1e-10 or the gradient max-norm drops below 1e-10; the iteration cap is
200, after which the best point is returned with ``converged=False``.

Derivatives come from central finite differences with a per-parameter
relative step of 1e-6 unless a model supplies an analytic Jacobian. Weights
are 1/sigma^2 when per-point uncertainties are given; otherwise weights are
uniform and the parameter covariance is scaled by the residual variance.
Bounds are enforced by projecting each trial point.

Everything here is deterministic: identical inputs give bit-identical
results. The engine is reentrant; concurrent fits on separate data are safe.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import steady
from .units import ParameterError, SystemParams, from_two_pi_mhz

RABI_G_UPPER_BOUND = from_two_pi_mhz(50.0)


class FitError(RuntimeError):
    """The model returned non-finite values where derivatives were needed."""


@dataclass(frozen=True)
class Spectrum:
    """Sampled (detuning, normalized transmission, optional sigma) triples."""

    deltas: np.ndarray
    values: np.ndarray
    sigmas: np.ndarray | None = None

    def __post_init__(self):
        deltas = np.asarray(self.deltas, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if deltas.ndim != 1 or deltas.shape != values.shape:
            raise ParameterError("deltas and values must be 1-d and equal length")
        sigmas = self.sigmas
        if sigmas is not None:
            sigmas = np.asarray(sigmas, dtype=float)
            if sigmas.shape != deltas.shape:
                raise ParameterError("sigmas must match deltas in length")
            if np.any(sigmas <= 0.0):
                raise ParameterError("sigmas must be positive where present")
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sigmas", sigmas)

    def __len__(self) -> int:
        return self.deltas.size


@dataclass(frozen=True)
class FitResult:
    """Estimates with 1-sigma uncertainties from the linearized problem."""

    names: tuple
    estimates: np.ndarray
    uncertainties: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int

    def as_dict(self) -> dict:
        return {
            "names": list(self.names),
            "estimates": [float(v) for v in self.estimates],
            "uncertainties": [float(v) for v in self.uncertainties],
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }

    def __getitem__(self, name: str) -> float:
        return float(self.estimates[self.names.index(name)])

    def uncertainty(self, name: str) -> float:
        return float(self.uncertainties[self.names.index(name)])


def _finite_difference_jacobian(model, x, params, rel_step=1e-6):
    n = params.size
    jac = np.empty((x.size, n))
    for i in range(n):
        h = rel_step * (abs(params[i]) if params[i] != 0.0 else 1.0)
        plus = params.copy()
        minus = params.copy()
        plus[i] += h
        minus[i] -= h
        f_plus = np.asarray(model(x, plus), dtype=float)
        f_minus = np.asarray(model(x, minus), dtype=float)
        jac[:, i] = (f_plus - f_minus) / (2.0 * h)
    if not np.all(np.isfinite(jac)):
        raise FitError("model returned non-finite values while differentiating")
    return jac


def fit_least_squares(
    model,
    x,
    y,
    initial,
    *,
    sigmas=None,
    bounds=None,
    jac=None,
    names=None,
    max_iterations: int = 200,
    residual_tol: float = 1e-10,
    gradient_tol: float = 1e-10,
) -> FitResult:
    """Minimize the weighted squared residuals of ``model(x, params) - y``.

    Parameters
    ----------
    model : callable
        ``model(x, params) -> values``; must broadcast over the x grid.
    x, y : array_like
        Sample points and observed values.
    initial : array_like
        Starting parameters; must lie within ``bounds``.
    sigmas : array_like, optional
        Per-point 1-sigma uncertainties; weights become 1/sigma^2.
    bounds : sequence of (lo, hi), optional
        Per-parameter box; ``None`` entries mean unbounded.
    jac : callable, optional
        Analytic Jacobian ``jac(x, params) -> (npoints, nparams)``.
    names : sequence of str, optional
        Parameter names for the FitResult (defaults to p0, p1, ...).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    params = np.array(initial, dtype=float).ravel()
    n_par = params.size
    if x.ndim != 1 or y.shape != x.shape:
        raise ParameterError("x and y must be 1-d and equal length")
    if y.size < n_par:
        raise ParameterError("need at least as many points as parameters")

    lo = np.full(n_par, -np.inf)
    hi = np.full(n_par, np.inf)
    if bounds is not None:
        if len(bounds) != n_par:
            raise ParameterError("bounds must give one (lo, hi) pair per parameter")
        for i, pair in enumerate(bounds):
            if pair is None:
                continue
            b_lo, b_hi = pair
            lo[i] = -np.inf if b_lo is None else float(b_lo)
            hi[i] = np.inf if b_hi is None else float(b_hi)
    if np.any(params < lo) or np.any(params > hi):
        raise ParameterError("initial parameters must lie within bounds")

    if sigmas is not None:
        sigmas = np.asarray(sigmas, dtype=float)
        if sigmas.shape != y.shape:
            raise ParameterError("sigmas must match y in length")
        if np.any(sigmas <= 0.0):
            raise ParameterError("sigmas must be positive")
        sqrt_w = 1.0 / sigmas
    else:
        sqrt_w = np.ones_like(y)

    def jacobian(p):
        if jac is not None:
            j = np.asarray(jac(x, p), dtype=float)
            if not np.all(np.isfinite(j)):
                raise FitError("analytic Jacobian returned non-finite values")
            return j
        return _finite_difference_jacobian(model, x, p)

    def weighted_residual(p):
        r = (np.asarray(model(x, p), dtype=float) - y) * sqrt_w
        return r

    if names is None:
        names = tuple(f"p{i}" for i in range(n_par))
    names = tuple(names)

    residual = weighted_residual(params)
    if not np.all(np.isfinite(residual)):
        raise FitError("model returned non-finite values at the initial point")
    cost = float(residual @ residual)

    damping = 1e-3
    iterations = 0
    converged = False
    jw = None
    for _ in range(max_iterations):
        jw = jacobian(params) * sqrt_w[:, None]
        gradient = jw.T @ residual
        jtj = jw.T @ jw
        # Column scaling keeps the normal equations well conditioned when
        # parameter magnitudes differ by many orders (rates vs amplitudes);
        # the gradient criterion is tested in the same scale-free space.
        scale = np.sqrt(np.diag(jtj))
        scale[scale <= 0.0] = 1.0
        jtj_scaled = jtj / np.outer(scale, scale)
        gradient_scaled = gradient / scale
        if cost == 0.0 or float(np.max(np.abs(gradient_scaled))) <= gradient_tol:
            converged = True
            break
        stepped = False
        while damping <= 1e12:
            lhs = jtj_scaled + damping * np.eye(n_par)
            try:
                step = np.linalg.solve(lhs, gradient_scaled) / scale
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            trial = np.clip(params - step, lo, hi)
            trial_residual = weighted_residual(trial)
            if np.all(np.isfinite(trial_residual)):
                trial_cost = float(trial_residual @ trial_residual)
                if trial_cost < cost:
                    params, residual = trial, trial_residual
                    previous_cost, cost = cost, trial_cost
                    damping = max(damping / 10.0, 1e-15)
                    stepped = True
                    break
            damping *= 10.0
        iterations += 1
        if not stepped:
            break  # damping exhausted: stuck at the current point
        if previous_cost - cost <= residual_tol * max(previous_cost, 1e-300):
            converged = True
            break

    jw = jacobian(params) * sqrt_w[:, None]
    uncertainties = _covariance_uncertainties(jw, cost, y.size, n_par, sigmas)
    return FitResult(
        names=names,
        estimates=params,
        uncertainties=uncertainties,
        residual_norm=math.sqrt(cost),
        converged=converged,
        iterations=iterations,
    )


def _covariance_uncertainties(jw, cost, n_points, n_par, sigmas):
    """1-sigma uncertainties from the linearized covariance (J^T W J)^-1.

    A parameter the model does not respond to (zero Jacobian column) has a
    zero singular value in the information matrix, i.e. infinite variance.
    """
    jtj = jw.T @ jw
    col = np.sqrt(np.diag(jtj))
    insensitive = col <= 0.0
    col[insensitive] = 1.0
    cov_scaled = np.linalg.pinv(jtj / np.outer(col, col), hermitian=True)
    cov = cov_scaled / np.outer(col, col)
    if sigmas is None:
        dof = n_points - n_par
        scale = cost / dof if dof > 0 else np.inf
        cov = cov * scale
    variances = np.diag(cov).copy()
    variances[variances < 0.0] = np.inf
    variances[insensitive] = np.inf
    return np.sqrt(variances)


# ---------------------------------------------------------------------------
# Built-in models and their analytic Jacobians


def lorentzian_model(delta, params, center=0.0):
    amp, kappa = params[0], params[1]
    c = params[2] if len(params) > 2 else center
    return amp * kappa**2 / ((delta - c) ** 2 + kappa**2)


def lorentzian_jacobian(delta, params, center=0.0):
    amp, kappa = params[0], params[1]
    c = params[2] if len(params) > 2 else center
    d2 = (delta - c) ** 2
    den = d2 + kappa**2
    cols = [kappa**2 / den, amp * 2.0 * kappa * d2 / den**2]
    if len(params) > 2:
        cols.append(amp * kappa**2 * 2.0 * (delta - c) / den**2)
    return np.stack(cols, axis=1)


def rabi_model_factory(fixed: SystemParams):
    """Single-parameter model g -> normalized transmission, with its Jacobian."""

    reference = steady.transmission(fixed.with_g(0.0), 0.0)
    if reference <= 0.0:
        raise ParameterError("empty-cavity transmission vanishes; cannot normalize")

    def model(delta, params):
        return steady.transmission(fixed.with_g(abs(params[0])), delta) / reference

    def jacobian(delta, params):
        g = abs(params[0])
        z = (
            (1j * (delta - fixed.cavity_detuning) + fixed.kappa)
            * (1j * delta + fixed.gamma)
            + g**2
        )
        t = steady.transmission(fixed.with_g(g), delta) / reference
        sign = 1.0 if params[0] >= 0.0 else -1.0
        col = -t * 4.0 * g * np.real(z) / np.abs(z) ** 2 * sign
        return col[:, None]

    return model, jacobian


def exponential_recovery_model(tau, params):
    baseline, amplitude, lifetime = params
    return baseline - amplitude * np.exp(-tau / lifetime)


def exponential_recovery_jacobian(tau, params):
    _, amplitude, lifetime = params
    decay = np.exp(-tau / lifetime)
    # decay underflows to 0 before tau/lifetime^2 overflows; the product's
    # limit is 0, so mask instead of evaluating 0 * inf
    with np.errstate(over="ignore", invalid="ignore"):
        slope = np.where(decay > 0.0, decay * (tau / lifetime**2), 0.0)
    return np.stack([np.ones_like(tau), -decay, -amplitude * slope], axis=1)


# ---------------------------------------------------------------------------
# Fit recipes


def fit_empty_cavity(
    spectrum: Spectrum,
    *,
    float_center: bool = False,
    initial=None,
    use_sigmas: bool = False,
) -> FitResult:
    """Fit the empty-cavity Lorentzian amplitude * kappa^2 / (Delta^2 + kappa^2).

    Amplitude and kappa are free; the center is fixed at zero unless
    ``float_center`` is set. Returns kappa in rad/s under the name "kappa".
    """
    deltas, values = spectrum.deltas, spectrum.values
    if initial is None:
        amp0 = float(np.max(values))
        above = deltas[values >= 0.5 * amp0]
        if above.size >= 2 and above.max() > above.min():
            kappa0 = 0.5 * float(above.max() - above.min())
        else:
            kappa0 = 0.25 * float(deltas.max() - deltas.min())
        kappa0 = max(kappa0, 1e-6 * max(abs(deltas).max(), 1.0))
        initial = [amp0, kappa0] + ([0.0] if float_center else [])

    names = ("amplitude", "kappa") + (("center",) if float_center else ())
    bounds = [(0.0, None), (1e-30, None)] + ([(None, None)] if float_center else [])
    result = fit_least_squares(
        lorentzian_model,
        deltas,
        values,
        initial,
        sigmas=spectrum.sigmas if use_sigmas else None,
        bounds=bounds,
        jac=lorentzian_jacobian,
        names=names,
    )
    # A half width beyond the sampled span is not constrained by the data;
    # the linearized covariance is meaningless on that ridge, so flag it.
    span = float(np.max(np.abs(deltas)))
    if result["kappa"] > 2.0 * span:
        uncertainties = result.uncertainties.copy()
        uncertainties[names.index("kappa")] = math.inf
        result = dataclasses.replace(result, uncertainties=uncertainties)
    return result


def fit_rabi_g(
    spectrum: Spectrum,
    fixed: SystemParams,
    *,
    initial: float | None = None,
    use_sigmas: bool = False,
) -> FitResult:
    """Fit the normalized transmission with g as the only free parameter.

    kappa1, kappa2, kappa_loss and gamma are held fixed (independently
    characterized); g is bounded to [0, 2pi x 50 MHz]. By default the fit is
    unweighted even when the spectrum carries per-point errors.
    """
    model, jacobian = rabi_model_factory(fixed)
    if initial is None:
        # Coarse deterministic scan over the bounded g range; the 1-d cost
        # landscape has plateaus at large g where a bad start would stall.
        candidates = np.linspace(0.0, RABI_G_UPPER_BOUND, 201)
        costs = [
            float(np.sum((model(spectrum.deltas, [g]) - spectrum.values) ** 2))
            for g in candidates
        ]
        initial = float(candidates[int(np.argmin(costs))])
    return fit_least_squares(
        model,
        spectrum.deltas,
        spectrum.values,
        [initial],
        sigmas=spectrum.sigmas if use_sigmas else None,
        bounds=[(0.0, RABI_G_UPPER_BOUND)],
        jac=jacobian,
        names=("g",),
    )


def fit_exponential_recovery(times, values, *, initial=None) -> FitResult:
    """Fit v(tau) = baseline - amplitude * exp(-tau / lifetime)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 4:
        raise ParameterError("exponential recovery needs at least 4 points")
    if initial is None:
        baseline0 = float(values[-1])
        amplitude0 = baseline0 - float(values[0])
        span = float(times.max() - times.min())
        lifetime0 = span / 3.0 if span > 0 else 1.0
        if amplitude0 != 0.0:
            # time at which the recovery has covered (1 - 1/e) of its range
            crossed = np.nonzero(
                (values - values[0]) / amplitude0 >= 1.0 - math.exp(-1.0)
            )[0]
            if crossed.size and times[crossed[0]] > times[0]:
                lifetime0 = float(times[crossed[0]] - times[0])
        initial = [baseline0, amplitude0, lifetime0]
    return fit_least_squares(
        exponential_recovery_model,
        times,
        values,
        initial,
        bounds=[(None, None), (None, None), (1e-30, None)],
        jac=exponential_recovery_jacobian,
        names=("baseline", "amplitude", "lifetime"),
    )


def fit_ringdown_tail(trace, tail_start: float) -> FitResult:
    """Log-linear fit of the ring-down tail: intensity = amplitude e^{-rate t}.

    Only samples with t >= tail_start enter; they must be positive. The
    intensity decay rate equals 2 kappa, so the photon lifetime is 1/rate.
    Pick tail_start at or beyond ~5/(kappa_s - kappa) so the switch-off
    transient has died.
    """
    times = np.asarray(trace.times, dtype=float)
    intensities = np.asarray(trace.intensities, dtype=float)
    mask = times >= float(tail_start)
    t = times[mask]
    intensity = intensities[mask]
    if t.size < 2:
        raise ParameterError("tail window holds fewer than 2 samples")
    if np.any(intensity <= 0.0):
        raise ParameterError("non-positive intensities in tail window")

    log_i = np.log(intensity)
    design = np.stack([np.ones_like(t), t], axis=1)
    coef, rss, *_ = np.linalg.lstsq(design, log_i, rcond=None)
    intercept, slope = coef
    fitted = design @ coef
    residuals = log_i - fitted
    rss = float(residuals @ residuals)
    dof = t.size - 2
    if dof > 0:
        xtx_inv = np.linalg.inv(design.T @ design)
        sigma2 = rss / dof
        se_intercept = math.sqrt(sigma2 * xtx_inv[0, 0])
        se_slope = math.sqrt(sigma2 * xtx_inv[1, 1])
    else:
        se_intercept = se_slope = np.inf

    amplitude = math.exp(intercept)
    return FitResult(
        names=("amplitude", "rate"),
        estimates=np.array([amplitude, -slope]),
        uncertainties=np.array([amplitude * se_intercept, se_slope]),
        residual_norm=math.sqrt(rss),
        converged=True,
        iterations=0,
    )
