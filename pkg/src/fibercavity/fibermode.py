"""Step-index fiber fundamental-mode (HE11) solver and coupling-rate estimate.

The guided modes of a step-index fiber with core index n1, cladding index n2
and core radius a satisfy, for azimuthal order nu = 1, the full vector
characteristic equation

    (J + K) (J + rho K) = (1/u^2 + 1/w^2)(1/u^2 + rho/w^2),

        J = J1'(u) / (u J1(u)),   K = K1'(w) / (w K1(w)),   rho = (n2/n1)^2,
        u = k0 a sqrt(n1^2 - n_eff^2),   w = k0 a sqrt(n_eff^2 - n2^2),

whose largest-n_eff root in (n2, n1) is the hybrid HE11 mode (it has no
cutoff; the next nu = 1 root appears only at V >= 3.832). The scalar LP01
equation u J1(u)/J0(u) = w K1(w)/K0(w) is kept as an independent oracle for
the weakly guiding limit.

The transverse intensity profile of HE11, averaged over azimuth, is

    core:  (P/u^2) [ c-^2 J0(uR)^2 + c+^2 J2(uR)^2 ] + J1(uR)^2 / 2
    clad:  (J1(u)/K1(w))^2 { (P/w^2) [ c-^2 K0(wR)^2 + c+^2 K2(wR)^2 ]
                              + K1(wR)^2 / 2 }

with R = r/a, P = (n_eff k0 a)^2, c-+ = (1 -+ s)/2 and
s = (1/u^2 + 1/w^2) / (J + K); s -> -1 in the weakly guiding limit, which
recovers the scalar J0/K0 profile. The profile is normalized so its maximum
(on axis) is 1; the effective area is the integral of the normalized
intensity over the infinite cross section, and the cavity mode volume is
cavity length times effective area (uniform-fiber approximation).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq
from scipy.special import jn_zeros, jv, jvp, kv, kvp

from .constants import (
    CS_D2_ANGULAR_FREQUENCY,
    CS_D2_CYCLING_DIPOLE,
    CS_D2_WAVELENGTH,
    EPSILON_0,
    HBAR,
)
from .units import AngularRate, CavityGeometry, ParameterError

SINGLE_MODE_V_LIMIT = 2.405  # first zero of J0: cutoff of the second mode group

# Default fiber: SM800-class single-mode fiber at the cesium D2 wavelength.
DEFAULT_CORE_RADIUS = 2.8e-6
DEFAULT_NUMERICAL_APERTURE = 0.12


class NoGuidedModeError(RuntimeError):
    """No root of the characteristic equation inside (n_clad, n_core)."""


def sellmeier_fused_silica(wavelength_m: float) -> float:
    """Refractive index of fused silica (Malitson 1965 Sellmeier fit)."""
    if not 0.2e-6 < wavelength_m < 3.7e-6:
        raise ParameterError("Sellmeier fit valid for 0.21-3.71 um only")
    l2 = (wavelength_m * 1e6) ** 2
    n2 = (
        1.0
        + 0.6961663 * l2 / (l2 - 0.0684043**2)
        + 0.4079426 * l2 / (l2 - 0.1162414**2)
        + 0.8974794 * l2 / (l2 - 9.896161**2)
    )
    return math.sqrt(n2)


@dataclass(frozen=True)
class FiberSpec:
    """Step-index fiber: core radius (m), core/cladding indices, wavelength (m)."""

    core_radius: float
    n_core: float
    n_clad: float
    wavelength: float

    def __post_init__(self):
        if not self.core_radius > 0.0:
            raise ParameterError("core_radius must be positive")
        if not self.wavelength > 0.0:
            raise ParameterError("wavelength must be positive")
        if not self.n_core > self.n_clad > 1.0:
            raise ParameterError("indices must satisfy n_core > n_clad > 1")

    @property
    def k0(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def v_number(self) -> float:
        return self.k0 * self.core_radius * math.sqrt(self.n_core**2 - self.n_clad**2)

    @property
    def numerical_aperture(self) -> float:
        return math.sqrt(self.n_core**2 - self.n_clad**2)

    @classmethod
    def from_numerical_aperture(
        cls,
        core_radius: float,
        numerical_aperture: float,
        wavelength: float,
        n_clad: float | None = None,
    ) -> "FiberSpec":
        """Build a FiberSpec from NA, with the cladding index from fused silica."""
        if n_clad is None:
            n_clad = sellmeier_fused_silica(wavelength)
        n_core = math.sqrt(n_clad**2 + float(numerical_aperture) ** 2)
        return cls(core_radius, n_core, n_clad, wavelength)

    @classmethod
    def sm800(cls, wavelength: float = CS_D2_WAVELENGTH) -> "FiberSpec":
        """SM800-class defaults: 2.8 um core radius, NA 0.12, silica cladding."""
        return cls.from_numerical_aperture(
            DEFAULT_CORE_RADIUS, DEFAULT_NUMERICAL_APERTURE, wavelength
        )


@dataclass(frozen=True)
class ModeSolution:
    """Solved fundamental mode: n_eff, profile parameters, effective area (m^2)."""

    fiber: FiberSpec
    n_eff: float
    u: float
    w: float
    s: float
    effective_area: float
    tail_truncation_error: float
    radial_extent: float
    samples_per_region: int

    def intensity(self, r):
        """Azimuth-averaged |phi(r)|^2, normalized to 1 on axis."""
        profile = _intensity_profile(self.fiber, self.n_eff, self.u, self.w, self.s)
        r = np.asarray(r, dtype=float)
        out = profile(r / self.fiber.core_radius)
        out = out / profile(np.zeros(1))[0]
        return float(out) if out.ndim == 0 else out


def _he11_residual_u(u: float, fiber: FiberSpec) -> float:
    """Residual of the nu = 1 full vector characteristic equation at core
    parameter u (with w = sqrt(V^2 - u^2)); u-space keeps the root O(1)."""
    w = math.sqrt(max(fiber.v_number**2 - u**2, 0.0))
    rho = (fiber.n_clad / fiber.n_core) ** 2
    j = jvp(1, u) / (u * jv(1, u))
    k = kvp(1, w) / (w * kv(1, w))
    lhs = (j + k) * (j + rho * k)
    rhs = (1.0 / u**2 + 1.0 / w**2) * (1.0 / u**2 + rho / w**2)
    return lhs - rhs


def _dispersion_he11(n_eff: float, fiber: FiberSpec) -> float:
    """Residual of the characteristic equation as a function of n_eff."""
    k0a = fiber.k0 * fiber.core_radius
    u = k0a * math.sqrt(fiber.n_core**2 - n_eff**2)
    return _he11_residual_u(u, fiber)


def _dispersion_lp01(u: float, fiber: FiberSpec) -> float:
    """Residual of the scalar LP01 equation u J1/J0 = w K1/K0."""
    w = math.sqrt(fiber.v_number**2 - u**2)
    return u * jv(1, u) / jv(0, u) - w * kv(1, w) / kv(0, w)


def _intensity_branches(fiber: FiberSpec, n_eff: float, u: float, w: float, s: float):
    """Core and cladding azimuth-averaged intensity branches (unnormalized).

    The radial intensity jumps at R = 1 (the normal field component is
    discontinuous across the index step), so quadrature must integrate each
    branch on its own region.
    """
    prefactor = (n_eff * fiber.k0 * fiber.core_radius) ** 2
    c_minus = 0.5 * (1.0 - s)
    c_plus = 0.5 * (1.0 + s)
    clad_scale = (jv(1, u) / kv(1, w)) ** 2

    def core(R):
        R = np.asarray(R, dtype=float)
        return (prefactor / u**2) * (
            c_minus**2 * jv(0, u * R) ** 2 + c_plus**2 * jv(2, u * R) ** 2
        ) + 0.5 * jv(1, u * R) ** 2

    def clad(R):
        R = np.asarray(R, dtype=float)
        return clad_scale * (
            (prefactor / w**2)
            * (c_minus**2 * kv(0, w * R) ** 2 + c_plus**2 * kv(2, w * R) ** 2)
            + 0.5 * kv(1, w * R) ** 2
        )

    return core, clad


def _intensity_profile(fiber: FiberSpec, n_eff: float, u: float, w: float, s: float):
    """Combined radial profile; the core branch owns the R = 1 boundary."""
    core, clad = _intensity_branches(fiber, n_eff, u, w, s)

    def profile(R):
        R = np.asarray(R, dtype=float)
        return np.where(R <= 1.0, core(R), clad(np.maximum(R, 1.0)))

    return profile


def solve_fundamental_mode(
    fiber: FiberSpec,
    radial_extent: float = 15.0,
    samples_per_region: int = 4097,
    scan_points: int = 2000,
) -> ModeSolution:
    """Solve the HE11 dispersion equation by bracketed root finding.

    Scans n_eff over (n_clad, n_core) for a sign change, refines it with
    Brent's method, then integrates the azimuth-averaged intensity out to
    ``radial_extent`` core radii (composite Simpson rule, core and cladding
    integrated separately to respect the index step). Warns if V >= 2.405,
    where the fiber also guides the second mode group; the HE11 root itself
    stays unique up to V = 3.832.

    Parameters
    ----------
    fiber : FiberSpec
    radial_extent : float
        Outer integration limit in units of the core radius.
    samples_per_region : int
        Simpson sample count for each of the core and cladding regions.
    scan_points : int
        Resolution of the initial sign-change scan over n_eff.
    """
    v = fiber.v_number
    if v >= SINGLE_MODE_V_LIMIT:
        warnings.warn(
            f"V = {v:.3f} >= {SINGLE_MODE_V_LIMIT}: fiber is not single-mode at "
            "this wavelength; returning the fundamental mode",
            stacklevel=2,
        )

    # Scan in u, where the fundamental root stays O(1); small u means n_eff
    # near n_core, so the fundamental is the crossing at the smallest u.
    grid = np.linspace(1e-6 * v, v * (1.0 - 1e-9), int(scan_points))
    residuals = np.array([_he11_residual_u(x, fiber) for x in grid])
    finite = np.isfinite(residuals)
    signs = np.sign(residuals)
    crossings = np.nonzero(
        (np.diff(signs) != 0) & finite[:-1] & finite[1:]
    )[0]
    if crossings.size == 0:
        raise NoGuidedModeError(
            f"no HE11 root found in ({fiber.n_clad}, {fiber.n_core}); "
            f"V = {v:.4f}"
        )
    i = crossings[0]
    u = brentq(
        _he11_residual_u,
        grid[i],
        grid[i + 1],
        args=(fiber,),
        xtol=1e-15,
        rtol=8.9e-16,
    )

    k0a = fiber.k0 * fiber.core_radius
    n_eff = math.sqrt(fiber.n_core**2 - (u / k0a) ** 2)
    w = k0a * math.sqrt(n_eff**2 - fiber.n_clad**2)
    j = jvp(1, u) / (u * jv(1, u))
    k = kvp(1, w) / (w * kv(1, w))
    s = (1.0 / u**2 + 1.0 / w**2) / (j + k)

    core_branch, clad_branch = _intensity_branches(fiber, n_eff, u, w, s)
    peak = float(core_branch(np.zeros(1))[0])

    n = int(samples_per_region)
    if n < 3 or n % 2 == 0:
        raise ParameterError("samples_per_region must be odd and >= 3")
    r_core = np.linspace(0.0, 1.0, n)
    r_clad = np.linspace(1.0, float(radial_extent), n)
    area = (
        simpson(core_branch(r_core) * r_core, x=r_core)
        + simpson(clad_branch(r_clad) * r_clad, x=r_clad)
    ) * 2.0 * math.pi * fiber.core_radius**2 / peak

    # K-function asymptotics: I(R) ~ I(R0) exp(-2 w (R - R0)), so the tail
    # beyond R0 contributes about I(R0) * 2 pi a^2 * R0 / (2 w).
    r0 = float(radial_extent)
    tail = (
        float(clad_branch(np.array([r0]))[0])
        / peak
        * 2.0
        * math.pi
        * fiber.core_radius**2
        * r0
        / (2.0 * w)
    )

    return ModeSolution(
        fiber=fiber,
        n_eff=float(n_eff),
        u=float(u),
        w=float(w),
        s=float(s),
        effective_area=float(area),
        tail_truncation_error=tail,
        radial_extent=r0,
        samples_per_region=n,
    )


def solve_lp01(fiber: FiberSpec) -> float:
    """Scalar LP01 effective index (weakly guiding oracle for HE11)."""
    v = fiber.v_number
    # The LP01 root lies below the first zero of J0 (where J0 changes sign).
    upper = min(v, float(jn_zeros(0, 1)[0]))
    lo, hi = 1e-9 * upper, upper * (1.0 - 1e-12)
    flo = _dispersion_lp01(lo, fiber)
    fhi = _dispersion_lp01(hi, fiber)
    if flo * fhi > 0.0:
        raise NoGuidedModeError("no LP01 root bracket; fiber outside model validity")
    u = brentq(_dispersion_lp01, lo, hi, args=(fiber,), xtol=1e-16, rtol=8.9e-16)
    return math.sqrt(fiber.n_core**2 - (u / (fiber.k0 * fiber.core_radius)) ** 2)


def gaussian_mode_field_radius(fiber: FiberSpec) -> float:
    """Marcuse fit for the fundamental-mode Gaussian radius (m)."""
    v = fiber.v_number
    return fiber.core_radius * (0.65 + 1.619 / v**1.5 + 2.879 / v**6)


def mode_volume(mode: ModeSolution, geom: CavityGeometry) -> float:
    """Cavity mode volume: length times effective area (uniform-fiber model).

    The tapered regions and any sub-wavelength waist are neglected; the
    cross-section is the solved fiber mode along the full cavity length.
    """
    return geom.length * mode.effective_area


@dataclass(frozen=True)
class AtomSpec:
    """Transition dipole moment (C m) and angular frequency (rad/s)."""

    dipole_moment: float
    transition_angular_frequency: float

    def __post_init__(self):
        if not self.dipole_moment > 0.0:
            raise ParameterError("dipole_moment must be positive")
        if not self.transition_angular_frequency > 0.0:
            raise ParameterError("transition_angular_frequency must be positive")


def cs_d2_atom() -> AtomSpec:
    """Cesium D2 cycling transition (dipole moment derived from the linewidth)."""
    return AtomSpec(
        dipole_moment=CS_D2_CYCLING_DIPOLE,
        transition_angular_frequency=CS_D2_ANGULAR_FREQUENCY,
    )


def coupling_rate(atom: AtomSpec, mode_volume_m3: float, phi: float = 1.0) -> AngularRate:
    """Atom-cavity coupling g = sqrt(mu^2 w / (2 hbar eps0 V)) * phi.

    phi is the local mode amplitude in the max = 1 normalization; phi = 1
    gives the antinode (maximum) coupling.
    """
    if not mode_volume_m3 > 0.0:
        raise ParameterError("mode volume must be positive")
    if not 0.0 <= phi <= 1.0:
        raise ParameterError("phi must lie in [0, 1]")
    g_max = math.sqrt(
        atom.dipole_moment**2
        * atom.transition_angular_frequency
        / (2.0 * HBAR * EPSILON_0 * mode_volume_m3)
    )
    return AngularRate(g_max * phi)


def estimated_max_coupling(
    fiber: FiberSpec, geom: CavityGeometry, atom: AtomSpec | None = None
) -> AngularRate:
    """Solve the fiber mode and evaluate the antinode coupling rate."""
    if atom is None:
        atom = cs_d2_atom()
    mode = solve_fundamental_mode(fiber)
    return coupling_rate(atom, mode_volume(mode, geom), 1.0)
