"""Shared unit conventions, parameter types, and validation.

All rates, detunings, and frequencies are stored internally as angular
frequencies in rad/s; lengths in meters; times in seconds. The lab-notebook
"2pi x MHz" convention appears only at I/O boundaries (string parsing and
formatting, JSON documents, CSV columns). Keeping a single internal unit
eliminates stray factors of 2*pi, the classic failure mode in this domain.

All types here are immutable values and safe to share between threads.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

from .constants import C

TWO_PI_MHZ = 2.0 * math.pi * 1e6  # rad/s per (2pi x 1 MHz)

_RATE_JSON_UNITS = ("rad_per_s", "two_pi_mhz")

_TWO_PI_MHZ_RE = re.compile(
    r"^\s*2(?:π|pi)\s*[×x*]\s*([-+0-9.eE]+)\s*MHz\s*$"
)
_RAD_PER_S_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*rad/s\s*$")


class ParameterError(ValueError):
    """A physical parameter violates one of its invariants."""


class AngularRate(float):
    """An angular frequency in rad/s.

    Behaves as a plain float in arithmetic; the class only adds unit-aware
    constructors and formatters. Decay rates must be non-negative; detunings
    may be negative. Finiteness is always required.
    """

    def __new__(cls, value):
        value = float(value)
        if not math.isfinite(value):
            raise ParameterError(f"angular rate must be finite, got {value!r}")
        return super().__new__(cls, value)

    @classmethod
    def from_two_pi_mhz(cls, value) -> "AngularRate":
        return cls(float(value) * TWO_PI_MHZ)

    @property
    def two_pi_mhz(self) -> float:
        return float(self) / TWO_PI_MHZ


def two_pi_mhz(rate_rad_s: float) -> float:
    """Convert rad/s to the 2pi x MHz convention."""
    return float(rate_rad_s) / TWO_PI_MHZ


def from_two_pi_mhz(value_mhz: float) -> float:
    """Convert 2pi x MHz to rad/s."""
    return float(value_mhz) * TWO_PI_MHZ


def format_rate(rate_rad_s: float) -> str:
    """Canonical string form of a rate, e.g. ``2π×6.400 MHz``."""
    return f"2π×{two_pi_mhz(rate_rad_s):.3f} MHz"


def parse_rate(text: str) -> AngularRate:
    """Parse ``2π×6.4 MHz`` (also ``2pi*6.4 MHz``) or ``4.02e7 rad/s``."""
    m = _TWO_PI_MHZ_RE.match(text)
    if m:
        return AngularRate.from_two_pi_mhz(float(m.group(1)))
    m = _RAD_PER_S_RE.match(text)
    if m:
        return AngularRate(float(m.group(1)))
    raise ParameterError(f"unrecognized rate string: {text!r}")


def rate_to_json(rate_rad_s: float, unit: str = "two_pi_mhz") -> dict:
    if unit not in _RATE_JSON_UNITS:
        raise ParameterError(f"unknown rate unit {unit!r}")
    value = two_pi_mhz(rate_rad_s) if unit == "two_pi_mhz" else float(rate_rad_s)
    return {"value": value, "unit": unit}


def rate_from_json(doc: dict) -> AngularRate:
    if not isinstance(doc, dict) or "value" not in doc or "unit" not in doc:
        raise ParameterError(f"rate must be {{value, unit}}, got {doc!r}")
    unit = doc["unit"]
    if unit not in _RATE_JSON_UNITS:
        raise ParameterError(f"unknown rate unit {unit!r}")
    value = float(doc["value"])
    if unit == "two_pi_mhz":
        return AngularRate.from_two_pi_mhz(value)
    return AngularRate(value)


@dataclass(frozen=True)
class SystemParams:
    """Physical rates of the atom-cavity system, all in rad/s.

    kappa1, kappa2 are the field decay rates through the two mirrors,
    kappa_loss the intracavity round-trip loss rate; the total field decay
    rate is kappa = kappa1 + kappa2 + kappa_loss. gamma is the atomic
    polarization decay rate and g the atom-cavity coupling rate.
    cavity_detuning is omega_C - omega_A; probe detunings are measured from
    the atomic resonance. omega_A (absolute optical angular frequency) is
    optional: the steady-state response depends only on detunings.
    """

    kappa1: float
    kappa2: float
    kappa_loss: float
    gamma: float
    g: float
    omega_A: float | None = None
    cavity_detuning: float = 0.0

    @property
    def kappa(self) -> float:
        return self.kappa1 + self.kappa2 + self.kappa_loss

    def with_g(self, g: float) -> "SystemParams":
        return replace(self, g=g)

    def to_json_dict(self, unit: str = "two_pi_mhz") -> dict:
        doc = {
            "kappa1": rate_to_json(self.kappa1, unit),
            "kappa2": rate_to_json(self.kappa2, unit),
            "kappa_loss": rate_to_json(self.kappa_loss, unit),
            "gamma": rate_to_json(self.gamma, unit),
            "g": rate_to_json(self.g, unit),
            "cavity_detuning": rate_to_json(self.cavity_detuning, unit),
        }
        if self.omega_A is not None:
            doc["omega_A"] = rate_to_json(self.omega_A, "rad_per_s")
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SystemParams":
        required = ("kappa1", "kappa2", "kappa_loss", "gamma", "g")
        for name in required:
            if name not in doc:
                raise ParameterError(f"missing field {name!r} in system params")
        omega_a = doc.get("omega_A")
        return cls(
            kappa1=rate_from_json(doc["kappa1"]),
            kappa2=rate_from_json(doc["kappa2"]),
            kappa_loss=rate_from_json(doc["kappa_loss"]),
            gamma=rate_from_json(doc["gamma"]),
            g=rate_from_json(doc["g"]),
            omega_A=None if omega_a is None else rate_from_json(omega_a),
            cavity_detuning=rate_from_json(
                doc.get("cavity_detuning", {"value": 0.0, "unit": "rad_per_s"})
            ),
        )


def validate(params: SystemParams) -> SystemParams:
    """Check all SystemParams invariants; return the params unchanged.

    Idempotent. Raises ParameterError naming the first violated invariant.
    """
    for name in ("kappa1", "kappa2", "kappa_loss", "gamma", "g"):
        value = getattr(params, name)
        if not math.isfinite(value):
            raise ParameterError(f"{name} must be finite")
        if value < 0.0:
            raise ParameterError(f"decay rates non-negative: {name} is {value!r}")
    if params.gamma <= 0.0:
        raise ParameterError("gamma must be positive")
    if params.kappa <= 0.0:
        raise ParameterError("kappa = kappa1 + kappa2 + kappa_loss must be positive")
    if not math.isfinite(params.cavity_detuning):
        raise ParameterError("cavity_detuning must be finite")
    if params.omega_A is not None and not params.omega_A > 0.0:
        raise ParameterError("omega_A must be positive when given")
    return params


@dataclass(frozen=True)
class CavityGeometry:
    """Cavity length (m) and effective refractive index of the guided mode."""

    length: float
    effective_index: float

    def __post_init__(self):
        if not (math.isfinite(self.length) and self.length > 0.0):
            raise ParameterError("cavity length must be positive")
        if not 1.0 < self.effective_index < 2.0:
            raise ParameterError("effective_index must lie in (1, 2)")


def fsr(geom: CavityGeometry) -> AngularRate:
    """Free spectral range 2*pi*c / (2 n_eff L), as an angular rate."""
    return AngularRate(2.0 * math.pi * C / (2.0 * geom.effective_index * geom.length))
