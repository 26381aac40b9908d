"""Monte Carlo simulator of the single-atom measurement pipeline.

Each sequence models one experimental cycle: an atom loads into the trap
with some probability; its local coupling rate is drawn from the
incommensurate standing-wave distribution g = g_max |cos(phi)| with phi
uniform (trap minima sample the cavity standing wave uniformly because the
two periods differ); a resonant detection probe classifies the transmission
reduction into six levels; the atom survives a hold time with probability
exp(-tau_hold / trap_lifetime); and a detuning-swept spectroscopy probe
records Poisson photon counts per detuning, against a constant background.

At most one atom is loaded per sequence (multi-atom loading is negligible at
low atomic density). An optional Poisson-number loading mode exists for
sensitivity studies; when several atoms load in that mode, they act through
the single-excitation collective coupling sqrt(sum g_i^2).

Sequences are independent given per-sequence RNG streams derived from
(seed, sequence index); ensembles can run in parallel and merge
deterministically by index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import steady
from .constants import C, CS_D2_WAVELENGTH, HBAR
from .estimation import Spectrum
from .units import ParameterError, SystemParams, validate

# Equal-width default bins over normalized detection transmission [0, 1].
# The thresholds are a documented free choice; override via SequenceConfig.
DEFAULT_BIN_EDGES = (1 / 6, 2 / 6, 3 / 6, 4 / 6, 5 / 6)


@dataclass(frozen=True)
class ProbeConfig:
    """One probe pulse: optical power (W), duration (s), detuning (rad/s)."""

    power: float
    duration: float
    detuning: float = 0.0
    wavelength: float = CS_D2_WAVELENGTH

    def __post_init__(self):
        if not self.power > 0.0:
            raise ParameterError("probe power must be positive")
        if not self.duration > 0.0:
            raise ParameterError("probe duration must be positive")
        if not self.wavelength > 0.0:
            raise ParameterError("probe wavelength must be positive")

    @property
    def photon_flux(self) -> float:
        """Photons per second: power / (hbar omega)."""
        omega = 2.0 * math.pi * C / self.wavelength
        return self.power / (HBAR * omega)


@dataclass(frozen=True)
class SequenceConfig:
    """Knobs of one measurement sequence (see module docstring)."""

    load_probability: float
    g_max: float
    detection: ProbeConfig
    spectroscopy: ProbeConfig
    background_rate: float = 1e4  # counts/s, includes dark counts
    detector_efficiency: float = 0.5
    trap_lifetime: float = 11e-3  # s
    hold_time: float = 0.0  # s, between detection and spectroscopy
    rng_seed: int = 0
    bin_edges: tuple = field(default=DEFAULT_BIN_EDGES)
    poisson_loading: bool = False
    # fractional signal-gain change per sequence; models slow setup drift
    # that the (fixed) normalization does not track. 0 disables.
    normalization_drift: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.load_probability <= 1.0:
            raise ParameterError("load_probability must lie in [0, 1]")
        if self.g_max < 0.0:
            raise ParameterError("g_max must be non-negative")
        if self.background_rate < 0.0:
            raise ParameterError("background_rate must be non-negative")
        if not 0.0 < self.detector_efficiency <= 1.0:
            raise ParameterError("detector_efficiency must lie in (0, 1]")
        if not self.trap_lifetime > 0.0:
            raise ParameterError("trap_lifetime must be positive")
        if self.hold_time < 0.0:
            raise ParameterError("hold_time must be non-negative")
        edges = tuple(float(e) for e in self.bin_edges)
        if len(edges) != 5:
            raise ParameterError("bin_edges must hold exactly 5 thresholds")
        if any(e2 <= e1 for e1, e2 in zip(edges, edges[1:])):
            raise ParameterError("bin_edges must be strictly increasing")
        if edges[0] <= 0.0 or edges[-1] >= 1.0:
            raise ParameterError("bin_edges must lie strictly inside (0, 1)")
        object.__setattr__(self, "bin_edges", edges)


@dataclass(frozen=True)
class EventRecord:
    """Outcome of one measurement sequence."""

    atom_present: bool
    local_g: float
    detection_counts: int
    normalized_detection: float
    level: int
    spectroscopy_counts: dict  # detuning (rad/s) -> counts
    survived_hold: bool


def sample_local_g(g_max: float, rng: np.random.Generator) -> float:
    """Draw g = g_max |cos(phi)|, phi uniform on [0, pi).

    The trap and cavity standing waves have different periods, so trap
    minima sample the cavity phase uniformly; the CDF of the draw is
    P(g <= x g_max) = (2/pi) arcsin(x).
    """
    if g_max < 0.0:
        raise ParameterError("g_max must be non-negative")
    phase = rng.random() * math.pi
    return g_max * abs(math.cos(phase))


def local_g_cdf(x) -> np.ndarray:
    """CDF of g / g_max for the |cos| distribution: (2/pi) arcsin(x)."""
    return 2.0 / math.pi * np.arcsin(np.clip(np.asarray(x, dtype=float), 0.0, 1.0))


def expected_count_rate(
    params: SystemParams,
    probe: ProbeConfig,
    background_rate: float,
    detector_efficiency: float,
):
    """Mean detector count rate for a probe at its detuning, plus background.

    rate = efficiency * photon_flux * normalized_transmission(detuning)
           * empty-cavity peak transmission + background.
    """
    validate(params)
    signal = (
        detector_efficiency
        * probe.photon_flux
        * steady.normalized_transmission(params, probe.detuning)
        * steady.empty_cavity_peak_transmission(params)
    )
    return signal + background_rate


def empty_cavity_signal_rate(
    params: SystemParams, probe: ProbeConfig, detector_efficiency: float
) -> float:
    """Detected signal rate through the empty cavity on resonance (no background)."""
    return (
        detector_efficiency
        * probe.photon_flux
        * steady.empty_cavity_peak_transmission(params)
    )


def classify_level(normalized_detection: float, bin_edges) -> int:
    """Map a normalized detection transmission onto levels 1..6.

    Level 1 is the least reduction (value above the top edge, i.e. no atom);
    level 6 the strongest reduction (value below the bottom edge). Values
    outside [0, 1] from shot noise clamp into the end bins.
    """
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or edges.size != 5:
        raise ParameterError("bin_edges must hold exactly 5 thresholds")
    if np.any(np.diff(edges) <= 0.0):
        raise ParameterError("bin_edges must be strictly increasing")
    return int(6 - np.searchsorted(edges, normalized_detection, side="left"))


def _normalized_counts(counts, duration, background_rate, signal_rate):
    """Background-subtracted counts over the expected empty-cavity signal."""
    return (counts / duration - background_rate) / signal_rate


def run_sequence(
    system: SystemParams,
    config: SequenceConfig,
    spectroscopy_detunings,
    rng: np.random.Generator,
    gain: float = 1.0,
) -> EventRecord:
    """Simulate one measurement sequence and return its record.

    ``system`` supplies the cavity and atom rates; its g field is replaced by
    the per-event local coupling. Normalization uses the configured expected
    empty-cavity signal (drift-free normalization), so normalized values are
    directly comparable across sequences. ``gain`` scales the detected signal
    (not the background): the ensemble runner uses it to apply the optional
    slow drift.
    """
    validate(system)
    if not gain > 0.0:
        raise ParameterError("signal gain must be positive")
    detunings = np.asarray(spectroscopy_detunings, dtype=float)

    if config.poisson_loading:
        if config.load_probability >= 1.0:
            raise ParameterError("poisson_loading requires load_probability < 1")
        # Mean atom number chosen so P(n >= 1) matches load_probability.
        n_atoms = int(rng.poisson(-math.log1p(-config.load_probability)))
        atom_present = n_atoms >= 1
        if atom_present:
            draws = [sample_local_g(config.g_max, rng) for _ in range(n_atoms)]
            local_g = math.sqrt(sum(g * g for g in draws))
        else:
            local_g = 0.0
    else:
        atom_present = rng.random() < config.load_probability
        local_g = sample_local_g(config.g_max, rng) if atom_present else 0.0

    occupied = system.with_g(local_g if atom_present else 0.0)

    det = config.detection
    det_signal_rate = gain * (
        expected_count_rate(occupied, det, 0.0, config.detector_efficiency)
    )
    detection_counts = int(
        rng.poisson((det_signal_rate + config.background_rate) * det.duration)
    )
    det_signal = empty_cavity_signal_rate(system, det, config.detector_efficiency)
    normalized_detection = _normalized_counts(
        detection_counts, det.duration, config.background_rate, det_signal
    )
    level = classify_level(normalized_detection, config.bin_edges)

    survival_probability = math.exp(-config.hold_time / config.trap_lifetime)
    survived = bool(atom_present and rng.random() < survival_probability)

    probed = occupied if survived else system.with_g(0.0)
    spec = config.spectroscopy
    rates = (
        gain
        * config.detector_efficiency
        * spec.photon_flux
        * steady.normalized_transmission(probed, detunings)
        * steady.empty_cavity_peak_transmission(probed)
        + config.background_rate
    )
    counts = rng.poisson(rates * spec.duration)
    spectroscopy_counts = {
        float(d): int(c) for d, c in zip(detunings, np.atleast_1d(counts))
    }

    return EventRecord(
        atom_present=atom_present,
        local_g=local_g,
        detection_counts=detection_counts,
        normalized_detection=float(normalized_detection),
        level=level,
        spectroscopy_counts=spectroscopy_counts,
        survived_hold=survived,
    )


def sequence_rng(base_seed: int, index: int) -> np.random.Generator:
    """Per-sequence RNG stream derived from (seed, sequence index)."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(index),))
    )


def run_ensemble(
    system: SystemParams,
    config: SequenceConfig,
    spectroscopy_detunings,
    n_sequences: int,
    base_seed: int | None = None,
) -> list:
    """Run n_sequences independent sequences, ordered by index.

    Per-sequence RNG streams come from (base_seed, index), so the output is
    deterministic and independent of execution order.
    """
    if n_sequences < 0:
        raise ParameterError("n_sequences must be non-negative")
    seed = config.rng_seed if base_seed is None else base_seed
    return [
        run_sequence(
            system,
            config,
            spectroscopy_detunings,
            sequence_rng(seed, i),
            gain=1.0 + config.normalization_drift * i,
        )
        for i in range(int(n_sequences))
    ]


def accumulate_spectra(records, system: SystemParams, config: SequenceConfig) -> dict:
    """Per-level mean normalized spectra with standard errors of the mean.

    Counts are background-subtracted and normalized by the expected
    empty-cavity on-resonance spectroscopy signal. Levels with no events are
    absent from the returned mapping (not zero spectra). All records must
    share one spectroscopy detuning grid.
    """
    spec_signal = empty_cavity_signal_rate(
        system, config.spectroscopy, config.detector_efficiency
    )
    duration = config.spectroscopy.duration

    by_level: dict[int, list] = {}
    grid: np.ndarray | None = None
    for record in records:
        detunings = np.array(sorted(record.spectroscopy_counts), dtype=float)
        if grid is None:
            grid = detunings
        elif detunings.shape != grid.shape or not np.array_equal(detunings, grid):
            raise ParameterError("records do not share a spectroscopy detuning grid")
        counts = np.array([record.spectroscopy_counts[d] for d in detunings])
        by_level.setdefault(record.level, []).append(counts)

    spectra = {}
    for level, rows in sorted(by_level.items()):
        counts = np.asarray(rows, dtype=float)
        values = _normalized_counts(
            counts, duration, config.background_rate, spec_signal
        )
        mean = values.mean(axis=0)
        if values.shape[0] > 1:
            sem = values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])
            sem = np.where(sem > 0.0, sem, np.finfo(float).tiny)
        else:
            sem = None
        spectra[level] = Spectrum(deltas=grid, values=mean, sigmas=sem)
    return spectra


def level_occupancy(records) -> dict:
    """Counts of records per classification level (1..6)."""
    occupancy = {level: 0 for level in range(1, 7)}
    for record in records:
        occupancy[record.level] += 1
    return occupancy
