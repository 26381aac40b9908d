"""File formats: spectrum/trace CSV, event JSON-lines, run manifests.

Floats are written with ``repr``, which round-trips bit-exactly through
``float()`` in Python 3. Writers refuse NaN/Inf. All files are written
atomically (temp file in the target directory, then rename).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .estimation import Spectrum
from .ringdown import RingdownTrace
from .units import TWO_PI_MHZ

SPECTRUM_HEADER = ("delta_two_pi_mhz", "transmission_normalized")
TRACE_HEADER = ("t_ns", "intensity_normalized")

NS = 1e-9


class DataFormatError(ValueError):
    """A data file does not match its expected format."""


def unit_exact_value(value: float, factor: float) -> float:
    """A double x with x * factor == value when one exists, else value/factor.

    Readers recover values as ``parsed * factor``; the naive quotient does
    not always survive that round trip. Values that were built on the unit
    lattice (x * factor for a double x) have an exact preimage within a few
    ulps of the quotient; foreign values fall back to nearest (sub-ulp).
    """
    x = value / factor
    if x * factor == value:
        return x
    up = down = x
    for _ in range(8):
        up = math.nextafter(up, math.inf)
        if up * factor == value:
            return up
        down = math.nextafter(down, -math.inf)
        if down * factor == value:
            return down
    return x


def _unit_exact_repr(value: float, factor: float) -> str:
    """Decimal string form of unit_exact_value; exact for lattice values,
    which makes read -> write a byte-level fixed point for our own files."""
    return repr(unit_exact_value(value, factor))


def _require_finite(array, what: str):
    array = np.asarray(array, dtype=float)
    if not np.all(np.isfinite(array)):
        raise DataFormatError(f"refusing to write non-finite values in {what}")
    return array


def atomic_write_text(path, text: str):
    """Write text to path via a temp file and rename (atomic on POSIX)."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def spectrum_to_csv(spectrum: Spectrum) -> str:
    """Render a spectrum as CSV with detunings in the 2pi x MHz convention."""
    deltas = _require_finite(spectrum.deltas, "spectrum detunings")
    values = _require_finite(spectrum.values, "spectrum values")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = list(SPECTRUM_HEADER)
    sigmas = spectrum.sigmas
    if sigmas is not None:
        sigmas = _require_finite(sigmas, "spectrum sigmas")
        header.append("sigma")
    writer.writerow(header)
    for i in range(deltas.size):
        row = [_unit_exact_repr(float(deltas[i]), TWO_PI_MHZ), repr(float(values[i]))]
        if sigmas is not None:
            row.append(repr(float(sigmas[i])))
        writer.writerow(row)
    return buffer.getvalue()


def spectrum_from_csv(text: str) -> Spectrum:
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows or tuple(rows[0][:2]) != SPECTRUM_HEADER:
        raise DataFormatError(
            f"spectrum CSV must start with header {','.join(SPECTRUM_HEADER)}"
        )
    has_sigma = len(rows[0]) >= 3 and rows[0][2] == "sigma"
    deltas, values, sigmas = [], [], []
    for row in rows[1:]:
        deltas.append(float(row[0]) * TWO_PI_MHZ)
        values.append(float(row[1]))
        if has_sigma:
            sigmas.append(float(row[2]))
    return Spectrum(
        deltas=np.array(deltas),
        values=np.array(values),
        sigmas=np.array(sigmas) if has_sigma else None,
    )


def write_spectrum_csv(path, spectrum: Spectrum):
    atomic_write_text(path, spectrum_to_csv(spectrum))


def read_spectrum_csv(path) -> Spectrum:
    with open(path, "r", encoding="utf-8") as handle:
        return spectrum_from_csv(handle.read())


def trace_to_csv(trace: RingdownTrace) -> str:
    """Render a ring-down trace as CSV with times in ns."""
    times = _require_finite(trace.times, "trace times")
    intensities = _require_finite(trace.intensities, "trace intensities")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for t, value in zip(times, intensities):
        writer.writerow([_unit_exact_repr(float(t), NS), repr(float(value))])
    return buffer.getvalue()


def trace_from_csv(text: str) -> RingdownTrace:
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    if not rows or tuple(rows[0][:2]) != TRACE_HEADER:
        raise DataFormatError(
            f"trace CSV must start with header {','.join(TRACE_HEADER)}"
        )
    times = np.array([float(row[0]) * NS for row in rows[1:]])
    intensities = np.array([float(row[1]) for row in rows[1:]])
    return RingdownTrace(times=times, intensities=intensities)


def write_trace_csv(path, trace: RingdownTrace):
    atomic_write_text(path, trace_to_csv(trace))


def read_trace_csv(path) -> RingdownTrace:
    with open(path, "r", encoding="utf-8") as handle:
        return trace_from_csv(handle.read())


def event_to_json_dict(record) -> dict:
    """EventRecord as a JSON-ready dict; detuning keys in canonical 2pi-MHz form."""
    counts = {
        f"{d / TWO_PI_MHZ:.3f}": int(c)
        for d, c in sorted(record.spectroscopy_counts.items())
    }
    return {
        "atom_present": bool(record.atom_present),
        "local_g": {"value": record.local_g / TWO_PI_MHZ, "unit": "two_pi_mhz"},
        "detection_counts": int(record.detection_counts),
        "normalized_detection": float(record.normalized_detection),
        "level": int(record.level),
        "spectroscopy_counts": counts,
        "survived_hold": bool(record.survived_hold),
    }


def events_to_jsonl(records) -> str:
    lines = [json.dumps(event_to_json_dict(r), sort_keys=True) for r in records]
    return "".join(line + "\n" for line in lines)


def write_events_jsonl(path, records):
    atomic_write_text(path, events_to_jsonl(records))


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce one CLI run bit-identically."""

    subcommand: str
    config: dict
    inputs: list
    outputs: list
    seed: int
    tool_version: str
    duration_s: float

    def to_json(self) -> str:
        doc = {
            "subcommand": self.subcommand,
            "config": self.config,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "seed": int(self.seed),
            "tool_version": self.tool_version,
            "duration_s": float(self.duration_s),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        doc = json.loads(text)
        try:
            return cls(
                subcommand=doc["subcommand"],
                config=doc["config"],
                inputs=list(doc["inputs"]),
                outputs=list(doc["outputs"]),
                seed=int(doc["seed"]),
                tool_version=doc["tool_version"],
                duration_s=float(doc["duration_s"]),
            )
        except KeyError as exc:
            raise DataFormatError(f"manifest missing field {exc}") from exc


def write_manifest(path, manifest: RunManifest):
    atomic_write_text(path, manifest.to_json())


def read_manifest(path) -> RunManifest:
    with open(path, "r", encoding="utf-8") as handle:
        return RunManifest.from_json(handle.read())
