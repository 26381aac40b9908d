"""Command-line surface: forward simulation, fitting, mode solving, pipeline.

Subcommands: spectrum | ringdown | fit | mode-solve | experiment. Every
subcommand reads one JSON config document (all fields optional, defaults
documented by ``--dump-config``), lets flags override config fields, writes
its outputs atomically, and drops a ``<primary output>.manifest.json``
recording the fully resolved config, seed and tool version; re-running with
a manifest's config reproduces the outputs byte-identically.

Exit codes: 0 success, 2 config/schema error, 3 numerical failure
(non-convergence, no root, integration failure), 4 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import secrets
import sys
import time

import numpy as np

from . import __version__
from . import dataio, estimation, experiment, fibermode, ringdown, steady, svgplot
from .dataio import unit_exact_value
from .constants import CS_D2_CYCLING_DIPOLE, CS_D2_WAVELENGTH
from .ringdown import IntegrationError, RingdownParams
from .units import (
    CavityGeometry,
    ParameterError,
    SystemParams,
    from_two_pi_mhz,
    rate_from_json,
    rate_to_json,
    two_pi_mhz,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class ConfigError(Exception):
    """Bad config document; message carries a JSON pointer to the field."""


def _fail(pointer: str, message: str):
    raise ConfigError(f"{pointer}: {message}")


def _get_number(doc, pointer, key, default=None, minimum=None, maximum=None):
    value = doc.get(key, default)
    if value is None:
        _fail(f"{pointer}/{key}", "required number missing")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{pointer}/{key}", f"expected number, got {value!r}")
    value = float(value)
    if minimum is not None and value < minimum:
        _fail(f"{pointer}/{key}", f"must be >= {minimum}")
    if maximum is not None and value > maximum:
        _fail(f"{pointer}/{key}", f"must be <= {maximum}")
    return value


def _get_int(doc, pointer, key, default=None, minimum=None):
    value = doc.get(key, default)
    if value is None:
        _fail(f"{pointer}/{key}", "required integer missing")
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(f"{pointer}/{key}", f"expected integer, got {value!r}")
    if minimum is not None and value < minimum:
        _fail(f"{pointer}/{key}", f"must be >= {minimum}")
    return int(value)


def _get_rate(doc, pointer, key, default_two_pi_mhz=None):
    value = doc.get(key)
    if value is None:
        if default_two_pi_mhz is None:
            _fail(f"{pointer}/{key}", "required rate missing")
        return from_two_pi_mhz(default_two_pi_mhz)
    try:
        return float(rate_from_json(value))
    except ParameterError as exc:
        _fail(f"{pointer}/{key}", str(exc))


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"/: invalid JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("/: config document must be a JSON object")
    return doc


def _system_from_config(doc: dict, pointer="/system") -> SystemParams:
    try:
        params = SystemParams(
            kappa1=_get_rate(doc, pointer, "kappa1", 0.12),
            kappa2=_get_rate(doc, pointer, "kappa2", 3.08),
            kappa_loss=_get_rate(doc, pointer, "kappa_loss", 3.2),
            gamma=_get_rate(doc, pointer, "gamma", 2.6),
            g=_get_rate(doc, pointer, "g", 7.8),
            cavity_detuning=_get_rate(doc, pointer, "cavity_detuning", 0.0),
        )
        return steady.validate(params)
    except ParameterError as exc:
        raise ConfigError(f"{pointer}: {exc}") from exc


def _system_to_config(params: SystemParams) -> dict:
    # rad/s survives the JSON round trip bit-exactly; 2pi-MHz would not
    return params.to_json_dict("rad_per_s")


def _resolve_seed(args, config: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if "seed" in config:
        if isinstance(config["seed"], bool) or not isinstance(config["seed"], int):
            raise ConfigError("/seed: expected integer")
        return int(config["seed"])
    return secrets.randbits(32)


def _write_outputs(args, subcommand, resolved, inputs, outputs, seed, started):
    primary = outputs[0]
    manifest = dataio.RunManifest(
        subcommand=subcommand,
        config=resolved,
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        seed=seed,
        tool_version=__version__,
        duration_s=time.monotonic() - started,
    )
    dataio.write_manifest(str(primary) + ".manifest.json", manifest)


def _dump_config_and_exit(resolved: dict):
    print(json.dumps(resolved, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# spectrum


def _cmd_spectrum(args) -> int:
    started = time.monotonic()
    user = _load_config(args.config)
    config = _merge(
        {
            "system": _system_to_config(_system_from_config(user.get("system", {}))),
            "grid": {
                "delta_min": rate_to_json(
                    from_two_pi_mhz(
                        args.delta_min_mhz
                        if args.delta_min_mhz is not None
                        else _get_number(user.get("grid", {}), "/grid", "delta_min_mhz", -25.0)
                    ),
                    "rad_per_s",
                ),
                "delta_max": rate_to_json(
                    from_two_pi_mhz(
                        args.delta_max_mhz
                        if args.delta_max_mhz is not None
                        else _get_number(user.get("grid", {}), "/grid", "delta_max_mhz", 25.0)
                    ),
                    "rad_per_s",
                ),
                "points": args.points
                if args.points is not None
                else _get_int(user.get("grid", {}), "/grid", "points", 501, minimum=2),
            },
        },
        {},
    )
    if args.g_list_mhz is not None:
        g_list = [float(v) for v in args.g_list_mhz.split(",") if v.strip()]
    else:
        g_list = user.get("g_list_two_pi_mhz")
        if g_list is not None and not isinstance(g_list, list):
            raise ConfigError("/g_list_two_pi_mhz: expected a list of numbers")
    if g_list is not None:
        config["g_list_two_pi_mhz"] = [float(v) for v in g_list]
    seed = _resolve_seed(args, user)
    config["seed"] = seed
    if args.dump_config:
        return _dump_config_and_exit(config)

    system = SystemParams.from_json_dict(config["system"])
    steady.validate(system)
    delta_min = rate_from_json(config["grid"]["delta_min"])
    delta_max = rate_from_json(config["grid"]["delta_max"])
    if not delta_max > delta_min:
        raise ConfigError("/grid/delta_max: must exceed delta_min")
    # Build the grid on the MHz lattice so CSV detunings round-trip exactly.
    deltas = (
        np.linspace(two_pi_mhz(delta_min), two_pi_mhz(delta_max), config["grid"]["points"])
        * from_two_pi_mhz(1.0)
    )

    outputs = []
    os.makedirs(args.out, exist_ok=True)
    series = []
    g_values = (
        [from_two_pi_mhz(v) for v in config.get("g_list_two_pi_mhz", [])]
        or [system.g]
    )
    multi = len(g_values) > 1
    for g in g_values:
        values = steady.normalized_transmission(system.with_g(g), deltas)
        spectrum = estimation.Spectrum(deltas=deltas, values=values)
        name = (
            f"spectrum_g{two_pi_mhz(g):.3f}.csv" if multi else "spectrum.csv"
        )
        path = os.path.join(args.out, name)
        dataio.write_spectrum_csv(path, spectrum)
        outputs.append(path)
        series.append(
            (f"g = 2π×{two_pi_mhz(g):.1f} MHz", deltas / from_two_pi_mhz(1.0), values)
        )
    if args.plot:
        svg = svgplot.line_chart(
            series,
            title="Normalized transmission",
            x_label="detuning (2π×MHz)",
            y_label="T / T_empty(0)",
        )
        path = os.path.join(args.out, "spectrum.svg")
        dataio.atomic_write_text(path, svg)
        outputs.append(path)

    _write_outputs(args, "spectrum", config, [], outputs, seed, started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# ringdown


def _ringdown_params_from_config(doc: dict, pointer="/ringdown") -> RingdownParams:
    try:
        return RingdownParams(
            kappa1=_get_rate(doc, pointer, "kappa1", 0.12),
            kappa2=_get_rate(doc, pointer, "kappa2", 3.08),
            kappa_loss=_get_rate(doc, pointer, "kappa_loss", 3.2),
            kappa_s=_get_rate(doc, pointer, "kappa_s", 50.0),
            s0=_get_number(doc, pointer, "s0", 1.0),
        )
    except ParameterError as exc:
        raise ConfigError(f"{pointer}: {exc}") from exc


def _cmd_ringdown(args) -> int:
    started = time.monotonic()
    user = _load_config(args.config)
    rd_doc = user.get("ringdown", {})
    params = _ringdown_params_from_config(rd_doc)
    grid_doc = user.get("grid", {})
    t_min_ns = (
        args.t_min_ns
        if args.t_min_ns is not None
        else _get_number(grid_doc, "/grid", "t_min_ns", -20.0)
    )
    t_max_ns = (
        args.t_max_ns
        if args.t_max_ns is not None
        else _get_number(grid_doc, "/grid", "t_max_ns", 250.0)
    )
    points = (
        args.points
        if args.points is not None
        else _get_int(grid_doc, "/grid", "points", 541, minimum=2)
    )
    method = args.method or user.get("method", "both")
    if method not in ("analytic", "integrate", "both"):
        raise ConfigError("/method: must be analytic | integrate | both")
    if not t_max_ns > t_min_ns:
        raise ConfigError("/grid/t_max_ns: must exceed t_min_ns")

    seed = _resolve_seed(args, user)
    config = {
        "ringdown": {
            "kappa1": rate_to_json(params.kappa1, "rad_per_s"),
            "kappa2": rate_to_json(params.kappa2, "rad_per_s"),
            "kappa_loss": rate_to_json(params.kappa_loss, "rad_per_s"),
            "kappa_s": rate_to_json(params.kappa_s, "rad_per_s"),
            "s0": params.s0,
        },
        "grid": {"t_min_ns": t_min_ns, "t_max_ns": t_max_ns, "points": points},
        "method": method,
        "seed": seed,
    }
    if args.dump_config:
        return _dump_config_and_exit(config)

    t_grid = np.linspace(t_min_ns, t_max_ns, points) * 1e-9  # ns lattice
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    traces = {}
    if method in ("analytic", "both"):
        traces["analytic"] = ringdown.analytic_trace(params, t_grid)
    if method in ("integrate", "both"):
        traces["integrated"] = ringdown.integrate_ringdown(params, t_grid)
    for name, trace in traces.items():
        path = os.path.join(args.out, f"ringdown_{name}.csv")
        dataio.write_trace_csv(path, trace)
        outputs.append(path)

    summary = {}
    if args.compare:
        if len(traces) < 2:
            raise ConfigError("/method: --compare needs method = both")
        reference = traces["analytic"].intensities
        deviation = float(
            np.max(np.abs(traces["integrated"].intensities - reference))
            / max(float(np.max(reference)), np.finfo(float).tiny)
        )
        summary["max_relative_deviation"] = deviation
        print(json.dumps(summary, sort_keys=True))

    if args.plot:
        series = [
            (name, trace.times * 1e9, trace.intensities)
            for name, trace in traces.items()
        ]
        path = os.path.join(args.out, "ringdown.svg")
        dataio.atomic_write_text(
            path,
            svgplot.line_chart(
                series,
                title="Reflected intensity",
                x_label="t (ns)",
                y_label="|s_out|^2 / s0^2",
            ),
        )
        outputs.append(path)

    if args.triptych:
        other = params.kappa1 + params.kappa_loss
        panels = []
        for title, kappa2 in (
            ("undercoupled", 0.5 * other),
            ("critical", other),
            ("overcoupled", 2.0 * other),
        ):
            p = RingdownParams(
                kappa1=params.kappa1,
                kappa2=kappa2,
                kappa_loss=params.kappa_loss,
                kappa_s=params.kappa_s,
                s0=params.s0,
            )
            trace = ringdown.analytic_trace(p, t_grid)
            panels.append((title, [("analytic", trace.times * 1e9, trace.intensities)]))
        path = os.path.join(args.out, "ringdown_triptych.svg")
        dataio.atomic_write_text(
            path,
            svgplot.triptych(panels, x_label="t (ns)", y_label="|s_out|^2 / s0^2"),
        )
        outputs.append(path)

    if summary:
        path = os.path.join(args.out, "ringdown_summary.json")
        dataio.atomic_write_text(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
        outputs.append(path)

    _write_outputs(args, "ringdown", config, [], outputs, seed, started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def _cmd_fit(args) -> int:
    started = time.monotonic()
    user = _load_config(args.config)
    recipe = args.recipe or user.get("recipe")
    if recipe not in ("lorentzian", "rabi-g", "exponential", "ringdown-tail"):
        raise ConfigError(
            "/recipe: must be lorentzian | rabi-g | exponential | ringdown-tail"
        )
    data_path = args.data or user.get("data")
    if not data_path:
        raise ConfigError("/data: input data path required")
    seed = _resolve_seed(args, user)

    config = {"recipe": recipe, "data": str(data_path), "seed": seed}
    fixed_doc = user.get("fixed", {})
    if args.fixed:
        with open(args.fixed, "r", encoding="utf-8") as handle:
            fixed_doc = json.load(handle)
    if recipe == "rabi-g":
        fixed = _system_from_config(fixed_doc, "/fixed")
        config["fixed"] = _system_to_config(fixed)
    if recipe == "ringdown-tail":
        tail_ns = (
            args.tail_start_ns
            if args.tail_start_ns is not None
            else _get_number(user, "", "tail_start_ns", 0.0)
        )
        config["tail_start_ns"] = tail_ns
    if recipe == "lorentzian":
        config["float_center"] = bool(args.float_center or user.get("float_center"))
    if args.dump_config:
        return _dump_config_and_exit(config)

    derived = {}
    if recipe == "ringdown-tail":
        trace = dataio.read_trace_csv(data_path)
        result = estimation.fit_ringdown_tail(trace, config["tail_start_ns"] * 1e-9)
        rate = result["rate"]
        derived = {
            "photon_lifetime_ns": 1e9 / rate,
            "kappa": rate_to_json(rate / 2.0),
        }
    elif recipe == "exponential":
        spectrum = dataio.read_spectrum_csv(data_path)
        # x column is interpreted as time in ms for this recipe
        times = spectrum.deltas / from_two_pi_mhz(1.0) * 1e-3
        result = estimation.fit_exponential_recovery(times, spectrum.values)
        derived = {"lifetime_ms": result["lifetime"] * 1e3}
    else:
        spectrum = dataio.read_spectrum_csv(data_path)
        if recipe == "lorentzian":
            result = estimation.fit_empty_cavity(
                spectrum, float_center=config["float_center"]
            )
            derived = {"kappa": rate_to_json(result["kappa"])}
        else:
            result = estimation.fit_rabi_g(spectrum, fixed)
            derived = {"g": rate_to_json(result["g"])}

    os.makedirs(args.out, exist_ok=True)
    doc = result.as_dict()
    doc["derived"] = derived
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    path = os.path.join(args.out, "fit_result.json")
    dataio.atomic_write_text(path, text)
    print(text, end="")
    _write_outputs(args, "fit", config, [str(data_path)], [path], seed, started)
    return EXIT_OK if result.converged else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# mode-solve


def _cmd_mode_solve(args) -> int:
    started = time.monotonic()
    user = _load_config(args.config)
    fiber_doc = user.get("fiber", {})
    wavelength = _get_number(
        fiber_doc, "/fiber", "wavelength_nm", CS_D2_WAVELENGTH * 1e9, minimum=1.0
    ) * 1e-9
    core_radius = _get_number(fiber_doc, "/fiber", "core_radius_um", 2.8, minimum=0.0) * 1e-6
    try:
        if "n_core" in fiber_doc or "n_clad" in fiber_doc:
            fiber = fibermode.FiberSpec(
                core_radius=core_radius,
                n_core=_get_number(fiber_doc, "/fiber", "n_core"),
                n_clad=_get_number(fiber_doc, "/fiber", "n_clad"),
                wavelength=wavelength,
            )
        else:
            fiber = fibermode.FiberSpec.from_numerical_aperture(
                core_radius,
                _get_number(fiber_doc, "/fiber", "numerical_aperture", 0.12, minimum=0.0),
                wavelength,
            )
    except ParameterError as exc:
        raise ConfigError(f"/fiber: {exc}") from exc

    cavity_doc = user.get("cavity", {})
    geom = CavityGeometry(
        length=_get_number(cavity_doc, "/cavity", "length_m", 0.33, minimum=0.0),
        effective_index=_get_number(cavity_doc, "/cavity", "effective_index", 1.45),
    )
    atom_doc = user.get("atom", {})
    atom_wavelength = (
        _get_number(
            atom_doc, "/atom", "transition_wavelength_nm", CS_D2_WAVELENGTH * 1e9
        )
        * 1e-9
    )
    atom = fibermode.AtomSpec(
        dipole_moment=_get_number(
            atom_doc, "/atom", "dipole_moment_cm", CS_D2_CYCLING_DIPOLE
        ),
        transition_angular_frequency=2.0 * np.pi * 299792458.0 / atom_wavelength,
    )
    seed = _resolve_seed(args, user)
    config = {
        "fiber": {
            "core_radius_um": unit_exact_value(core_radius, 1e-6),
            "n_core": fiber.n_core,
            "n_clad": fiber.n_clad,
            "wavelength_nm": unit_exact_value(wavelength, 1e-9),
        },
        "cavity": {"length_m": geom.length, "effective_index": geom.effective_index},
        "atom": {
            "dipole_moment_cm": atom.dipole_moment,
            "transition_wavelength_nm": unit_exact_value(atom_wavelength, 1e-9),
        },
        "seed": seed,
    }
    if args.dump_config:
        return _dump_config_and_exit(config)

    import warnings as _warnings

    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        mode = fibermode.solve_fundamental_mode(fiber)
    lp01 = fibermode.solve_lp01(fiber)
    volume = fibermode.mode_volume(mode, geom)
    g_est = fibermode.coupling_rate(atom, volume, 1.0)
    report = {
        "n_eff": mode.n_eff,
        "lp01_n_eff": lp01,
        "lp01_relative_difference": abs(mode.n_eff - lp01) / lp01,
        "v_number": fiber.v_number,
        "single_mode": fiber.v_number < fibermode.SINGLE_MODE_V_LIMIT,
        "effective_area_um2": mode.effective_area * 1e12,
        "mode_volume_um3": volume * 1e18,
        "g_est": rate_to_json(g_est),
        "tail_truncation_area_um2": mode.tail_truncation_error * 1e12,
        "warnings": [str(w.message) for w in caught],
    }
    os.makedirs(args.out, exist_ok=True)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    path = os.path.join(args.out, "mode_solution.json")
    dataio.atomic_write_text(path, text)
    print(text, end="")
    _write_outputs(args, "mode-solve", config, [], [path], seed, started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment


def _sequence_from_config(doc: dict, pointer="/sequence") -> experiment.SequenceConfig:
    def probe(key, default_power, default_duration):
        sub = doc.get(key, {})
        sub_pointer = f"{pointer}/{key}"
        return experiment.ProbeConfig(
            power=_get_number(sub, sub_pointer, "power_w", default_power, minimum=0.0),
            duration=_get_number(
                sub, sub_pointer, "duration_s", default_duration, minimum=0.0
            ),
            detuning=_get_rate(sub, sub_pointer, "detuning", 0.0),
            wavelength=_get_number(
                sub, sub_pointer, "wavelength_nm", CS_D2_WAVELENGTH * 1e9
            )
            * 1e-9,
        )

    edges = doc.get("bin_edges", list(experiment.DEFAULT_BIN_EDGES))
    if not isinstance(edges, list):
        raise ConfigError(f"{pointer}/bin_edges: expected a list of 5 numbers")
    try:
        return experiment.SequenceConfig(
            load_probability=_get_number(
                doc, pointer, "load_probability", 0.3, minimum=0.0, maximum=1.0
            ),
            g_max=_get_rate(doc, pointer, "g_max", 7.8),
            detection=probe("detection", 0.8e-12, 2e-3),
            spectroscopy=probe("spectroscopy", 0.4e-12, 5e-3),
            background_rate=_get_number(
                doc, pointer, "background_rate_cps", 1e4, minimum=0.0
            ),
            detector_efficiency=_get_number(
                doc, pointer, "detector_efficiency", 0.5, minimum=0.0, maximum=1.0
            ),
            trap_lifetime=_get_number(
                doc, pointer, "trap_lifetime_s", 11e-3, minimum=0.0
            ),
            hold_time=_get_number(doc, pointer, "hold_time_s", 0.0, minimum=0.0),
            rng_seed=_get_int(doc, pointer, "rng_seed", 0),
            bin_edges=tuple(float(e) for e in edges),
            poisson_loading=bool(doc.get("poisson_loading", False)),
            normalization_drift=_get_number(
                doc, pointer, "normalization_drift", 0.0
            ),
        )
    except ParameterError as exc:
        raise ConfigError(f"{pointer}: {exc}") from exc


def _cmd_experiment(args) -> int:
    started = time.monotonic()
    user = _load_config(args.config)
    system = _system_from_config(user.get("system", {}))
    seq_doc = dict(user.get("sequence", {}))
    if args.load_probability is not None:
        seq_doc["load_probability"] = args.load_probability
    config_seq = _sequence_from_config(seq_doc)
    det_doc = user.get("detunings", {})
    d_min = _get_rate(det_doc, "/detunings", "min", -25.0)
    d_max = _get_rate(det_doc, "/detunings", "max", 25.0)
    d_points = _get_int(det_doc, "/detunings", "points", 21, minimum=1)
    if not d_max >= d_min:
        raise ConfigError("/detunings/max: must be >= min")
    n_sequences = (
        args.sequences
        if args.sequences is not None
        else _get_int(user, "", "sequences", 1000, minimum=0)
    )
    seed = _resolve_seed(args, user)

    config = {
        "system": _system_to_config(system),
        "sequence": {
            "load_probability": config_seq.load_probability,
            "g_max": rate_to_json(config_seq.g_max, "rad_per_s"),
            "detection": {
                "power_w": config_seq.detection.power,
                "duration_s": config_seq.detection.duration,
                "detuning": rate_to_json(config_seq.detection.detuning, "rad_per_s"),
                "wavelength_nm": unit_exact_value(config_seq.detection.wavelength, 1e-9),
            },
            "spectroscopy": {
                "power_w": config_seq.spectroscopy.power,
                "duration_s": config_seq.spectroscopy.duration,
                "detuning": rate_to_json(config_seq.spectroscopy.detuning, "rad_per_s"),
                "wavelength_nm": unit_exact_value(config_seq.spectroscopy.wavelength, 1e-9),
            },
            "background_rate_cps": config_seq.background_rate,
            "detector_efficiency": config_seq.detector_efficiency,
            "trap_lifetime_s": config_seq.trap_lifetime,
            "hold_time_s": config_seq.hold_time,
            "rng_seed": config_seq.rng_seed,
            "bin_edges": list(config_seq.bin_edges),
            "poisson_loading": config_seq.poisson_loading,
            "normalization_drift": config_seq.normalization_drift,
        },
        "detunings": {
            "min": rate_to_json(d_min, "rad_per_s"),
            "max": rate_to_json(d_max, "rad_per_s"),
            "points": d_points,
        },
        "sequences": n_sequences,
        "seed": seed,
    }
    if args.dump_config:
        return _dump_config_and_exit(config)

    detunings = (
        np.linspace(two_pi_mhz(d_min), two_pi_mhz(d_max), d_points)
        * from_two_pi_mhz(1.0)
    )
    records = experiment.run_ensemble(
        system, config_seq, detunings, n_sequences, base_seed=seed
    )
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    events_path = os.path.join(args.out, "events.jsonl")
    dataio.write_events_jsonl(events_path, records)
    outputs.append(events_path)

    occupancy = experiment.level_occupancy(records)
    summary = {
        "sequences": n_sequences,
        "seed": seed,
        "level_occupancy": {str(k): v for k, v in occupancy.items()},
        "level_probability": {
            str(k): (v / n_sequences if n_sequences else 0.0)
            for k, v in occupancy.items()
        },
        "fits": {},
    }
    series = []
    if records:
        spectra = experiment.accumulate_spectra(records, system, config_seq)
        for level, spectrum in sorted(spectra.items()):
            path = os.path.join(args.out, f"spectrum_level_{level}.csv")
            dataio.write_spectrum_csv(path, spectrum)
            outputs.append(path)
            series.append(
                (
                    f"level {level}",
                    spectrum.deltas / from_two_pi_mhz(1.0),
                    spectrum.values,
                )
            )
            if len(spectrum) >= 3 and occupancy[level] >= 5:
                try:
                    if level == 1:
                        fit = estimation.fit_empty_cavity(spectrum)
                        summary["fits"][str(level)] = {
                            **fit.as_dict(),
                            "derived": {"kappa": rate_to_json(fit["kappa"])},
                        }
                    else:
                        fit = estimation.fit_rabi_g(spectrum, system)
                        summary["fits"][str(level)] = {
                            **fit.as_dict(),
                            "derived": {"g": rate_to_json(fit["g"])},
                        }
                except (ParameterError, estimation.FitError) as exc:
                    summary["fits"][str(level)] = {"error": str(exc)}
    else:
        summary["note"] = "no sequences requested; outputs are empty"

    if args.plot and series:
        path = os.path.join(args.out, "spectra_by_level.svg")
        dataio.atomic_write_text(
            path,
            svgplot.line_chart(
                series,
                title="Per-level normalized spectra",
                x_label="detuning (2π×MHz)",
                y_label="T / T_empty(0)",
            ),
        )
        outputs.append(path)

    summary_path = os.path.join(args.out, "summary.json")
    dataio.atomic_write_text(
        summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    outputs.append(summary_path)
    _write_outputs(args, "experiment", config, [], outputs, seed, started)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_common(parser):
    parser.add_argument("--config", help="JSON config document")
    parser.add_argument("--seed", type=int, help="RNG seed (recorded in manifest)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--plot", action="store_true", help="emit SVG plot(s)")
    parser.add_argument(
        "--dump-config",
        action="store_true",
        help="print the fully resolved config and exit",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fibercavity",
        description="Fiber-cavity QED simulation and parameter estimation",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("spectrum", help="steady-state transmission spectrum")
    _add_common(p)
    p.add_argument("--delta-min-mhz", type=float)
    p.add_argument("--delta-max-mhz", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--g-list-mhz", help="comma-separated g values (2pi x MHz) to overlay")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("ringdown", help="reflection ring-down traces")
    _add_common(p)
    p.add_argument("--t-min-ns", type=float)
    p.add_argument("--t-max-ns", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--method", choices=("analytic", "integrate", "both"))
    p.add_argument("--triptych", action="store_true",
                   help="three-panel under/critical/over comparison SVG")
    p.add_argument("--compare", action="store_true",
                   help="report max deviation between analytic and integrated")
    p.set_defaults(func=_cmd_ringdown)

    p = sub.add_parser("fit", help="run a fit recipe on a CSV file")
    _add_common(p)
    p.add_argument("--recipe", choices=("lorentzian", "rabi-g", "exponential", "ringdown-tail"))
    p.add_argument("--data", help="input CSV (spectrum or trace format)")
    p.add_argument("--fixed", help="JSON file with fixed parameters (rabi-g)")
    p.add_argument("--tail-start-ns", type=float, help="tail window start (ringdown-tail)")
    p.add_argument("--float-center", action="store_true", help="float the Lorentzian center")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("mode-solve", help="fiber fundamental mode and coupling estimate")
    _add_common(p)
    p.set_defaults(func=_cmd_mode_solve)

    p = sub.add_parser("experiment", help="Monte Carlo measurement pipeline")
    _add_common(p)
    p.add_argument("--sequences", type=int)
    p.add_argument("--load-probability", type=float)
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except dataio.DataFormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        IntegrationError,
        fibermode.NoGuidedModeError,
        estimation.FitError,
        svgplot.PlotError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
