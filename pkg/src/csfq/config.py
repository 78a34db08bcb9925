"""Device parameter files: INI sections with unit-annotated values.

Every dimensional value carries its unit after the number, e.g.
``c13 = 17.91 fF`` or ``omega_r = 8.1846 GHz``. Frequencies are written as
ordinary frequencies and stored as angular frequencies (rad/s); writing
``rad/s`` skips the 2 pi. Sections ``[circuit]`` and ``[capacitance]`` are
required; ``[cavity]``, ``[photon]`` and ``[pulse]`` are optional.
"""

import configparser
import re
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from csfq.circuit import CapacitanceSet, CavityParams, CircuitParams, build_capacitance_matrix
from csfq.errors import NonPositiveDefinite, ParseError, ValidationError
from csfq.photon import PhotonNoiseParams, n_thermal
from csfq.rb import PulseSpec

TWO_PI = 2 * np.pi

# unit -> SI factor, grouped by dimension
UNITS = {
    "capacitance": {"F": 1.0, "pF": 1e-12, "fF": 1e-15, "aF": 1e-18},
    "current_density": {"A/m2": 1.0, "uA/um2": 1e6, "kA/cm2": 1e7, "A/cm2": 1e4},
    "area": {"m2": 1.0, "um2": 1e-12, "nm2": 1e-18},
    "capacitance_density": {"F/m2": 1.0, "fF/um2": 1e-3},
    "frequency": {"Hz": TWO_PI, "kHz": TWO_PI * 1e3, "MHz": TWO_PI * 1e6, "GHz": TWO_PI * 1e9,
                  "rad/s": 1.0},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, "ps": 1e-12},
    "temperature": {"K": 1.0, "mK": 1e-3},
    "resistance": {"Ohm": 1.0},
    "dimensionless": {"": 1.0},
}

# section -> field -> (dimension, required)
SCHEMA = {
    "circuit": {"jc": ("current_density", True), "alpha_j": ("dimensionless", True),
                "area_large": ("area", True), "c_tilde": ("capacitance_density", True)},
    "capacitance": {f.name: ("capacitance", f.name in ("c13", "c21", "c32", "c01", "c02", "c03"))
                    for f in fields(CapacitanceSet)},
    "cavity": {"omega_r": ("frequency", True), "q_factor": ("dimensionless", True),
               "chi": ("frequency", False), "c_r": ("capacitance", False), "z0": ("resistance", False)},
    "photon": {"omega_r": ("frequency", False), "kappa": ("frequency", True), "chi": ("frequency", True),
               "temperature": ("temperature", False), "n_th": ("dimensionless", False)},
    "pulse": {"drive_strength": ("frequency", True), "t_half": ("time", False), "t_full": ("time", False),
              "t_rise": ("time", False), "t_fall": ("time", False), "gap": ("time", False)},
}
REQUIRED_SECTIONS = ("circuit", "capacitance")

_VALUE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")


@dataclass(frozen=True)
class DeviceConfig:
    caps: CapacitanceSet
    circuit: CircuitParams
    cavity: Optional[CavityParams] = None
    photon: Optional[PhotonNoiseParams] = None
    pulse: Optional[PulseSpec] = None


def _line_index(text):
    """Map ``(section, key)`` to 1-based line numbers for error reporting."""
    index, section = {}, None
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip().lower()
        elif "=" in s and not s.startswith(("#", ";")):
            index[(section, s.split("=", 1)[0].strip().lower())] = i
    return index


def parse_quantity(text, dimension, line=None, field=None):
    """Parse ``'<number> <unit>'`` into SI units; the unit must match ``dimension``."""
    m = _VALUE.match(text)
    if not m:
        raise ParseError(f"cannot parse {text!r} as a number with unit", line, field)
    value, unit = float(m.group(1)), m.group(2)
    table = UNITS[dimension]
    if unit not in table:
        if dimension == "dimensionless":
            raise ParseError(f"{field} is dimensionless but has unit {unit!r}", line, field)
        raise ParseError(f"unit {unit or '(none)'!r} is not a {dimension} unit; use one of "
                         f"{', '.join(table)}", line, field)
    return value * table[unit]


def _read_sections(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise ParseError("value outside any section", e.lineno) from None
    except configparser.ParsingError as e:
        lineno = e.errors[0][0] if e.errors else None
        raise ParseError(f"malformed line: {e.errors[0][1] if e.errors else e}", lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ParseError(str(e).splitlines()[0], e.lineno, getattr(e, "option", None)) from None
    lines = _line_index(text)
    out = {}
    for section in cp.sections():
        name = section.lower()
        if name not in SCHEMA:
            raise ParseError(f"unknown section [{section}]", lines.get((name, None)))
        schema = SCHEMA[name]
        vals = {}
        for key, raw in cp.items(section):
            line = lines.get((name, key))
            if key not in schema:
                raise ParseError(f"unknown key in [{name}]", line, key)
            vals[key] = parse_quantity(raw, schema[key][0], line, key)
        for key, (_, required) in schema.items():
            if required and key not in vals:
                raise ParseError(f"missing required key in [{name}]", None, key)
        out[name] = vals
    for name in REQUIRED_SECTIONS:
        if name not in out:
            raise ParseError(f"missing required section [{name}]")
    return out


def _build(sections) -> DeviceConfig:
    try:
        caps = CapacitanceSet(**sections["capacitance"])
        build_capacitance_matrix(caps)
        circuit = CircuitParams(caps=caps, **sections["circuit"])
        cavity = CavityParams(**sections["cavity"]) if "cavity" in sections else None
        photon = None
        if "photon" in sections:
            p = dict(sections["photon"])
            omega_r = p.pop("omega_r", cavity.omega_r if cavity else None)
            if omega_r is None:
                raise ValueError("[photon] needs omega_r when there is no [cavity] section")
            if ("temperature" in p) == ("n_th" in p):
                raise ValueError("[photon] needs exactly one of temperature and n_th")
            n_th = p["n_th"] if "n_th" in p else n_thermal(p["temperature"], omega_r)
            photon = PhotonNoiseParams.from_kappa(omega_r, p["kappa"], n_th, p["chi"])
        pulse = None
        if "pulse" in sections:
            p = dict(sections["pulse"])
            if ("t_half" in p) != ("t_full" in p):
                raise ValueError("[pulse] needs both t_half and t_full, or neither")
            if "t_half" in p:
                pulse = PulseSpec(**p)
            else:
                pulse = PulseSpec.calibrated(**p)
    except NonPositiveDefinite as e:
        raise ValidationError(f"capacitance matrix: {e}") from None
    except (ValueError, TypeError) as e:
        raise ValidationError(str(e)) from None
    return DeviceConfig(caps, circuit, cavity, photon, pulse)


def parse_device_config(text) -> DeviceConfig:
    return _build(_read_sections(text))


def load_device_config(path) -> DeviceConfig:
    """Read and validate a device file.

    Raises
    ------
    ParseError
        Syntax problems, unknown keys, missing or wrong units; carries the line and field.
    ValidationError
        Values that parse but violate a physical invariant (negative capacitance,
        ``alpha_j`` outside (0, 1], non-positive-definite capacitance matrix, ...).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    return parse_device_config(path.read_text())


def paper_config_path():
    return resources.files("csfq") / "data" / "device_paper.cfg"


def load_paper_config() -> DeviceConfig:
    return parse_device_config(paper_config_path().read_text())


def _fmt(value, unit, dimension):
    return f"{value / UNITS[dimension][unit]:.12g} {unit}".rstrip()


def format_device_config(cfg: DeviceConfig) -> str:
    """Serialize with SI-friendly units; ``parse_device_config`` inverts it to float precision."""
    out = ["[circuit]",
           f"jc = {_fmt(cfg.circuit.jc, 'uA/um2', 'current_density')}",
           f"alpha_j = {cfg.circuit.alpha_j:.12g}",
           f"area_large = {_fmt(cfg.circuit.area_large, 'um2', 'area')}",
           f"c_tilde = {_fmt(cfg.circuit.c_tilde, 'fF/um2', 'capacitance_density')}",
           "", "[capacitance]"]
    out += [f"{f.name} = {_fmt(getattr(cfg.caps, f.name), 'fF', 'capacitance')}" for f in fields(cfg.caps)]
    if cfg.cavity is not None:
        c = cfg.cavity
        out += ["", "[cavity]", f"omega_r = {_fmt(c.omega_r, 'GHz', 'frequency')}", f"q_factor = {c.q_factor:.12g}"]
        if c.chi is not None:
            out.append(f"chi = {_fmt(c.chi, 'MHz', 'frequency')}")
        if c.c_r is not None:
            out.append(f"c_r = {_fmt(c.c_r, 'fF', 'capacitance')}")
        out.append(f"z0 = {c.z0:.12g} Ohm")
    if cfg.photon is not None:
        p = cfg.photon
        out += ["", "[photon]", f"omega_r = {_fmt(p.omega_r, 'GHz', 'frequency')}",
                f"kappa = {_fmt(p.kappa, 'MHz', 'frequency')}", f"chi = {_fmt(p.chi, 'MHz', 'frequency')}",
                f"n_th = {p.n_th:.12g}"]
    if cfg.pulse is not None:
        p = cfg.pulse
        out += ["", "[pulse]", f"drive_strength = {_fmt(p.drive_strength, 'MHz', 'frequency')}"]
        out += [f"{k} = {_fmt(getattr(p, k), 'ns', 'time')}" for k in ("t_half", "t_full", "t_rise", "t_fall", "gap")]
    return "\n".join(out) + "\n"
