"""Run configuration: INI-style documents, presets and strict validation.

A document has ``[section]`` headers and ``key = value`` lines. Unknown
sections or keys are rejected. Values are resolved in the order schema
default < preset < document < command-line override, and the resolved
document can be echoed with :meth:`RunConfig.to_text` and parsed back.
"""
from __future__ import annotations

import ast
import configparser
import math
import operator
from dataclasses import dataclass, field

from .bloch import AtomicParams, FieldConfig
from .cavity import CavityConfig
from .dynamics import PulseSpec
from .errors import ParseError, ValidationError
from .structured_light import LGBeamSpec

SCHEMA_VERSION = "1.0"
SUBCOMMANDS = ("spectrum", "obcurve", "obscan", "hysteresis", "oam", "dynamics", "cnot", "metrics")

# Natural linewidth of the Rb-87 D1 line; the rb87-d1 preset is in units of this.
RB87_D1_GAMMA = 2 * math.pi * 5.75e6  # rad/s

PRESETS = {
    "paper-defaults": {
        "atom": {"gamma_13": 1.0, "gamma_23": 1.0, "gamma_14": 1.0, "gamma_24": 1.0,
                 "gamma_coll": 0.001},
        "cavity": {"cooperativity": 300.0},
    },
    "rb87-d1": {
        "atom": {"gamma_13": 0.25, "gamma_23": 0.75, "gamma_14": 0.625, "gamma_24": 0.375,
                 "gamma_coll": 0.001},
        "cavity": {"cooperativity": 300.0},
    },
}

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.USub: operator.neg, ast.UAdd: operator.pos}


def _eval_number(text: str) -> float:
    """Float literal or simple arithmetic in numbers and ``pi`` (e.g. ``pi/4``)."""
    def walk(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](walk(node.operand))
        raise ValueError(text)
    try:
        return float(text)
    except ValueError:
        return walk(ast.parse(text.strip(), mode="eval").body)


def _parse_float(text):
    v = _eval_number(text)
    if not math.isfinite(v):
        raise ValueError(text)
    return v


def _parse_int(text):
    v = _eval_number(text)
    if v != int(v):
        raise ValueError(text)
    return int(v)


def _parse_complex(text):
    t = text.strip().replace(" ", "")
    try:
        return _parse_float(t)
    except (ValueError, SyntaxError):
        v = complex(t.replace("i", "j"))
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise ValueError(text)
        return v.real if v.imag == 0 else v


def _parse_float_list(text):
    items = [s for s in text.replace(";", ",").split(",") if s.strip()]
    return tuple(_parse_float(s) for s in items)


def _parse_edges(text):
    """``t:sign`` pairs, comma separated; empty for a constant pulse."""
    edges = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        t, s = item.split(":")
        edges.append((_parse_float(t), _parse_int(s)))
    return tuple(edges)


def _choice(*options):
    def parse(text):
        v = text.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    parse.options = options
    return parse


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+}j" if v.imag else repr(v.real)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ", ".join(f"{t!r}:{s}" for t, s in v)
        return ", ".join(_fmt(x) for x in v)
    return str(v)


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "subcommand": (_choice(*SUBCOMMANDS), "spectrum"),
        "preset": (_choice(*PRESETS), "paper-defaults"),
    },
    "atom": {k: (_parse_float, 1.0) for k in ("gamma_13", "gamma_23", "gamma_14", "gamma_24")}
    | {"gamma_coll": (_parse_float, 0.001)},
    "fields": {
        "omega_1": (_parse_complex, 0.0), "omega_2": (_parse_complex, 0.0),
        "omega_3": (_parse_complex, 0.0), "delta_1": (_parse_float, 0.0),
        "delta_2": (_parse_float, 0.0), "delta_3": (_parse_float, 0.0),
    },
    "cavity": {"cooperativity": (_parse_float, 300.0), "x_to_omega2": (_parse_float, 1.0)},
    "spectrum": {
        "delta2_min": (_parse_float, -10.0), "delta2_max": (_parse_float, 10.0),
        "points": (_parse_int, 801),
    },
    "curve": {
        "x_min": (_parse_float, 0.0), "x_max": (_parse_float, 40.0), "points": (_parse_int, 2000),
        "y_points": (_parse_int, 2001),
    },
    "scan": {
        "parameter": (_choice("omega_1", "omega_3", "delta_1", "delta_2", "delta_3",
                              "cooperativity"), "omega_1"),
        "values": (_parse_float_list, (0.0, 1.0, 2.0, 5.0)),
    },
    "metrics": {"mode": (_choice("window", "sweep"), "window"), "samples": (_parse_int, 200)},
    "oam": {
        "amplitude_1": (_parse_float, 5.0), "charge_1": (_parse_int, 0),
        "amplitude_3": (_parse_float, 0.1), "charge_3": (_parse_int, 1),
        "angle": (_parse_float, math.pi / 4),
        "sweep": (_choice("charge", "angle"), "charge"),
        "values": (_parse_float_list, (0.0, 3.0)),
    },
    "pulse": {
        "enabled": (_choice("true", "false"), "true"),
        "omega_01": (_parse_float, 5.0),
        "edges": (_parse_edges, ((0.0, -1), (30.0, 1), (60.0, -1), (90.0, 1))),
        "slope": (_parse_float, 2.0),
    },
    "sim": {
        "dt": (_parse_float, 0.01), "delay_steps": (_parse_int, 1),
        "cavity_rate": (_parse_float, 1.0), "n_slices": (_parse_int, 1),
        "t_end": (_parse_float, 120.0), "record_every": (_parse_int, 10),
        "drive": (_choice("triangle", "constant"), "triangle"),
        "y_max": (_parse_float, 10.0), "t_rise": (_parse_float, 60.0),
        "initial": (_choice("ground", "steady"), "ground"),
    },
    "cnot": {
        "omega_on": (_parse_float, 5.0), "omega_off": (_parse_float, 0.0),
        "ramp_time": (_parse_float, 60.0), "hold_time": (_parse_float, 40.0),
        "overshoot": (_parse_float, 0.1),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration: ``values[section][key]``."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def subcommand(self) -> str:
        return self.values["run"]["subcommand"]

    def atomic_params(self) -> AtomicParams:
        return AtomicParams(**self.values["atom"])

    def fields(self) -> FieldConfig:
        return FieldConfig(**self.values["fields"])

    def cavity(self) -> CavityConfig:
        return CavityConfig(**self.values["cavity"])

    def pulse(self) -> PulseSpec | None:
        p = self.values["pulse"]
        if p["enabled"] != "true":
            return None
        return PulseSpec(p["omega_01"], p["edges"], p["slope"])

    def beams(self) -> tuple:
        o = self.values["oam"]
        return (LGBeamSpec(o["amplitude_1"], o["charge_1"], o["angle"]),
                LGBeamSpec(o["amplitude_3"], o["charge_3"], o["angle"]))

    def validate(self) -> "RunConfig":
        """Build every physical block so their invariants are checked up front."""
        self.atomic_params()
        self.fields()
        self.cavity()
        self.pulse()
        self.beams()
        s, c, sim = self.values["spectrum"], self.values["curve"], self.values["sim"]
        if s["points"] < 1 or s["delta2_max"] < s["delta2_min"] \
                or (s["points"] > 1 and s["delta2_max"] == s["delta2_min"]):
            raise ValidationError("spectrum grid must be nonempty and increasing")
        if c["points"] < 3 or c["x_max"] <= c["x_min"] or c["x_min"] < 0:
            raise ValidationError("curve grid needs ≥ 3 increasing points with x ≥ 0")
        if c["y_points"] < 2:
            raise ValidationError("y_points ≥ 2")
        if self.values["metrics"]["samples"] < 2:
            raise ValidationError("metrics samples ≥ 2")
        if sim["dt"] <= 0 or sim["delay_steps"] < 1 or sim["record_every"] < 1 \
                or sim["n_slices"] < 1 or sim["cavity_rate"] <= 0 or sim["t_end"] < 0:
            raise ValidationError("sim block: dt > 0, delay_steps ≥ 1, record_every ≥ 1, "
                                  "n_slices ≥ 1, cavity_rate > 0, t_end ≥ 0")
        if sim["cavity_rate"] * sim["dt"] * sim["delay_steps"] > 1:
            raise ValidationError("cavity_rate * delay must not exceed 1 (transmission ≤ 1)")
        return self

    def to_text(self) -> str:
        """Resolved document in the input format (parses back to an equal config)."""
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_fmt(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {sec: {k: _fmt(v) for k, v in vals.items()} for sec, vals in self.values.items()}


def _key_line(text: str, section: str, key: str):
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and "=" in s and s.split("=", 1)[0].strip() == key:
            return n
    return None


def parse_config(text: str = "", preset: str | None = None, overrides: dict | None = None,
                 subcommand: str | None = None) -> RunConfig:
    """Parse and validate a configuration document.

    ``preset`` and ``subcommand`` take precedence over the document's
    ``[run]`` values; ``overrides`` maps ``"section.key"`` to raw strings.

    Raises
    ------
    ParseError
        for malformed documents, unknown sections/keys or unparsable values.
    ValidationError
        when a physical block violates its invariants.
    """
    cp = configparser.ConfigParser(interpolation=None, strict=True,
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside of any section", line=exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ParseError("duplicate key", line=exc.lineno, field=exc.option) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError("duplicate section", line=exc.lineno, field=exc.section) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ParseError("malformed line", line=line) from None

    raw = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ParseError("unknown section", line=_key_line(text, section, "") or None,
                             field=section)
        for key, value in cp.items(section):
            if key not in SCHEMA[section]:
                raise ParseError("unknown key", line=_key_line(text, section, key),
                                 field=f"{section}.{key}")
            raw[(section, key)] = (value, _key_line(text, section, key))
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ParseError("unknown key", field=dotted)
        raw[(section, key)] = (value, None)
    if preset is not None:
        raw[("run", "preset")] = (preset, None)
    if subcommand is not None:
        raw[("run", "subcommand")] = (subcommand, None)

    values = {sec: {k: default for k, (_, default) in keys.items()} for sec, keys in SCHEMA.items()}

    def convert(section, key):
        value, line = raw[(section, key)]
        try:
            return SCHEMA[section][key][0](value)
        except (ValueError, SyntaxError, TypeError) as exc:
            raise ParseError(f"invalid value {value!r}: {exc}", line=line,
                             field=f"{section}.{key}") from None

    if ("run", "preset") in raw:
        values["run"]["preset"] = convert("run", "preset")
    for section, keys in PRESETS[values["run"]["preset"]].items():
        values[section].update(keys)
    for section, key in raw:
        values[section][key] = convert(section, key)
    return RunConfig(values).validate()


def load_config(path: str | None = None, **kwargs) -> RunConfig:
    text = ""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_config(text, **kwargs)
