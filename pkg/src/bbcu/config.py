"""Scenario files: INI sections with unit-aware values.

Values may carry a unit suffix (``10 mH``, ``100 mOhm``, ``0.79 s``) that
is converted to SI at parse time. A suffix of the wrong dimension is an
error. Written files use bare SI numbers, so ``parse(dump(spec)) == spec``.
"""
from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .control import ControllerGains
from .errors import BBCUError, ConfigError
from .plant import LoadProfile, PlantParams, StateBox
from .sim import SimConfig
from .supervisor import SupervisorConfig

__all__ = ["RoaSettings", "ScenarioSpec", "parse_spec", "load_spec", "dump_spec",
           "builtin_names", "UNITS"]

# unit -> (dimension, factor to SI)
UNITS = {
    "V": ("V", 1.0), "kV": ("V", 1e3), "mV": ("V", 1e-3),
    "A": ("A", 1.0), "mA": ("A", 1e-3),
    "Ohm": ("Ohm", 1.0), "mOhm": ("Ohm", 1e-3), "kOhm": ("Ohm", 1e3),
    "Ω": ("Ohm", 1.0), "mΩ": ("Ohm", 1e-3), "kΩ": ("Ohm", 1e3),
    "H": ("H", 1.0), "mH": ("H", 1e-3), "uH": ("H", 1e-6),
    "F": ("F", 1.0), "mF": ("F", 1e-3), "uF": ("F", 1e-6),
    "s": ("s", 1.0), "ms": ("s", 1e-3), "us": ("s", 1e-6),
}

_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf)\s*(\S*)\s*$")


@dataclass(frozen=True)
class RoaSettings:
    loads: tuple = (17.0, 16.5, 16.0, 15.0)
    currents: tuple = (16.0, 16.5, 17.0, 17.5)
    shift: float = 0.75
    grid_res: int = 33
    n_random: int = 100_000
    seed: int = 0


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    plant: PlantParams
    gains: ControllerGains
    supervisor: SupervisorConfig
    load: LoadProfile
    sim: SimConfig
    box: StateBox = field(default_factory=StateBox)
    box_mode1: StateBox = field(default_factory=lambda: StateBox(9.0, 11.0, 269.5, 270.0, 28.0, 35.0))
    box_mode2: StateBox = field(default_factory=lambda: StateBox(-20.0, 10.0, 268.0, 269.0, 26.0, 30.0))
    roa: RoaSettings = field(default_factory=RoaSettings)
    initial_state: tuple | None = None  # None: Mode-1 steady state at the first load
    initial_k: float | None = None  # None: on the sliding manifold
    output_dir: str = "out"

    def with_overrides(self, seed=None, stride=None, output_dir=None):
        spec = self
        if seed is not None:
            spec = dataclasses.replace(spec, roa=dataclasses.replace(spec.roa, seed=int(seed)))
        if stride is not None:
            spec = dataclasses.replace(spec, sim=dataclasses.replace(spec.sim, record_stride=int(stride)))
        if output_dir is not None:
            spec = dataclasses.replace(spec, output_dir=str(output_dir))
        return spec


# section -> key -> (attribute, dimension or None for dimensionless, kind)
_PLANT = {k: (k, d) for k, d in [("E_H", "V"), ("R_H", "Ohm"), ("L", "H"), ("C_H", "F"),
                                  ("E_L", "V"), ("R_L", "Ohm"), ("C_L", "F")]}
_CONTROLLER = {"x1_ref": ("x1_ref", "A"), "gamma1": ("gamma1", None),
               "gamma2": ("gamma2", None), "K_max": ("K_max", None)}
_SUPERVISOR = {"I_OL": ("I_OL_nominal", "A"), "eta": ("eta", "A"),
               "ramp_step": ("ramp_step", "A"), "dwell": ("dwell", "s"),
               "ig_filter_tau": ("ig_filter_tau", "s"), "retry": ("retry", "s"),
               "mode1_reference_load": ("mode1_reference_load", "Ohm")}
_SIM = {"dt_plant": ("dt_plant", "s"), "dt_control": ("dt_control", "s"),
        "t_end": ("t_end", "s")}
_KNOWN = {
    "scenario": {"name"},
    "plant": set(_PLANT),
    "controller": set(_CONTROLLER),
    "supervisor": set(_SUPERVISOR) | {"ladder", "policy"},
    "load": {"segments"},
    "initial": {"state", "k"},
    "sim": set(_SIM) | {"record_stride"},
    "box": {"X1", "X2", "X3"},
    "box_mode1": {"X1", "X2", "X3"},
    "box_mode2": {"X1", "X2", "X3"},
    "roa": {"loads", "currents", "shift", "grid_res", "n_random", "seed"},
    "output": {"directory"},
}


class _Reader:
    def __init__(self, text: str):
        self.lines = {}
        section = None
        for i, raw in enumerate(text.splitlines(), start=1):
            s = raw.strip()
            m = re.match(r"^\[([^\]]+)\]", s)
            if m:
                section = m.group(1).strip()
                self.lines[(section, None)] = i
            elif section and s and not s.startswith(("#", ";")) and ("=" in s) and not raw[:1].isspace():
                self.lines[(section, s.split("=", 1)[0].strip())] = i
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from exc
        self.cp = cp
        for sec in cp.sections():
            if sec not in _KNOWN:
                raise ConfigError(f"unknown section [{sec}]", self.line(sec))
            for key in cp[sec]:
                if key not in _KNOWN[sec]:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]", self.line(sec, key))

    def line(self, section, key=None):
        return self.lines.get((section, key), self.lines.get((section, None)))

    def has(self, section, key=None):
        if key is None:
            return self.cp.has_section(section)
        return self.cp.has_option(section, key)

    def raw(self, section, key):
        return self.cp[section][key]

    def number(self, section, key, dim):
        return _quantity(self.raw(section, key), dim, self.line(section, key))

    def numbers(self, section, key, dim=None, count=None):
        parts = [p for p in re.split(r"[,\s]+", self.raw(section, key).strip()) if p]
        # rejoin "10 mH" style tokens split by whitespace
        vals = []
        i = 0
        while i < len(parts):
            tok = parts[i]
            if i + 1 < len(parts) and parts[i + 1] in UNITS:
                tok = tok + " " + parts[i + 1]
                i += 1
            vals.append(_quantity(tok, dim, self.line(section, key)))
            i += 1
        if count is not None and len(vals) != count:
            raise ConfigError(f"[{section}] {key}: expected {count} values, got {len(vals)}",
                              self.line(section, key))
        return tuple(vals)

    def integer(self, section, key):
        try:
            return int(self.raw(section, key))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: expected an integer", self.line(section, key)) from exc


def _quantity(text, dim, line):
    m = _NUM.match(text)
    if not m:
        raise ConfigError(f"cannot parse number {text.strip()!r}", line)
    value, unit = float(m.group(1)), m.group(2)
    if not unit:
        return value
    if unit not in UNITS:
        raise ConfigError(f"unknown unit {unit!r}", line)
    udim, factor = UNITS[unit]
    if dim is None or udim != dim:
        raise ConfigError(f"unit {unit!r} does not fit a quantity in {dim or 'no unit'}", line)
    return value * factor


def _fields(r: _Reader, section, table, defaults):
    out = {}
    if not r.has(section):
        return out
    for key, (attr, dim) in table.items():
        if r.has(section, key):
            out[attr] = r.number(section, key, dim)
    return out


def _box(r: _Reader, section, default: StateBox):
    if not r.has(section):
        return default
    vals = dataclasses.asdict(default)
    dims = {"X1": "A", "X2": "V", "X3": "V"}
    for key, dim in dims.items():
        if r.has(section, key):
            lo, hi = r.numbers(section, key, dim, 2)
            vals[key + "_minus"], vals[key + "_plus"] = lo, hi
    try:
        return StateBox(**vals)
    except BBCUError as exc:
        raise ConfigError(str(exc), r.line(section)) from exc


def parse_spec(text: str, name: str = "scenario") -> ScenarioSpec:
    """Parse scenario text; raises :class:`ConfigError` with the offending line."""
    r = _Reader(text)
    base = ScenarioSpec.__dataclass_fields__

    def build(cls, kwargs, section):
        try:
            return cls(**kwargs)
        except (BBCUError, TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}", r.line(section)) from exc

    if r.has("scenario", "name"):
        name = r.raw("scenario", "name").strip()
    plant = build(PlantParams, _fields(r, "plant", _PLANT, None), "plant")
    gains = build(ControllerGains, _fields(r, "controller", _CONTROLLER, None), "controller")

    sup_kw = _fields(r, "supervisor", _SUPERVISOR, None)
    if r.has("supervisor", "ladder"):
        sup_kw["ladder"] = r.numbers("supervisor", "ladder", "A")
    if r.has("supervisor", "policy"):
        sup_kw["policy"] = r.raw("supervisor", "policy").strip()
    sup = build(SupervisorConfig, sup_kw, "supervisor")

    if not r.has("load", "segments"):
        raise ConfigError("missing [load] segments", r.line("load"))
    segs = []
    first = r.line("load", "segments") or 0
    for j, row in enumerate(l for l in r.raw("load", "segments").splitlines() if l.strip()):
        vals = [p for p in re.split(r"[,\s]+", row.strip()) if p]
        if len(vals) != 3:
            raise ConfigError("load segment needs 't_start t_end R_D'", first + j)
        segs.append(tuple(_quantity(v, d, first + j) for v, d in zip(vals, ("s", "s", "Ohm"))))
    load = build(LoadProfile, {"segments": tuple(segs)}, "load")

    sim_kw = _fields(r, "sim", _SIM, None)
    if r.has("sim", "record_stride"):
        sim_kw["record_stride"] = r.integer("sim", "record_stride")
    sim_kw.setdefault("t_end", load.t_end)
    sim = build(SimConfig, sim_kw, "sim")
    if load.t_end + 1e-9 < sim.t_end:
        raise ConfigError("load profile does not cover [0, t_end]", r.line("load", "segments"))

    roa_kw = {}
    if r.has("roa"):
        for key in ("loads",):
            if r.has("roa", key):
                roa_kw[key] = r.numbers("roa", key, "Ohm")
        if r.has("roa", "currents"):
            roa_kw["currents"] = r.numbers("roa", "currents", "A")
        if r.has("roa", "shift"):
            roa_kw["shift"] = r.number("roa", "shift", None)
        for key in ("grid_res", "n_random", "seed"):
            if r.has("roa", key):
                roa_kw[key] = r.integer("roa", key)
    roa = RoaSettings(**roa_kw)

    init_state = None
    init_k = None
    if r.has("initial", "state") and r.raw("initial", "state").strip() != "steady":
        init_state = r.numbers("initial", "state", None, 3)
    if r.has("initial", "k") and r.raw("initial", "k").strip() != "manifold":
        init_k = r.number("initial", "k", None)

    out = r.raw("output", "directory").strip() if r.has("output", "directory") else "out"
    return ScenarioSpec(
        name=name, plant=plant, gains=gains, supervisor=sup, load=load, sim=sim,
        box=_box(r, "box", base["box"].default_factory()),
        box_mode1=_box(r, "box_mode1", base["box_mode1"].default_factory()),
        box_mode2=_box(r, "box_mode2", base["box_mode2"].default_factory()),
        roa=roa, initial_state=init_state, initial_k=init_k, output_dir=out,
    )


def builtin_names():
    return sorted(p.name[:-4] for p in resources.files("bbcu.scenarios").iterdir()
                  if p.name.endswith(".ini"))


def load_spec(ref) -> ScenarioSpec:
    """Load a scenario from a file path or a built-in name such as ``scenario1``."""
    path = Path(ref)
    if path.is_file():
        return parse_spec(path.read_text(encoding="utf-8"), name=path.stem)
    if str(ref) in builtin_names():
        text = resources.files("bbcu.scenarios").joinpath(f"{ref}.ini").read_text(encoding="utf-8")
        return parse_spec(text, name=str(ref))
    raise ConfigError(f"no scenario file or built-in named {str(ref)!r}")


def _fmt(v):
    return repr(float(v))


def _fmt_box(b: StateBox):
    return (f"X1 = {_fmt(b.X1_minus)}, {_fmt(b.X1_plus)}\n"
            f"X2 = {_fmt(b.X2_minus)}, {_fmt(b.X2_plus)}\n"
            f"X3 = {_fmt(b.X3_minus)}, {_fmt(b.X3_plus)}\n")


def dump_spec(spec: ScenarioSpec) -> str:
    """Serialise in bare SI units."""
    p, g, s, sim, roa = spec.plant, spec.gains, spec.supervisor, spec.sim, spec.roa
    out = [f"[scenario]\nname = {spec.name}\n"]
    out.append("[plant]\n" + "".join(f"{k} = {_fmt(getattr(p, k))}\n" for k in _PLANT))
    out.append("[controller]\n" + "".join(
        f"{k} = {_fmt(getattr(g, a))}\n" for k, (a, _) in _CONTROLLER.items()))
    out.append("[supervisor]\n" + "".join(
        f"{k} = {_fmt(getattr(s, a))}\n" for k, (a, _) in _SUPERVISOR.items())
        + f"ladder = {', '.join(_fmt(v) for v in s.ladder)}\npolicy = {s.policy}\n")
    out.append("[load]\nsegments =\n" + "".join(
        f"    {_fmt(x.t_start)} {_fmt(x.t_end)} {_fmt(x.R_D)}\n" for x in spec.load.segments))
    init_state = "steady" if spec.initial_state is None else ", ".join(_fmt(v) for v in spec.initial_state)
    init_k = "manifold" if spec.initial_k is None else _fmt(spec.initial_k)
    out.append(f"[initial]\nstate = {init_state}\nk = {init_k}\n")
    out.append("[sim]\n" + "".join(f"{k} = {_fmt(getattr(sim, a))}\n" for k, (a, _) in _SIM.items())
               + f"record_stride = {int(sim.record_stride)}\n")
    out.append("[box]\n" + _fmt_box(spec.box))
    out.append("[box_mode1]\n" + _fmt_box(spec.box_mode1))
    out.append("[box_mode2]\n" + _fmt_box(spec.box_mode2))
    out.append("[roa]\n"
               f"loads = {', '.join(_fmt(v) for v in roa.loads)}\n"
               f"currents = {', '.join(_fmt(v) for v in roa.currents)}\n"
               f"shift = {_fmt(roa.shift)}\ngrid_res = {roa.grid_res}\n"
               f"n_random = {roa.n_random}\nseed = {roa.seed}\n")
    out.append(f"[output]\ndirectory = {spec.output_dir}\n")
    return "\n".join(out)
