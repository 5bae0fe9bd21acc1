"""INI configuration files with explicit physical units.

Every physical quantity carries a unit suffix (``150 m``, ``39 dBm``,
``pi/18 rad``); counts and dimensionless model constants do not. Values are
converted to SI (Watts, Hertz, meters, radians, seconds) on load.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
import re
from fractions import Fraction

from .channel import AntennaPattern, FadingParams, dbm_to_watts, noise_power, watts_to_dbm
from .engine import SimConfig
from .mac import ContentionConfig
from .topology import Scenario

__all__ = ["ConfigError", "parse_quantity", "parse_angle", "format_angle", "parse_config",
           "load_config", "emit_config", "emit_default_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration text."""


_SCALE = {
    "length": {"m": 1.0, "km": 1e3},
    "power": {"W": 1.0, "mW": 1e-3, "dBm": None},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "angle": {"rad": 1.0, "deg": math.pi / 180.0},
    "ratio": {"dB": None},
    "temperature": {"K": 1.0},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6},
    "slots": {"slot": 1.0, "slots": 1.0},
    "information": {"nat": 1.0, "nats": 1.0},
    "energy": {"J": 1.0, "mJ": 1e-3},
    "power_squared": {"W2": 1.0},
}

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_PI_RE = re.compile(rf"^(?:({_NUMBER})\s*\*?\s*)?pi(?:\s*/\s*({_NUMBER}))?$")


def parse_angle(text: str) -> float:
    """Number of radians in ``text``, accepting multiples of pi such as ``pi/36`` or ``2*pi/9``."""
    text = text.strip()
    m = _PI_RE.match(text)
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        if den == 0:
            raise ConfigError(f"zero denominator in angle {text!r}")
        return num * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot read angle {text!r}") from None


def format_angle(radians: float) -> str:
    """Write an angle as a simple multiple of pi when it is one, else as a plain number."""
    frac = Fraction(radians / math.pi).limit_denominator(10_000)
    if frac != 0 and math.isclose(float(frac) * math.pi, radians, rel_tol=1e-13, abs_tol=0.0):
        num = "" if frac.numerator == 1 else f"{frac.numerator}*"
        return f"{num}pi" if frac.denominator == 1 else f"{num}pi/{frac.denominator}"
    return _num(radians)


def parse_quantity(text: str, kind: str, key: str = "value") -> float:
    """Convert ``"<number> <unit>"`` to SI; dBm becomes Watts, dB stays in dB."""
    parts = text.strip().rsplit(None, 1)
    units = _SCALE[kind]
    if len(parts) != 2 or parts[1] not in units:
        raise ConfigError(f"{key} = {text.strip()!r} needs a unit suffix, one of {', '.join(units)}")
    value, unit = parts
    number = parse_angle(value) if kind == "angle" else _float(value, key)
    if unit == "dBm":
        return float(dbm_to_watts(number))
    scale = units[unit]
    return number if scale is None else number * scale


def _float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot read number {text!r}") from None


def _int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _num(x: float) -> str:
    return format(float(x), ".12g")


# (section, key, kind) where kind is a unit family, "int", "float", "str" or "bool"
_SCHEMA = {
    "scenario": {
        "num_bs": "int", "ues_per_bs": "int", "grid_side": "length", "coverage_radius": "length",
        "min_bs_separation": "length", "bs_positions": "positions", "pathloss_exponent": "float",
        "p_max": "power", "p_avg": "power", "bandwidth": "frequency", "carrier_frequency": "frequency",
        "noise_figure": "ratio", "temperature": "temperature", "fading_shape": "float",
        "fading_spread": "float", "seed": "int",
    },
    "bs_antenna": {"beam_width": "angle", "msr": "ratio"},
    "ue_antenna": {"beam_width": "angle", "msr": "ratio"},
    "simulation": {
        "epochs": "int", "blocks_per_epoch": "int", "slots_per_block": "int", "slot_duration": "time",
        "lyapunov_v": "float", "protocol": "str", "feedback_subslots": "int", "subslots_per_slot": "int",
        "seed": "int", "x_floor": "information", "gamma_floor": "information",
        "epsilon": "power_squared", "max_iters": "int", "throughput_unit": "information",
        "energy_unit": "energy", "zero_cross_gains": "bool", "track_gap": "bool", "diagnostics": "bool",
    },
    "contention": {
        "p_c": "float", "cw_min": "slots", "cw_max": "slots", "tx_duration": "slots",
        "sensing_slots": "slots", "backoff_base": "slots", "success_backoff": "slots",
    },
}


def _read_value(section: str, key: str, text: str):
    kind = _SCHEMA[section][key]
    name = f"[{section}] {key}"
    if kind == "int":
        return _int(text, name)
    if kind == "float":
        return _float(text, name)
    if kind == "str":
        return text.strip()
    if kind == "bool":
        low = text.strip().lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise ConfigError(f"{name}: expected true or false, got {text!r}")
        return low in ("true", "yes", "1")
    if kind == "positions":
        return _parse_positions(text, name)
    value = parse_quantity(text, kind, name)
    if kind == "slots":
        if value != int(value):
            raise ConfigError(f"{name}: slot counts must be whole, got {text!r}")
        return int(value)
    return value


def _parse_positions(text: str, key: str):
    """``"x y; x y; ... m"``: semicolon-separated coordinate pairs in a common length unit."""
    body = text.strip()
    parts = body.rsplit(None, 1)
    if len(parts) != 2 or parts[1] not in _SCALE["length"]:
        raise ConfigError(f"{key} needs a trailing length unit, e.g. '100 200; 300 400 m'")
    scale = _SCALE["length"][parts[1]]
    points = []
    for chunk in parts[0].split(";"):
        xy = chunk.split()
        if len(xy) != 2:
            raise ConfigError(f"{key}: each position needs two coordinates, got {chunk.strip()!r}")
        points.append((_float(xy[0], key) * scale, _float(xy[1], key) * scale))
    return tuple(points)


def parse_config(text: str) -> tuple[Scenario, SimConfig]:
    """Build a scenario and run configuration from INI text; missing keys keep their defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            if raw.strip() == "":
                continue
            values[section][key] = _read_value(section, key, raw)
    try:
        return _build(values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _build(values: dict) -> tuple[Scenario, SimConfig]:
    base = Scenario()
    sc = values.get("scenario", {})
    bs = values.get("bs_antenna", {})
    ue = values.get("ue_antenna", {})
    bandwidth = sc.get("bandwidth", base.bandwidth)
    noise = noise_power(sc.get("noise_figure", base.noise.noise_figure_db),
                        sc.get("temperature", base.noise.temperature_k), bandwidth)
    scenario = Scenario(
        num_bs=sc.get("num_bs", base.num_bs),
        ues_per_bs=sc.get("ues_per_bs", base.ues_per_bs),
        grid_side=sc.get("grid_side", base.grid_side),
        coverage_radius=sc.get("coverage_radius", base.coverage_radius),
        pathloss_eta=sc.get("pathloss_exponent", base.pathloss_eta),
        p_max=sc.get("p_max", base.p_max),
        p_avg=sc.get("p_avg", base.p_avg),
        bandwidth=bandwidth,
        carrier_frequency=sc.get("carrier_frequency", base.carrier_frequency),
        bs_antenna=AntennaPattern.from_db(bs.get("beam_width", base.bs_antenna.beam_width),
                                          bs.get("msr", base.bs_antenna.msr_db)),
        ue_antenna=AntennaPattern.from_db(ue.get("beam_width", base.ue_antenna.beam_width),
                                          ue.get("msr", base.ue_antenna.msr_db)),
        fading=FadingParams(sc.get("fading_shape", base.fading.mu), sc.get("fading_spread", base.fading.omega)),
        noise=noise,
        bs_positions=sc.get("bs_positions"),
        min_bs_separation=sc.get("min_bs_separation"),
        seed=sc.get("seed", base.seed),
    )
    sim = dict(values.get("simulation", {}))
    contention = ContentionConfig(**values.get("contention", {}))
    return scenario, SimConfig(contention=contention, **sim)


def load_config(path) -> tuple[Scenario, SimConfig]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _line(key, value, comment=None) -> str:
    return f"{key} = {value}" + (f"  # {comment}" if comment else "")


def emit_config(scenario: Scenario, config: SimConfig, comments: bool = True) -> str:
    """Serialise a scenario and run configuration; ``parse_config`` reads it back."""
    c = (lambda text: text) if comments else (lambda text: None)
    sc = scenario
    out = []
    if comments:
        out += ["# beamgame configuration. Physical values need a unit suffix;",
                "# powers may be given in dBm, W or mW, angles as multiples of pi.", ""]
    out.append("[scenario]")
    out.append(_line("num_bs", sc.num_bs, c("number of BSs (one per operator)")))
    out.append(_line("ues_per_bs", sc.ues_per_bs, c("UEs associated with each BS")))
    out.append(_line("grid_side", f"{_num(sc.grid_side)} m", c("side of the square deployment area")))
    out.append(_line("coverage_radius", f"{_num(sc.coverage_radius)} m", c("UEs drop uniformly in this disk")))
    if sc.min_bs_separation is not None:
        out.append(_line("min_bs_separation", f"{_num(sc.min_bs_separation)} m"))
    elif comments:
        out.append("# min_bs_separation = 100 m  # default: two thirds of the coverage radius")
    if sc.bs_positions is not None:
        pts = "; ".join(f"{_num(x)} {_num(y)}" for x, y in sc.bs_positions)
        out.append(_line("bs_positions", f"{pts} m"))
    elif comments:
        out.append("# bs_positions = 100 100; 300 500; ... m  # fixed sites instead of random placement")
    out.append(_line("pathloss_exponent", _num(sc.pathloss_eta), c("distance attenuation d^-eta")))
    out.append(_line("p_max", f"{_num(watts_to_dbm(sc.p_max))} dBm", c("peak transmit power")))
    out.append(_line("p_avg", f"{_num(watts_to_dbm(sc.p_avg))} dBm", c("average transmit power budget")))
    out.append(_line("bandwidth", f"{_num(sc.bandwidth / 1e6)} MHz"))
    out.append(_line("carrier_frequency", f"{_num(sc.carrier_frequency / 1e9)} GHz",
                     c("recorded only; path loss is distance based")))
    out.append(_line("noise_figure", f"{_num(sc.noise.noise_figure_db)} dB",
                     c("noise power is derived from this, the temperature and the bandwidth")))
    out.append(_line("temperature", f"{_num(sc.noise.temperature_k)} K"))
    out.append(_line("fading_shape", _num(sc.fading.mu), c("Nakagami shape")))
    out.append(_line("fading_spread", _num(sc.fading.omega), c("Nakagami mean power gain")))
    out.append(_line("seed", sc.seed, c("placement seed")))
    for name, ant in (("bs_antenna", sc.bs_antenna), ("ue_antenna", sc.ue_antenna)):
        out += ["", f"[{name}]"]
        out.append(_line("beam_width", f"{format_angle(ant.beam_width)} rad", c("main-lobe width")))
        out.append(_line("msr", f"{_num(ant.msr_db)} dB", c("main-to-side-lobe ratio")))
    cf = config
    out += ["", "[simulation]"]
    out.append(_line("protocol", cf.protocol, c("game, ideal, p_persistent, csma_ca or a *_random variant")))
    out.append(_line("epochs", cf.epochs))
    out.append(_line("blocks_per_epoch", cf.blocks_per_epoch))
    out.append(_line("slots_per_block", cf.slots_per_block, c("also the best-response iteration cap")))
    out.append(_line("slot_duration", f"{_num(cf.slot_duration * 1e3)} ms"))
    out.append(_line("lyapunov_v", _num(cf.lyapunov_v), c("utility weight against queue drift")))
    out.append(_line("feedback_subslots", cf.feedback_subslots, c("sub-slots per slot spent on feedback")))
    out.append(_line("subslots_per_slot", cf.subslots_per_slot))
    out.append(_line("seed", cf.seed, c("seed of fading, selection, contention and power draws")))
    out.append(_line("x_floor", f"{_num(cf.x_floor)} nat", c("throughput floor inside the log utility")))
    out.append(_line("gamma_floor", f"{_num(cf.gamma_floor)} nat", c("lower bound of the auxiliary variables")))
    out.append(_line("epsilon", f"{_num(cf.epsilon)} W2", c("stop when the squared power step is below this")))
    if cf.max_iters is not None:
        out.append(_line("max_iters", cf.max_iters))
    out.append(_line("throughput_unit", f"{_num(cf.throughput_unit)} nat", c("queue scale of throughput")))
    out.append(_line("energy_unit", f"{_num(cf.energy_unit)} J", c("queue scale of energy")))
    out.append(_line("zero_cross_gains", str(cf.zero_cross_gains).lower()))
    out.append(_line("track_gap", str(cf.track_gap).lower(), c("record the per-epoch gap to the ideal case")))
    out.append(_line("diagnostics", str(cf.diagnostics).lower(), c("per-block equilibrium dump")))
    ct = cf.contention
    out += ["", "[contention]"]
    out.append(_line("p_c", _num(ct.p_c), c("p-persistent attempt probability")))
    out.append(_line("cw_min", f"{ct.cw_min} slot", c("CSMA/CA initial backoff window")))
    out.append(_line("cw_max", f"{ct.cw_max} slot", c("backoff window cap")))
    out.append(_line("tx_duration", f"{ct.tx_duration} slot", c("data slots per CSMA/CA grant")))
    out.append(_line("sensing_slots", f"{ct.sensing_slots} slot", c("carrier sensing before each grant")))
    out.append(_line("backoff_base", f"{ct.backoff_base} slot", c("window after C collisions is base * 2^C")))
    out.append(_line("success_backoff", f"{ct.success_backoff} slot", c("window drawn after a successful grant")))
    return "\n".join(out) + "\n"


def emit_default_config() -> str:
    """Commented configuration with the reference deployment and protocol settings."""
    return emit_config(Scenario(), SimConfig())
