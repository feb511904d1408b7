"""TOML scenario configuration: one versioned schema for every scenario.

A config names a scenario, a seed, and optional parameter blocks that
mirror the module dataclasses; absent keys take the canonical defaults,
unknown keys are rejected.  The controller's contact gain can be given
directly (area_slope, px/mm) or as the raw reported gain times a unit
scale (k_c_raw * k_c_scale); the default scale calibrates the raw gain
to this package's synthetic pad.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .card import CardSpec, ExploreConfig, ReaderSpec
from .mpc import Limits, MpcParams
from .rubbing import ObjectProfile, RubConfig
from .scooping import ScoopProblem

SCHEMA_VERSION = 1
SCENARIOS = ("mpc-sim", "singulate", "scoop-analyze", "card-insert", "sweep")

DEFAULT_KC_RAW = 50000.0
DEFAULT_KC_SCALE = 0.005


class ConfigError(ValueError):
    """Configuration file rejected: parse failure or invalid content."""


@dataclass(frozen=True)
class PlantConfig:
    """Ground-truth plant parameters for closed-loop scenarios."""

    object_width: float = 30.0
    area_max: float = 8000.0
    squeeze_range: float = 8.0
    noise_sigma: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    """mpc-sim scenario shape: run length, start, and width disturbance."""

    duration: float = 4.0
    start_opening: float | None = 35.0  # None starts at the plant equilibrium
    start_speed: float = 0.0
    width_osc_amp: float = 0.0   # mm, 0 disables the oscillation
    width_osc_freq: float = 1.0  # Hz


@dataclass(frozen=True)
class GrainConfig:
    n_grains: int = 40
    removal_rate: float = 0.02


@dataclass(frozen=True)
class SweepGrid:
    """Axis ranges (lo, hi, n) for the scoop flip-map sweep."""

    theta_deg: tuple[float, float, int] = (5.0, 85.0, 10)
    mu1: tuple[float, float, int] = (0.0, 1.2, 10)
    mu2: tuple[float, float, int] = (0.0, 1.2, 10)
    f_l: tuple[float, float, int] = (0.0, 3.0, 10)


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved run input: scenario plus every module's parameters."""

    scenario: str
    seed: int = 0
    trials: int = 1
    output_dir: str | None = None
    mpc: MpcParams = field(default_factory=MpcParams)
    limits: Limits = field(default_factory=Limits)
    plant: PlantConfig = field(default_factory=PlantConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    rub: RubConfig = field(default_factory=RubConfig)
    grains: GrainConfig = field(default_factory=GrainConfig)
    objects: tuple[ObjectProfile, ...] = (
        ObjectProfile.sphere(41.0, label="golf_ball"),
        ObjectProfile.ellipse(14.0, 9.0, label="almond"),
    )
    scoop: ScoopProblem = field(default_factory=ScoopProblem)
    sweep_grid: SweepGrid = field(default_factory=SweepGrid)
    explore: ExploreConfig = field(default_factory=ExploreConfig)
    card: CardSpec = field(default_factory=CardSpec)
    reader: ReaderSpec = field(default_factory=ReaderSpec)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; "
                              f"expected one of {', '.join(SCENARIOS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")


def _reject_unknown(table: dict, allowed, path: str) -> None:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)} in [{path}]"
                          if path else f"unknown top-level key(s): {', '.join(unknown)}")


def _number(table: dict, key: str, default, path: str):
    if key not in table:
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key} must be a number, got {val!r}")
    return float(val)


def _integer(table: dict, key: str, default, path: str):
    if key not in table:
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{path}.{key} must be an integer, got {val!r}")
    return val


def _build(cls, kwargs, path: str):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid [{path}]: {exc}") from exc


def _parse_mpc(table: dict) -> MpcParams:
    allowed = {"c_desired", "q_a", "q_c", "q_v", "p_terminal", "horizon",
               "area_slope", "k_c_raw", "k_c_scale", "freq"}
    _reject_unknown(table, allowed, "mpc")
    if "area_slope" in table:
        slope = _number(table, "area_slope", None, "mpc")
    else:
        slope = _number(table, "k_c_raw", DEFAULT_KC_RAW, "mpc") \
            * _number(table, "k_c_scale", DEFAULT_KC_SCALE, "mpc")
    freq = _number(table, "freq", 60.0, "mpc")
    if freq <= 0:
        raise ConfigError("mpc.freq must be positive")
    return _build(MpcParams, dict(
        area_target=_number(table, "c_desired", 5500.0, "mpc"),
        weight_accel=_number(table, "q_a", 1.0, "mpc"),
        weight_area=_number(table, "q_c", 1.0, "mpc"),
        weight_speed=_number(table, "q_v", 2.0, "mpc"),
        terminal_factor=_number(table, "p_terminal", 10.0, "mpc"),
        horizon=_integer(table, "horizon", 30, "mpc"),
        area_slope=slope, dt=1.0 / freq, freq=freq), "mpc")


def _parse_limits(table: dict) -> Limits:
    allowed = {"p_min", "p_max", "v_max", "a_max"}
    _reject_unknown(table, allowed, "limits")
    return _build(Limits, dict(
        opening_min=_number(table, "p_min", 0.0, "limits"),
        opening_max=_number(table, "p_max", 55.0, "limits"),
        speed_max=_number(table, "v_max", 20.0, "limits"),
        accel_max=_number(table, "a_max", 200.0, "limits")), "limits")


def _parse_plant(table: dict) -> PlantConfig:
    allowed = {"object_width", "area_max", "squeeze_range", "noise_sigma"}
    _reject_unknown(table, allowed, "plant")
    cfg = PlantConfig(
        object_width=_number(table, "object_width", 30.0, "plant"),
        area_max=_number(table, "area_max", 8000.0, "plant"),
        squeeze_range=_number(table, "squeeze_range", 8.0, "plant"),
        noise_sigma=_number(table, "noise_sigma", 0.0, "plant"))
    if cfg.object_width <= 0 or cfg.area_max <= 0 or cfg.squeeze_range <= 0 \
            or cfg.noise_sigma < 0:
        raise ConfigError("invalid [plant]: values out of range")
    return cfg


def _parse_sim(table: dict) -> SimConfig:
    allowed = {"duration", "start_opening", "start_speed", "width_osc_amp",
               "width_osc_freq", "start_at_equilibrium"}
    _reject_unknown(table, allowed, "mpc_sim")
    start = _number(table, "start_opening", 35.0, "mpc_sim")
    if table.get("start_at_equilibrium", False) is True:
        start = None
    cfg = SimConfig(
        duration=_number(table, "duration", 4.0, "mpc_sim"),
        start_opening=start,
        start_speed=_number(table, "start_speed", 0.0, "mpc_sim"),
        width_osc_amp=_number(table, "width_osc_amp", 0.0, "mpc_sim"),
        width_osc_freq=_number(table, "width_osc_freq", 1.0, "mpc_sim"))
    if cfg.duration <= 0 or cfg.width_osc_freq <= 0 or cfg.width_osc_amp < 0:
        raise ConfigError("invalid [mpc_sim]: values out of range")
    return cfg


def _parse_rub(table: dict) -> RubConfig:
    allowed = {"k_p", "b", "retract_threshold", "retract_angle_deg",
               "stroke_freq", "n_strokes", "drop_area_floor", "drop_dwell",
               "travel_max", "grain_area_px", "settle_timeout"}
    _reject_unknown(table, allowed, "rub")
    return _build(RubConfig, dict(
        range_gain=_number(table, "k_p", 0.5, "rub"),
        range_offset=_number(table, "b", 2.0, "rub"),
        retract_threshold=_number(table, "retract_threshold", 15.0, "rub"),
        retract_angle=math.radians(_number(table, "retract_angle_deg", 20.0, "rub")),
        stroke_freq=_number(table, "stroke_freq", 1.0, "rub"),
        n_strokes=_integer(table, "n_strokes", 6, "rub"),
        drop_area_floor=_number(table, "drop_area_floor", 2200.0, "rub"),
        drop_dwell=_number(table, "drop_dwell", 0.25, "rub"),
        travel_max=_number(table, "travel_max", 30.0, "rub"),
        grain_area_px=_number(table, "grain_area_px", 12.0, "rub"),
        settle_timeout=_number(table, "settle_timeout", 3.0, "rub")), "rub")


def _parse_grains(table: dict) -> GrainConfig:
    allowed = {"n_grains", "removal_rate"}
    _reject_unknown(table, allowed, "grains")
    cfg = GrainConfig(
        n_grains=_integer(table, "n_grains", 40, "grains"),
        removal_rate=_number(table, "removal_rate", 0.02, "grains"))
    if cfg.n_grains < 0 or cfg.removal_rate < 0:
        raise ConfigError("invalid [grains]: values out of range")
    return cfg


def _parse_objects(items) -> tuple[ObjectProfile, ...]:
    out = []
    for k, table in enumerate(items):
        path = f"objects[{k}]"
        if not isinstance(table, dict):
            raise ConfigError(f"{path} must be a table")
        kind = table.get("kind")
        label = table.get("label", kind or "")
        try:
            if kind == "sphere":
                _reject_unknown(table, {"kind", "label", "diameter"}, path)
                out.append(ObjectProfile.sphere(
                    _number(table, "diameter", 41.0, path), label=label))
            elif kind == "ellipse":
                _reject_unknown(table, {"kind", "label", "major", "minor"}, path)
                out.append(ObjectProfile.ellipse(
                    _number(table, "major", 14.0, path),
                    _number(table, "minor", 9.0, path), label=label))
            elif kind == "irregular":
                _reject_unknown(table, {"kind", "label", "angles", "widths"}, path)
                out.append(ObjectProfile.irregular(
                    table.get("angles", ()), table.get("widths", ()), label=label))
            else:
                raise ConfigError(f"{path}.kind must be sphere, ellipse, or irregular")
        except ValueError as exc:
            raise ConfigError(f"invalid {path}: {exc}") from exc
    if not out:
        raise ConfigError("objects array must not be empty")
    return tuple(out)


def _parse_scoop(table: dict) -> ScoopProblem:
    allowed = {"h", "l", "d", "theta_deg", "mu1", "mu2", "m", "g", "f_l"}
    _reject_unknown(table, allowed, "scoop")
    return _build(ScoopProblem, dict(
        thickness=_number(table, "h", 0.8, "scoop"),
        length=_number(table, "l", 85.5, "scoop"),
        nail_height=_number(table, "d", 0.4, "scoop"),
        push_angle=math.radians(_number(table, "theta_deg", 30.0, "scoop")),
        friction_nail=_number(table, "mu1", 0.3, "scoop"),
        friction_table=_number(table, "mu2", 0.4, "scoop"),
        mass=_number(table, "m", 0.005, "scoop"),
        gravity=_number(table, "g", 9.81, "scoop"),
        push_force=_number(table, "f_l", 1.0, "scoop")), "scoop")


def _parse_axis(table: dict, key: str, default, path: str):
    if key not in table:
        return default
    val = table[key]
    if (not isinstance(val, list) or len(val) != 3
            or isinstance(val[2], (float, bool)) or not isinstance(val[2], int)
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in val[:2])):
        raise ConfigError(f"{path}.{key} must be [lo, hi, n] with integer n")
    lo, hi, n = float(val[0]), float(val[1]), int(val[2])
    if n < 1 or hi < lo:
        raise ConfigError(f"{path}.{key}: need hi >= lo and n >= 1")
    return (lo, hi, n)


def _parse_sweep_grid(table: dict) -> SweepGrid:
    allowed = {"theta_deg", "mu1", "mu2", "f_l"}
    _reject_unknown(table, allowed, "sweep_grid")
    d = SweepGrid()
    return SweepGrid(
        theta_deg=_parse_axis(table, "theta_deg", d.theta_deg, "sweep_grid"),
        mu1=_parse_axis(table, "mu1", d.mu1, "sweep_grid"),
        mu2=_parse_axis(table, "mu2", d.mu2, "sweep_grid"),
        f_l=_parse_axis(table, "f_l", d.f_l, "sweep_grid"))


def _parse_explore(table: dict) -> ExploreConfig:
    allowed = {"steps", "x_d", "y_d", "edge_tolerance", "max_steps",
               "rotate_margin"}
    _reject_unknown(table, allowed, "explore")
    steps = table.get("steps", [-2.0, -4.0, -8.0])
    if not isinstance(steps, list) or not steps:
        raise ConfigError("explore.steps must be a nonempty array")
    return _build(ExploreConfig, dict(
        steps=tuple(float(s) for s in steps),
        x_d=_number(table, "x_d", 5.0, "explore"),
        y_d=_number(table, "y_d", 6.0, "explore"),
        edge_tolerance=_number(table, "edge_tolerance", 1.0, "explore"),
        max_steps=_integer(table, "max_steps", 64, "explore"),
        rotate_margin=_number(table, "rotate_margin", 10.0, "explore")), "explore")


def _parse_card(table: dict) -> CardSpec:
    allowed = {"length", "width", "thickness", "digit_thickness",
               "digit_band", "side_with_digits"}
    _reject_unknown(table, allowed, "card")
    band = table.get("digit_band", [15.0, 70.0])
    if not isinstance(band, list) or len(band) != 2:
        raise ConfigError("card.digit_band must be [lo, hi]")
    return _build(CardSpec, dict(
        length=_number(table, "length", 85.5, "card"),
        width=_number(table, "width", 54.0, "card"),
        base_thickness=_number(table, "thickness", 0.8, "card"),
        digit_thickness=_number(table, "digit_thickness", 1.2, "card"),
        digit_band=(float(band[0]), float(band[1])),
        side_with_digits=table.get("side_with_digits", "front")), "card")


def _parse_reader(table: dict) -> ReaderSpec:
    allowed = {"slot_length", "slot_width", "pose_x", "pose_y", "pose_angle"}
    _reject_unknown(table, allowed, "reader")
    return _build(ReaderSpec, dict(
        slot_length=_number(table, "slot_length", 56.0, "reader"),
        slot_width=_number(table, "slot_width", 1.5, "reader"),
        pose_x=_number(table, "pose_x", 0.0, "reader"),
        pose_y=_number(table, "pose_y", 0.0, "reader"),
        pose_angle=_number(table, "pose_angle", 0.0, "reader")), "reader")


_TOP_KEYS = {"schema", "scenario", "seed", "trials", "output_dir", "mpc",
             "limits", "plant", "mpc_sim", "rub", "grains", "objects",
             "scoop", "sweep_grid", "explore", "card", "reader"}


def parse_config(data: dict) -> ScenarioConfig:
    """Validate a parsed TOML document into a ScenarioConfig."""
    if not isinstance(data, dict) or not data:
        raise ConfigError("empty config: expected at least schema and scenario")
    _reject_unknown(data, _TOP_KEYS, "")
    if data.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"schema must be {SCHEMA_VERSION}, got {data.get('schema')!r}")
    if "scenario" not in data:
        raise ConfigError("missing required key: scenario")

    def block(name):
        tbl = data.get(name, {})
        if not isinstance(tbl, dict):
            raise ConfigError(f"[{name}] must be a table")
        return tbl

    return ScenarioConfig(
        scenario=data["scenario"],
        seed=_integer(data, "seed", 0, "top level"),
        trials=_integer(data, "trials", 1, "top level"),
        output_dir=data.get("output_dir"),
        mpc=_parse_mpc(block("mpc")),
        limits=_parse_limits(block("limits")),
        plant=_parse_plant(block("plant")),
        sim=_parse_sim(block("mpc_sim")),
        rub=_parse_rub(block("rub")),
        grains=_parse_grains(block("grains")),
        objects=_parse_objects(data["objects"]) if "objects" in data
        else ScenarioConfig.__dataclass_fields__["objects"].default,
        scoop=_parse_scoop(block("scoop")),
        sweep_grid=_parse_sweep_grid(block("sweep_grid")),
        explore=_parse_explore(block("explore")),
        card=_parse_card(block("card")),
        reader=_parse_reader(block("reader")))


def load_config(path) -> ScenarioConfig:
    """Load and validate a scenario config from a TOML file."""
    with open(path, "rb") as f:
        raw = f.read()
    if not raw.strip():
        raise ConfigError(f"{path}: empty config file")
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc
    try:
        return parse_config(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
