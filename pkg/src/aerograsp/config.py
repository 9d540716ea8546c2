"""Run configuration: nested dataclasses, YAML loading and scenario presets.

Every field has a default, so an empty file is a valid configuration.
Unknown keys are rejected with the dotted path of the offending field.
Units: SI throughout (m, kg, s, N, rad).
"""

import copy
import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    n_links: int = 3
    link_length: float = 0.15      # m
    link_mass: float = 0.1         # kg
    base_mass: float = 1.5         # kg
    base_inertia: List[float] = field(default_factory=lambda: [0.02, 0.02, 0.04])  # kg m^2
    shoulder: List[float] = field(default_factory=lambda: [0.0, 0.0, -0.05])      # m
    gravity: float = 9.81          # m/s^2


@dataclass
class GainConfig:
    K_t: float = 64.0              # per kg of AM mass, N/m
    D_t: float = 16.0              # per kg of AM mass, N s/m
    k_R: float = 25.0
    k_w: float = 2.5
    K_y: List[float] = field(default_factory=lambda: [200.0, 200.0, 20.0])
    D_y: List[float] = field(default_factory=lambda: [20.0, 20.0, 0.1])
    compensate_forces: bool = True
    force_filter: float = 0.05     # s, low-pass on the compensated wrench; 0 disables


@dataclass
class ContactConfig:
    k_n: float = 5000.0            # N/m
    d_n: float = 50.0              # N s/m
    mu: float = 0.8
    k_t: float = 2000.0            # N/m
    d_t: float = 2.0               # N s/m


@dataclass
class ObjectConfig:
    shape: str = "box"             # "box" or "cylinder"
    mass: float = 1.0              # kg
    half_extents: List[float] = field(default_factory=lambda: [0.1, 0.1, 0.1])  # box, m
    radius: float = 0.15           # cylinder, m
    half_height: float = 0.1       # cylinder, m


@dataclass
class ScenarioConfig:
    name: str = "two_am_grasp"
    n_ams: int = 2
    with_object: bool = True
    ring_radius: float = 1.0       # m, initial base distance from the object axis
    start_height: float = 0.5      # m, initial base height
    reach: List[float] = field(default_factory=lambda: [0.22, -0.12])  # tip vs shoulder, m
    contact_height: float = 0.0    # m, above the object's centre
    pregrasp_gap: float = 0.03     # m, tip clearance at the end of the approach
    grasp_depth: float = 0.05      # m, desired tip position inside the object face
    lift_height: float = 0.1       # m
    initial_jitter: float = 0.0    # m, std of random initial base offsets
    t_approach: float = 5.0
    t_grasp: float = 5.0
    t_lift: float = 3.0
    t_hover: float = 7.0


@dataclass
class CheckConfig:
    free_flight_storage: bool = True
    passivity: bool = True
    convergence: bool = True
    storage_tol: float = 1e-6      # J per step
    passivity_rel_tol: float = 1e-3
    speed_threshold: float = 1e-3  # m/s, hover-phase task speed
    speed_window: float = 5.0      # s after hover start
    lift: bool = True
    lift_tol: float = 0.05         # m, final object height vs lift target


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    gains: GainConfig = field(default_factory=GainConfig)
    contact: ContactConfig = field(default_factory=ContactConfig)
    object: ObjectConfig = field(default_factory=ObjectConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    checks: CheckConfig = field(default_factory=CheckConfig)
    dt: float = 1e-3
    duration: Optional[float] = None   # default: end of the last phase
    out_dir: Optional[str] = None
    seed: int = 0
    log_every: int = 10

    def validate(self):
        if not self.dt > 0:
            raise ConfigError("dt: must be positive")
        if self.duration is not None and not self.duration > 0:
            raise ConfigError("duration: must be positive")
        if self.log_every < 1:
            raise ConfigError("log_every: must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        sc = self.scenario
        if sc.n_ams < 1:
            raise ConfigError("scenario.n_ams: must be >= 1")
        if self.object.shape not in ("box", "cylinder"):
            raise ConfigError(f"object.shape: unknown shape {self.object.shape!r}")
        if self.object.mass <= 0:
            raise ConfigError("object.mass: must be positive")
        for name in ("t_approach", "t_grasp", "t_lift", "t_hover"):
            if getattr(sc, name) <= 0:
                raise ConfigError(f"scenario.{name}: must be positive")
        if len(self.gains.K_y) != self.model.n_links or len(self.gains.D_y) != self.model.n_links:
            raise ConfigError("gains.K_y/D_y: need one entry per joint")
        for name in ("K_t", "D_t", "k_R", "k_w"):
            if getattr(self.gains, name) <= 0:
                raise ConfigError(f"gains.{name}: must be positive")
        if self.gains.force_filter < 0:
            raise ConfigError("gains.force_filter: must be non-negative")
        if min(self.gains.K_y) <= 0 or min(self.gains.D_y) <= 0:
            raise ConfigError("gains.K_y/D_y: must be positive")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)


PRESETS = {
    "free_flight": {"scenario": {"name": "free_flight", "with_object": False}},
    "two_am_grasp": {"scenario": {"name": "two_am_grasp"}},
    "two_am_grasp_nocomp": {"scenario": {"name": "two_am_grasp_nocomp"},
                            "gains": {"compensate_forces": False},
                            "checks": {"passivity": False}},
    "ten_am_grasp": {
        "scenario": {"name": "ten_am_grasp", "n_ams": 10},
        "object": {"shape": "cylinder", "mass": 5.0},
    },
}


def _build(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in data.items():
        where = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"{where}: unknown key")
        ftype = fields[key].type
        if dataclasses.is_dataclass(ftype):
            kwargs[key] = _build(ftype, val, where)
        else:
            kwargs[key] = _coerce(ftype, val, where)
    return cls(**kwargs)


def _coerce(ftype, val, where):
    try:
        if ftype is float:
            if isinstance(val, bool):
                raise TypeError
            return float(val)
        if ftype is int:
            if isinstance(val, bool) or (isinstance(val, float) and not val.is_integer()):
                raise TypeError
            return int(val)
        if ftype is bool:
            if not isinstance(val, bool):
                raise TypeError
            return val
        if ftype is str:
            if not isinstance(val, str):
                raise TypeError
            return val
        if ftype == List[float]:
            return [float(v) for v in val]
        if ftype == Optional[float]:
            return None if val is None else float(val)
        if ftype == Optional[str]:
            return None if val is None else str(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: invalid value {val!r}") from None
    return val


def merge(base, override):
    """Recursive dict merge; override wins."""
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path=None, preset=None, overrides=None):
    """RunConfig from preset defaults, then a YAML file, then explicit overrides."""
    data = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"scenario: unknown preset {preset!r} (known: {', '.join(PRESETS)})")
        data = merge(data, PRESETS[preset])
    if path is not None:
        try:
            with open(path) as fh:
                loaded = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError("config: top level must be a mapping")
        data = merge(data, loaded or {})
    data = merge(data, overrides or {})
    return _build(RunConfig, data, "").validate()


def preset_config(name, **overrides):
    return load_config(preset=name, overrides=overrides)
