import logging
from dataclasses import dataclass, fields, replace

import toml

from errors import ConfigError

logger = logging.getLogger(__name__)

# --- Valores por defecto ---
DEFAULT_HRES = 64
DEFAULT_YRES = 64
DEFAULT_XSTEP = 4
DEFAULT_YSTEP = 4
DEFAULT_TOLERANCE = 0.05
DEFAULT_INITIAL_DENSITY = 0.0
DEFAULT_MAX_DEPTH = 8
DEFAULT_LEAF_CAPACITY = 4
DEFAULT_MAX_SPECULAR_DEPTH = 3
DEFAULT_AMBIENT_DIVISIONS = 16
DEFAULT_AMBIENT_TOLERANCE = 0.3
DEFAULT_AMBIENT_BOUNCES = 1
DEFAULT_SEED = 0
DEFAULT_PROBES = 5
DEFAULT_WINDOWS = 64
DEFAULT_PORT = 7654
DEFAULT_LATENCY_TICKS = 0
AMBIENT_FLUSH_EVERY = 16
MODES = ("seq", "static", "static_lb", "dyn_scanbar", "dyn_window")
STRATEGIES = ("forward", "backward", "random")
MEASURES = ("rays", "intersections")


@dataclass(frozen=True)
class RenderConfig:
    hres: int = DEFAULT_HRES
    yres: int = DEFAULT_YRES
    xstep: int = DEFAULT_XSTEP
    ystep: int = DEFAULT_YSTEP
    tolerance: float = DEFAULT_TOLERANCE
    initial_density: float = DEFAULT_INITIAL_DENSITY
    max_depth: int = DEFAULT_MAX_DEPTH
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY
    max_specular_depth: int = DEFAULT_MAX_SPECULAR_DEPTH
    ambient_divisions: int = DEFAULT_AMBIENT_DIVISIONS
    ambient_tolerance: float = DEFAULT_AMBIENT_TOLERANCE
    ambient_bounces: int = DEFAULT_AMBIENT_BOUNCES
    mode: str = "seq"
    workers: int = 1
    windows: int = DEFAULT_WINDOWS
    strategy: str = "forward"
    probes: int = DEFAULT_PROBES
    measure: str = "rays"
    ambient_share: bool = True
    carry_density: bool = False
    seed: int = DEFAULT_SEED
    transport: str = "sim"
    port: int = DEFAULT_PORT
    latency_ticks: int = DEFAULT_LATENCY_TICKS

    def validate(self):
        if self.mode not in MODES: raise ConfigError(f"unknown mode {self.mode!r}")
        if self.strategy not in STRATEGIES: raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.measure not in MEASURES: raise ConfigError(f"unknown measure {self.measure!r}")
        if self.transport not in ("sim", "tcp"): raise ConfigError(f"unknown transport {self.transport!r}")
        for name in ("hres", "yres", "xstep", "ystep", "workers", "windows", "probes", "max_depth", "leaf_capacity", "ambient_divisions"):
            if getattr(self, name) < 1: raise ConfigError(f"{name} must be >= 1")
        if self.tolerance < 0 or self.ambient_tolerance <= 0: raise ConfigError("tolerances must be positive")
        if not 0.0 <= self.initial_density <= 1.0: raise ConfigError("initial_density must be in [0, 1]")
        if self.latency_ticks < 0: raise ConfigError("latency_ticks must be >= 0")
        return self


def load_config_file(path):
    try:
        with open(path, "r", encoding="utf-8") as f: data = toml.load(f)
    except toml.TomlDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    known = {f.name for f in fields(RenderConfig)}
    unknown = sorted(set(data) - known)
    if unknown: raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    logger.debug("loaded %d settings from %s", len(data), path)
    return data


def build_config(file_path=None, **overrides):
    """Defaults, then the TOML file, then explicit overrides (None means unset)."""
    cfg = RenderConfig()
    if file_path: cfg = replace(cfg, **load_config_file(file_path))
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()
