"""
Run configuration as a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored. Vectors are comma separated.
Unknown keys are rejected so typos surface instead of silently using a default.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .simulator import PROFILE_KINDS

# Simulated sensor grades: accel bias, gyro bias, accel/gyro white-noise density, GNSS sigma.
SENSOR_GRADES = {
    "tactical": dict(
        accel_bias=(0.002, 0.002, 0.002),
        gyro_bias=(2e-5, 2e-5, 2e-5),
        accel_noise=0.002,
        gyro_noise=5e-5,
        gnss_sigma=0.5,
    ),
    "consumer": dict(
        accel_bias=(0.02, 0.02, 0.02),
        gyro_bias=(2e-4, 2e-4, 2e-4),
        accel_noise=0.01,
        gyro_noise=2e-4,
        gnss_sigma=1.5,
    ),
}


def _same(a, b) -> bool:
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


@dataclass(frozen=True, eq=False)
class RunConfig:
    # scenario (simulate mode)
    profile: str = "figure-eight"
    duration: float = 300.0
    speed: float = 5.0
    figure8_period: float = 60.0
    origin_lat: float = math.radians(32.8)
    origin_lon: float = math.radians(35.0)
    origin_h: float = 50.0
    sensor_grade: str = "consumer"
    accel_bias: tuple = (math.nan, math.nan, math.nan)
    gyro_bias: tuple = (math.nan, math.nan, math.nan)
    accel_noise: float = math.nan
    gyro_noise: float = math.nan
    gnss_sigma: float = math.nan
    imu_rate: float = 100.0
    gnss_rate: float = 1.0
    seed: int = 0

    # filter tuning
    accel_update: bool = True
    window_fixes: int = 3
    window_min_span: float = 0.0
    pos_noise_scale: float = 1.0
    accel_noise_scale: float = 1.0
    p0_pos: float = 2.0
    p0_vel: float = 0.2
    p0_tilt: float = math.radians(0.5)
    p0_yaw: float = math.radians(3.0)
    p0_accel_bias: float = 0.05
    p0_gyro_bias: float = 5e-4
    q_accel_noise: float = math.nan
    q_gyro_noise: float = math.nan
    q_accel_bias_walk: float = 1e-4
    q_gyro_bias_walk: float = 1e-6

    # initialization
    init_error_scale: float = 1.0
    init_lat: float = math.nan
    init_lon: float = math.nan
    init_h: float = math.nan
    init_vel: tuple = (0.0, 0.0, 0.0)
    init_rpy: tuple = (0.0, 0.0, 0.0)

    # evaluation and data
    eval_at: str = "gnss"
    imu_path: str = ""
    gnss_path: str = ""
    truth_path: str = ""

    def __eq__(self, other):
        # NaN marks "use the preset", so NaN fields compare equal
        if not isinstance(other, RunConfig):
            return NotImplemented
        return all(_same(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))

    def __hash__(self):
        return hash(dump_config(self))

    def resolved(self) -> "RunConfig":
        """Fill sensor-grade dependent values left as NaN."""
        preset = SENSOR_GRADES[self.sensor_grade]
        updates = {}
        for key, value in preset.items():
            current = getattr(self, key)
            if np.any(np.isnan(np.asarray(current, dtype=float))):
                updates[key] = value
        cfg = replace(self, **updates)
        if math.isnan(cfg.q_accel_noise):
            cfg = replace(cfg, q_accel_noise=cfg.accel_noise)
        if math.isnan(cfg.q_gyro_noise):
            cfg = replace(cfg, q_gyro_noise=cfg.gyro_noise)
        return cfg

    def validate(self) -> "RunConfig":
        errors = {}
        if self.profile not in PROFILE_KINDS:
            errors["profile"] = f"must be one of {PROFILE_KINDS}"
        if self.sensor_grade not in SENSOR_GRADES:
            errors["sensor_grade"] = f"must be one of {tuple(SENSOR_GRADES)}"
        if self.eval_at not in ("gnss", "imu"):
            errors["eval_at"] = "must be 'gnss' or 'imu'"
        if self.window_fixes < 3:
            errors["window_fixes"] = "need at least 3 fixes for a quadratic fit"
        for key in ("duration", "imu_rate", "gnss_rate", "pos_noise_scale", "accel_noise_scale"):
            if not getattr(self, key) > 0:
                errors[key] = "must be positive"
        nonneg = (
            "speed window_min_span p0_pos p0_vel p0_tilt p0_yaw p0_accel_bias p0_gyro_bias "
            "q_accel_noise q_gyro_noise q_accel_bias_walk q_gyro_bias_walk init_error_scale "
            "accel_noise gyro_noise"
        ).split()
        for key in nonneg:
            value = getattr(self, key)
            if value < 0:  # NaN means "take from sensor grade"
                errors[key] = "variance/std must be non-negative"
        if not (self.gnss_sigma > 0 or math.isnan(self.gnss_sigma)):
            errors["gnss_sigma"] = "must be positive"
        if not 0 <= self.seed < 2**64:
            errors["seed"] = "must be an unsigned 64-bit integer"
        if errors:
            raise ConfigError(errors)
        return self


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(key: str, text: str):
    default = _FIELDS[key].default
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text, 0)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        parts = [float(p) for p in text.split(",")]
        if len(parts) == 1:
            parts = parts * len(default)
        if len(parts) != len(default):
            raise ValueError(f"expected {len(default)} comma-separated values")
        return tuple(parts)
    return text


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse config text; omitted keys keep ``base`` (default) values."""
    values = {}
    errors = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors[f"line {lineno}"] = f"expected 'key = value', got {raw.strip()!r}"
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            errors[key] = "unknown key"
            continue
        try:
            values[key] = _parse_value(key, value)
        except ValueError as exc:
            errors[key] = str(exc)
    if errors:
        raise ConfigError(errors)
    return replace(base or RunConfig(), **values).validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ConfigError({"path": f"config file not found: {path}"}) from None
    return parse_config(text)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in asdict(cfg).items())


def write_config_echo(cfg: RunConfig, out_dir: str | Path) -> Path:
    path = Path(out_dir) / "config.echo"
    path.write_text(dump_config(cfg))
    return path
