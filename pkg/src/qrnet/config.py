"""INI run configuration with strict key and range validation."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


def _boolean(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


# section -> key -> (parser, validator, message)
_SCHEMA = {
    "noise": {
        "K": (float, lambda v: v > 0, "must be > 0"),
        "sigma": (float, lambda v: v >= 0, "must be >= 0"),
        "qu": (int, lambda v: v >= 2, "must be >= 2"),
        "white_level": (int, lambda v: v >= 1, "must be >= 1"),
        "enabled": (_boolean, lambda v: True, ""),
    },
    "isp": {
        "gamma": (float, lambda v: v > 0, "must be > 0"),
        "epsilon": (float, lambda v: v > 0, "must be > 0"),
        "sharpen_radius": (float, lambda v: v > 0, "must be > 0"),
        "sharpen_amount": (float, lambda v: v >= 0, "must be >= 0"),
    },
    "synth": {
        "exposure_ratio": (float, lambda v: v > 0, "must be > 0"),
        "subframes": (int, lambda v: v >= 3 and v % 2 == 1, "must be odd and >= 3"),
        "max_disp": (float, lambda v: v >= 0, "must be >= 0"),
        "val_count": (int, lambda v: v >= 0, "must be >= 0"),
    },
    "model": {
        "base_channels": (int, lambda v: v >= 4 and v % 4 == 0, "must be >= 4 and divisible by 4"),
        "res_blocks": (int, lambda v: v >= 1, "must be >= 1"),
        "output_mode": (str, lambda v: v in ("rgb", "raw"), "must be rgb or raw"),
        "activation_slope": (float, lambda v: 0 <= v < 1, "must be in [0, 1)"),
        "interaction": (_boolean, lambda v: True, ""),
        "ieb": (_boolean, lambda v: True, ""),
        "levels": (int, lambda v: v in (3, 4, 5), "must be 3, 4 or 5"),
    },
    "train": {
        "epochs": (int, lambda v: v >= 1, "must be >= 1"),
        "iters_per_epoch": (int, lambda v: v >= 1, "must be >= 1"),
        "batch_size": (int, lambda v: v >= 1, "must be >= 1"),
        "crop": (int, lambda v: v >= 16 and v % 16 == 0, "must be divisible by 16"),
        "lr_init": (float, lambda v: v > 0, "must be > 0"),
        "lr_final": (float, lambda v: v > 0, "must be > 0"),
        "lr_decay_start_epoch": (int, lambda v: v >= 1, "must be >= 1"),
        "alpha": (float, lambda v: v >= 0, "must be >= 0"),
        "beta1": (float, lambda v: 0 <= v < 1, "must be in [0, 1)"),
        "beta2": (float, lambda v: 0 <= v < 1, "must be in [0, 1)"),
        "seed": (int, lambda v: v >= 0, "must be >= 0"),
        "dtype": (str, lambda v: v in ("f32", "f64"), "must be f32 or f64"),
        "input_mode": (str, lambda v: v in ("dual", "short", "long"),
                       "must be dual, short or long"),
    },
}


@dataclass
class RunConfig:
    """Validated key=value settings from an INI file plus flag overrides."""

    values: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        for section in _SCHEMA:
            self.values.setdefault(section, {})

    @classmethod
    def from_file(cls, path: str | None) -> "RunConfig":
        cfg = cls()
        if path is None:
            return cfg
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for section in cp.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in cp[section].items():
                cfg.set(section, key, raw)
        return cfg

    def set(self, section: str, key: str, raw) -> None:
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in _SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        parser, check, message = _SCHEMA[section][key]
        try:
            value = parser(str(raw))
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"bad value for {section}.{key}: {raw!r}")
        if not check(value):
            raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({message})")
        self.values[section][key] = value

    def get(self, section: str, key: str, default=None):
        return self.values[section].get(key, default)

    def section(self, name: str) -> dict:
        return dict(self.values[name])
