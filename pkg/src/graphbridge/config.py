"""Plain-text run configuration: `[section]` headers and `key = value` lines.

Precedence is flag > file > default. The fully resolved configuration is
echoed into every run directory so a run can be reproduced from its
manifest alone.
"""

from __future__ import annotations

import copy
from pathlib import Path

from .errors import ConfigError

DEFAULTS = {
    "data": {
        "dataset": "community-small",
        "count": 100,
        "seed": 7,
        "ego_radius": 2,
        "ego_base": "",
    },
    "features": {
        "k_eig": 5,
        "degree_onehot": True,
        "degree_clamp": 10,
    },
    "quantization": {
        "levels": (5, 5, 5, 5, 5, 5),
    },
    "schedule": {
        "sigma_min": 1.0,
        "sigma_max": 3.0,
        "horizon": 1.0,
        "steps": 1000,
    },
    "encoder": {
        "num_layers": 2,
        "num_heads": 4,
        "hidden_x": 64,
        "hidden_e": 32,
        "hidden_y": 32,
    },
    "decoder": {
        "num_layers": 2,
        "num_heads": 4,
        "hidden_x": 64,
        "hidden_e": 32,
        "hidden_y": 32,
    },
    "drift": {
        "num_layers": 2,
        "num_heads": 4,
        "hidden_x": 64,
        "hidden_e": 32,
        "hidden_y": 32,
        "time_dim": 64,
    },
    "train": {
        "seed": 0,
        "ae_lr": 5e-4,
        "ae_batch_size": 32,
        "ae_epochs": 3000,
        "bridge_lr_min": 1e-4,
        "bridge_lr_max": 5e-4,
        "bridge_batch_size": 64,
        "bridge_epochs": 5000,
        "loss_variant": "squared_error",
        "x_acc_target": 0.0,
        "e_acc_target": 0.0,
    },
    "sample": {
        "count": 20,
        "seed": 9,
        "snap": True,
        "prior": "fixed_zero",
        "bridge_mean": "alg1",
    },
    "eval": {
        "metrics": "generic",
    },
}


def _coerce(section, key, raw, default):
    if isinstance(default, bool):
        token = str(raw).strip().lower()
        if token in ("true", "1", "yes", "on"):
            return True
        if token in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key}: expected a boolean, got '{raw}'")
    if isinstance(default, int):
        try:
            return int(str(raw).strip())
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected an integer, got '{raw}'")
    if isinstance(default, float):
        try:
            return float(str(raw).strip())
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected a number, got '{raw}'")
    if isinstance(default, tuple):
        try:
            return tuple(int(tok) for tok in str(raw).replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected integers, got '{raw}'")
    return str(raw).strip()


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def apply_setting(cfg: dict, dotted_key: str, raw_value):
    if "." not in dotted_key:
        raise ConfigError(f"setting '{dotted_key}' must look like section.key")
    section, key = dotted_key.split(".", 1)
    if section not in cfg:
        raise ConfigError(f"unknown config section '{section}'")
    if key not in cfg[section]:
        raise ConfigError(f"unknown key '{key}' in section [{section}]")
    cfg[section][key] = _coerce(section, key, raw_value, DEFAULTS[section][key])


def load_config_file(path) -> dict:
    """Parse a key=value file into {section: {key: raw string}}."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    section = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"{path}:{lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        out[section][key] = value
    return out


def resolve_config(file_path=None, overrides=()) -> dict:
    """Defaults, then file contents, then explicit overrides."""
    cfg = default_config()
    if file_path:
        for section, entries in load_config_file(file_path).items():
            for key, raw in entries.items():
                apply_setting(cfg, f"{section}.{key}", raw)
    for dotted_key, raw in overrides:
        apply_setting(cfg, dotted_key, raw)
    return cfg


def format_config(cfg: dict) -> str:
    lines = []
    for section in cfg:
        lines.append(f"[{section}]")
        for key, value in cfg[section].items():
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
