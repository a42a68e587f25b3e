"""
Run configuration
Layered settings: packaged defaults, a YAML settings file, .env variables, then CLI flags.
"""

import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml
from dotenv import load_dotenv

from src import __version__
from src.core.errors import ConfigError, UsageError

logger = logging.getLogger(__name__)

SETTINGS_PATH = Path(__file__).parent.parent / "config" / "settings.yaml"

SUBCOMMANDS = (
    "check-inequalities",
    "tightness-search",
    "rao-blackwell",
    "gwn-experiment",
    "frontier",
    "kernel-constants",
)
FORMATS = ("json", "csv")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
DEFAULT_BANDWIDTHS = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]

RUN_DEFAULTS: Dict[str, Any] = {"seed": 0, "out_dir": "output", "format": "json", "threads": 1}
LOGGING_DEFAULTS: Dict[str, Any] = {"level": "INFO"}

PARAM_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "check-inequalities": {
        "trials": 10_000,
        "min_size": 2,
        "max_size": 20,
        "d_grid": 10_000,
        "include_lemma3_literal": False,
    },
    "tightness-search": {"space_size": 4, "iterations": 2000, "restarts": 8},
    "rao-blackwell": {"trials": 1000, "size": 6},
    "gwn-experiment": {
        "beta": 1.0,
        "R": 1.0,
        "C": 1.0,
        "x0": 0.5,
        "n": 4096.0,
        "m": 1024,
        "replicates": 10_000,
        "bandwidths": list(DEFAULT_BANDWIDTHS),
    },
    "frontier": {
        "beta": 1.0,
        "R": 1.0,
        "C": 1.0,
        "x0": 0.5,
        "n_list": [float(2 ** k) for k in range(10, 17)],
        "m": 1024,
        "bandwidths": list(DEFAULT_BANDWIDTHS),
        "method": "exact",
        "replicates": 2000,
        "gnuplot": False,
    },
    "kernel-constants": {"beta": 1.0, "R": 1.0, "C": 1.0, "x0": 0.5},
}

ENV_KEYS = {
    "BIASMAD_SEED": "seed",
    "BIASMAD_OUT_DIR": "out_dir",
    "BIASMAD_THREADS": "threads",
    "BIASMAD_LOG_LEVEL": "level",
}


def section_name(subcommand: str) -> str:
    """YAML section of a subcommand (dashes become underscores)"""
    return subcommand.replace("-", "_")


def _coerce(key: str, value: Any, default: Any, line: Optional[int] = None) -> Any:
    """Convert a file or environment value to the type of its default"""
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "1", "yes", "false", "0", "no"):
                return value.lower() in ("true", "1", "yes")
            raise ValueError(f"expected a boolean, got {value!r}")
        if isinstance(default, int):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(f"expected an integer, got {value!r}")
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise ValueError(f"expected a number, got {value!r}")
            return float(value)
        if isinstance(default, list):
            if not isinstance(value, (list, tuple)):
                raise ValueError(f"expected a list, got {value!r}")
            return [_coerce(key, v, default[0], line) for v in value] if default else list(value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid value for '{key}': {e}", line=line) from e


@dataclass
class RunConfig:
    """Effective configuration of one subcommand run"""

    subcommand: str
    seed: int = RUN_DEFAULTS["seed"]
    out_dir: str = RUN_DEFAULTS["out_dir"]
    format: str = RUN_DEFAULTS["format"]
    threads: int = RUN_DEFAULTS["threads"]
    log_level: str = LOGGING_DEFAULTS["level"]
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        self.validate()

    def validate(self) -> None:
        if self.format not in FORMATS:
            raise UsageError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.threads < 1:
            raise UsageError(f"threads must be at least 1, got {self.threads}")
        if self.log_level.upper() not in LOG_LEVELS:
            raise UsageError(f"log level must be one of {LOG_LEVELS}, got {self.log_level!r}")
        unknown = set(self.params) - set(PARAM_DEFAULTS[self.subcommand])
        if unknown:
            raise UsageError(f"unknown parameters for {self.subcommand}: {sorted(unknown)}")

    @classmethod
    def defaults(cls, subcommand: str) -> "RunConfig":
        if subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {subcommand!r}")
        return cls(subcommand=subcommand, params=copy.deepcopy(PARAM_DEFAULTS[subcommand]))

    def override(self, **values: Any) -> "RunConfig":
        """
        Apply non-None overrides (run fields by name, anything else as a parameter)

        Args:
            **values: Overrides, typically parsed CLI flags

        Returns:
            self, for chaining
        """
        for key, value in values.items():
            if value is None:
                continue
            if key in ("seed", "out_dir", "format", "threads", "log_level"):
                setattr(self, key, value)
            elif key in PARAM_DEFAULTS[self.subcommand]:
                self.params[key] = _coerce(key, value, PARAM_DEFAULTS[self.subcommand][key])
            else:
                raise UsageError(f"unknown option {key!r} for {self.subcommand}")
        self.validate()
        return self

    def config_hash(self) -> str:
        """SHA-256 of the settings that determine results"""
        canonical = json.dumps(
            {"subcommand": self.subcommand, "seed": self.seed, "params": self.params},
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def meta(self) -> Dict[str, Any]:
        """Provenance embedded in every emitted file"""
        return {"tool_version": __version__, "config_hash": self.config_hash(), "seed": self.seed}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run": {"seed": self.seed, "out_dir": self.out_dir, "format": self.format, "threads": self.threads},
            "logging": {"level": self.log_level},
            section_name(self.subcommand): copy.deepcopy(self.params),
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)


def _read_yaml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"cannot parse {path}: {getattr(e, 'problem', None) or e}", line=line) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    return data


def _merge_file(config: RunConfig, data: Mapping[str, Any], path: Path) -> None:
    known_sections = {"run", "logging"} | {section_name(s) for s in SUBCOMMANDS}
    for section, body in data.items():
        if section not in known_sections:
            logger.warning("%s: ignoring unknown section '%s'", path, section)
            continue
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: section '{section}' must be a mapping")
        if section == "run":
            for key, value in body.items():
                if key not in RUN_DEFAULTS:
                    logger.warning("%s: ignoring unknown key 'run.%s'", path, key)
                    continue
                setattr(config, key, _coerce(key, value, RUN_DEFAULTS[key]))
        elif section == "logging":
            for key, value in body.items():
                if key != "level":
                    logger.warning("%s: ignoring unknown key 'logging.%s'", path, key)
                    continue
                config.log_level = str(value).upper()
        elif section == section_name(config.subcommand):
            defaults = PARAM_DEFAULTS[config.subcommand]
            for key, value in body.items():
                if key not in defaults:
                    logger.warning("%s: ignoring unknown key '%s.%s'", path, section, key)
                    continue
                config.params[key] = _coerce(key, value, defaults[key])


def _merge_env(config: RunConfig) -> None:
    load_dotenv()
    for env_key, key in ENV_KEYS.items():
        raw = os.getenv(env_key)
        if raw is None or raw == "":
            continue
        if key == "level":
            config.log_level = raw.upper()
        else:
            try:
                setattr(config, key, _coerce(env_key, raw, RUN_DEFAULTS[key]))
            except ConfigError as e:
                raise ConfigError(f"environment: {e}") from e


def load_config(
    path: Optional[Union[str, Path]] = None,
    subcommand: str = "check-inequalities",
    use_env: bool = True,
) -> RunConfig:
    """
    Build the effective configuration for a subcommand

    Args:
        path: Settings file; None reads the packaged config/settings.yaml when present
        subcommand: Subcommand whose section is read
        use_env: Apply BIASMAD_* variables (after loading .env)

    Returns:
        RunConfig with file and environment values applied
    """
    config = RunConfig.defaults(subcommand)
    source = Path(path) if path is not None else SETTINGS_PATH
    if path is not None or source.exists():
        _merge_file(config, _read_yaml(source), source)
    if use_env:
        _merge_env(config)
    config.validate()
    return config
