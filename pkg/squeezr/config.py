"""Layered campaign configuration.

Values are resolved in this order, later layers winning:

1. built-in dataclass defaults
2. the preset of the selected controller mode
3. an INI file with ``[model]``, ``[plant]``, ``[supervisor]`` and
   ``[campaign]`` sections
4. environment variables ``SQUEEZR_<SECTION>__<KEY>``
5. command-line overrides ``section.key=value``
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from squeezr._utils import suggest_similar, unknown_option_message
from squeezr.autolock import SupervisorConfig, SupervisorMode
from squeezr.exceptions import ConfigError
from squeezr.locks import ChannelId
from squeezr.model import CavityGeometry, ModelParams
from squeezr.plant import PlantConfig

ENV_PREFIX = "SQUEEZR_"
SECTIONS = ("model", "plant", "supervisor", "campaign")

# Calibration of the drift-compensation scenario: a quiet lab whose squeezing
# angle mainly follows slow heating (0.5 mrad/min), no sporadic lock losses.
MODE_PRESETS: dict[SupervisorMode, dict[str, dict[str, Any]]] = {
    SupervisorMode.AUTO_RELOCK: {},
    SupervisorMode.DRIFT_COMPENSATION: {
        "plant": {
            "lock_loss_rate": 0.0,
            "angle_walk_rate": 1.0e-4,
            "angle_drift_rate": 0.5e-3 / 60.0,
        },
    },
}


@dataclass(frozen=True)
class CampaignConfig:
    """Everything needed to run one simulated campaign.

    Attributes:
        plant: Simulated apparatus.
        supervisor: Controller settings.
        duration_s: Simulated duration in seconds.
        seed: Seed of the plant's random stream.
        time_compression: Simulated seconds per wall second, for reporting only.
        output_dir: Where campaign outputs are written.
        name: Campaign label used in the run ledger.
    """

    plant: PlantConfig = field(default_factory=PlantConfig)
    supervisor: SupervisorConfig = field(default_factory=SupervisorConfig)
    duration_s: float = 3600.0
    seed: int = 42
    time_compression: float = 1.0
    output_dir: str = "runs"
    name: str = "campaign"

    def __post_init__(self):
        if not self.duration_s > 0.0:
            raise ConfigError(f"campaign.duration_s must be > 0, got {self.duration_s}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"campaign.seed must be a non-negative integer, got {self.seed}")
        if not self.time_compression > 0.0:
            raise ConfigError(
                f"campaign.time_compression must be > 0, got {self.time_compression}"
            )

    @property
    def mode(self) -> SupervisorMode:
        return self.supervisor.mode

    def replace(self, **changes: Any) -> CampaignConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": _jsonable(_model_values(self.plant.model)),
            "plant": _jsonable(
                {f.name: getattr(self.plant, f.name) for f in _fields(PlantConfig)}
            ),
            "supervisor": _jsonable(
                {f.name: getattr(self.supervisor, f.name) for f in _fields(SupervisorConfig)}
            ),
            "campaign": _jsonable(
                {f.name: getattr(self, f.name) for f in _fields(CampaignConfig)}
            ),
        }


def _fields(cls) -> list[dataclasses.Field]:
    nested = {"model", "plant", "supervisor"}
    return [f for f in dataclasses.fields(cls) if f.name not in nested]


def _model_values(model: ModelParams) -> dict[str, Any]:
    geometry = model.geometry
    return {
        "output_coupler_reflectivity": geometry.output_coupler_reflectivity,
        "round_trip_loss": geometry.round_trip_loss,
        "round_trip_length": geometry.round_trip_length,
        "threshold_power": model.threshold_power,
        "total_efficiency": model.total_efficiency,
        "phase_jitter": model.phase_jitter,
    }


def _jsonable(values: Mapping[str, Any]) -> dict[str, Any]:
    out = {}
    for key, value in values.items():
        if isinstance(value, Enum):
            value = value.value
        elif isinstance(value, tuple):
            value = [v.value if isinstance(v, Enum) else v for v in value]
        out[key] = value
    return out


def _defaults() -> dict[str, dict[str, Any]]:
    return CampaignConfig().to_dict()


def _parse_value(section: str, key: str, raw: Any, default: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    where = f"{section}.{key}"
    try:
        if key == "mode":
            return SupervisorMode.parse(text).value
        if key == "faulty_channels":
            names = [n.strip() for n in text.split(",") if n.strip()]
            return [ChannelId.parse(n).value for n in names]
        if key == "double_resonance_mode":
            return None if text.lower() in ("", "none", "random") else int(text)
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"expected a boolean, got '{text}'")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"Invalid value for {where}: {e}") from e


def _check_key(section: str, key: str, known: Mapping[str, Any], origin: str) -> None:
    if section not in known:
        msg = unknown_option_message("config section", section, SECTIONS)
        raise ConfigError(f"{origin}: {msg}")
    if key not in known[section]:
        msg = f"{origin}: Unknown key '{key}' in [{section}]"
        suggestion = suggest_similar(key, known[section])
        if suggestion:
            msg += f". Did you mean '{suggestion}'?"
        raise ConfigError(msg)


def _line_of(path: Path, section: str, key: str) -> int | None:
    current = None
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip().lower()
        elif current == section and ("=" in stripped or ":" in stripped):
            name = stripped.split("=", 1)[0].split(":", 1)[0].strip().lower()
            if name == key:
                return number
    return None


def read_config_file(path: str | Path) -> dict[str, dict[str, str]]:
    """Parse an INI config file into raw strings, validating section and key names."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"Cannot parse config file {path}: {e}") from e
    known = _defaults()
    raw: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        name = section.strip().lower()
        for key, value in parser.items(section):
            line = _line_of(path, name, key)
            origin = f"{path}:{line}" if line else str(path)
            _check_key(name, key, known, origin)
            raw.setdefault(name, {})[key] = value
    return raw


def env_overrides(env: Mapping[str, str] | None = None) -> dict[str, dict[str, str]]:
    """Collect ``SQUEEZR_<SECTION>__<KEY>`` variables."""
    env = os.environ if env is None else env
    known = _defaults()
    raw: dict[str, dict[str, str]] = {}
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, key = name[len(ENV_PREFIX) :].split("__", 1)
        section, key = section.lower(), key.lower()
        _check_key(section, key, known, f"environment variable {name}")
        raw.setdefault(section, {})[key] = value
    return raw


def parse_overrides(items: Iterable[str]) -> dict[str, dict[str, str]]:
    """Parse command-line ``section.key=value`` overrides."""
    known = _defaults()
    raw: dict[str, dict[str, str]] = {}
    for item in items:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"Override '{item}' must look like section.key=value")
        name, value = item.split("=", 1)
        section, key = name.strip().lower().split(".", 1)
        _check_key(section, key, known, f"override '{item}'")
        raw.setdefault(section, {})[key] = value
    return raw


def _merge(base: dict[str, dict[str, Any]], layer: Mapping[str, Mapping[str, Any]]):
    for section, values in layer.items():
        for key, value in values.items():
            base[section][key] = _parse_value(section, key, value, base[section][key])


def build_config(values: Mapping[str, Mapping[str, Any]]) -> CampaignConfig:
    """Construct the dataclass tree from resolved section values."""
    model_v = dict(values["model"])
    geometry = CavityGeometry(
        output_coupler_reflectivity=model_v.pop("output_coupler_reflectivity"),
        round_trip_loss=model_v.pop("round_trip_loss"),
        round_trip_length=model_v.pop("round_trip_length"),
    )
    try:
        model = ModelParams(geometry=geometry, **model_v)
    except ValueError as e:
        raise ConfigError(f"model: {e}") from e
    plant_v = dict(values["plant"])
    plant_v["faulty_channels"] = tuple(plant_v.get("faulty_channels") or ())
    plant = PlantConfig(model=model, **plant_v)
    supervisor = SupervisorConfig(**values["supervisor"])
    return CampaignConfig(plant=plant, supervisor=supervisor, **values["campaign"])


def load_config(
    path: str | Path | None = None,
    overrides: Iterable[str] = (),
    env: Mapping[str, str] | None = None,
    extra: Mapping[str, Mapping[str, Any]] | None = None,
) -> CampaignConfig:
    """Resolve every configuration layer into a :class:`CampaignConfig`.

    Args:
        path: Optional INI file.
        overrides: ``section.key=value`` strings from the command line.
        env: Environment mapping, ``os.environ`` by default.
        extra: Already-typed values from dedicated CLI flags; applied last.

    Raises:
        ConfigError: Unknown sections or keys, unparsable or invalid values.
    """
    layers: list[Mapping[str, Mapping[str, Any]]] = []
    if path is not None:
        layers.append(read_config_file(path))
    layers.append(env_overrides(env))
    layers.append(parse_overrides(overrides))
    if extra:
        layers.append(extra)

    mode = SupervisorMode.AUTO_RELOCK
    for layer in layers:
        if "mode" in layer.get("supervisor", {}):
            mode = SupervisorMode.parse(str(layer["supervisor"]["mode"]).strip())

    values = _defaults()
    values["supervisor"]["mode"] = mode.value
    _merge(values, MODE_PRESETS[mode])
    for layer in layers:
        _merge(values, layer)
    return build_config(values)


def config_from_mode(mode: SupervisorMode | str, **campaign: Any) -> CampaignConfig:
    """Defaults plus the preset of ``mode``; keyword arguments go to [campaign]."""
    extra = {"supervisor": {"mode": SupervisorMode.parse(mode).value}, "campaign": campaign}
    return load_config(env={}, extra=extra)
