"""Experiment configuration: one JSON document with five sections.

Lengths may be given in meters (``rho_max``) or in wavelengths
(``rho_max_lambda``); the latter are converted on load, so a parsed
config always holds meters and serializes without ``*_lambda`` keys.
"""

import hashlib
import json
import typing
from dataclasses import dataclass, field, fields
from typing import Any, Dict, Optional, Tuple

from .channel import ScenarioConfig
from .geometry import GridSpec
from .optimizer import PsoConfig

__all__ = ["ConfigError", "EvalConfig", "OutputConfig", "ExperimentConfig", "apply_overrides",
           "load_config", "parse_override_value"]

OUTPUT_FORMATS = ("json", "csv")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class EvalConfig:
    n_drops: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_drops < 1:
            raise ValueError("n_drops must be at least 1")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    formats: Tuple[str, ...] = OUTPUT_FORMATS

    def __post_init__(self):
        formats = self.formats
        if isinstance(formats, str):
            formats = tuple(f.strip() for f in formats.split(",") if f.strip())
        formats = tuple(formats) if isinstance(formats, (list, tuple)) else (formats,)
        bad = [f for f in formats if f not in OUTPUT_FORMATS]
        if bad or not formats:
            raise ValueError(f"formats must be a non-empty subset of {OUTPUT_FORMATS}")
        object.__setattr__(self, "formats", formats)


# Keys that also accept a ``<key>_lambda`` spelling, per section.
_LAMBDA_KEYS = {
    "scenario": ("delta", "h0", "rho_min", "rho_max"),
    "grid": ("pitch", "center_height", "region_width", "region_height", "min_separation"),
    "pso": ("v_max",),
}
_SECTIONS = ("scenario", "grid", "pso", "eval", "output")
_GRID_KEYS = ("m_h", "m_v", "pitch", "center_height", "region_width",
              "region_height", "min_separation")


def _base_type(tp):
    if typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return args[0], True
    return tp, False


def _check_type(key, value, tp):
    base, optional = _base_type(tp)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{key}: value required")
    if base is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if base is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if base is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    return value


def _build(section, cls, raw: dict, known: Dict[str, Any], wavelength=None):
    raw = dict(raw)
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for name in _LAMBDA_KEYS.get(section, ()):
        lam_key = f"{name}_lambda"
        if lam_key in raw:
            if name in raw:
                raise ConfigError(f"{section}.{name}: give either {name} or {lam_key}, not both")
            value = _check_type(f"{section}.{lam_key}", raw.pop(lam_key), Optional[float])
            lam = wavelength
            if lam is None:
                raise ConfigError(f"{section}.{lam_key}: wavelength unknown")
            kwargs[name] = None if value is None else value * lam
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown key")
        kwargs[key] = _check_type(f"{section}.{key}", value, hints[key])
    return kwargs


def _construct(section, factory, kwargs):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    grid: Optional[GridSpec] = None
    pso: PsoConfig = field(default_factory=PsoConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if self.grid is None:
            object.__setattr__(self, "grid", GridSpec(4, 4, self.scenario.wavelength))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        for key in data:
            if key not in _SECTIONS:
                raise ConfigError(f"{key}: unknown section")
        sections = {}
        for name in _SECTIONS:
            value = data.get(name, {})
            if not isinstance(value, dict):
                raise ConfigError(f"{name}: section must be an object")
            sections[name] = value

        scen_fields = {f.name: f for f in fields(ScenarioConfig)}
        probe = _build("scenario", ScenarioConfig, {k: v for k, v in sections["scenario"].items()
                                                    if k == "f_c"}, scen_fields)
        lam = _construct("scenario", ScenarioConfig, probe).wavelength
        scenario = _construct("scenario", ScenarioConfig,
                              _build("scenario", ScenarioConfig, sections["scenario"],
                                     scen_fields, lam))

        grid_known = {k: None for k in _GRID_KEYS}
        grid_kwargs = {"m_h": 4, "m_v": 4}
        grid_kwargs.update(_build("grid", GridSpec, sections["grid"], grid_known, lam))
        grid = _construct("grid", GridSpec, dict(grid_kwargs, wavelength=lam))

        pso = _construct("pso", PsoConfig,
                         _build("pso", PsoConfig, sections["pso"],
                                {f.name: f for f in fields(PsoConfig)}, lam))
        ev = _construct("eval", EvalConfig,
                        _build("eval", EvalConfig, sections["eval"],
                               {f.name: f for f in fields(EvalConfig)}))
        output = _construct("output", OutputConfig,
                            _build("output", OutputConfig, sections["output"],
                                   {f.name: f for f in fields(OutputConfig)}))
        return cls(scenario, grid, pso, ev, output)

    def to_dict(self) -> dict:
        grid = {k: getattr(self.grid, k) for k in _GRID_KEYS}
        return {
            "scenario": self.scenario.to_dict(),
            "grid": grid,
            "pso": self.pso.to_dict(),
            "eval": {"n_drops": self.eval.n_drops, "seed": self.eval.seed},
            "output": {"directory": self.output.directory,
                       "formats": list(self.output.formats)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def parse_override_value(text: str):
    """CLI override values are JSON when they parse as JSON, else strings."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: Dict[str, Any]) -> dict:
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in data.items()}
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        if not key or "." in key:
            raise ConfigError(f"{dotted}: overrides must look like section.key")
        if section not in _SECTIONS:
            raise ConfigError(f"{section}: unknown section")
        sect = data.setdefault(section, {})
        # an override replaces both spellings of a length
        base = key[:-len("_lambda")] if key.endswith("_lambda") else key
        sect.pop(base, None)
        sect.pop(f"{base}_lambda", None)
        sect[key] = value
    return data


def load_config(path=None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    data = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: not valid JSON ({exc})") from exc
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path} ({exc.strerror})") from exc
    if overrides:
        data = apply_overrides(data, overrides)
    return ExperimentConfig.from_dict(data)
