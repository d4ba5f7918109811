"""Campaign configuration: one YAML file mapped onto frozen dataclasses.

Every section is optional; missing keys keep the dataclass defaults and unknown
keys are rejected. Validation errors name the dotted field path and, when the
value came from a file, its line.
"""
from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import yaml

from .closedloop import LimitFunction, SimulationParams
from .control import ControlGains
from .errors import ConfigError, require
from .guidance import GuidanceParams, PathShape
from .io import canonical_json, short_hash
from .plant import ActuatorParams, AircraftParams, PlantParams, TetherParams, WinchParams
from .segments import SegmentationConfig
from .selection import SelectionConfig
from .subsim import SubsetSimConfig
from .windfield import DrydenParams, ShearProfile

CONFIG_SCHEMA = "campaign/1"


@dataclass(frozen=True)
class WindConfig:
    shear: ShearProfile = field(default_factory=ShearProfile)
    dryden: DrydenParams = field(default_factory=DrydenParams)


@dataclass(frozen=True)
class TrainingConfig:
    k_neighbors: int = 5
    balance_ratio: float = 1.0
    smote_seed: int = 0
    taus: Tuple[float, ...] = (0.5, 1.0)
    selection: SelectionConfig = field(default_factory=SelectionConfig)

    def __post_init__(self) -> None:
        require(self.k_neighbors >= 1, "k_neighbors", "must be >= 1")
        require(0.0 < self.balance_ratio <= 1.0, "balance_ratio", "must be in (0, 1]")
        require(len(self.taus) > 0 and all(t > 0 for t in self.taus), "taus", "needs positive lags")


@dataclass(frozen=True)
class EvaluationConfig:
    threshold_percents: Tuple[float, ...] = (8.0, 10.0, 12.0, 14.0, 16.0)
    quantile: float = 0.99
    nominal_replays: int = 200
    max_upset_replays: Optional[int] = None
    post_trigger_window: float = 5.0

    def __post_init__(self) -> None:
        require(0.0 < self.quantile < 1.0, "quantile", "must be in (0, 1)")
        require(self.nominal_replays >= 1, "nominal_replays", "must be >= 1")
        require(self.max_upset_replays is None or self.max_upset_replays >= 1, "max_upset_replays", "must be >= 1")
        require(self.post_trigger_window > 0.0, "post_trigger_window", "must be > 0")


@dataclass(frozen=True)
class LossConfig:
    p_em: float = 0.4
    p_pc: float = 3.9
    t_pc: float = 2.5
    e_misc: float = 0.0
    downtimes_min: Tuple[float, ...] = (60.0, 1440.0, 10080.0, 43200.0)
    # overrides the evaluation subset-simulation estimate when set
    p_f: Optional[float] = None

    def __post_init__(self) -> None:
        require(self.p_pc > 0.0 and self.t_pc > 0.0, "p_pc", "cycle power and duration must be > 0")
        require(self.p_em >= 0.0 and self.e_misc >= 0.0, "p_em", "must be >= 0")
        require(len(self.downtimes_min) > 0 and all(d >= 0 for d in self.downtimes_min), "downtimes_min", "needs values >= 0")
        require(self.p_f is None or 0.0 <= self.p_f <= 1.0, "p_f", "must be in [0, 1]")


@dataclass(frozen=True)
class CampaignSection:
    train_seed: int = 1
    eval_seed: int = 2
    nominal_runs: int = 100
    bandwidth_multiples: Tuple[float, ...] = (1.0, 1.5, 2.0)

    def __post_init__(self) -> None:
        require(self.nominal_runs >= 1, "nominal_runs", "must be >= 1")
        require(len(self.bandwidth_multiples) > 0 and all(m > 0 for m in self.bandwidth_multiples), "bandwidth_multiples", "needs positive values")


@dataclass(frozen=True)
class CampaignConfig:
    seed: int = 0
    outdir: str = "campaign"
    wind: WindConfig = field(default_factory=WindConfig)
    aircraft: AircraftParams = field(default_factory=AircraftParams)
    actuators: ActuatorParams = field(default_factory=ActuatorParams)
    tether: TetherParams = field(default_factory=TetherParams)
    winch: WinchParams = field(default_factory=WinchParams)
    path: PathShape = field(default_factory=PathShape)
    guidance: GuidanceParams = field(default_factory=GuidanceParams)
    control: ControlGains = field(default_factory=ControlGains)
    simulation: SimulationParams = field(default_factory=SimulationParams)
    limit: LimitFunction = field(default_factory=LimitFunction)
    subsim: SubsetSimConfig = field(default_factory=SubsetSimConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    campaign: CampaignSection = field(default_factory=CampaignSection)

    def __post_init__(self) -> None:
        require(
            abs(self.segmentation.f_s - self.simulation.f_s) < 1e-12,
            "segmentation.f_s",
            "must equal simulation.f_s",
        )
        require(
            self.segmentation.window_samples < self.simulation.dimension // self.simulation.channels,
            "segmentation.window",
            "must be shorter than simulation.t_sim",
        )
        require(
            self.campaign.train_seed != self.campaign.eval_seed,
            "campaign.eval_seed",
            "training and evaluation need different subset-simulation runs",
        )

    @property
    def plant(self) -> PlantParams:
        return PlantParams(self.aircraft, self.actuators, self.tether, self.winch)

    @cached_property
    def hash(self) -> str:
        return config_hash(self)


def to_dict(cfg: Any) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            out[f.name] = to_dict(value)
        elif isinstance(value, tuple):
            out[f.name] = list(value)
        else:
            out[f.name] = value
    return out


def config_hash(cfg: CampaignConfig) -> str:
    payload = to_dict(cfg)
    payload.pop("outdir", None)
    return short_hash(canonical_json({"schema": CONFIG_SCHEMA, "config": payload}))


def _line_index(node: yaml.Node, prefix: str = "", out: Optional[Dict[str, int]] = None) -> Dict[str, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            out[path] = key_node.start_mark.line + 1
            _line_index(value_node, path, out)
    return out


def _where(path: str, lines: Dict[str, int], source: str) -> str:
    probe = path
    while probe:
        if probe in lines:
            return f"{source}:{lines[probe]}: "
        probe = probe.rpartition(".")[0]
    return f"{source}: " if source else ""


def _coerce(value: Any, tp: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if origin in (tuple, Tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} values, got {len(value)}")
        return tuple(_coerce(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{path}: must be finite")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    return value


def _build(cls: Any, data: Any, path: str) -> Any:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        first = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(f"{first}: unknown key")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _coerce(value, hints[name], f"{path}.{name}" if path else name)
    try:
        return cls(**kwargs)
    except ConfigError as e:
        if path:
            raise ConfigError(f"{path}.{e}") from None
        raise


def config_from_dict(data: Optional[Dict[str, Any]], source: str = "", lines: Optional[Dict[str, int]] = None) -> CampaignConfig:
    try:
        return _build(CampaignConfig, data, "")
    except ConfigError as e:
        path = str(e).partition(":")[0]
        raise ConfigError(_where(path, lines or {}, source) + str(e)) from None


def load_config(path: str | Path) -> CampaignConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e}") from e
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise ConfigError(f"{where}: invalid YAML: {getattr(e, 'problem', None) or e}") from None
    lines = _line_index(node) if node is not None else {}
    return config_from_dict(data, str(path), lines)


def with_overrides(cfg: CampaignConfig, **sections: Dict[str, Any]) -> CampaignConfig:
    """Copy of `cfg` with some fields of named sections replaced, validated again."""
    data = to_dict(cfg)
    for section, values in sections.items():
        if section not in data:
            raise ConfigError(f"{section}: unknown section")
        if isinstance(data[section], dict):
            _merge(data[section], values)
        else:
            data[section] = values
    return config_from_dict(data)


def _merge(dst: Dict[str, Any], src: Dict[str, Any]) -> None:
    for key, value in src.items():
        if isinstance(value, dict) and isinstance(dst.get(key), dict):
            _merge(dst[key], value)
        else:
            dst[key] = value
