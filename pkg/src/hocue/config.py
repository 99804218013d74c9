"""Run configuration loaded from a single JSON file.

Every section maps onto a dataclass; unknown keys anywhere are rejected with
the dotted path of the offending key.
"""

from __future__ import annotations

import dataclasses
import json
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path

from hocue.alignment import IcpConfig
from hocue.errors import ConfigError
from hocue.objective import LossWeights


@dataclass
class AnchorSettings:
    enabled: bool = False
    period: int = 30
    anchor_window: int = 5
    blend_span: int | None = None


@dataclass
class SmoothingSettings:
    enabled: bool = False
    rot_window: int = 5
    trans_window: int = 5


@dataclass
class OutputSettings:
    trajectory: str | None = None
    run_log: str | None = None


@dataclass
class RunConfig:
    icp: IcpConfig = field(default_factory=IcpConfig)
    anchor: AnchorSettings = field(default_factory=AnchorSettings)
    smoothing: SmoothingSettings = field(default_factory=SmoothingSettings)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    # "heuristic" or "file:PATH"
    provider: str = "heuristic"
    # which rotation cues to use: "both", "object" or "hand"
    cues: str = "both"
    # "identity" keeps tracking through pairs with no usable cue; "fail" stops
    gap_policy: str = "identity"
    anchor_joint: int = 0
    parallelism: int | None = None
    seed: int = 0
    output: OutputSettings = field(default_factory=OutputSettings)

    def __post_init__(self):
        if self.cues not in ("both", "object", "hand"):
            raise ConfigError(f"cues must be 'both', 'object' or 'hand', got {self.cues!r}")
        if self.gap_policy not in ("identity", "fail"):
            raise ConfigError(f"gap_policy must be 'identity' or 'fail', got {self.gap_policy!r}")
        if not (self.provider == "heuristic" or self.provider.startswith("file:")):
            raise ConfigError(f"provider must be 'heuristic' or 'file:PATH', got {self.provider!r}")
        if not 0 <= self.anchor_joint < 21:
            raise ConfigError("anchor_joint must be in [0, 20]")
        if self.parallelism is not None and self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        for w in (self.smoothing.rot_window, self.smoothing.trans_window):
            if w < 1 or w % 2 == 0:
                raise ConfigError("smoothing windows must be odd and >= 1")
        if self.anchor.period < 2 or self.anchor.anchor_window < 1:
            raise ConfigError("anchor period must be >= 2 and anchor_window >= 1")

    @property
    def workers(self) -> int:
        return self.parallelism or os.cpu_count() or 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        keys = ", ".join(f"{where}.{k}" if where else k for k in unknown)
        raise ConfigError(f"unknown config key(s): {keys}")
    kwargs = {}
    for name, value in data.items():
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _build(hint, value, f"{where}.{name}" if where else name)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data)
