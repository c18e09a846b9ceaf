"""INI configuration with strict keys and ``NATIVERES_<SECTION>_<KEY>`` overrides.

Example::

    [budget]
    max_tokens = 4096
    max_res = 1792

    [packer]
    capacity = 5120
    policy = first_fit_decreasing

Every key has a default, so a missing file yields the default config.
Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import os
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from typing import Any

from .budget import BudgetConfig
from .encoder import EncoderConfig
from .errors import ConfigError, ValidationError
from .packer import DEFAULT_CAPACITY, POLICIES
from .scoring import ScoringConfig
from .taxonomy import RatioBin

ENV_PREFIX = "NATIVERES_"


@dataclass(frozen=True)
class PackerConfig:
    capacity: int = DEFAULT_CAPACITY
    policy: str = "first_fit_decreasing"
    unit: str = "tokens"  # "tokens" (post-merge) or "patches" (pre-merge)

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValidationError("packer capacity must be >= 1")
        if self.policy not in POLICIES:
            raise ValidationError(f"packer policy must be one of {', '.join(POLICIES)}")
        if self.unit not in ("tokens", "patches"):
            raise ValidationError("packer unit must be 'tokens' or 'patches'")


@dataclass(frozen=True)
class EncodeConfig:
    """Settings for the ``encode`` subcommand on top of the network shape."""

    sample: int = 4
    max_tokens: int = 16
    capacity: int = 256


@dataclass(frozen=True)
class ReportConfig:
    sigma: str = "population"
    row_order: tuple[RatioBin, ...] = tuple(RatioBin)
    sensitivity_threshold: float = 0.05
    balance_tolerance: float = 0.05

    def __post_init__(self) -> None:
        if self.sigma not in ("population", "sample"):
            raise ValidationError("report sigma must be 'population' or 'sample'")
        if sorted(self.row_order) != sorted(RatioBin):
            raise ValidationError("report row_order must be a permutation of BW, AW, NM, AH, BH")


@dataclass(frozen=True)
class Config:
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    packer: PackerConfig = field(default_factory=PackerConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    encode: EncodeConfig = field(default_factory=EncodeConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    report: ReportConfig = field(default_factory=ReportConfig)


def _convert(kind: str, raw: str, where: str) -> Any:
    # ``kind`` is the (string) annotation of the dataclass field.
    text = raw.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "int | None":
            return None if text.lower() in ("", "none") else int(text)
        if kind == "str | None":
            return None if text.lower() in ("", "none") else text
        if kind == "tuple[RatioBin, ...]":
            return tuple(RatioBin[p.strip().upper()] for p in text.split(","))
        return text
    except (ValueError, KeyError):
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None


def _section_values(cls: type, values: Mapping[str, str], section: str) -> Any:
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown key [{section}] {key}")
        kwargs[key] = _convert(known[key].type, raw, f"[{section}] {key}")
    try:
        return cls(**kwargs)
    except ValidationError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def load_config(path: str | os.PathLike[str] | None = None, environ: Mapping[str, str] | None = None) -> Config:
    """Load defaults, then the INI file (if given and present), then env overrides."""
    environ = os.environ if environ is None else environ
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    if path is not None and os.path.exists(path):
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None

    sections = {f.name: f for f in fields(Config)}
    raw: dict[str, dict[str, str]] = {name: {} for name in sections}
    for section in parser.sections():
        if section not in sections:
            raise ConfigError(f"unknown config section [{section}]")
        raw[section].update(parser[section])
    for key, value in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        rest = key[len(ENV_PREFIX):].lower()
        section = next((s for s in sections if rest.startswith(s + "_")), None)
        if section is None:
            raise ConfigError(f"environment override {key} names no config section")
        raw[section][rest[len(section) + 1:]] = value

    cfg_types = {
        "budget": BudgetConfig,
        "packer": PackerConfig,
        "encoder": EncoderConfig,
        "encode": EncodeConfig,
        "scoring": ScoringConfig,
        "report": ReportConfig,
    }
    return Config(**{name: _section_values(cfg_types[name], raw[name], name) for name in sections})
