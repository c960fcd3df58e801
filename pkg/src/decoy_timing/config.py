"""Session configuration: one TOML file drives every subcommand.

Keys mirror the field names of :class:`EmissionConfig` and
:class:`ChannelConfig`; times are in ps and rates in Hz.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import ChannelConfig, EmissionConfig, LaserId, sigma_from_fwhm

BUILTIN = ("oct31", "eve_oct31")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisConfig:
    bin_width: float = 10.0
    window_start: float | None = None
    window_end: float | None = None
    residual_window_sigmas: float = 4.0
    max_iterations: int = 200
    tolerance: float = 1e-9

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if self.window_start is not None and self.window_end is not None and self.window_end <= self.window_start:
            raise ValueError("window_end must come after window_start")
        if self.max_iterations < 1 or not self.tolerance > 0 or not self.residual_window_sigmas > 0:
            raise ValueError("fit tolerances must be positive")

    @property
    def window(self):
        if self.window_start is None and self.window_end is None:
            return None
        return (self.window_start, self.window_end)

    @property
    def fit_options(self) -> dict:
        return {
            "window_sigmas": self.residual_window_sigmas,
            "max_iter": self.max_iterations,
            "tol": self.tolerance,
        }


@dataclass(frozen=True)
class AttackConfig:
    signal_laser: str = "V_s"
    decoy_laser: str = "V_d"
    pulse_fwhm: float = 200.0
    eve_jitter_sigma: float = 0.0
    target_acceptance: float = 0.835
    width: float | None = None
    signal_center: float | None = None
    decoy_center: float | None = None
    reference_time: float = 0.0

    def __post_init__(self):
        a, b = LaserId.parse(self.signal_laser), LaserId.parse(self.decoy_laser)
        if a.polarization != b.polarization or a.intensity == b.intensity:
            raise ValueError("attack lasers must share a polarization and differ in intensity")
        if self.eve_jitter_sigma < 0:
            raise ValueError("eve_jitter_sigma must be non-negative")
        if not 0 < self.target_acceptance < 1:
            raise ValueError("target_acceptance must lie in (0, 1)")
        if self.width is not None and not self.width > 0:
            raise ValueError("width must be positive")
        sigma_from_fwhm(self.pulse_fwhm)

    @property
    def sigma(self) -> float:
        return math.hypot(sigma_from_fwhm(self.pulse_fwhm), self.eve_jitter_sigma)

    @property
    def lasers(self) -> tuple[LaserId, LaserId]:
        return LaserId.parse(self.signal_laser), LaserId.parse(self.decoy_laser)


@dataclass(frozen=True)
class SessionConfig:
    emission: EmissionConfig = field(default_factory=EmissionConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    seed: int = 0
    n_slots: int = 1_000_000
    session: str = ""
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if int(self.n_slots) != self.n_slots or self.n_slots < 1:
            raise ConfigError(f"n_slots must be a positive integer, got {self.n_slots}")

    @property
    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def override(self, **changes) -> "SessionConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        analysis = {k: changes.pop(k) for k in list(changes) if k in AnalysisConfig.__dataclass_fields__}
        try:
            cfg = replace(self, analysis=replace(self.analysis, **analysis), **changes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        raw = json.loads(json.dumps(self.raw, default=str))
        raw.update({k: v for k, v in changes.items()})
        raw.setdefault("analysis", {}).update(analysis)
        object.__setattr__(cfg, "raw", raw)
        return cfg


_TOP = {"session", "seed", "n_slots", "emission", "channel", "analysis", "attack"}


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        where = f"[{section}]" if section else "top level"
        raise ConfigError(f"unknown key(s) at {where}: {', '.join(unknown)}")


def _fields(cls):
    return cls.__dataclass_fields__.keys()


def from_dict(raw: dict) -> SessionConfig:
    _check_keys("", raw, _TOP)
    sections = {}
    for name, cls in (
        ("emission", EmissionConfig),
        ("channel", ChannelConfig),
        ("analysis", AnalysisConfig),
        ("attack", AttackConfig),
    ):
        sec = dict(raw.get(name, {}))
        _check_keys(name, sec, _fields(cls))
        try:
            sections[name] = cls(**sec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
    top = {k: raw[k] for k in ("session", "seed", "n_slots") if k in raw}
    return SessionConfig(**sections, **top, raw=raw)


def load_config(path: str | Path | None = None) -> SessionConfig:
    """Load a TOML session file, or a built-in scenario by name (default ``oct31``)."""
    if path is None or str(path) in BUILTIN:
        name = "oct31" if path is None else str(path)
        text = resources.files("decoy_timing").joinpath(f"data/{name}.toml").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(raw)
