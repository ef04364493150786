"""Run configuration as flat INI text with one section per module.

Example::

    [run]
    seed = 7
    workers = 2

    [encoder]
    d_cat = 10000
    numeric_encoder = sjlt_relaxed

    [train]
    validate_every = 30000

    [synthetic]
    records = 140000

Unknown keys are rejected so that typos do not silently fall back to
defaults.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from hdhash.core import EncoderConfig, HDError
from hdhash.ingest import SyntheticSpec


class ConfigError(HDError):
    """Invalid or unreadable configuration."""


@dataclass(frozen=True)
class TrainSettings:
    step_size: float = 0.05
    batch_size: int = 256
    validate_every: int = 300_000
    patience: int = 3
    max_records: int | None = None
    weight_decay: float = 0.0


@dataclass(frozen=True)
class RunSettings:
    seed: int | None = None
    workers: int = 1
    input: str | None = None
    output: str | None = None
    checkpoint: str | None = None
    metrics: str | None = None
    chunk_size: int = 100_000
    split: str = "test"


@dataclass(frozen=True)
class RunConfig:
    run: RunSettings = field(default_factory=RunSettings)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    extra: dict = field(default_factory=dict)

    def with_seed(self, seed: int | None) -> "RunConfig":
        """Apply a global seed to the encoder and the synthetic generator."""
        if seed is None:
            seed = self.run.seed
        if seed is None:
            return self
        return replace(
            self,
            run=replace(self.run, seed=seed),
            encoder=replace(self.encoder, master_seed=seed),
            synthetic=replace(self.synthetic, seed=seed),
        )

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for name in ("run", "encoder", "train", "synthetic"):
            obj = getattr(self, name)
            cp[name] = {f.name: _fmt(getattr(obj, f.name)) for f in fields(obj) if getattr(obj, f.name) is not None}
        for section, values in self.extra.items():
            cp[section] = {k: str(v) for k, v in values.items()}
        lines = []
        for section in cp.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in cp[section].items())
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "run": dataclasses.asdict(self.run),
            "encoder": self.encoder.to_dict(),
            "train": dataclasses.asdict(self.train),
            "synthetic": dataclasses.asdict(self.synthetic),
        }


def _fmt(v) -> str:
    if hasattr(v, "value"):
        return str(v.value)
    return str(v)


def _coerce(cls, key: str, raw: str):
    types = {f.name: f.type for f in fields(cls)}
    if key not in types:
        raise ConfigError(f"unknown key {key!r} for section {cls.__name__}")
    t = types[key]
    if "None" in t and raw.strip().lower() in ("", "none"):
        return None
    if t.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if t.startswith("int"):
        return int(float(raw)) if "e" in raw.lower() else int(raw, 0)
    if t.startswith("float"):
        return float(raw)
    return raw


def _build(cls, section: dict, base=None):
    try:
        kw = {k: _coerce(cls, k, v) for k, v in section.items()}
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid value in [{cls.__name__}]: {e}") from None
    try:
        return replace(base, **kw) if base is not None else cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [{cls.__name__}] settings: {e}") from None


def parse_run_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    sections = {
        "run": RunSettings,
        "encoder": EncoderConfig,
        "train": TrainSettings,
        "synthetic": SyntheticSpec,
    }
    built = {}
    extra = {}
    for name in cp.sections():
        if name in sections:
            built[name] = _build(sections[name], dict(cp[name]))
        else:
            extra[name] = dict(cp[name])
    return RunConfig(**built, extra=extra)


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_run_config(text)
