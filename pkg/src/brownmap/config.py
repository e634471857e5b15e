"""Experiment configuration stored as a single INI-style key-value file."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

EXPERIMENTS = ("confluence", "dimension", "cutlocus", "networks", "stars", "convergence", "identity")
SECTION = "experiment"


class ConfigError(ValueError):
    """Parameter outside its documented range, or an unreadable config file."""


@dataclass
class ExperimentConfig:
    experiment: str = "dimension"
    n: int = 1000
    m: int = 1024
    seeds: int = 1
    seed_base: int = 0
    samples: int = 100
    eps: float = 0.3
    beta: float = 0.1
    tol: float | None = None
    link_cost: str = "label"
    fit_lo: float | None = None
    fit_hi: float | None = None
    cap: int = 64
    anchors: int = 20
    radius: int | None = None
    fixture: str = ""
    oracle: bool = False
    out: str = "results"
    maps_dir: str = ""
    sample_inline: bool = True
    extra: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        def need(ok: bool, msg: str) -> None:
            if not ok:
                raise ConfigError(msg)

        need(self.experiment in EXPERIMENTS, f"unknown experiment {self.experiment!r}")
        need(self.n >= 1, "n must be >= 1")
        need(self.m >= 2, "m must be >= 2")
        need(self.seeds >= 1, "seeds must be >= 1")
        need(self.seed_base >= 0, "seed_base must be >= 0")
        need(self.samples >= 1, "samples must be >= 1")
        need(0 < self.eps < 0.5, "eps must lie in (0, 1/2)")
        need(self.beta > 0, "beta must be positive")
        need(self.tol is None or self.tol >= 0, "tol must be nonnegative")
        need(self.link_cost in ("label", "zero"), "link_cost must be 'label' or 'zero'")
        need(self.cap >= 1, "cap must be >= 1")
        need(self.anchors >= 1, "anchors must be >= 1")
        need(self.radius is None or self.radius >= 2, "radius must be >= 2")
        need(self.fixture in ("", "powerlaw"), "fixture must be empty or 'powerlaw'")
        if self.fit_lo is not None and self.fit_hi is not None:
            need(self.fit_lo < self.fit_hi, "fit window must satisfy fit_lo < fit_hi")
        return self

    def params(self) -> dict:
        """Parameters identifying a result, without paths or seed bookkeeping."""
        skip = {"out", "maps_dir", "seeds", "seed_base", "n", "experiment", "extra"}
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in skip}
        d.update(self.extra)
        return d

    def seed_list(self) -> list[int]:
        return list(range(self.seed_base, self.seed_base + self.seeds))

    def write(self, path: str | Path) -> None:
        cp = configparser.ConfigParser(interpolation=None)
        cp[SECTION] = {f.name: _dump(getattr(self, f.name)) for f in fields(self) if f.name != "extra"}
        if self.extra:
            cp["extra"] = {k: _dump(v) for k, v in self.extra.items()}
        with open(path, "w") as fh:
            cp.write(fh)

    @classmethod
    def read(cls, path: str | Path) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            if not cp.read(path):
                raise ConfigError(f"cannot read config {path}")
        except configparser.Error as err:
            raise ConfigError(f"{path}: {err}") from None
        if SECTION not in cp:
            raise ConfigError(f"{path}: missing [{SECTION}] section")
        kw = {}
        types = {f.name: f for f in fields(cls)}
        for key, raw in cp[SECTION].items():
            if key not in types or key == "extra":
                raise ConfigError(f"{path}: unknown key {key!r}")
            kw[key] = _load(raw, types[key])
        if "extra" in cp:
            kw["extra"] = {k: _guess(v) for k, v in cp["extra"].items()}
        return cls(**kw).validate()

    def replace(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes).validate()


def _dump(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _load(raw: str, f: dataclasses.Field):
    t = str(f.type)
    raw = raw.strip()
    try:
        if "None" in t and raw == "":
            return None
        if t.startswith("bool"):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if t.startswith("int"):
            return int(raw)
        if t.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {f.name}") from None
    return raw


def _guess(raw: str):
    for conv in (int, float):
        try:
            return conv(raw)
        except ValueError:
            pass
    return raw
