"""Experiment configuration: INI sections with dotted keys, strictly validated."""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cone_geometry import CostMatrix
from .market_models import ModelSpec
from .utility import UtilitySpec


class ConfigError(ValueError):
    pass


# allowed keys per section; patterns match indexed keys such as sigma.2 or corr.2.3
SCHEMA = {
    "model": [r"kind", r"d", r"T", r"n", r"switch_rate",
              r"(drift|sigma|s0|drift2|sigma2)\.\d+", r"corr\.\d+\.\d+"],
    "costs": [r"lambda", r"lambda\.\d+\.\d+"],
    "utility": [r"gamma", r"q"],
    "grid": [r"delta", r"kappa", r"max_rays", r"points", r"radius"],
    "value": [r"x", r"method", r"n"],
    "converge": [r"ns", r"mc_paths", r"mc_steps"],
    "repair": [r"m", r"margin", r"overdraw"],
    "run": [r"seed", r"workers", r"out"],
}
REQUIRED = {"model": ["d"]}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)  # "section.key" -> raw string

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       comment_prefixes=("#",))
        cp.optionxform = str  # keep key case (T)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        values = {}
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in cp.items(section):
                if not any(re.fullmatch(p, key) for p in SCHEMA[section]):
                    raise ConfigError(f"unknown key {section}.{key}")
                values[f"{section}.{key}"] = raw.strip()
        cfg = cls(values)
        for section, keys in REQUIRED.items():
            if section not in cp.sections():
                raise ConfigError(f"missing section [{section}]")
            for key in keys:
                if f"{section}.{key}" not in values:
                    raise ConfigError(f"missing required key {section}.{key}")
        return cfg

    @classmethod
    def read(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        return cls.parse(text)

    # typed accessors
    def get(self, key: str, default=None, cast=str):
        if key not in self.values and default is None:
            raise ConfigError(f"missing required key {key}")
        raw = self.values.get(key, default)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc

    def has(self, key: str) -> bool:
        return key in self.values

    def floats(self, key: str, sep: str = ";") -> np.ndarray:
        raw = self.get(key)
        try:
            return np.array([float(v) for v in re.split(rf"[{sep},]", raw) if v.strip()])
        except ValueError as exc:
            raise ConfigError(f"bad list for {key}: {raw!r}") from exc

    def ints(self, key: str, default: str | None = None) -> list[int]:
        raw = self.get(key, default)
        try:
            return [int(v) for v in re.split(r"[;,\s]+", raw) if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad integer list for {key}: {raw!r}") from exc

    @property
    def d(self) -> int:
        d = self.get("model.d", cast=int)
        if d < 2:
            raise ConfigError("model.d must be >= 2")
        return d

    def _indexed(self, name: str, default: float | None):
        d = self.d
        out = []
        for i in range(2, d + 1):
            key = f"model.{name}.{i}"
            if key in self.values:
                out.append(self.get(key, cast=float))
            elif default is None:
                return None
            else:
                out.append(default)
        for key in self.values:
            m = re.fullmatch(rf"model\.{name}\.(\d+)", key)
            if m and not 2 <= int(m.group(1)) <= d:
                raise ConfigError(f"{key}: asset index must lie in 2..{d}")
        return np.array(out)

    def model_spec(self, n: int | None = None) -> ModelSpec:
        d = self.d
        corr = np.eye(d - 1)
        for key in self.values:
            m = re.fullmatch(r"model\.corr\.(\d+)\.(\d+)", key)
            if m:
                i, j = int(m.group(1)) - 2, int(m.group(2)) - 2
                if not (0 <= i < d - 1 and 0 <= j < d - 1):
                    raise ConfigError(f"{key}: asset index must lie in 2..{d}")
                corr[i, j] = corr[j, i] = self.get(key, cast=float)
        try:
            return ModelSpec(
                kind=self.get("model.kind", "scaled_walk"),
                d=d,
                T=self.get("model.T", "1.0", float),
                drift=self._indexed("drift", 0.0),
                sigma=self._indexed("sigma", 0.2),
                corr=corr,
                s0=self._indexed("s0", 1.0),
                n=n if n is not None else self.get("model.n", "1", int),
                drift2=self._indexed("drift2", None),
                sigma2=self._indexed("sigma2", None),
                switch_rate=self.get("model.switch_rate", "0", float),
            )
        except ValueError as exc:
            raise ConfigError(f"invalid model: {exc}") from exc

    def costs(self) -> CostMatrix:
        d = self.d
        base = self.get("costs.lambda", "0", float)
        lam = np.full((d, d), base)
        np.fill_diagonal(lam, 0.0)
        for key in self.values:
            m = re.fullmatch(r"costs\.lambda\.(\d+)\.(\d+)", key)
            if m:
                i, j = int(m.group(1)), int(m.group(2))
                if not (1 <= i <= d and 1 <= j <= d):
                    raise ConfigError(f"{key}: index out of range for d={d}")
                lam[i - 1, j - 1] = self.get(key, cast=float)
        try:
            return CostMatrix(lam)
        except ValueError as exc:
            raise ConfigError(f"invalid cost matrix: {exc}") from exc

    def utility(self) -> UtilitySpec:
        q = self.get("utility.q", "nan", float)
        try:
            return UtilitySpec(self.get("utility.gamma", cast=float), None if np.isnan(q) else q)
        except ValueError as exc:
            raise ConfigError(f"invalid utility: {exc}") from exc

    def endowment(self) -> np.ndarray:
        x = self.floats("value.x")
        if x.size != self.d:
            raise ConfigError(f"value.x needs {self.d} entries")
        return x

    def radius(self) -> float | None:
        raw = self.get("grid.radius", "reachable")
        if raw == "reachable":
            return None
        try:
            r = float(raw)
        except ValueError as exc:
            raise ConfigError("grid.radius must be a number or 'reachable'") from exc
        if r <= 0:
            raise ConfigError("grid.radius must be positive")
        return r

    def positive_int(self, key: str, default: str) -> int:
        v = self.get(key, default, int)
        if v <= 0:
            raise ConfigError(f"{key} must be positive")
        return v
