"""Training configuration with a strict JSON schema."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from ..data import OrdinalGaussianSpec


class ConfigError(ValueError):
    pass


ARCH_KEYS = {"hidden", "E", "F", "activation"}
GENERATOR_KEYS = {f.name for f in fields(OrdinalGaussianSpec)}


@dataclass
class TrainConfig:
    dataset: str | None = None
    generator: dict | None = None
    arch: dict = field(default_factory=lambda: {"hidden": [128, 128, 128], "E": 16, "F": 8,
                                                "activation": "silu"})
    beta1: float = 1e-4
    betaT: float = 0.02
    T: int = 1000
    iterations: int = 20_000
    batch_size: int = 32
    lr: float = 1e-4
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    lambda_mode: Any = "time_variant"
    metric: str = "squared"
    triplet_mode: str = "all"
    noise_pairing: str = "independent"
    label_drop: float = 0.1
    seed: int = 0
    # inference settings carried with the run
    ddim_steps: int = 100
    guidance: float = 2.0

    def __post_init__(self):
        self.adam_betas = tuple(self.adam_betas)
        self.validate()

    def validate(self) -> None:
        if (self.dataset is None) == (self.generator is None):
            raise ConfigError("give exactly one of 'dataset' or 'generator'")
        if self.generator is not None:
            unknown = set(self.generator) - GENERATOR_KEYS
            if unknown:
                raise ConfigError(f"unknown generator keys: {sorted(unknown)}")
            try:
                OrdinalGaussianSpec(**self.generator)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad generator spec: {e}") from None
        unknown = set(self.arch) - ARCH_KEYS
        if unknown:
            raise ConfigError(f"unknown arch keys: {sorted(unknown)}")
        for name in ("beta1", "betaT", "lr", "adam_eps", "label_drop", "guidance"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{name} must be a number")
        for name in ("dataset", "metric", "triplet_mode", "noise_pairing"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, str):
                raise ConfigError(f"{name} must be a string")
        for name in ("lr", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not all(0 <= b < 1 for b in self.adam_betas) or len(self.adam_betas) != 2:
            raise ConfigError("adam_betas must be two values in [0, 1)")
        if not (0 < self.beta1 <= self.betaT < 1):
            raise ConfigError("need 0 < beta1 <= betaT < 1")
        for name in ("T", "iterations", "batch_size", "ddim_steps"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < (0 if name == "iterations" else 1):
                raise ConfigError(f"{name} must be a positive integer")
        if self.T < 2 or self.ddim_steps > self.T:
            raise ConfigError("need T >= 2 and ddim_steps <= T")
        if not 0 <= self.label_drop < 1:
            raise ConfigError("label_drop must lie in [0, 1)")
        if self.guidance < 0:
            raise ConfigError("guidance must be nonnegative")
        if self.metric not in ("squared", "euclidean"):
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.triplet_mode not in ("all", "random"):
            raise ConfigError(f"unknown triplet_mode {self.triplet_mode!r}")
        if self.noise_pairing not in ("independent", "shared"):
            raise ConfigError(f"unknown noise_pairing {self.noise_pairing!r}")
        lm = self.lambda_mode
        if isinstance(lm, dict):
            if set(lm) != {"constant"} or not isinstance(lm["constant"], (int, float)) or lm["constant"] < 0:
                raise ConfigError("lambda_mode object must be {\"constant\": <nonnegative number>}")
        elif lm not in ("time_variant", "off"):
            raise ConfigError(f"unknown lambda_mode {lm!r}")
        if self.generator is not None:
            C = OrdinalGaussianSpec(**self.generator).C
            if self.batch_size % C:
                raise ConfigError(f"batch_size {self.batch_size} is not divisible by C={C}")

    @property
    def lambda_value(self):
        """The lambda mode in the form ``diffusion.lambda_weight`` expects."""
        lm = self.lambda_mode
        return float(lm["constant"]) if isinstance(lm, dict) else lm

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: invalid JSON: {e}") from None
        return cls.from_dict(d)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
