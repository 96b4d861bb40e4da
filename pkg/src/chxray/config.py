"""Run configuration for the command line experiments.

A run is fully determined by its :class:`RunConfig`; all randomness comes
from ``numpy.random.default_rng(seed)``, i.e. the PCG64 bit generator seeded
through SeedSequence, which is reproducible across platforms and ports.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np

COMMANDS = ("geodesic", "jacobi", "transform", "harmonics", "reconstruct", "verify-all")

# operation parameters accepted per subcommand, with defaults
PARAM_DEFAULTS: dict[str, dict] = {
    "geodesic": {"x": [1.0, 0.0], "v": [0.0, 1.0], "T": 10.0, "step": None},
    "jacobi": {"x": [1.0, 0.0], "v": [0.0, 1.0], "T": 5.0, "step": None, "init": "v", "K0": None},
    "transform": {"seeds": "random:100:2", "tol": 1e-8},
    "harmonics": {"function": "random", "kmax": 6, "check": "contraction", "grid": "64:64",
                  "box": 3.0, "ntheta": 16, "samples": 1},
    "reconstruct": {"order": 0, "truth": None, "grid": "64:64", "seeds": 2000, "rtol": 1e-6,
                    "max_iter": 3000, "support_radius": 1.0, "ridge": 0.0},
    "verify-all": {"quick": True},
}


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass
class RunConfig:
    command: str
    model: str = "hyperbolic:1"
    field: object = None
    params: dict = dc_field(default_factory=dict)
    out_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        allowed = PARAM_DEFAULTS[self.command]
        unknown = sorted(set(self.params) - set(allowed))
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {self.command}: {', '.join(unknown)}")
        self.params = {**allowed, **self.params}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        if "command" not in data:
            raise ConfigError("config needs a 'command'")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(int(self.seed))
