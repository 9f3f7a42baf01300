"""Experiment configuration shared by the harness and the command line.

A config is one JSON object. Unknown keys are rejected, every field has a
default, and :meth:`ExperimentConfig.to_dict` writes all resolved fields so
that a run can be replayed from its echo.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .conformal import METHODS
from .dgp import DgpSpec

__all__ = ["ExperimentConfig", "ConfigError", "ESTIMATORS", "load_config"]

ESTIMATORS = ("knn", "linear", "oracle")

_DIAG_DEFAULTS = {
    "points": 50,
    "eta": 0.05,
    "truncation_eps": [0.02, 0.01, 0.005],
    "c_eps": None,
    "t_eps": None,
    "stability_delta": None,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dgp: DgpSpec | None = None
    csv: str | None = None
    response_column: str = "y"
    predict_csv: str | None = None
    n: int = 1000
    replicates: int = 100
    alpha: float = 0.1
    epsilon: float = 0.005
    include_half: bool = True
    methods: tuple[str, ...] = ("TA", "EqualTailCQR", "ResidualSC")
    estimator: str = "knn"
    estimator_params: dict = field(default_factory=dict)
    fractions: tuple[float, float, float] = (0.5, 0.25, 0.25)
    support: tuple[float, float] | None = None
    seed: int = 0
    out: str = "out"
    threads: int = 1
    x: tuple[float, ...] = (0.0,)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if self.support is not None:
            object.__setattr__(self, "support", tuple(float(v) for v in self.support))
        unknown = set(self.diagnostics) - set(_DIAG_DEFAULTS)
        if unknown:
            raise ConfigError(f"diagnostics: unknown keys {sorted(unknown)}")
        object.__setattr__(self, "diagnostics", {**_DIAG_DEFAULTS, **self.diagnostics})
        if isinstance(self.dgp, dict):
            object.__setattr__(self, "dgp", _field("dgp", DgpSpec.from_dict, self.dgp))
        self.validate()

    def validate(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha: must lie in (0, 1), got {self.alpha}")
        if not 0 < self.epsilon < self.alpha / 2:
            raise ConfigError(f"epsilon: must lie in (0, alpha/2), got {self.epsilon}")
        if not self.methods:
            raise ConfigError("methods: must be nonempty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"methods: unknown {bad}; expected a subset of {list(METHODS)}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator: unknown {self.estimator!r}; expected one of {ESTIMATORS}")
        if self.estimator == "oracle" and self.dgp is None:
            raise ConfigError("estimator: 'oracle' needs a dgp with a known law")
        if self.n < 1:
            raise ConfigError(f"n: must be positive, got {self.n}")
        if self.replicates < 1:
            raise ConfigError(f"replicates: must be positive, got {self.replicates}")
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions) \
                or abs(sum(self.fractions) - 1) > 1e-9:
            raise ConfigError(f"fractions: need three positive values summing to 1, got {self.fractions}")
        if self.support is not None and (len(self.support) != 2 or not self.support[0] < self.support[1]):
            raise ConfigError(f"support: need [lower, upper] with lower < upper, got {self.support}")
        if self.threads < 1:
            raise ConfigError(f"threads: must be positive, got {self.threads}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed: must be a 64-bit unsigned integer, got {self.seed}")
        if self.dgp is not None and self.csv is not None:
            raise ConfigError("dgp and csv are mutually exclusive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dgp"] = None if self.dgp is None else self.dgp.to_dict()
        d["methods"] = list(self.methods)
        d["fractions"] = list(self.fractions)
        d["support"] = None if self.support is None else list(self.support)
        d["x"] = list(self.x)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        kw = dict(d)
        if kw.get("dgp") is not None and not isinstance(kw["dgp"], DgpSpec):
            kw["dgp"] = _field("dgp", DgpSpec.from_dict, kw["dgp"])
        for name, typ in (("n", int), ("replicates", int), ("seed", int), ("threads", int),
                          ("alpha", float), ("epsilon", float)):
            if name in kw:
                kw[name] = _field(name, typ, kw[name])
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _field(name, conv, value):
    try:
        if conv is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(f"expected an integer, got {value}")
        return conv(value)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(raw)
