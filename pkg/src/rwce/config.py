"""Experiment configuration: a single JSON document, validated on load.

Weights and environments are selected by name plus numeric parameters::

    {"schema_version": "1",
     "graph": {"family": "line", "params": {}},
     "weights": {"kind": "geometric", "lambda": 2},
     "environment": {"kind": "scheduled", "amplitude": 0.5, "rate": 0.5, "p": 4},
     "radii": [1, 2, 3], "horizon": 1000, "trials": 100, "seed": 1}
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from .environment import (BumpEnvironment, Environment, LinearlyReinforced, ListSchedule, OnceReinforced,
                          RandomSchedule, ScheduledEnvironment, StaticEnvironment)
from .errors import RWCEError
from .graphs import FAMILIES, GraphFamily, as_weights, ball, geometric_weights, make_family

SCHEMA_VERSION = "1"


class ConfigError(RWCEError, ValueError):
    """The configuration document is malformed or fails validation."""


def _tuplify(x):
    if isinstance(x, list):
        return tuple(_tuplify(v) for v in x)
    return x


def weight_spec(spec: dict | None):
    """Turn a weights spec into something :func:`rwce.graphs.as_weights` accepts."""
    if spec is None:
        return None
    kind = spec.get("kind", "unit")
    if kind == "unit":
        return None
    if kind == "constant":
        return float(spec["value"])
    if kind == "geometric":
        return geometric_weights(float(spec["lambda"]))
    if kind == "edges":
        return {(_tuplify(u), _tuplify(v)): float(c) for u, v, c in spec["values"]}
    raise ConfigError(f"unknown weights kind {kind!r}")


def build_environment(spec: dict | None, weights) -> Environment:
    spec = dict(spec or {"kind": "static"})
    kind = spec.pop("kind", "static")
    try:
        if kind == "static":
            return StaticEnvironment(weights)
        if kind == "scheduled":
            return ScheduledEnvironment(weights, **spec)
        if kind == "bump":
            spec["edge"] = tuple(_tuplify(v) for v in spec.get("edge", (0, 1)))
            return BumpEnvironment(weights, **spec)
        if kind == "list":
            return ListSchedule([weight_spec(c) if isinstance(c, dict) else c for c in spec["configs"]])
        if kind == "random_schedule":
            return RandomSchedule([(float(o["probability"]), build_environment(o["environment"], weights))
                                   for o in spec["options"]])
        if kind == "once_reinforced":
            return OnceReinforced(initial=weights if weights is not None else 1.0, **spec)
        if kind == "linear_reinforced":
            return LinearlyReinforced(initial=weights if weights is not None else 1.0, **spec)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for environment {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown environment kind {kind!r}")


@dataclass
class ExperimentConfig:
    graph: dict = field(default_factory=lambda: {"family": "line", "params": {}})
    weights: dict = field(default_factory=lambda: {"kind": "unit"})
    environment: dict = field(default_factory=lambda: {"kind": "static"})
    origin: Any = None
    radii: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    horizon: int = 1000
    trials: int = 100
    seed: int = 0
    max_radius: int | None = None
    on_truncation: str = "stop"
    probe_radius: int = 6
    tolerances: dict = field(default_factory=lambda: {"solver": 1e-10, "mc_sigma": 4.0})
    verify: dict = field(default_factory=lambda: {"scale": "full"})
    outputs: dict = field(default_factory=lambda: {"dir": "out", "format": "json"})
    schema_version: str = SCHEMA_VERSION

    # -- conversion ----------------------------------------------------------

    def to_dict(self) -> dict:
        return copy.deepcopy(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        cfg = cls(**copy.deepcopy(d))
        cfg.validate()
        return cfg

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        if str(self.schema_version) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version!r}")
        if not isinstance(self.graph, dict) or self.graph.get("family") not in FAMILIES:
            raise ConfigError(f"graph.family must be one of {sorted(FAMILIES)}")
        for name in ("horizon", "trials", "probe_radius"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not isinstance(self.radii, list) or not all(isinstance(r, int) and r >= 1 for r in self.radii):
            raise ConfigError("radii must be a list of integers >= 1")
        if self.radii != sorted(self.radii):
            raise ConfigError("radii must be sorted ascending")
        if self.max_radius is not None and (not isinstance(self.max_radius, int) or self.max_radius < 2):
            raise ConfigError("max_radius must be null or an integer >= 2")
        if self.on_truncation not in ("stop", "raise"):
            raise ConfigError("on_truncation must be 'stop' or 'raise'")
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"tolerance {k!r} must be positive")
        if self.verify.get("scale", "full") not in ("full", "quick"):
            raise ConfigError("verify.scale must be 'full' or 'quick'")
        if self.outputs.get("format", "json") not in ("json", "csv"):
            raise ConfigError("outputs.format must be 'json' or 'csv'")
        # build everything once so bad weights surface here
        try:
            fam = self.family()
            b = ball(fam, 1)
            as_weights(b, self.weight_fn())
            env = self.env()
            env.initial(b)
        except ConfigError:
            raise
        except (RWCEError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    # -- builders -------------------------------------------------------------

    def family(self) -> GraphFamily:
        params = dict(self.graph.get("params", {}))
        if self.graph["family"] == "explicit" and "edges" in params:
            params["edges"] = [tuple(_tuplify(v) for v in e) for e in params["edges"]]
            if "origin" in params:
                params["origin"] = _tuplify(params["origin"])
        fam = make_family(self.graph["family"], **params)
        if self.origin is not None:
            fam = dataclasses.replace(fam, origin=_tuplify(self.origin), _cache={})
        return fam

    def weight_fn(self):
        return weight_spec(self.weights)

    def env(self) -> Environment:
        return build_environment(self.environment, self.weight_fn())


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(d)
