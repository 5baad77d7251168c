"""Scenario descriptions and their YAML representation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import yaml

from .distributions import DistSpec, Geometric, from_dict as dist_from_dict
from .optimizer import SourceParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SourceSpec:
    rho: float
    cost: float
    gen: DistSpec
    service: DistSpec

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.cost >= 0:
            raise ValueError("cost must be nonnegative")
        if not self.gen.mean() > 0:
            raise ValueError("inter-generation times must have a positive mean")

    def params(self) -> SourceParams:
        return SourceParams(self.rho, self.cost, self.gen.mean(), self.gen.variance(),
                            self.service.mean())

    def to_dict(self) -> dict:
        return {"rho": self.rho, "cost": self.cost,
                "gen": self.gen.to_dict(), "service": self.service.to_dict()}


@dataclass(frozen=True)
class SlotSource:
    """Slotted source: per-slot generation and success probabilities."""

    rho: float
    gen_prob: float
    success_prob: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        for name in ("gen_prob", "success_prob"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v!r}")

    def params(self) -> SourceParams:
        g = Geometric(self.gen_prob)
        return SourceParams(self.rho, 0.0, g.mean(), g.variance(), 1 / self.success_prob)

    def to_dict(self) -> dict:
        return {"rho": self.rho, "gen_prob": self.gen_prob, "success_prob": self.success_prob}


POLICY_KINDS = ("sr", "sr_wc", "sr_preemptive", "th", "tp", "eps", "eps_prime",
                "lcfs_preemptive", "greedy", "never", "sr_discrete", "rd", "mw")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "sr"
    marking_probs: Optional[tuple] = None
    thresholds: Optional[tuple] = None
    epsilon: Optional[float] = None
    q: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        for p in self.marking_probs or ():
            if not 0 <= p <= 1:
                raise ValueError("marking probabilities must lie in [0, 1]")
        for a in self.thresholds or ():
            if not a >= 0:
                raise ValueError("thresholds must be nonnegative")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.q is not None and (min(self.q) < 0 or sum(self.q) <= 0):
            raise ValueError("q must be nonnegative with a positive sum")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for name in ("marking_probs", "thresholds", "q"):
            v = getattr(self, name)
            if v is not None:
                out[name] = list(v)
        if self.epsilon is not None:
            out["epsilon"] = self.epsilon
        return out

    @classmethod
    def from_dict(cls, record) -> "PolicyConfig":
        if isinstance(record, str):
            record = {"kind": record}
        if not isinstance(record, dict):
            raise ValueError(f"policy must be a record, got {record!r}")
        known = {"kind", "marking_probs", "thresholds", "epsilon", "q"}
        extra = set(record) - known
        if extra:
            raise ValueError(f"unexpected policy fields {sorted(extra)}")
        kw = dict(record)
        for name in ("marking_probs", "thresholds", "q"):
            if kw.get(name) is not None:
                v = kw[name]
                kw[name] = tuple(float(x) for x in (v if isinstance(v, (list, tuple)) else [v]))
        if kw.get("epsilon") is not None:
            kw["epsilon"] = float(kw["epsilon"])
        return cls(**kw)


@dataclass(frozen=True)
class Scenario:
    sources: tuple
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    horizon: float = 1e5
    replications: int = 1
    seed: int = 0
    slotted: bool = False

    def __post_init__(self):
        if len(self.sources) < 1:
            raise ValueError("a scenario needs at least one source")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be positive")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        kind = SlotSource if self.slotted else SourceSpec
        if not all(isinstance(s, kind) for s in self.sources):
            raise ValueError("source records do not match the slotted flag")

    @property
    def n(self) -> int:
        return len(self.sources)

    def params(self) -> list[SourceParams]:
        return [s.params() for s in self.sources]

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "horizon": self.horizon,
            "replications": self.replications,
            "slotted": self.slotted,
            "policy": self.policy.to_dict(),
            "sources": [s.to_dict() for s in self.sources],
        }

    @classmethod
    def from_dict(cls, data) -> "Scenario":
        try:
            return cls._from_dict(data)
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def _from_dict(cls, data) -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        known = {"seed", "horizon", "replications", "slotted", "policy", "sources"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unexpected top-level fields {sorted(extra)}")
        slotted = bool(data.get("slotted", False))
        raw = data.get("sources")
        if not isinstance(raw, list) or not raw:
            raise ConfigError("'sources' must be a non-empty list")
        sources = []
        for i, rec in enumerate(raw):
            if not isinstance(rec, dict):
                raise ConfigError(f"source {i} must be a mapping")
            if slotted:
                sources.append(SlotSource(float(rec["rho"]), float(rec["gen_prob"]),
                                          float(rec["success_prob"])))
            else:
                sources.append(SourceSpec(float(rec["rho"]), float(rec.get("cost", 0.0)),
                                          dist_from_dict(rec["gen"]),
                                          dist_from_dict(rec["service"])))
        default_kind = "sr_discrete" if slotted else "sr"
        policy = PolicyConfig.from_dict(data.get("policy", {"kind": default_kind}))
        horizon = data.get("horizon", 1e5)
        horizon = int(horizon) if slotted else float(horizon)
        return cls(
            sources=tuple(sources),
            policy=policy,
            horizon=horizon,
            replications=int(data.get("replications", 1)),
            seed=int(data.get("seed", 0)),
            slotted=slotted,
        )


def loads(text: str) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return Scenario.from_dict(data)


def dumps(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False)


def load(path: Union[str, Path]) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return loads(text)
