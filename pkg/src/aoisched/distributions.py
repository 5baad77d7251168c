"""Parametric distributions for inter-generation and transmission times.

Each family is an immutable dataclass with exact analytic moments, a
vectorized sampler and a CDF.  ``from_dict``/``to_dict`` convert to the tagged
records used in scenario files, e.g. ``{"kind": "exponential", "mean": 2.0}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterator

import numpy as np
from scipy import special

from .rng import RngStream


class DistSpec:
    kind: str = ""

    def mean(self) -> float:
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    def moments(self) -> tuple[float, float]:
        return self.mean(), self.variance()

    def second_moment(self) -> float:
        m, v = self.moments()
        return v + m * m

    def sample_array(self, gen: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def cdf_left(self, x):
        """P(X < x).  Equals ``cdf`` for continuous laws."""
        return self.cdf(x)

    def sample(self, rng: RngStream) -> float:
        return float(self.sample_array(rng.generator, 1)[0])

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        return out


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")


def _nonneg(name, value):
    if not (value >= 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be a nonnegative finite number, got {value!r}")


def _probability(name, value, allow_zero=True):
    lo_ok = value >= 0 if allow_zero else value > 0
    if not (lo_ok and value <= 1):
        raise ValueError(f"{name} must be a probability, got {value!r}")


@dataclass(frozen=True)
class Exponential(DistSpec):
    mean_: float
    kind = "exponential"

    def __post_init__(self):
        _positive("mean", self.mean_)

    def mean(self):
        return float(self.mean_)

    def variance(self):
        return float(self.mean_) ** 2

    def sample_array(self, gen, n):
        return gen.exponential(self.mean_, n)

    def cdf(self, x):
        return -np.expm1(-np.maximum(np.asarray(x, dtype=float), 0.0) / self.mean_)

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean_}


@dataclass(frozen=True)
class Uniform(DistSpec):
    a: float
    b: float
    kind = "uniform"

    def __post_init__(self):
        _nonneg("a", self.a)
        _nonneg("b", self.b)
        if self.b < self.a:
            raise ValueError("uniform requires a <= b")

    def mean(self):
        return (self.a + self.b) / 2

    def variance(self):
        return (self.b - self.a) ** 2 / 12

    def sample_array(self, gen, n):
        return gen.uniform(self.a, self.b, n)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.b == self.a:
            return (x >= self.a).astype(float)
        return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)

    def cdf_left(self, x):
        x = np.asarray(x, dtype=float)
        if self.b == self.a:
            return (x > self.a).astype(float)
        return self.cdf(x)


@dataclass(frozen=True)
class Rayleigh(DistSpec):
    scale: float
    kind = "rayleigh"

    def __post_init__(self):
        _positive("scale", self.scale)

    def mean(self):
        return self.scale * math.sqrt(math.pi / 2)

    def variance(self):
        return self.scale ** 2 * (4 - math.pi) / 2

    def sample_array(self, gen, n):
        return gen.rayleigh(self.scale, n)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-x * x / (2 * self.scale ** 2))


@dataclass(frozen=True)
class LogNormal(DistSpec):
    """Log-normal law parameterized by its own mean and variance."""

    mean_: float
    variance_: float
    kind = "lognormal"

    def __post_init__(self):
        _positive("mean", self.mean_)
        _positive("variance", self.variance_)

    @property
    def shape(self) -> float:
        return math.sqrt(math.log1p(self.variance_ / self.mean_ ** 2))

    @property
    def location(self) -> float:
        return math.log(self.mean_) - self.shape ** 2 / 2

    def mean(self):
        return float(self.mean_)

    def variance(self):
        return float(self.variance_)

    def sample_array(self, gen, n):
        return gen.lognormal(self.location, self.shape, n)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(x, 0.0)) - self.location) / (self.shape * math.sqrt(2))
        return 0.5 * special.erfc(-z)

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean_, "variance": self.variance_}


@dataclass(frozen=True)
class TwoPoint(DistSpec):
    lo: float
    hi: float
    prob_hi: float
    kind = "twopoint"

    def __post_init__(self):
        _nonneg("lo", self.lo)
        _nonneg("hi", self.hi)
        _probability("prob_hi", self.prob_hi)

    def mean(self):
        return self.lo + self.prob_hi * (self.hi - self.lo)

    def variance(self):
        return self.prob_hi * (1 - self.prob_hi) * (self.hi - self.lo) ** 2

    def sample_array(self, gen, n):
        return np.where(gen.random(n) < self.prob_hi, self.hi, self.lo).astype(float)

    def _step(self, x, strict):
        x = np.asarray(x, dtype=float)
        below = (x > self.lo) if strict else (x >= self.lo)
        above = (x > self.hi) if strict else (x >= self.hi)
        return below * (1 - self.prob_hi) + above * self.prob_hi

    def cdf(self, x):
        return self._step(x, strict=False)

    def cdf_left(self, x):
        return self._step(x, strict=True)


@dataclass(frozen=True)
class Deterministic(DistSpec):
    value: float
    kind = "deterministic"

    def __post_init__(self):
        _nonneg("value", self.value)

    def mean(self):
        return float(self.value)

    def variance(self):
        return 0.0

    def sample_array(self, gen, n):
        return np.full(n, float(self.value))

    def sample(self, rng):
        return float(self.value)

    def cdf(self, x):
        return (np.asarray(x, dtype=float) >= self.value).astype(float)

    def cdf_left(self, x):
        return (np.asarray(x, dtype=float) > self.value).astype(float)


@dataclass(frozen=True)
class Geometric(DistSpec):
    """Number of Bernoulli trials up to and including the first success."""

    success_prob: float
    kind = "geometric"

    def __post_init__(self):
        _probability("success_prob", self.success_prob, allow_zero=False)

    def mean(self):
        return 1 / self.success_prob

    def variance(self):
        return (1 - self.success_prob) / self.success_prob ** 2

    def sample_array(self, gen, n):
        return gen.geometric(self.success_prob, n).astype(float)

    def cdf(self, x):
        k = np.maximum(np.floor(np.asarray(x, dtype=float)), 0.0)
        return 1.0 - (1.0 - self.success_prob) ** k

    def cdf_left(self, x):
        x = np.asarray(x, dtype=float)
        return self.cdf(np.ceil(x) - 1)


_KINDS = {cls.kind: cls for cls in (Exponential, Uniform, Rayleigh, LogNormal,
                                   TwoPoint, Deterministic, Geometric)}

_ALIASES = {"mean": "mean_", "variance": "variance_"}


def from_dict(record: dict) -> DistSpec:
    """Build a spec from a tagged record; raises ValueError on bad input."""
    if not isinstance(record, dict) or "kind" not in record:
        raise ValueError(f"distribution record needs a 'kind': {record!r}")
    kind = str(record["kind"]).lower()
    if kind not in _KINDS:
        raise ValueError(f"unknown distribution kind {kind!r}; expected one of {sorted(_KINDS)}")
    cls = _KINDS[kind]
    names = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in record.items():
        if key == "kind":
            continue
        name = _ALIASES.get(key, key)
        if name not in names:
            raise ValueError(f"unexpected field {key!r} for {kind}")
        kwargs[name] = float(value)
    missing = names - kwargs.keys()
    if missing:
        raise ValueError(f"{kind} is missing fields {sorted(missing)}")
    return cls(**kwargs)


def sample(spec: DistSpec, rng: RngStream) -> float:
    return spec.sample(rng)


def moments(spec: DistSpec) -> tuple[float, float]:
    return spec.moments()


def iter_samples(spec: DistSpec, rng: RngStream, chunk: int = 4096) -> Iterator[float]:
    """Endless iterator of draws, generated in vectorized chunks."""
    if isinstance(spec, Deterministic):
        value = float(spec.value)
        while True:
            yield value
    gen = rng.generator
    while True:
        yield from spec.sample_array(gen, chunk).tolist()
