"""Cost accounting, period statistics and verification helpers."""
from __future__ import annotations

import csv
import math
from array import array
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .distributions import DistSpec
from .optimizer import SourceParams

Z95 = 1.959963984540054


class PeriodLog:
    """Per-source record of received packets: period T, system time Z, wait w, service d."""

    def __init__(self, n: int):
        self.n = n
        self._cols = [tuple(array("d") for _ in range(4)) for _ in range(n)]

    def add(self, source: int, T: float, Z: float, w: float, d: float) -> None:
        cols = self._cols[source]
        cols[0].append(T)
        cols[1].append(Z)
        cols[2].append(w)
        cols[3].append(d)

    def count(self, source: int) -> int:
        return len(self._cols[source][0])

    def arrays(self, source: int) -> dict:
        T, Z, w, d = (np.frombuffer(c, dtype=float) if len(c) else np.empty(0)
                      for c in self._cols[source])
        return {"T": T, "Z": Z, "w": w, "d": d}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["source", "index", "T", "Z", "w", "d"])
            for s in range(self.n):
                T, Z, w, d = self._cols[s]
                for i in range(len(T)):
                    out.writerow([s, i + 1, repr(T[i]), repr(Z[i]), repr(w[i]), repr(d[i])])


def gamma_from_periods(log: PeriodLog, params: Sequence[SourceParams], horizon: float,
                       include_tail: bool = True) -> float:
    """Weighted sum cost rebuilt from the period log.

    Each received packet contributes ``rho*(T^2/2 + T*Z) + c``.  The age
    area after the last reception is the triangle ``eta^2/2`` with
    ``eta = horizon - (last received generation time)``; it is included unless
    ``include_tail`` is False.  Transmissions still in flight at the horizon
    are not in the log and so carry no cost here.
    """
    total = []
    for s, p in enumerate(params):
        a = log.arrays(s)
        T, Z = a["T"], a["Z"]
        body = p.rho * math.fsum(T * T / 2 + T * Z) + p.cost * len(T)
        if include_tail:
            eta = horizon - math.fsum(T)
            body += p.rho * eta * eta / 2
        total.append(body / horizon)
    return sum(total) / len(params)


@dataclass(frozen=True)
class PeriodStats:
    mean: float
    var: float
    beta: float
    count: int


def period_stats(log: PeriodLog) -> list[Optional[PeriodStats]]:
    """Mean and variance of T and the empirical beta per source (None when empty)."""
    out = []
    for s in range(log.n):
        a = log.arrays(s)
        out.append(stats_from_arrays(a["T"], a["d"]))
    return out


def stats_from_arrays(T: np.ndarray, d: np.ndarray) -> Optional[PeriodStats]:
    if len(T) == 0:
        return None
    m = float(np.mean(T))
    delta = T - m
    beta = float(np.sum(delta * (delta + 2 * d)) / len(T))
    return PeriodStats(m, float(np.var(T)), beta, len(T))


def utilization_check(log: PeriodLog, params: Sequence[SourceParams], horizon: float) -> float:
    """Return sum_l gamma_l*R_l/t; raise if it clearly exceeds one."""
    counts = [log.count(s) for s in range(log.n)]
    value = sum(p.gamma * r for p, r in zip(params, counts)) / horizon
    least = min(counts)
    if least > 0 and value > 1 + 10 / math.sqrt(least):
        raise ValueError(f"utilization {value:.4f} exceeds one beyond sampling noise")
    return value


def ks_distance(samples, spec: DistSpec) -> float:
    """Kolmogorov-Smirnov sup distance between the sample ECDF and the law's CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("ks_distance needs at least one sample")
    # ECDF just after and just before each distinct value
    uniq, first = np.unique(x, return_index=True)
    last = np.r_[first[1:], n]
    above = last / n - spec.cdf(uniq)
    below = spec.cdf_left(uniq) - first / n
    return float(max(np.max(above), np.max(below), 0.0))


@dataclass(frozen=True)
class Estimate:
    mean: float
    half_width: float
    n: int

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width


def estimate(values: Iterable[float]) -> Estimate:
    """Mean with a 95% normal-approximation interval.

    Uses exactly rounded sums, so the result does not depend on input order.
    """
    v = [float(x) for x in values]
    n = len(v)
    if n == 0:
        raise ValueError("no values to aggregate")
    mean = math.fsum(v) / n
    if n == 1:
        return Estimate(mean, 0.0, 1)
    var = math.fsum((x - mean) ** 2 for x in v) / (n - 1)
    return Estimate(mean, Z95 * math.sqrt(var / n), n)


@dataclass(frozen=True)
class Samples:
    """Mergeable bag of per-replication values keyed by replication index."""

    items: tuple = ()

    def add(self, replication: int, value: float) -> "Samples":
        return Samples(self.items + ((replication, value),))

    def merge(self, other: "Samples") -> "Samples":
        return Samples(tuple(sorted(self.items + other.items)))

    def estimate(self) -> Estimate:
        return estimate(v for _, v in self.items)
