"""Continuous-time simulation of several sources sharing one channel.

The engine only stops at decision instants: when the channel becomes free,
when an idle period ends, and (while the policy waits) at marked packet
generations.  Generation processes are produced lazily in vectorized chunks,
and the policy's marking rule is applied to each chunk as it is created, so
unmarked packets never reach the event loop.  Each source buffers only its
latest marked packet.

Age is piecewise linear, so the age integral is accumulated exactly at
reception instants and closed at the horizon.  Ages start at zero.
"""
from __future__ import annotations

import csv
import math
from array import array
from bisect import bisect_left, bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as rngmod
from .decisions import SHELVE, DoNothing, Idle, Resume, Transmit
from .distributions import iter_samples
from .metrics import Estimate, PeriodLog, estimate, stats_from_arrays
from .scenario import Scenario

CHUNK = 8192
TRIM_AT = 200_000


class PolicyError(RuntimeError):
    """Raised when a policy asks for something the system cannot do."""


class _Feed:
    """Lazily generated marked-packet times of one source."""

    __slots__ = ("source", "spec", "gen", "mark_rng", "policy", "marked", "until", "keep")

    def __init__(self, source, spec, gen_stream, mark_stream, policy, keep=False):
        self.source = source
        self.spec = spec
        self.gen = gen_stream.generator
        self.mark_rng = mark_stream
        self.policy = policy
        self.marked: list[float] = []
        self.until = 0.0  # generation time of the last packet produced so far
        self.keep = keep

    def _extend(self):
        times = self.until + np.cumsum(self.spec.sample_array(self.gen, CHUNK))
        self.until = float(times[-1])
        mask = self.policy.mark_batch(self.source, times, self.mark_rng)
        self.marked.extend(times[mask].tolist())

    def latest(self, t):
        """Generation time of the newest marked packet at or before t (None if none)."""
        while self.until <= t:
            self._extend()
        marked = self.marked
        i = bisect_right(marked, t) - 1
        if i < 0:
            return None
        g = marked[i]
        if i > TRIM_AT and not self.keep:
            del marked[:i]
        return g

    def next_after(self, t, limit, inclusive=False):
        """First marked generation after t (at t when inclusive) and not beyond limit."""
        marked = self.marked
        while True:
            j = bisect_left(marked, t) if inclusive else bisect_right(marked, t)
            if j < len(marked):
                g = marked[j]
                return g if g <= limit else None
            if self.until > limit:
                return None
            self._extend()


@dataclass
class SourceResult:
    aoi: float
    avg_tx_cost: float
    period_mean: Optional[float]
    period_var: Optional[float]
    empirical_beta: Optional[float]
    receptions: int
    fresh_tx: int
    busy_time: float


@dataclass
class SimResult:
    sources: list
    gamma_cost: float
    utilization: float
    horizon: float
    seed: int
    replication: int
    period_log: Optional[PeriodLog] = None
    channel_times: Optional[list] = None
    selection_times: Optional[list] = None
    marked_times: Optional[list] = None
    attempts: Optional[list] = None

    @property
    def n(self):
        return len(self.sources)


@dataclass(frozen=True)
class RunContext:
    """What a policy sees when it is reset for a new replication."""

    scenario: Scenario
    seed: int
    replication: int

    @property
    def n(self):
        return self.scenario.n

    def stream(self, source: int, purpose: int) -> rngmod.RngStream:
        return rngmod.stream(self.seed, self.replication, source, purpose)


class _Run:
    """State of one replication; also serves as the policy's read-only view."""

    def __init__(self, scenario, policy, horizon, seed, replication, preemptive,
                 record, trace):
        self.scenario = scenario
        self.policy = policy
        self.horizon = float(horizon)
        self.seed = seed
        self.replication = replication
        self.allow_preemption = preemptive
        n = self.n = scenario.n
        ctx = RunContext(scenario, seed, replication)
        policy.reset(ctx)
        keep = "marks" in record
        self.feeds = [
            _Feed(i, s.gen, ctx.stream(i, rngmod.GEN), ctx.stream(i, rngmod.MARK), policy, keep)
            for i, s in enumerate(scenario.sources)
        ]
        self.service = [iter_samples(s.service, ctx.stream(i, rngmod.SERVICE))
                        for i, s in enumerate(scenario.sources)]
        self.last_rx_gen = [0.0] * n
        self.last_rx_time = [0.0] * n
        self.last_tx_start = [-math.inf] * n
        self.last_attempted_gen = [-math.inf] * n
        self.shelved: dict = {}  # source -> (gen, remaining, served)
        self.area = [0.0] * n
        self.fresh_tx = [0] * n
        self.received = [0] * n
        self.busy = [0.0] * n
        self.pending_channel = [0.0] * n
        self.log = PeriodLog(n)
        self.record = record
        self.channel_times = [array("d") for _ in range(n)] if "channel" in record else None
        self.selections = [array("d") for _ in range(n)] if "selections" in record else None
        self.attempts = [0] * n
        self.trace_rows = [] if trace else None
        self.t = 0.0

    # -- view used by policies ------------------------------------------------
    def latest_marked(self, source, t):
        return self.feeds[source].latest(t)

    def fresh_packet(self, source, t):
        """Generation time of the source's fresh marked packet at t, or None."""
        g = self.feeds[source].latest(t)
        if g is not None and g > self.last_rx_gen[source]:
            return g
        return None

    def holders(self, t):
        return [i for i in range(self.n) if self.fresh_packet(i, t) is not None]

    def age(self, source, t):
        return t - self.last_rx_gen[source]

    # -- event loop -------------------------------------------------------------
    def _trace(self, t, event, source, before, after):
        self.trace_rows.append((t, event, source, before, after))

    def run(self):
        H = self.horizon
        policy = self.policy
        feeds = self.feeds
        decide = policy.on_channel_free
        arrival_preempts = bool(getattr(policy, "preempt_on_arrival", False))
        tracing = self.trace_rows is not None
        selections = self.selections
        last_rx_gen = self.last_rx_gen
        t = 0.0
        while t <= H:
            d = decide(t, self)
            kind = type(d)
            if kind is Transmit or kind is Resume:
                src = d.source
                if selections is not None:
                    selections[src].append(t)
                if kind is Transmit:
                    g = feeds[src].latest(t)
                    if g is None or g <= last_rx_gen[src]:
                        raise PolicyError(f"source {src} has no fresh marked packet at t={t}")
                    service = next(self.service[src])
                    served = 0.0
                    self.fresh_tx[src] += 1
                    self.shelved.pop(src, None)
                else:
                    if src not in self.shelved:
                        raise PolicyError(f"source {src} has no shelved transmission to resume")
                    g, service, served = self.shelved.pop(src)
                    if g <= last_rx_gen[src]:
                        raise PolicyError(f"shelved packet of source {src} is no longer fresh")
                self.last_tx_start[src] = t
                self.last_attempted_gen[src] = g
                self.attempts[src] += 1
                if tracing:
                    self._trace(t, "tx_start" if kind is Transmit else "resume", src,
                                t - last_rx_gen[src], t - last_rx_gen[src])
                end = t + service
                cut = math.inf
                limited = False
                if d.limit is not None or arrival_preempts:
                    if not self.allow_preemption:
                        raise PolicyError("preemptive decision in a non-preemptive run")
                    if d.limit is not None and d.limit < service:
                        cut = t + d.limit
                        limited = True
                    if arrival_preempts:
                        nxt = feeds[src].next_after(t, min(end, cut, H))
                        if nxt is not None and nxt < min(end, cut):
                            cut = nxt
                            limited = False
                if cut < end:
                    stop = min(cut, H)
                    self.busy[src] += stop - t
                    self.pending_channel[src] += stop - t
                    if cut > H:
                        break
                    if tracing:
                        self._trace(cut, "preempt", src, cut - last_rx_gen[src],
                                    cut - last_rx_gen[src])
                    if limited and d.on_limit == SHELVE:
                        self.shelved[src] = (g, service - d.limit, served + d.limit)
                    t = cut
                    continue
                if end > H:
                    self.busy[src] += H - t
                    break
                self.busy[src] += service
                self._receive(src, g, end, t, served + service, service)
                t = end
            elif kind is Idle:
                if not d.duration >= 0:
                    raise PolicyError("idle duration must be nonnegative")
                if d.source is not None and selections is not None:
                    selections[d.source].append(t)
                if tracing:
                    self._trace(t, "idle", -1 if d.source is None else d.source, math.nan, math.nan)
                t += d.duration
            elif kind is DoNothing:
                start = max(d.not_before, t)
                inclusive = d.not_before > t
                nxt = math.inf
                for f in feeds:
                    g = f.next_after(start, min(nxt, H), inclusive)
                    if g is not None and g < nxt:
                        nxt = g
                if nxt > H:
                    break
                t = nxt
            else:
                raise PolicyError(f"unknown decision {d!r}")
        return self._finish()

    def _receive(self, src, g, r, started, own_service, attempt):
        lrg = self.last_rx_gen[src]
        lrt = self.last_rx_time[src]
        self.area[src] += (r - lrt) * (r + lrt - 2 * lrg) / 2
        if self.trace_rows is not None:
            self._trace(r, "rx", src, r - lrg, r - g)
        Z = r - g
        self.log.add(src, g - lrg, Z, Z - own_service, own_service)
        self.last_rx_gen[src] = g
        self.last_rx_time[src] = r
        self.received[src] += 1
        if self.channel_times is not None:
            self.channel_times[src].append(self.pending_channel[src] + attempt)
        self.pending_channel[src] = 0.0

    def _finish(self):
        H = self.horizon
        params = self.scenario.sources
        results = []
        for s in range(self.n):
            lrg, lrt = self.last_rx_gen[s], self.last_rx_time[s]
            area = self.area[s] + (H - lrt) * (H + lrt - 2 * lrg) / 2
            a = self.log.arrays(s)
            st = stats_from_arrays(a["T"], a["d"])
            results.append(SourceResult(
                aoi=area / H,
                avg_tx_cost=params[s].cost * self.fresh_tx[s] / H,
                period_mean=st.mean if st else None,
                period_var=st.var if st else None,
                empirical_beta=st.beta if st else None,
                receptions=self.received[s],
                fresh_tx=self.fresh_tx[s],
                busy_time=self.busy[s],
            ))
        gamma = weighted_cost(results, params)
        res = SimResult(
            sources=results,
            gamma_cost=gamma,
            utilization=sum(self.busy) / H,
            horizon=H,
            seed=self.seed,
            replication=self.replication,
            period_log=self.log if "periods" in self.record else None,
            attempts=list(self.attempts),
        )
        if self.channel_times is not None:
            res.channel_times = [np.frombuffer(c, dtype=float).copy() if len(c) else np.empty(0)
                                 for c in self.channel_times]
        if self.selections is not None:
            res.selection_times = [np.frombuffer(c, dtype=float).copy() if len(c) else np.empty(0)
                                   for c in self.selections]
        if "marks" in self.record:
            res.marked_times = [np.array([g for g in f.marked if g <= H]) for f in self.feeds]
        return res


def weighted_cost(results, sources) -> float:
    """(1/N) * sum of (average transmission cost + rho * AoI)."""
    return sum(r.avg_tx_cost + s.rho * r.aoi for r, s in zip(results, sources)) / len(results)


def _simulate(scenario, policy, horizon, seed, replication, preemptive, record, trace):
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if policy is None:
        from .policies import make_policy
        policy = make_policy(scenario.policy, scenario)
    r = _Run(scenario, policy, horizon, seed, replication, preemptive, set(record), trace)
    result = r.run()
    if trace:
        write_trace(trace, r.trace_rows)
    return result


def run(scenario: Scenario, policy=None, horizon: Optional[float] = None,
        seed: Optional[int] = None, replication: int = 0, record=(), trace=None) -> SimResult:
    """Simulate one replication without preemption.

    ``record`` may contain "periods", "channel", "selections" and "marks" to
    keep the corresponding logs in the result.  ``trace`` is an optional CSV
    path for the event trace.
    """
    horizon = scenario.horizon if horizon is None else horizon
    seed = scenario.seed if seed is None else seed
    return _simulate(scenario, policy, horizon, seed, replication, False, record, trace)


def run_preemptive(scenario: Scenario, policy=None, horizon: Optional[float] = None,
                   seed: Optional[int] = None, replication: int = 0, record=(),
                   trace=None) -> SimResult:
    """Like ``run`` but the policy may cap attempts, shelve and resume, or
    preempt on arrival.  Every fresh transmission start is charged its cost."""
    horizon = scenario.horizon if horizon is None else horizon
    seed = scenario.seed if seed is None else seed
    return _simulate(scenario, policy, horizon, seed, replication, True, record, trace)


def write_trace(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["time", "event", "source", "age_before", "age_after"])
        for row in rows:
            out.writerow([repr(row[0]), row[1], row[2], repr(row[3]), repr(row[4])])


@dataclass
class Aggregate:
    gamma: Estimate
    aoi: list
    runs: list = field(repr=False)


def _rep_job(args):
    scenario, policy, horizon, seed, rep, preemptive = args
    fn = run_preemptive if preemptive else run
    return fn(scenario, policy, horizon, seed, rep)


def map_jobs(fn, jobs, workers: int = 1):
    """Apply fn to jobs, in a process pool when workers > 1; output keeps job order."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def aggregate(runs) -> Aggregate:
    runs = sorted(runs, key=lambda r: r.replication)
    gamma = estimate(r.gamma_cost for r in runs)
    aoi = [estimate(r.sources[s].aoi for r in runs) for s in range(runs[0].n)]
    return Aggregate(gamma, aoi, runs)


def run_replications(scenario: Scenario, policy=None, horizon: Optional[float] = None,
                     reps: Optional[int] = None, seed: Optional[int] = None,
                     workers: int = 1, preemptive: bool = False) -> Aggregate:
    """Independent replications (replication index keys the RNG streams)."""
    horizon = scenario.horizon if horizon is None else horizon
    reps = scenario.replications if reps is None else reps
    seed = scenario.seed if seed is None else seed
    if reps < 1:
        raise ValueError("reps must be at least 1")
    jobs = [(scenario, policy, horizon, seed, k, preemptive) for k in range(reps)]
    return aggregate(map_jobs(_rep_job, jobs, workers))
