"""Scheduling policies for the continuous-time engine.

A policy decides which generated packets are eligible (``mark_batch``) and
what to do whenever the channel is free (``on_channel_free``).  The engine
passes itself as a read-only view exposing ``fresh_packet``, ``holders``,
``latest_marked``, ``last_rx_gen``, ``last_tx_start`` and
``last_attempted_gen``.  ``reset`` is called at the start of every
replication, so one instance can be reused across replications.

The generate-at-will single-source policies live at the bottom of this module
as standalone estimators since they do not use the multi-source engine.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from itertools import accumulate

import numpy as np

from . import optimizer as opt
from . import rng as rngmod
from .decisions import ABORT, DoNothing, Idle, Transmit
from .distributions import DistSpec, iter_samples
from .scenario import PolicyConfig, Scenario


class Policy:
    preemptive = False
    preempt_on_arrival = False

    def reset(self, ctx) -> None:
        self.n = ctx.n

    def on_packet_generated(self, source: int, t: float, rng: rngmod.RngStream) -> bool:
        return True

    def mark_batch(self, source: int, times: np.ndarray, rng: rngmod.RngStream) -> np.ndarray:
        return np.fromiter((self.on_packet_generated(source, t, rng) for t in times.tolist()),
                           dtype=bool, count=len(times))

    def on_channel_free(self, t: float, view):
        raise NotImplementedError


class MarkAll(Policy):
    def mark_batch(self, source, times, rng):
        return np.ones(len(times), dtype=bool)


def _cumulative(weights):
    total = math.fsum(weights)
    cum = [c / total for c in accumulate(weights)]
    cum[-1] = 1.0
    return cum


class StationaryRandomized(Policy):
    """Marks each packet of source l with probability p_l; when the channel is
    free picks source l with probability p_hat_l and either transmits its
    latest marked packet or idles for a draw of that source's service law."""

    def __init__(self, probs, selection):
        self.probs = tuple(float(p) for p in probs)
        self.selection = tuple(float(q) for q in selection)
        if len(self.probs) != len(self.selection):
            raise ValueError("marking and selection vectors differ in length")
        self._cum = _cumulative(self.selection)

    @classmethod
    def from_params(cls, params, preemptive=False):
        solve = opt.solve_marking_probs_preemptive if preemptive else opt.solve_marking_probs
        marking = solve(params)
        return cls(marking.probs, opt.selection_probs(marking, params))

    def reset(self, ctx):
        super().reset(ctx)
        if ctx.n != len(self.probs):
            raise ValueError("policy was built for a different number of sources")
        self._select = ctx.stream(0, rngmod.SELECT)
        self._idle = [iter_samples(s.service, ctx.stream(i, rngmod.IDLE))
                      for i, s in enumerate(ctx.scenario.sources)]
        self._instant_service = all(s.service.mean() == 0 for s in ctx.scenario.sources)

    def on_packet_generated(self, source, t, rng):
        return rng.uniform() < self.probs[source]

    def mark_batch(self, source, times, rng):
        return rng.uniforms(len(times)) < self.probs[source]

    def choose(self) -> int:
        return min(bisect_right(self._cum, self._select.uniform()), self.n - 1)

    def on_channel_free(self, t, view):
        while True:
            src = self.choose()
            if view.fresh_packet(src, t) is not None:
                return Transmit(src)
            wait = next(self._idle[src])
            if wait > 0:
                return Idle(wait, src)
            # a zero-length wait changes nothing, so draw again; with instant
            # service and nothing to send, only a new packet can change state
            if self._instant_service and not view.holders(t):
                return DoNothing()


class WorkConservingRandomized(StationaryRandomized):
    """Same marking and selection law, but never idles while a source holds a
    fresh marked packet: rejected draws are redrawn among the remaining
    sources, which is the same as drawing from p_hat restricted to holders."""

    def on_channel_free(self, t, view):
        holders = view.holders(t)
        if not holders:
            return DoNothing()
        if len(holders) == self.n:
            return Transmit(self.choose())
        cum = _cumulative([self.selection[i] for i in holders])
        k = min(bisect_right(cum, self._select.uniform()), len(holders) - 1)
        return Transmit(holders[k])


def th_thresholds(params) -> tuple[float, ...]:
    n = len(params)
    return tuple(max(math.sqrt(p.sigma2 + 2 * p.cost / p.rho) - p.mu, n * p.gamma)
                 for p in params)


class ThresholdPolicy(Policy):
    """Marks a packet when at least A_l has elapsed since the previous marked
    packet of its source; serves the holder that has waited longest since its
    last transmission (lowest index on ties)."""

    def __init__(self, thresholds):
        self.thresholds = tuple(float(a) for a in thresholds)

    def reset(self, ctx):
        super().reset(ctx)
        self._last_mark = [0.0] * ctx.n

    def on_packet_generated(self, source, t, rng):
        if t - self._last_mark[source] >= self.thresholds[source]:
            self._last_mark[source] = t
            return True
        return False

    def on_channel_free(self, t, view):
        best, best_start = None, math.inf
        starts = view.last_tx_start
        for i in range(self.n):
            if starts[i] < best_start and view.fresh_packet(i, t) is not None:
                best, best_start = i, starts[i]
        if best is None:
            return DoNothing()
        return Transmit(best)


class TimeThresholdPolicy(MarkAll):
    """Transmits a packet at its generation instant when the channel is free
    and at least alpha has passed since the last delivered packet's
    generation; everything else is dropped."""

    def __init__(self, alphas):
        self.alphas = tuple(float(a) for a in alphas)

    def on_channel_free(self, t, view):
        rx = view.last_rx_gen
        for i in range(self.n):
            if view.latest_marked(i, t) == t and t - rx[i] >= self.alphas[i]:
                return Transmit(i)
        return DoNothing(min(rx[i] + self.alphas[i] for i in range(self.n)))


class GreedyPolicy(MarkAll):
    """Work-conserving: transmits the freshest packet of the oldest-age holder."""

    def on_channel_free(self, t, view):
        holders = view.holders(t)
        if not holders:
            return DoNothing()
        rx = view.last_rx_gen
        return Transmit(min(holders, key=lambda i: rx[i]))


class NeverPolicy(Policy):
    def mark_batch(self, source, times, rng):
        return np.zeros(len(times), dtype=bool)

    def on_channel_free(self, t, view):
        return DoNothing()


class CappedRetryPolicy(MarkAll):
    """Each attempt may use at most epsilon of channel time; an attempt that
    hits the cap is abandoned and the source's latest packet is retried with a
    fresh service draw."""

    preemptive = True

    def __init__(self, epsilon):
        self.epsilon = float(epsilon)

    def on_channel_free(self, t, view):
        for i in range(self.n):
            if view.fresh_packet(i, t) is not None:
                return Transmit(i, self.epsilon, ABORT)
        return DoNothing()


class SingleAttemptPolicy(CappedRetryPolicy):
    """Gives every packet a single attempt of at most epsilon, then drops it."""

    def on_channel_free(self, t, view):
        attempted = view.last_attempted_gen
        for i in range(self.n):
            g = view.fresh_packet(i, t)
            if g is not None and g > attempted[i]:
                return Transmit(i, self.epsilon, ABORT)
        return DoNothing()


class PreemptOnArrivalPolicy(GreedyPolicy):
    """Work-conserving and preempts a transmission whenever its source
    generates a newer packet; the newer packet is sent instead."""

    preemptive = True
    preempt_on_arrival = True


def make_policy(config: PolicyConfig, scenario: Scenario) -> Policy:
    params = scenario.params()
    n = scenario.n
    kind = config.kind

    def per_source(values, name):
        if values is None:
            raise ValueError(f"policy {kind!r} needs {name}")
        if len(values) == 1:
            return tuple(values) * n
        if len(values) != n:
            raise ValueError(f"{name} must have one entry per source")
        return tuple(values)

    if kind in ("sr", "sr_wc", "sr_preemptive"):
        cls = WorkConservingRandomized if kind == "sr_wc" else StationaryRandomized
        if config.marking_probs is not None:
            probs = per_source(config.marking_probs, "marking_probs")
            return cls(probs, opt.selection_probs(probs, params))
        pol = StationaryRandomized.from_params(params, preemptive=kind == "sr_preemptive")
        return cls(pol.probs, pol.selection)
    if kind == "th":
        th = th_thresholds(params) if config.thresholds is None else per_source(config.thresholds, "thresholds")
        return ThresholdPolicy(th)
    if kind == "tp":
        return TimeThresholdPolicy(per_source(config.thresholds, "thresholds"))
    if kind == "eps":
        return CappedRetryPolicy(_need(config.epsilon, kind))
    if kind == "eps_prime":
        return SingleAttemptPolicy(_need(config.epsilon, kind))
    if kind == "lcfs_preemptive":
        return PreemptOnArrivalPolicy()
    if kind == "greedy":
        return GreedyPolicy()
    if kind == "never":
        return NeverPolicy()
    raise ValueError(f"policy {kind!r} is not a continuous-time policy")


def _need(value, kind):
    if value is None:
        raise ValueError(f"policy {kind!r} needs epsilon")
    return value


# ---------------------------------------------------------------------------
# single source, generate-at-will

class NonConvergence(RuntimeError):
    pass


def generate_at_will_aoi(service: np.ndarray, threshold: float) -> float:
    """Time-average age of a generate-at-will source from service draws.

    After each delivery the source waits until its age reaches ``threshold``
    (no wait if it already has), then sends a freshly generated packet.  The
    first draw only sets the initial age, so ``len(service) - 1`` cycles are
    evaluated.
    """
    y = np.asarray(service, dtype=float)
    if len(y) < 2:
        raise ValueError("need at least two service draws")
    start = np.maximum(y[:-1], threshold)  # age when the next packet is sent
    end = start + y[1:]
    area = (end * end - y[:-1] * y[:-1]) / 2
    return float(np.sum(area) / np.sum(end - y[:-1]))


def service_draws(service: DistSpec, n_cycles: int, seed: int, replication: int = 0) -> np.ndarray:
    stream = rngmod.stream(seed, replication, 0, rngmod.SERVICE)
    return service.sample_array(stream.generator, n_cycles + 1)


def mean_service_threshold_aoi(service: DistSpec, n_cycles: int, seed: int, replication: int = 0) -> float:
    """AoI of the policy that waits until the age reaches the mean service time."""
    return generate_at_will_aoi(service_draws(service, n_cycles, seed, replication), service.mean())


@dataclass(frozen=True)
class ThresholdSearch:
    beta: float
    aoi: float
    iterations: int


INV_PHI = (math.sqrt(5) - 1) / 2


def optimize_threshold(service: DistSpec, n_cycles: int = 200, seed: int = 0,
                       replication: int = 0, xtol: float = 1e-6, ftol: float = 1e-6,
                       max_iter: int = 60) -> ThresholdSearch:
    """Golden-section search for the waiting threshold over [0, 5*mean].

    Every candidate is scored on the same service draws, so the objective is
    a deterministic, continuous function of the threshold.
    """
    draws = service_draws(service, n_cycles, seed, replication)
    f = lambda b: generate_at_will_aoi(draws, b)
    a, b = 0.0, 5 * service.mean()
    if b == 0:
        return ThresholdSearch(0.0, f(0.0), 0)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    width0 = b - a
    it = 0
    while b - a > xtol * width0:
        if it >= max_iter:
            break
        it += 1
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    fa, fb = f(a), f(b)
    spread = max(fa, fb, fc, fd) - min(fa, fb, fc, fd)
    if b - a > xtol * width0 and spread > ftol * max(1.0, abs(min(fc, fd))):
        raise NonConvergence(f"threshold search did not converge: spread {spread:.3g}")
    candidates = [(fa, a), (fc, c), (fd, d), (fb, b)]
    best_f, best_b = min(candidates)
    return ThresholdSearch(best_b, best_f, it)
