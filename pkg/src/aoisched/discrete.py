"""Slotted-time system with single-packet buffers.

Slot k covers (k-1, k].  Packets are generated at the slot start (time k-1),
overwriting whatever the source held, the policy then picks at most one
source, its transmission succeeds with that source's success probability,
and ages are read at the slot end.  A delivered packet generated in slot j
therefore has age k - (j - 1) at the end of slot k, which is 1 when it is
delivered in its own slot.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import optimizer as opt
from . import rng as rngmod
from .metrics import estimate
from .scenario import PolicyConfig, Scenario, SlotSource

CHUNK = 1 << 14


@dataclass
class SlotResult:
    aoi: list
    weighted_aoi: float
    transmissions: list
    successes: list
    horizon: int
    seed: int
    replication: int
    choices: Optional[list] = None


class SlotPolicy:
    def reset(self, n: int, stream: rngmod.RngStream) -> None:
        self.n = n
        self.rng = stream

    def choose(self, k: int, held: list, last_rx: list, prev_failed: Optional[int]) -> Optional[int]:
        """Source to serve in slot k, or None.  ``held``/``last_rx`` are
        generation times of the held packet and of the last delivered one."""
        raise NotImplementedError


def _cum(weights):
    total = math.fsum(weights)
    cum = list(np.cumsum(weights) / total)
    cum[-1] = 1.0
    return cum


class RandomSlotPolicy(SlotPolicy):
    """Picks source l with probability q_l in every slot."""

    def __init__(self, q):
        self.q = tuple(float(v) for v in q)
        self._c = _cum(self.q)

    def draw(self):
        return min(bisect_right(self._c, self.rng.uniform()), self.n - 1)

    def choose(self, k, held, last_rx, prev_failed):
        return self.draw()


class StationarySlotPolicy(RandomSlotPolicy):
    """Retries the same source after a failed attempt, otherwise draws from p_hat."""

    def choose(self, k, held, last_rx, prev_failed):
        if prev_failed is not None:
            return prev_failed
        return self.draw()


class MaxWeightSlotPolicy(SlotPolicy):
    """Serves the holder with the largest rho * success * (age - held packet age)."""

    def __init__(self, rho, success):
        self.w = [r * s for r, s in zip(rho, success)]

    def choose(self, k, held, last_rx, prev_failed):
        best, best_v = None, 0.0
        w = self.w
        for i in range(self.n):
            gain = held[i] - last_rx[i]
            if gain > 0 and w[i] * gain > best_v:
                best, best_v = i, w[i] * gain
        return best


class GreedySlotPolicy(SlotPolicy):
    """Serves the holder whose last delivered packet is oldest."""

    def choose(self, k, held, last_rx, prev_failed):
        best = None
        for i in range(self.n):
            if held[i] > last_rx[i] and (best is None or last_rx[i] < last_rx[best]):
                best = i
        return best


class NeverSlotPolicy(SlotPolicy):
    def choose(self, k, held, last_rx, prev_failed):
        return None


def default_rd_weights(sources: Sequence[SlotSource]) -> tuple:
    """q_l proportional to sqrt(rho_l * mean attempts to succeed), normalized."""
    raw = [math.sqrt(s.rho / s.success_prob) for s in sources]
    total = math.fsum(raw)
    return tuple(r / total for r in raw)


def sr_selection(sources: Sequence[SlotSource]) -> tuple:
    params = [s.params() for s in sources]
    marking = opt.solve_marking_probs(params)
    return opt.selection_probs(marking, params)


def make_slot_policy(config: PolicyConfig, scenario: Scenario) -> SlotPolicy:
    sources = scenario.sources
    kind = config.kind
    if kind == "sr_discrete":
        return StationarySlotPolicy(sr_selection(sources))
    if kind == "rd":
        q = config.q if config.q is not None else default_rd_weights(sources)
        if len(q) != len(sources):
            raise ValueError("q must have one entry per source")
        return RandomSlotPolicy(q)
    if kind == "mw":
        return MaxWeightSlotPolicy([s.rho for s in sources], [s.success_prob for s in sources])
    if kind == "greedy":
        return GreedySlotPolicy()
    if kind == "never":
        return NeverSlotPolicy()
    raise ValueError(f"policy {kind!r} is not a slotted policy")


def run_slotted(scenario: Scenario, policy: Optional[SlotPolicy] = None,
                horizon: Optional[int] = None, seed: Optional[int] = None,
                replication: int = 0, record_choices: bool = False) -> SlotResult:
    if not scenario.slotted:
        raise ValueError("run_slotted needs a slotted scenario")
    horizon = int(scenario.horizon if horizon is None else horizon)
    seed = scenario.seed if seed is None else seed
    if horizon < 1:
        raise ValueError("horizon must be at least one slot")
    if policy is None:
        policy = make_slot_policy(scenario.policy, scenario)
    src = scenario.sources
    n = len(src)
    policy.reset(n, rngmod.stream(seed, replication, 0, rngmod.SELECT))
    gen_streams = [rngmod.stream(seed, replication, i, rngmod.SLOT) for i in range(n)]
    ok_streams = [rngmod.stream(seed, replication, i, rngmod.SUCCESS) for i in range(n)]
    gen_p = np.array([s.gen_prob for s in src])
    succ = [s.success_prob for s in src]

    held = [-1] * n      # generation time of the held packet (-1: nothing yet)
    last_rx = [0] * n    # generation time of the last delivered packet
    area = [0] * n       # sum of end-of-slot ages over slots already settled
    settled = [0] * n    # slots already added to area
    tx = [0] * n
    ok = [0] * n
    choices = [] if record_choices else None
    prev_failed = None
    choose = policy.choose

    for base in range(0, horizon, CHUNK):
        m = min(CHUNK, horizon - base)
        slots = np.arange(base, base + m)  # generation time of a slot = its index - 1 = base + j
        u = np.column_stack([g.uniforms(m) for g in gen_streams])
        gen_at = np.where(u < gen_p, slots[:, None], -1)
        latest = np.maximum.accumulate(gen_at, axis=0)
        latest = np.maximum(latest, np.array(held)[None, :]).tolist()
        for j in range(m):
            k = base + j + 1
            h = latest[j]
            s = choose(k, h, last_rx, prev_failed)
            if record_choices:
                choices.append(-1 if s is None else s)
            prev_failed = None
            if s is None or h[s] <= last_rx[s]:
                continue
            tx[s] += 1
            if ok_streams[s].uniform() < succ[s]:
                ok[s] += 1
                # settle slots settled[s]+1 .. k-1 at the old reference, then move it
                a, b = settled[s] + 1, k - 1
                if b >= a:
                    area[s] += (a + b) * (b - a + 1) // 2 - (b - a + 1) * last_rx[s]
                last_rx[s] = h[s]
                area[s] += k - last_rx[s]
                settled[s] = k
            else:
                prev_failed = s
        held = latest[-1]
    aoi = []
    for s in range(n):
        a, b = settled[s] + 1, horizon
        if b >= a:
            area[s] += (a + b) * (b - a + 1) // 2 - (b - a + 1) * last_rx[s]
        aoi.append(area[s] / horizon)
    weighted = sum(x.rho * v for x, v in zip(src, aoi)) / n
    return SlotResult(aoi, weighted, tx, ok, horizon, seed, replication, choices)


def run_slotted_replications(scenario: Scenario, reps: Optional[int] = None,
                             seed: Optional[int] = None, horizon: Optional[int] = None):
    reps = scenario.replications if reps is None else reps
    runs = [run_slotted(scenario, None, horizon, seed, k) for k in range(reps)]
    return estimate(r.weighted_aoi for r in runs), runs
