"""Counter-based random streams.

Every stream is an independent Philox generator whose 128-bit key is derived
from ``(seed, *path)``.  Draws from one stream never depend on how many draws
were taken from any other stream, so replications can run in any order or in
parallel and still produce bit-identical output.
"""
from __future__ import annotations

import numpy as np

# purpose tags used in stream paths
GEN = 0
SERVICE = 1
MARK = 2
SELECT = 3
IDLE = 4
SLOT = 5
SUCCESS = 6
MISC = 7

_CHUNK = 4096


def _philox(seed: int, path: tuple[int, ...]) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class RngStream:
    """Buffered uniform stream plus access to the underlying generator.

    ``uniform()`` and ``uniforms(n)`` consume the same buffered sequence, so
    scalar and batched consumers see identical values.
    """

    __slots__ = ("seed", "path", "generator", "_buf", "_pos")

    def __init__(self, seed: int, *path: int):
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self.generator = _philox(self.seed, self.path)
        self._buf: list[float] = []
        self._pos = 0

    def _refill(self) -> None:
        self._buf = self.generator.random(_CHUNK).tolist()
        self._pos = 0

    def uniform(self) -> float:
        if self._pos >= len(self._buf):
            self._refill()
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def uniforms(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._pos >= len(self._buf):
                self._refill()
            take = min(n - filled, len(self._buf) - self._pos)
            out[filled:filled + take] = self._buf[self._pos:self._pos + take]
            self._pos += take
            filled += take
        return out

    def spawn(self, *path: int) -> "RngStream":
        return RngStream(self.seed, *self.path, *path)


def stream(seed: int, replication: int, source: int, purpose: int) -> RngStream:
    """Stream keyed by (seed, replication, source, purpose)."""
    return RngStream(seed, replication, source, purpose)
