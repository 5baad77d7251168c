"""Decisions a policy hands back to the engine when the channel is free."""
from __future__ import annotations

from typing import NamedTuple, Optional

ABORT = "abort"
SHELVE = "shelve"


class Transmit(NamedTuple):
    """Start a fresh transmission of the source's latest marked packet.

    ``limit`` caps the attempt length.  When the cap is hit the attempt is
    either aborted (the packet stays eligible and a later attempt draws a new
    service time) or shelved (a later ``Resume`` continues the remaining
    service at no extra cost).
    """

    source: int
    limit: Optional[float] = None
    on_limit: str = ABORT


class Resume(NamedTuple):
    source: int
    limit: Optional[float] = None
    on_limit: str = SHELVE


class Idle(NamedTuple):
    duration: float
    source: Optional[int] = None


class DoNothing(NamedTuple):
    """Wait for the next marked generation at or after ``not_before``."""

    not_before: float = 0.0
