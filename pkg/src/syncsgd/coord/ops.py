"""Operations a rank's protocol generator yields to its driver.

A protocol is a generator function. It yields one of the op objects below and
receives the op's result back from ``yield`` (the envelope for ``Recv``,
``None`` otherwise). The simulated and the TCP drivers interpret the same ops,
which is what lets one protocol implementation run on both backends.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..transport.wire import Envelope, Kind


@dataclass(frozen=True)
class Send:
    """Queue ``env`` for delivery; never blocks. ``billed`` overrides the byte
    count the simulator charges (paper-faithful sizing)."""

    env: Envelope
    billed: Optional[int] = None
    phase: str = "comm"


@dataclass(frozen=True)
class Recv:
    """Block until the next ``kind`` envelope from ``src`` arrives."""

    src: int
    kind: Kind
    phase: str = "comm"


@dataclass(frozen=True)
class Flush:
    """Block until every envelope this rank sent has been delivered."""

    phase: str = "comm"


@dataclass(frozen=True)
class Compute:
    """Local work just finished; the simulator advances time by ``seconds``."""

    seconds: float
    phase: str = "compute"


@dataclass(frozen=True)
class Mark:
    """Trace point: ``epoch_start``, ``epoch_end``, ``iter_start``, ``iter_end``, or
    ``sync`` (gradient ready, about to enter the iteration's exchange)."""

    label: str
    epoch: int = 0
    iteration: int = 0
