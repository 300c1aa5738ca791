"""Cluster configuration, parameter sharding and the BSP barrier."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..nn import DEFAULT_TOPOLOGY, TrainConfig, num_params_for
from ..perfmodel import CalibrationParams
from ..transport.sim import LinkModel

ARCHITECTURES = ("ps", "p2p", "ra")
SIZING_MODES = ("exact", "paper-faithful")


class ProtocolError(RuntimeError):
    pass


class StragglerTimeout(ProtocolError):
    def __init__(self, message, ranks=()):
        super().__init__(message)
        self.ranks = tuple(ranks)


class DuplicatePush(ProtocolError):
    pass


@dataclass(frozen=True)
class ClusterConfig:
    arch: str
    w: int
    ps: int = 1
    link: LinkModel = LinkModel(1e9)
    train: TrainConfig = TrainConfig()
    calibration: CalibrationParams = CalibrationParams(0.005, 0.001, 0.001)
    sizing: str = "exact"
    topology: tuple = DEFAULT_TOPOLOGY
    dtype: str = "float32"
    execute_math: bool = True
    # "model": charge the calibration constants; "measured": charge wall time
    compute_timing: str = "model"
    straggler_timeout: float = 30.0
    addresses: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "arch", self.arch.lower())
        object.__setattr__(self, "topology", tuple(self.topology))
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.w < 1:
            raise ValueError(f"need w >= 1, got {self.w}")
        if self.arch == "ps" and not 1 <= self.ps <= self.w:
            raise ValueError(f"PS needs w >= ps >= 1, got w={self.w} ps={self.ps}")
        if self.sizing not in SIZING_MODES:
            raise ValueError(f"unknown sizing mode {self.sizing!r}")
        if self.compute_timing not in ("model", "measured"):
            raise ValueError(f"unknown compute timing {self.compute_timing!r}")
        if self.addresses is not None and len(self.addresses) != self.n_ranks:
            raise ValueError(f"{len(self.addresses)} addresses for {self.n_ranks} ranks")

    @property
    def n_ranks(self) -> int:
        return self.w + (self.ps if self.arch == "ps" else 0)

    def server_rank(self, j) -> int:
        return self.w + j

    @property
    def num_params(self) -> int:
        return num_params_for(self.topology)

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    @property
    def model_bytes(self) -> int:
        return self.num_params * self.np_dtype.itemsize

    @property
    def flow_rate(self) -> float:
        return self.link.available_bandwidth(self.arch, self.w, self.ps)

    def replace(self, **changes) -> "ClusterConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["topology"] = list(self.topology)
        if self.addresses is not None:
            d["addresses"] = list(self.addresses)
        return d

    @classmethod
    def from_dict(cls, d) -> "ClusterConfig":
        d = dict(d)
        d["link"] = LinkModel(**d["link"])
        d["train"] = TrainConfig(**d["train"])
        d["calibration"] = CalibrationParams(**d["calibration"])
        d["topology"] = tuple(d["topology"])
        if d.get("addresses") is not None:
            d["addresses"] = tuple(d["addresses"])
        return cls(**d)


@dataclass(frozen=True)
class ParamShard:
    server: int
    start: int   # scalar offsets into the flattened vector
    stop: int
    itemsize: int = 4

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def byte_length(self) -> int:
        return self.size * self.itemsize

    @property
    def slice(self) -> slice:
        return slice(self.start, self.stop)


def chunk_bounds(n, parts) -> list:
    """Contiguous near-even split of ``range(n)``; earlier chunks get the remainder."""
    base, extra = divmod(n, parts)
    bounds, start = [], 0
    for i in range(parts):
        stop = start + base + (i < extra)
        bounds.append((start, stop))
        start = stop
    return bounds


def shard_params(num_params, ps, itemsize=4) -> list:
    return [ParamShard(j, a, b, itemsize) for j, (a, b) in enumerate(chunk_bounds(num_params, ps))]


@dataclass
class BarrierState:
    epoch: int
    iteration: int
    expected: int
    reported: set = field(default_factory=set)
    released: bool = False

    def report(self, rank) -> bool:
        """Record ``rank``; returns True exactly once, when everyone has reported."""
        if self.released:
            raise ProtocolError(f"barrier ({self.epoch}, {self.iteration}) already released")
        if rank in self.reported:
            raise DuplicatePush(f"duplicate push from rank {rank} for epoch {self.epoch} "
                                f"iteration {self.iteration}")
        self.reported.add(rank)
        if len(self.reported) == self.expected:
            self.released = True
            return True
        return False
