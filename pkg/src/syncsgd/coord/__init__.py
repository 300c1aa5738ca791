"""Synchronous SGD coordination: parameter server, P2P and ring-allreduce."""

from .config import (ARCHITECTURES, BarrierState, ClusterConfig, DuplicatePush,
                     ParamShard, ProtocolError, StragglerTimeout, chunk_bounds,
                     shard_params)
from .protocols import (RankResult, WorkerState, build_rank, p2p_allreduce,
                        ring_allreduce)
from .run import (EpochReport, REPORT_FIELDS, TrainingResult, reference_training,
                  run_epoch, run_sim)
from .simrun import SimRunner

__all__ = [
    "ARCHITECTURES", "BarrierState", "ClusterConfig", "DuplicatePush", "ParamShard",
    "ProtocolError", "StragglerTimeout", "chunk_bounds", "shard_params", "RankResult",
    "WorkerState", "build_rank", "p2p_allreduce", "ring_allreduce", "EpochReport",
    "REPORT_FIELDS", "TrainingResult", "reference_training", "run_epoch", "run_sim",
    "SimRunner",
]
