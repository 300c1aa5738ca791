"""Running whole epochs and turning per-rank accounting into EpochReports."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..data import Dataset
from .config import ClusterConfig, ProtocolError
from .protocols import (RankResult, WorkerState, build_rank, mean_from_sum,
                        sum_in_order)
from .simrun import RankStats, RunOutcome, SimRunner

REPORT_FIELDS = (
    "arch", "backend", "w", "ps", "sizing", "repetition", "epoch", "n", "batch",
    "iterations", "model_bytes", "epoch_time", "throughput", "compute", "pull",
    "push_or_collective", "barrier", "update", "messages", "bytes", "loss",
    "predicted_time",
)


@dataclass
class EpochReport:
    arch: str
    backend: str
    w: int
    ps: int
    sizing: str
    repetition: int
    epoch: int
    n: int
    batch: int
    iterations: int
    model_bytes: int
    epoch_time: float
    throughput: float
    compute: float = 0.0
    pull: float = 0.0
    push_or_collective: float = 0.0
    barrier: float = 0.0
    update: float = 0.0
    messages: int = 0
    bytes: int = 0
    loss: float = math.nan
    predicted_time: float = math.nan

    def as_row(self) -> dict:
        return {f: getattr(self, f) for f in REPORT_FIELDS}

    @property
    def phase_total(self) -> float:
        return self.compute + self.pull + self.push_or_collective + self.barrier + self.update


@dataclass
class TrainingResult:
    reports: list
    params: nn.ModelParams
    results: dict
    stats: dict
    outcome: RunOutcome = None
    message_counts: list = field(default_factory=list)  # per epoch: Counter of kinds


def initial_flat(cfg: ClusterConfig) -> np.ndarray:
    return nn.init_params(cfg.topology, seed=cfg.train.seed, dtype=cfg.np_dtype).flatten()


def _mean(values):
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def build_reports(cfg, n, epochs, stats, results, backend, repetition=0):
    """Aggregate per-rank stats into one report per epoch.

    Epoch time is the span from the first rank's start to the last rank's end.
    Phase columns are averaged over worker ranks; for PS the server's update
    time is reported as ``update`` and removed from the workers' barrier wait
    that contains it.
    """
    workers = range(cfg.w)
    servers = range(cfg.w, cfg.n_ranks)
    iterations = WorkerState(cfg, 0, n=n).iterations
    reports, counts = [], []
    for e in epochs:
        starts = [stats[r].mark_time("epoch_start", e) for r in stats]
        ends = [stats[r].mark_time("epoch_end", e) for r in stats]
        if None in starts or None in ends:
            raise ProtocolError(f"epoch {e} did not complete on every rank")
        epoch_time = max(ends) - min(starts)
        ph = [stats[r].phases[e] for r in workers]
        compute = _mean(p["compute"] for p in ph)
        pull = _mean(p["pull"] for p in ph)
        comm = _mean(p["push"] + p["collective"] for p in ph)
        barrier = _mean(p["barrier"] for p in ph)
        if cfg.arch == "ps":
            update = _mean(stats[s].phases[e]["update"] for s in servers)
            barrier = max(0.0, barrier - update)
        else:
            update = _mean(p["update"] for p in ph)
        kinds = Counter()
        nbytes = 0
        for r in stats:
            kinds.update(stats[r].sent[e])
            nbytes += stats[r].sent_bytes[e]
        counts.append(kinds)
        loss_sum = sum(results[r].loss_sum.get(e, 0.0) for r in workers)
        batches = sum(results[r].batches.get(e, 0) for r in workers)
        reports.append(EpochReport(
            arch=cfg.arch, backend=backend, w=cfg.w, ps=cfg.ps if cfg.arch == "ps" else 0,
            sizing=cfg.sizing, repetition=repetition, epoch=e, n=n,
            batch=cfg.train.batch_size, iterations=iterations, model_bytes=cfg.model_bytes,
            epoch_time=epoch_time, throughput=n / epoch_time if epoch_time > 0 else math.inf,
            compute=compute, pull=pull, push_or_collective=comm, barrier=barrier,
            update=update, messages=sum(kinds.values()), bytes=nbytes,
            loss=loss_sum / batches if batches and cfg.execute_math else math.nan,
        ))
    return reports, counts


def assemble_params(cfg, results) -> nn.ModelParams:
    if cfg.arch == "ps":
        flat = np.concatenate([results[cfg.server_rank(j)].params for j in range(cfg.ps)])
    else:
        flat = results[0].params
        for r in range(1, cfg.w):
            if not np.array_equal(results[r].params, flat):
                raise ProtocolError(f"rank {r} diverged from rank 0 after training")
    return nn.ModelParams.from_flat(np.array(flat), cfg.topology)


def run_sim(cfg: ClusterConfig, dataset: Dataset = None, n=None, epochs=None,
            init=None, start_epoch=0, repetition=0) -> TrainingResult:
    """Train on the simulated network. ``dataset`` may be omitted when
    ``cfg.execute_math`` is False, in which case ``n`` gives the sample count."""
    if dataset is None and cfg.execute_math:
        raise ValueError("execute_math needs a dataset")
    n = dataset.n if dataset is not None else n
    epochs = range(start_epoch, start_epoch + (epochs or cfg.train.epochs))
    init_vec = initial_flat(cfg) if init is None else _as_flat(init, cfg)
    runner = SimRunner(cfg.n_ranks, cfg.flow_rate, cfg.link.overhead)
    procs = {r: build_rank(cfg, r, init_vec, epochs, dataset, n) for r in range(cfg.n_ranks)}
    outcome = runner.run(procs)
    reports, counts = build_reports(cfg, n, epochs, outcome.stats, outcome.results, "sim",
                                    repetition)
    return TrainingResult(reports, assemble_params(cfg, outcome.results), outcome.results,
                          outcome.stats, outcome, counts)


def _as_flat(init, cfg):
    if isinstance(init, nn.ModelParams):
        return init.flatten().astype(cfg.np_dtype, copy=False)
    return np.asarray(init, dtype=cfg.np_dtype)


def run_epoch(cfg: ClusterConfig, dataset: Dataset, params=None, epoch=0, backend="sim"):
    """One synchronous epoch; returns ``(EpochReport, ModelParams)``."""
    if backend == "sim":
        res = run_sim(cfg, dataset, epochs=1, init=params, start_epoch=epoch)
    elif backend == "tcp":
        from .tcprun import run_tcp

        res = run_tcp(cfg, dataset, epochs=1, init=params, start_epoch=epoch)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return res.reports[0], res.params


def reference_training(cfg: ClusterConfig, dataset: Dataset, epochs=None, init=None):
    """Single-process synchronous SGD: average the w shard gradients, rank order."""
    flat = initial_flat(cfg) if init is None else _as_flat(init, cfg).copy()
    states = [WorkerState(cfg, r, dataset) for r in range(cfg.w)]
    alpha = cfg.train.learning_rate
    losses = []
    for epoch in range(epochs or cfg.train.epochs):
        batches = [ws.batches(epoch) for ws in states]
        loss_sum, count = 0.0, 0
        for t in range(states[0].iterations):
            grads = []
            for ws, bl in zip(states, batches):
                batch = bl[t] if t < len(bl) else None
                g, loss, _ = ws.gradient(flat, batch)
                grads.append(g)
                if batch is not None:
                    loss_sum += loss
                    count += 1
            flat = nn.sgd_step_flat(flat, mean_from_sum(sum_in_order(grads),
                                                        states[0].active(t)), alpha)
        losses.append(loss_sum / count)
    return nn.ModelParams.from_flat(flat, cfg.topology), losses


def rank_stats_to_dict(st: RankStats) -> dict:
    return {
        "phases": {str(e): dict(c) for e, c in st.phases.items()},
        "sent": {str(e): {str(int(k)): v for k, v in c.items()} for e, c in st.sent.items()},
        "sent_bytes": {str(e): v for e, v in st.sent_bytes.items()},
        "marks": [list(m) for m in st.marks],
    }


def rank_stats_from_dict(d) -> RankStats:
    from ..transport.wire import Kind

    st = RankStats()
    for e, c in d["phases"].items():
        st.phases[int(e)].update(c)
    for e, c in d["sent"].items():
        st.sent[int(e)].update({Kind(int(k)): v for k, v in c.items()})
    for e, v in d["sent_bytes"].items():
        st.sent_bytes[int(e)] = v
    st.marks = [tuple(m) for m in d["marks"]]
    return st


def result_to_dict(res: RankResult) -> dict:
    return {"rank": res.rank,
            "loss_sum": {str(k): v for k, v in res.loss_sum.items()},
            "batches": {str(k): v for k, v in res.batches.items()}}


def result_from_dict(d, params) -> RankResult:
    return RankResult(d["rank"], params,
                      {int(k): v for k, v in d["loss_sum"].items()},
                      {int(k): v for k, v in d["batches"].items()})


__all__ = [
    "EpochReport", "REPORT_FIELDS", "TrainingResult", "build_reports", "run_sim",
    "run_epoch", "reference_training", "initial_flat", "assemble_params",
]
