"""Per-rank state machines for the three synchronous SGD architectures.

Every function here is a generator meant to be driven by ``simrun`` or
``tcprun`` (see ``ops``). Gradient vectors travel as little-endian raw bytes of
the flattened parameter layout. Sums are always taken in a fixed order so a run
is reproducible bit-for-bit; the PS server and the P2P chunk owners sum in
ascending rank order, which makes them match the single-process reference
exactly, while the ring sums each chunk in ring order starting at its owner.

Rank layout: workers are ranks ``0..w-1``; PS servers are ``w..w+ps-1``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import kernels, nn
from ..data import Dataset, minibatches, partition
from ..transport.wire import Envelope, Kind
from .config import (BarrierState, ClusterConfig, DuplicatePush, ProtocolError,
                     chunk_bounds, shard_params)
from .ops import Compute, Flush, Mark, Recv, Send


@dataclass
class RankResult:
    rank: int
    params: np.ndarray = None     # full vector (workers) or shard slice (servers)
    loss_sum: dict = field(default_factory=dict)   # epoch -> summed batch losses
    batches: dict = field(default_factory=dict)    # epoch -> batches computed


def mean_from_sum(total, count):
    """The one place a reduced sum becomes a mean (keeps all paths bit-identical)."""
    return total / total.dtype.type(count)


def sum_in_order(vectors):
    acc = np.array(vectors[0], copy=True)
    for v in vectors[1:]:
        kernels.add_into(acc, v)
    return acc


def batch_counts(n, w, b) -> list:
    return [-(-s.size // b) for s in partition(n, w)]


class WorkerState:
    """What a worker rank knows: its shard, the schedule and the model."""

    def __init__(self, cfg: ClusterConfig, rank, dataset: Dataset = None, n=None):
        self.cfg = cfg
        self.rank = rank
        self.dataset = dataset
        n = dataset.n if dataset is not None else n
        if n is None:
            raise ValueError("need a dataset or a sample count")
        self.n = n
        self.shard = partition(n, cfg.w)[rank] if rank < cfg.w else None
        self.counts = batch_counts(n, cfg.w, cfg.train.batch_size)
        self.iterations = max(self.counts)
        self.dtype = cfg.np_dtype
        self.zero_grad = np.zeros(cfg.num_params, dtype=self.dtype)

    def active(self, t) -> int:
        return sum(1 for c in self.counts if t < c)

    def batches(self, epoch):
        return minibatches(self.shard, self.cfg.train.batch_size, self.cfg.train.seed, epoch)

    def gradient(self, flat_params, batch):
        """Flat gradient and loss for one batch (``batch`` None = idle rank)."""
        if batch is None or not self.cfg.execute_math:
            return self.zero_grad, 0.0, 0.0
        start = time.perf_counter()
        params = nn.ModelParams.from_flat(flat_params, self.cfg.topology)
        x, y = self.dataset.batch(batch)
        grads, loss = nn.gradients(params, x, y, self.cfg.train.loss_kind)
        flat = grads.flatten()
        return flat, loss, time.perf_counter() - start

    def cost(self, modelled, measured):
        return measured if self.cfg.compute_timing == "measured" else modelled

    def decode(self, env, size):
        vec = np.frombuffer(env.payload, dtype=self.dtype.newbyteorder("<"))
        if vec.size != size:
            raise ProtocolError(f"rank {self.rank}: {env!r} carries {vec.size} scalars, "
                                f"expected {size}")
        return vec.astype(self.dtype, copy=False)


def _encode(vec) -> bytes:
    return np.ascontiguousarray(vec).astype(vec.dtype.newbyteorder("<"), copy=False).tobytes()


def _check(env, epoch, t, who):
    if env.epoch != epoch or env.iteration != t:
        raise ProtocolError(f"{who}: got {env!r} while in epoch {epoch} iteration {t}")


def _train_step(ws, flat, batch, result, epoch):
    grad, loss, measured = ws.gradient(flat, batch)
    if batch is not None:
        result.loss_sum[epoch] = result.loss_sum.get(epoch, 0.0) + loss
        result.batches[epoch] = result.batches.get(epoch, 0) + 1
    return grad, measured


# -- parameter server ---------------------------------------------------------

def ps_worker(ws: WorkerState, epochs):
    cfg, r = ws.cfg, ws.rank
    shards = shard_params(cfg.num_params, cfg.ps, ws.dtype.itemsize)
    if cfg.sizing == "paper-faithful":
        faithful = chunk_bounds(cfg.num_params // cfg.w, cfg.ps)
        billed = [(b - a) * ws.dtype.itemsize for a, b in faithful]
    else:
        billed = [None] * cfg.ps
    flat = np.empty(cfg.num_params, dtype=ws.dtype)
    result = RankResult(r)
    for epoch in epochs:
        yield Mark("epoch_start", epoch)
        batches = ws.batches(epoch)
        for t in range(ws.iterations):
            yield Mark("iter_start", epoch, t)
            for sh in shards:
                yield Send(Envelope(Kind.PULL_REQ, epoch, t, r, cfg.server_rank(sh.server)),
                           phase="pull")
            for sh in shards:
                env = yield Recv(cfg.server_rank(sh.server), Kind.MODEL_CHUNK, "pull")
                _check(env, epoch, t, f"worker {r}")
                flat[sh.slice] = ws.decode(env, sh.size)
            batch = batches[t] if t < len(batches) else None
            grad, measured = _train_step(ws, flat, batch, result, epoch)
            if batch is not None:
                yield Compute(ws.cost(cfg.calibration.t_processing, measured))
            yield Mark("sync", epoch, t)
            for sh, bill in zip(shards, billed):
                yield Send(Envelope(Kind.GRAD_PUSH, epoch, t, r, cfg.server_rank(sh.server),
                                    _encode(grad[sh.slice])), billed=bill, phase="push")
            yield Flush("push")
            yield Mark("iter_end", epoch, t)
        yield Mark("epoch_end", epoch)
    result.params = flat
    return result


def ps_server(ws: WorkerState, j, init_flat, epochs):
    cfg = ws.cfg
    me = cfg.server_rank(j)
    shard = shard_params(cfg.num_params, cfg.ps, ws.dtype.itemsize)[j]
    params = np.array(init_flat[shard.slice], dtype=ws.dtype)
    alpha = cfg.train.learning_rate
    result = RankResult(me)
    for epoch in epochs:
        yield Mark("epoch_start", epoch)
        for t in range(ws.iterations):
            payload = _encode(params)
            for r in range(cfg.w):
                env = yield Recv(r, Kind.PULL_REQ, "serve")
                _check(env, epoch, t, f"server {j}")
                yield Send(Envelope(Kind.MODEL_CHUNK, epoch, t, me, r, payload), phase="serve")
            barrier = BarrierState(epoch, t, cfg.w)
            pushes = []
            for r in range(cfg.w):
                env = yield Recv(r, Kind.GRAD_PUSH, "collect")
                if env.epoch == epoch and env.iteration < t or env.epoch < epoch:
                    raise DuplicatePush(f"server {j}: duplicate push from rank {r} for "
                                        f"epoch {env.epoch} iteration {env.iteration}")
                _check(env, epoch, t, f"server {j}")
                barrier.report(r)
                pushes.append(ws.decode(env, shard.size))
            start = time.perf_counter()
            if cfg.execute_math:
                mean = mean_from_sum(sum_in_order(pushes), ws.active(t))
                params = nn.sgd_step_flat(params, mean, alpha)
            yield Compute(ws.cost(cfg.calibration.ps_time, time.perf_counter() - start),
                          "update")
        yield Flush("serve")
        yield Mark("epoch_end", epoch)
    result.params = params
    return result


# -- collectives ----------------------------------------------------------------

def p2p_allreduce(rank, w, vec, epoch, t, decode, phase="collective"):
    """Reduce-scatter then allgather over the complete graph; returns the sum.

    Rank ``q`` owns chunk ``q``. Each rank sends ``2*(w-1)`` messages.
    """
    bounds = chunk_bounds(vec.size, w)
    lo, hi = bounds[rank]
    for q in range(w):
        if q != rank:
            a, b = bounds[q]
            yield Send(Envelope(Kind.GRAD_PUSH, epoch, t, rank, q, _encode(vec[a:b])),
                       phase=phase)
    parts = []
    for q in range(w):
        if q == rank:
            parts.append(vec[lo:hi])
        else:
            env = yield Recv(q, Kind.GRAD_PUSH, phase)
            _check(env, epoch, t, f"rank {rank}")
            parts.append(decode(env, hi - lo))
    mine = sum_in_order(parts)
    out = np.empty_like(vec)
    out[lo:hi] = mine
    payload = _encode(mine)
    for q in range(w):
        if q != rank:
            yield Send(Envelope(Kind.MODEL_CHUNK, epoch, t, rank, q, payload), phase=phase)
    for q in range(w):
        if q != rank:
            env = yield Recv(q, Kind.MODEL_CHUNK, phase)
            _check(env, epoch, t, f"rank {rank}")
            a, b = bounds[q]
            out[a:b] = decode(env, b - a)
    yield Flush(phase)
    return out


def ring_allreduce(rank, w, vec, epoch, t, decode, phase="collective"):
    """Scatter-reduce then allgather around the ring; returns the sum.

    At scatter step ``s`` rank ``r`` sends chunk ``(r - s) mod w`` to its
    successor and adds the predecessor's chunk ``(r - s - 1) mod w`` into its
    buffer; after ``w-1`` steps it owns the reduced chunk ``(r + 1) mod w``,
    which the ``w-1`` allgather steps then circulate.
    """
    buf = np.array(vec, copy=True)
    bounds = chunk_bounds(buf.size, w)
    succ, pred = (rank + 1) % w, (rank - 1) % w

    def chunk(c):
        a, b = bounds[c]
        return buf[a:b]

    for s in range(w - 1):
        yield Send(Envelope(Kind.RING_CHUNK, epoch, t, rank, succ, _encode(chunk((rank - s) % w))),
                   phase=phase)
        env = yield Recv(pred, Kind.RING_CHUNK, phase)
        _check(env, epoch, t, f"rank {rank}")
        target = chunk((rank - s - 1) % w)
        kernels.add_into(target, decode(env, target.size))
    for s in range(w - 1):
        yield Send(Envelope(Kind.RING_CHUNK, epoch, t, rank, succ,
                            _encode(chunk((rank + 1 - s) % w))), phase=phase)
        env = yield Recv(pred, Kind.RING_CHUNK, phase)
        _check(env, epoch, t, f"rank {rank}")
        target = chunk((rank - s) % w)
        target[:] = decode(env, target.size)
    yield Flush(phase)
    return buf


COLLECTIVES = {"p2p": p2p_allreduce, "ra": ring_allreduce}


# -- peer-to-peer and ring workers -----------------------------------------------

def collective_worker(ws: WorkerState, init_flat, epochs):
    """Worker for P2P and RA: local gradient, allreduce, identical local update."""
    cfg, r = ws.cfg, ws.rank
    allreduce = COLLECTIVES[cfg.arch]
    flat = np.array(init_flat, dtype=ws.dtype)
    alpha = cfg.train.learning_rate
    result = RankResult(r)
    for epoch in epochs:
        yield Mark("epoch_start", epoch)
        batches = ws.batches(epoch)
        for t in range(ws.iterations):
            yield Mark("iter_start", epoch, t)
            batch = batches[t] if t < len(batches) else None
            grad, measured = _train_step(ws, flat, batch, result, epoch)
            if batch is not None:
                yield Compute(ws.cost(cfg.calibration.t_processing, measured))
            yield Mark("sync", epoch, t)
            if cfg.w > 1:
                total = yield from allreduce(r, cfg.w, grad, epoch, t, ws.decode)
            else:
                total = grad
            start = time.perf_counter()
            if cfg.execute_math:
                flat = nn.sgd_step_flat(flat, mean_from_sum(total, ws.active(t)), alpha)
            yield Compute(ws.cost(cfg.calibration.update_time, time.perf_counter() - start),
                          "update")
            yield Mark("iter_end", epoch, t)
        yield Mark("epoch_end", epoch)
    result.params = flat
    return result


def build_rank(cfg: ClusterConfig, rank, init_flat, epochs, dataset=None, n=None):
    """The generator for one rank."""
    ws = WorkerState(cfg, rank, dataset, n)
    if cfg.arch == "ps":
        if rank < cfg.w:
            return ps_worker(ws, epochs)
        return ps_server(ws, rank - cfg.w, init_flat, epochs)
    if rank >= cfg.w:
        raise ValueError(f"rank {rank} does not exist for {cfg.arch} with w={cfg.w}")
    return collective_worker(ws, init_flat, epochs)
