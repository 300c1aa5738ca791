"""TCP backend: one OS process per rank on loopback ports.

``run_tcp`` writes a launch file, starts ``python -m syncsgd rank --rank R
--launch FILE`` for every rank, waits, and rebuilds the same TrainingResult
the simulator produces from the per-rank JSON/NPY outputs. ``rank_main`` is
the entry point of one such process.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from .. import data as data_mod
from ..transport.tcp import RecvTimeout, TcpMesh
from .config import ClusterConfig, ProtocolError, StragglerTimeout
from .ops import Compute, Flush, Mark, Recv, Send
from .protocols import build_rank
from .run import (TrainingResult, _as_flat, assemble_params, build_reports, initial_flat,
                  rank_stats_from_dict, rank_stats_to_dict, result_from_dict, result_to_dict)
from .simrun import RankStats

log = logging.getLogger(__name__)


def free_ports(count, host="127.0.0.1") -> list:
    socks, ports = [], []
    for _ in range(count):
        s = socket.socket()
        s.bind((host, 0))
        socks.append(s)
        ports.append(s.getsockname()[1])
    for s in socks:
        s.close()
    return ports


def load_data_spec(spec):
    source = spec["source"]
    if source == "synth":
        return data_mod.synth(spec["n"], spec["d"], spec["k"], spec.get("seed", 0))
    if source == "idx":
        ds = data_mod.load_idx(spec["images"], spec["labels"])
        return ds.subset(spec["limit"]) if spec.get("limit") else ds
    if source == "npz":
        with np.load(spec["path"]) as z:
            return data_mod.Dataset(z["X"], z["Y"], spec.get("provenance", "npz"))
    raise ValueError(f"unknown data source {source!r}")


def drive_tcp(gen, mesh: TcpMesh, rank):
    """Run one rank's protocol generator over real sockets.

    Wall time between two ops is charged to the phase of the op that ends
    the interval (so gradient math lands in ``compute``, blocking receives in
    the receive's phase).
    """
    st = RankStats()
    clock = time.monotonic
    last = clock()
    value = None
    while True:
        try:
            op = gen.send(value)
        except StopIteration as stop:
            mesh.flush()
            return stop.value, st
        value = None
        if isinstance(op, Send):
            mesh.send(op.env)
            st.sent[st.epoch][op.env.kind] += 1
            st.sent_bytes[st.epoch] += len(op.env.payload)
        elif isinstance(op, Recv):
            try:
                value = mesh.recv(op.src, op.kind)
            except RecvTimeout as exc:
                raise StragglerTimeout(str(exc), ranks=(op.src,)) from exc
        elif isinstance(op, Flush):
            mesh.flush()
        elif isinstance(op, Mark):
            now = clock()
            if op.label == "epoch_start":
                st.epoch = op.epoch
            st.phases[st.epoch]["other"] += now - last
            st.marks.append((now, op.label, op.epoch, op.iteration))
            last = now
            continue
        elif not isinstance(op, Compute):
            raise TypeError(f"rank {rank} yielded unknown op {op!r}")
        now = clock()
        st.phases[st.epoch][op.phase] += now - last
        last = now


def rank_main(rank, launch_path):
    launch = json.loads(Path(launch_path).read_text())
    cfg = ClusterConfig.from_dict(launch["cluster"])
    dataset = load_data_spec(launch["data"])
    init = np.load(launch["init"])
    epochs = range(launch["start_epoch"], launch["start_epoch"] + launch["epochs"])
    gen = build_rank(cfg, rank, init, epochs, dataset)
    out = Path(launch["out_dir"])
    with TcpMesh(rank, cfg.addresses, recv_timeout=cfg.straggler_timeout) as mesh:
        result, stats = drive_tcp(gen, mesh, rank)
    np.save(out / f"rank{rank}.npy", result.params)
    (out / f"rank{rank}.json").write_text(json.dumps(
        {"stats": rank_stats_to_dict(stats), "result": result_to_dict(result)}))


def run_tcp(cfg: ClusterConfig, dataset=None, epochs=None, init=None, start_epoch=0,
            data_spec=None, repetition=0, timeout=120.0, workdir=None) -> TrainingResult:
    """Train with every rank in its own process talking over loopback TCP."""
    if dataset is None and data_spec is None:
        raise ValueError("need a dataset or a data spec")
    epochs = epochs or cfg.train.epochs
    if cfg.addresses is None:
        cfg = cfg.replace(addresses=tuple(f"127.0.0.1:{p}" for p in free_ports(cfg.n_ranks)))
    tmp = tempfile.TemporaryDirectory(prefix="syncsgd-tcp-") if workdir is None else None
    work = Path(workdir or tmp.name)
    work.mkdir(parents=True, exist_ok=True)
    try:
        if data_spec is None:
            np.savez(work / "data.npz", X=dataset.X, Y=dataset.Y)
            data_spec = {"source": "npz", "path": str(work / "data.npz"),
                         "provenance": dataset.provenance}
        init_vec = initial_flat(cfg) if init is None else _as_flat(init, cfg)
        np.save(work / "init.npy", init_vec)
        launch = {"cluster": cfg.to_dict(), "data": data_spec, "init": str(work / "init.npy"),
                  "epochs": epochs, "start_epoch": start_epoch, "out_dir": str(work)}
        launch_path = work / "launch.json"
        launch_path.write_text(json.dumps(launch))
        env = dict(os.environ)
        src_root = str(Path(__file__).resolve().parents[2])
        env["PYTHONPATH"] = os.pathsep.join(filter(None, [src_root, env.get("PYTHONPATH")]))
        procs = [subprocess.Popen([sys.executable, "-m", "syncsgd", "rank", "--rank", str(r),
                                   "--launch", str(launch_path)],
                                  stdout=subprocess.PIPE, stderr=subprocess.PIPE, env=env)
                 for r in range(cfg.n_ranks)]
        _wait_all(procs, timeout)
        stats, results = {}, {}
        for r in range(cfg.n_ranks):
            blob = json.loads((work / f"rank{r}.json").read_text())
            stats[r] = rank_stats_from_dict(blob["stats"])
            results[r] = result_from_dict(blob["result"], np.load(work / f"rank{r}.npy"))
        n = dataset.n if dataset is not None else load_data_spec(data_spec).n
        span = range(start_epoch, start_epoch + epochs)
        reports, counts = build_reports(cfg, n, span, stats, results, "tcp", repetition)
        return TrainingResult(reports, assemble_params(cfg, results), results, stats,
                              message_counts=counts)
    finally:
        if tmp is not None:
            tmp.cleanup()


def _wait_all(procs, timeout):
    deadline = time.monotonic() + timeout
    failed = []
    for r, p in enumerate(procs):
        try:
            _, err = p.communicate(timeout=max(0.1, deadline - time.monotonic()))
        except subprocess.TimeoutExpired:
            for q in procs:
                q.kill()
            raise StragglerTimeout(f"rank {r} did not finish within {timeout}s", ranks=(r,))
        if p.returncode != 0:
            failed.append((r, err.decode(errors="replace").strip().splitlines()[-1:]))
    if failed:
        raise ProtocolError("rank process(es) failed: " +
                            "; ".join(f"rank {r}: {' '.join(msg)}" for r, msg in failed))
