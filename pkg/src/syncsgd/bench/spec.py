"""Experiment specification and its INI config file.

Precedence is CLI override > config file > built-in default. Example::

    [experiment]
    arch = ps, p2p, ra
    workers = 1-8
    ps = 1
    backend = sim
    sizing = exact
    repetitions = 1
    math = true

    [train]
    learning_rate = 0.1
    batch = 100
    epochs = 1
    loss = quadratic
    seed = 0
    topology = 784, 128, 64, 10

    [data]
    source = synth          ; synth | mnist
    n = 6000
    d = 784
    k = 10
    images = train-images-idx3-ubyte
    labels = train-labels-idx1-ubyte

    [link]
    bandwidth = 1e9         ; bytes/s
    overhead = 0

    [calibration]
    t_processing = 0.005
    ps_time = 0.001
    update_time = 0.001

    [output]
    csv = results.csv
"""

from __future__ import annotations

import configparser
import logging
import os
from dataclasses import dataclass, field, replace

from .. import data as data_mod
from ..coord.config import ARCHITECTURES, SIZING_MODES, ClusterConfig
from ..nn import DEFAULT_TOPOLOGY, TrainConfig
from ..perfmodel import CalibrationParams
from ..transport.sim import LinkModel

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Point:
    arch: str
    w: int
    ps: int = 1

    def __str__(self):
        return f"{self.arch} w={self.w}" + (f" ps={self.ps}" if self.arch == "ps" else "")


@dataclass(frozen=True)
class ExperimentSpec:
    points: tuple
    backend: str = "sim"
    train: TrainConfig = TrainConfig()
    link: LinkModel = LinkModel(1e9)
    calibration: CalibrationParams = CalibrationParams(0.005, 0.001, 0.001)
    sizing: str = "exact"
    repetitions: int = 1
    execute_math: bool = True
    compute_timing: str = "model"
    topology: tuple = DEFAULT_TOPOLOGY
    data: dict = field(default_factory=lambda: {"source": "synth", "n": 6000, "d": 784,
                                                "k": 10, "seed": 0})
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.points:
            raise ConfigError("experiment needs at least one (arch, w) point")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.backend not in ("sim", "tcp"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.sizing not in SIZING_MODES:
            raise ConfigError(f"unknown sizing mode {self.sizing!r}")
        bad = sorted({p.arch for p in self.points} - set(ARCHITECTURES))
        if bad:
            raise ConfigError(f"unknown architecture(s) {bad}")

    def cluster(self, point: Point) -> ClusterConfig:
        return ClusterConfig(point.arch, point.w, point.ps, link=self.link, train=self.train,
                             calibration=self.calibration, sizing=self.sizing,
                             topology=self.topology, execute_math=self.execute_math,
                             compute_timing=self.compute_timing)

    @property
    def t_single(self) -> float:
        if self.calibration.t_single > 0:
            return self.calibration.t_single
        return self.calibration.t_processing / self.train.batch_size

    def replace(self, **kw) -> "ExperimentSpec":
        return replace(self, **kw)


def parse_int_list(text) -> list:
    """``"1-4, 8"`` -> ``[1, 2, 3, 4, 8]``."""
    out = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def make_points(archs, workers, ps_values) -> tuple:
    points = []
    for arch in archs:
        for w in workers:
            if arch == "ps":
                points.extend(Point(arch, w, ps) for ps in ps_values if ps <= w)
            else:
                points.append(Point(arch, w, 1))
    return tuple(points)


def load_dataset(spec: ExperimentSpec):
    """Dataset for a spec; ``None`` in what-if mode. MNIST falls back to synth
    when the IDX files are missing."""
    d = dict(spec.data)
    if d.get("source") == "mnist":
        images, labels = d.get("images"), d.get("labels")
        if images and labels and os.path.exists(images) and os.path.exists(labels):
            ds = data_mod.load_idx(images, labels)
            limit = int(d.get("limit") or 0)
            return ds.subset(limit) if limit else ds
        log.warning("MNIST files not found (%s, %s); using synthetic data", images, labels)
        d = {"source": "synth", "n": int(d.get("limit") or d.get("n", 6000)),
             "d": spec.topology[0], "k": spec.topology[-1], "seed": d.get("seed", 0)}
    if d.get("source") != "synth":
        raise ConfigError(f"unknown data source {d.get('source')!r}")
    if not spec.execute_math:
        return None
    return data_mod.synth(int(d["n"]), int(d["d"]), int(d["k"]), int(d.get("seed", 0)))


def data_spec_for_tcp(spec: ExperimentSpec):
    """A spec the rank processes can rebuild the dataset from, or None."""
    d = spec.data
    if d.get("source") == "synth":
        return {"source": "synth", "n": int(d["n"]), "d": int(d["d"]), "k": int(d["k"]),
                "seed": int(d.get("seed", 0))}
    if (d.get("source") == "mnist" and d.get("images") and os.path.exists(d["images"])):
        return {"source": "idx", "images": d["images"], "labels": d["labels"],
                "limit": int(d.get("limit") or 0)}
    return None


def sample_count(spec: ExperimentSpec) -> int:
    d = spec.data
    if d.get("source") == "mnist" and d.get("limit"):
        return int(d["limit"])
    return int(d.get("n", 60000))


def load_spec(path=None, overrides=None) -> ExperimentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
    o = {k: v for k, v in (overrides or {}).items() if v is not None}

    def get(section, key, default):
        return cp.get(section, key, fallback=default) if cp.has_section(section) else default

    try:
        archs = [a.strip().lower() for a in
                 str(o.get("arch", get("experiment", "arch", "ra"))).split(",") if a.strip()]
        workers = parse_int_list(o.get("workers", get("experiment", "workers", "4")))
        ps_values = parse_int_list(o.get("ps", get("experiment", "ps", "1")))
        topology = tuple(parse_int_list(get("train", "topology",
                                            ",".join(map(str, DEFAULT_TOPOLOGY)))))
        batch = int(o.get("batch", get("train", "batch", 100)))
        train = TrainConfig(
            learning_rate=float(o.get("lr", get("train", "learning_rate", 0.1))),
            batch_size=batch,
            epochs=int(o.get("epochs", get("train", "epochs", 1))),
            loss_kind=get("train", "loss", "quadratic"),
            seed=int(o.get("seed", get("train", "seed", 0))),
        )
        link = LinkModel(float(o.get("bandwidth", get("link", "bandwidth", 1e9))),
                         float(get("link", "overhead", 0.0)))
        t_proc = float(get("calibration", "t_processing", 0.005))
        calibration = CalibrationParams(
            t_processing=t_proc,
            ps_time=float(get("calibration", "ps_time", 0.001)),
            update_time=float(get("calibration", "update_time", 0.001)),
            t_single=float(get("calibration", "t_single", t_proc / batch)),
        )
        data = dict(cp.items("data")) if cp.has_section("data") else {}
        data.setdefault("source", "synth")
        data.setdefault("n", "6000")
        data.setdefault("d", str(topology[0]))
        data.setdefault("k", str(topology[-1]))
        data.setdefault("seed", str(train.seed))
        if "n" in o:
            data["n"] = str(o["n"])
        math_flag = o.get("math", get("experiment", "math", "true"))
        execute_math = str(math_flag).lower() in ("1", "true", "yes", "on")
        outputs = dict(cp.items("output")) if cp.has_section("output") else {}
        for key in ("csv", "json", "compare"):
            if o.get(key):
                outputs[key] = o[key]
        return ExperimentSpec(
            points=make_points(archs, workers, ps_values),
            backend=o.get("backend", get("experiment", "backend", "sim")),
            train=train, link=link, calibration=calibration,
            sizing=o.get("sizing", get("experiment", "sizing", "exact")),
            repetitions=int(o.get("repetitions", get("experiment", "repetitions", 1))),
            execute_math=execute_math,
            compute_timing=get("experiment", "compute_timing", "model"),
            topology=topology, data=data, outputs=outputs,
        )
    except ConfigError:
        raise
    except (ValueError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc
