"""Closed-form epoch latency and throughput for PS, P2P and ring-allreduce.

All formulas are evaluated exactly as published, including two quirks that
are kept on purpose and exposed through separately named variants:

* the ring-allreduce communication term has no per-epoch iteration factor;
  ``ra_predict(..., per_iteration=True)`` multiplies it by ``(n/b)/w``, which
  is what a run that allreduces once per iteration actually pays;
* the "ideal" throughput ``(T_single * n) * w`` is not a rate;
  ``ideal_throughput_rate`` gives the dimensionally consistent ``w / T_single``.

Units: W in bytes, B in bytes/s, times in seconds.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CalibrationParams:
    t_processing: float           # s per iteration (forward + loss + backward)
    ps_time: float = 0.0          # s per iteration, server-side update
    update_time: float = 0.0      # s per iteration, local update (P2P / RA)
    t_single: float = 0.0         # s per sample

    def __post_init__(self):
        for name in ("t_processing", "ps_time", "update_time", "t_single"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class ModelInputs:
    n: int          # training samples
    b: int          # batch size
    w: int          # workers
    W: float        # model size, bytes
    B: float        # total bandwidth, bytes/s
    ps: int = 1
    epoch: int = 1

    def __post_init__(self):
        if min(self.n, self.b, self.w, self.ps, self.epoch) < 1 or self.B <= 0 or self.W < 0:
            raise ValueError(f"invalid model inputs {self}")

    @property
    def iterations(self) -> float:
        """Iterations per worker per epoch, ``(n/b)/w``."""
        return (self.n / self.b) / self.w


@dataclass(frozen=True)
class Prediction:
    arch: str
    t_cpu: float
    t_tcp: float
    t_total: float
    throughput: float
    available_b: float
    pull: float = 0.0
    push: float = 0.0
    variant: str = "as-printed"
    terms: dict = field(default_factory=dict)


def _finish(arch, inputs, t_cpu, t_tcp, available_b, **kw):
    t_total = t_cpu + t_tcp
    throughput = inputs.epoch * inputs.n / t_total if t_total > 0 else float("inf")
    return Prediction(arch, t_cpu, t_tcp, t_total, throughput, available_b, **kw)


def ps_available_bandwidth(B, w, ps) -> float:
    if ps < 1 or w < ps:
        raise ValueError(f"PS sharing needs w >= ps >= 1, got w={w} ps={ps}")
    return (B / w) * ps


def ps_predict(inputs: ModelInputs, calib: CalibrationParams) -> Prediction:
    avail = ps_available_bandwidth(inputs.B, inputs.w, inputs.ps)
    iters = inputs.iterations
    pull = inputs.epoch * (inputs.W / avail) * iters
    push = inputs.epoch * ((inputs.W / inputs.w) / avail) * iters
    t_cpu = inputs.epoch * iters * (calib.t_processing + calib.ps_time)
    return _finish("ps", inputs, t_cpu, pull + push, avail, pull=pull, push=push)


def p2p_available_bandwidth(B, w) -> float:
    if w < 2:
        raise ValueError(f"P2P needs at least 2 workers, got {w}")
    return B / (2 * (w - 1))


def p2p_predict(inputs: ModelInputs, calib: CalibrationParams) -> Prediction:
    avail = p2p_available_bandwidth(inputs.B, inputs.w)
    iters = inputs.iterations
    t_tcp = ((inputs.W / inputs.w) / avail) * iters
    t_cpu = inputs.epoch * iters * (calib.t_processing + calib.update_time)
    return _finish("p2p", inputs, t_cpu, t_tcp, avail, push=t_tcp)


def ra_predict(inputs: ModelInputs, calib: CalibrationParams,
               per_iteration=False) -> Prediction:
    if inputs.w < 2:
        raise ValueError(f"ring-allreduce needs at least 2 workers, got {inputs.w}")
    iters = inputs.iterations
    t_tcp = (2 * (inputs.w - 1) * inputs.W / inputs.w) / inputs.B
    if per_iteration:
        t_tcp *= inputs.epoch * iters
    t_cpu = inputs.epoch * iters * (calib.t_processing + calib.update_time)
    return _finish("ra", inputs, t_cpu, t_tcp, inputs.B, push=t_tcp,
                   variant="per-iteration" if per_iteration else "as-printed")


def predict(arch, inputs: ModelInputs, calib: CalibrationParams,
            ra_per_iteration=False) -> Prediction:
    arch = arch.lower()
    if arch == "ps":
        return ps_predict(inputs, calib)
    if arch == "p2p":
        return p2p_predict(inputs, calib)
    if arch == "ra":
        return ra_predict(inputs, calib, per_iteration=ra_per_iteration)
    raise ValueError(f"unknown architecture {arch!r}")


def ideal_throughput(t_single, n, w) -> float:
    """``(T_single * n) * w`` exactly as published (units: s * workers)."""
    if not t_single > 0:
        raise ValueError("t_single must be positive")
    return (t_single * n) * w


def ideal_throughput_rate(t_single, w) -> float:
    """Linear-scaling ideal in samples/s: ``w / T_single``."""
    if not t_single > 0:
        raise ValueError("t_single must be positive")
    return w / t_single


def calibrate(measured_runs, batch_size=None) -> CalibrationParams:
    """Fit the constants from measured epoch reports.

    Each run needs ``compute``, ``update`` and ``iterations`` (phase seconds
    per epoch); ``batch_size`` defaults to the run's own ``batch`` field.
    """
    runs = list(measured_runs)
    if not runs:
        raise ValueError("calibrate needs at least one measured run")
    t_proc = statistics.median(r.compute / r.iterations for r in runs)
    update = statistics.median(r.update / r.iterations for r in runs)
    b = batch_size if batch_size is not None else runs[0].batch
    return CalibrationParams(t_processing=t_proc, ps_time=update, update_time=update,
                             t_single=t_proc / b)
