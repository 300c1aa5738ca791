"""Timing of the compiled kernels against the numpy fallback."""

from __future__ import annotations

import os
import subprocess
import sys
import timeit

import numpy as np

from ..kernels import backend_module

CASES = ("sigmoid", "sigmoid_backward", "softmax_rows", "add_into", "sgd_step")


def _case(mod, name, size, dtype, rng):
    v = rng.standard_normal(size).astype(dtype)
    u = rng.standard_normal(size).astype(dtype)
    out = np.empty_like(v)
    if name == "sigmoid":
        return lambda: mod.sigmoid(v, out)
    if name == "sigmoid_backward":
        a = 1.0 / (1.0 + np.exp(-u))
        return lambda: mod.sigmoid_backward(v, a.astype(dtype), out)
    if name == "softmax_rows":
        z = v.reshape(-1, 10) if size % 10 == 0 else v[: size - size % 10].reshape(-1, 10)
        zo = np.empty_like(z)
        return lambda: mod.softmax_rows(z, zo)
    if name == "add_into":
        return lambda: mod.add_into(out, v)
    if name == "sgd_step":
        return lambda: mod.sgd_step(v, u, 0.1, out)
    raise ValueError(name)


def bench(size=109386, dtype=np.float32, repeat=5, number=200, seed=0):
    """Rows of (kernel, backend, best microseconds per call)."""
    rows = []
    for backend in ("python", "cython"):
        try:
            mod = backend_module(backend)
        except ImportError:
            continue
        for name in CASES:
            fn = _case(mod, name, size, dtype, np.random.default_rng(seed))
            best = min(timeit.repeat(fn, repeat=repeat, number=number)) / number
            rows.append((name, backend, best * 1e6))
    return rows


def format_table(rows) -> str:
    by = {}
    for name, backend, us in rows:
        by.setdefault(name, {})[backend] = us
    lines = [f"{'kernel':<18}{'python us':>12}{'cython us':>12}{'speedup':>9}"]
    for name in CASES:
        d = by.get(name, {})
        py, cy = d.get("python"), d.get("cython")
        sp = f"{py / cy:8.2f}x" if py and cy else "      n/a"
        lines.append(f"{name:<18}{py or float('nan'):>12.1f}{cy or float('nan'):>12.1f}{sp}")
    return "\n".join(lines)


_STEP_SNIPPET = """
from syncsgd import data, kernels, nn
ds = data.synth(100, 784, 10, 0)
p = nn.init_params()
print(kernels.BACKEND, nn.measure_t_processing(p, ds.X, ds.Y, reps=25))
"""


def bench_training_step():
    """Median forward+backward time on a batch of 100 under each backend.

    Each backend runs in its own interpreter because the choice is fixed at import.
    """
    rows = []
    for backend in ("python", "cython"):
        env = dict(os.environ, SYNCSGD_KERNELS=backend)
        proc = subprocess.run([sys.executable, "-c", _STEP_SNIPPET], env=env,
                              capture_output=True, text=True)
        if proc.returncode == 0:
            name, seconds = proc.stdout.split()
            rows.append((name, float(seconds) * 1e3))
    return rows
