"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy versions in ``_pykernels`` are used. Set ``SYNCSGD_KERNELS=python`` to
force the fallback (e.g. to compare both in ``benchmarks/bench_kernels.py``).

Both backends agree bitwise on ``add_into``, ``sgd_step`` and
``sigmoid_backward``. ``sigmoid`` always comes from numpy: its vectorized exp
beats a scalar libm loop several times over, so the compiled version exists only
for the benchmark. ``softmax_rows`` may differ in the last ulp between
backends, so never mix backends inside one training run.
"""

import os

from . import _pykernels

_forced = os.environ.get("SYNCSGD_KERNELS", "").lower()

if _forced == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        _impl = _pykernels
        BACKEND = "python"

sigmoid = _pykernels.sigmoid
sigmoid_backward = _impl.sigmoid_backward
softmax_rows = _impl.softmax_rows
add_into = _impl.add_into
sgd_step = _impl.sgd_step


def backend_module(name):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    if name == "python":
        return _pykernels
    from . import _ckernels

    return _ckernels
