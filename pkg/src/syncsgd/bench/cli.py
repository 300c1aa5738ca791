"""``syncsgd`` command line.

Exit codes: 0 ok, 2 usage/config, 3 protocol or straggler failure,
4 transport, 5 file I/O, 6 comparison.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..coord.config import ProtocolError, StragglerTimeout
from ..transport.tcp import TransportError
from . import harness
from .spec import ConfigError, load_spec

EXIT_OK, EXIT_CONFIG, EXIT_PROTOCOL, EXIT_TRANSPORT, EXIT_IO, EXIT_COMPARE = 0, 2, 3, 4, 5, 6

log = logging.getLogger("syncsgd")


def _add_overrides(p):
    p.add_argument("--config", "-c", help="INI experiment file")
    p.add_argument("--arch", help="comma list of ps, p2p, ra")
    p.add_argument("--workers", help="e.g. 2,4,8 or 1-7")
    p.add_argument("--ps", help="parameter server count(s)")
    p.add_argument("--backend", choices=("sim", "tcp"))
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--bandwidth", type=float, help="total bandwidth B in bytes/s")
    p.add_argument("--seed", type=int)
    p.add_argument("--sizing", choices=("exact", "paper-faithful"))
    p.add_argument("--repetitions", type=int)
    p.add_argument("--n", type=int, help="synthetic sample count")
    p.add_argument("--no-math", dest="math", action="store_const", const="false",
                   help="what-if mode: timings only, zero gradients")
    p.add_argument("--out", help="report CSV path (default: stdout)")
    p.add_argument("--json", help="also write the reports as JSON here")
    p.add_argument("--compare", help="write the model comparison CSV here")


def _spec(args):
    keys = ("arch", "workers", "ps", "backend", "batch", "epochs", "bandwidth", "seed",
            "sizing", "repetitions", "n", "math", "json", "compare")
    overrides = {k: getattr(args, k, None) for k in keys}
    overrides["csv"] = getattr(args, "out", None)
    return load_spec(args.config, overrides)


def cmd_run(args):
    spec = _spec(args)
    reports = harness.run(spec)
    out = spec.outputs
    text = harness.emit(reports, "csv", out.get("csv"))
    if not out.get("csv"):
        sys.stdout.write(text)
    if out.get("json"):
        harness.emit(reports, "json", out["json"])
    if out.get("compare"):
        n = reports[0].n if reports else None
        rows = harness.compare(reports, harness.predictions_for(spec, n), spec.calibration,
                               spec.t_single)
        harness.emit(rows, "csv", out["compare"], fields=harness.COMPARE_FIELDS)
        bad = [r for r in rows if r["check"] == "fail"]
        for r in bad:
            log.warning("model gap %s w=%d ps=%d: rel error %.3g", r["arch"], r["w"], r["ps"],
                        r["rel_error"])
    return EXIT_OK


def cmd_predict(args):
    spec = _spec(args)
    preds = harness.predictions_for(spec)
    print("arch,w,ps,variant,available_b,t_cpu,t_tcp,t_total,throughput")
    for (arch, w, ps), p in preds.items():
        print(f"{arch},{w},{ps},{p.variant},{p.available_b:.6g},{p.t_cpu:.6g},"
              f"{p.t_tcp:.6g},{p.t_total:.6g},{p.throughput:.6g}")
    return EXIT_OK


def cmd_compare(args):
    spec = _spec(args)
    with open(args.reports) as fh:
        reports = harness.reports_from_rows(harness.parse(fh.read(), "csv"))
    n = reports[0].n if reports else None
    rows = harness.compare(reports, harness.predictions_for(spec, n), spec.calibration,
                           spec.t_single)
    text = harness.emit(rows, "csv", spec.outputs.get("compare"),
                        fields=harness.COMPARE_FIELDS)
    if not spec.outputs.get("compare"):
        sys.stdout.write(text)
    return EXIT_OK


def cmd_calibrate(args):
    from .. import data, nn

    spec = _spec(args)
    ds = data.synth(max(spec.train.batch_size, 100), spec.topology[0], spec.topology[-1],
                    spec.train.seed)
    params = nn.init_params(spec.topology, seed=spec.train.seed)
    x, y = ds.X[:spec.train.batch_size], ds.Y[:spec.train.batch_size]
    t = nn.measure_t_processing(params, x, y, reps=args.reps)
    print("[calibration]")
    print(f"t_processing = {t:.6g}")
    print(f"t_single = {t / spec.train.batch_size:.6g}")
    return EXIT_OK


def cmd_rank(args):
    from ..coord.tcprun import rank_main

    rank_main(args.rank, args.launch)
    return EXIT_OK


def cmd_bench_kernels(args):
    from .kernelbench import bench, format_table

    print(format_table(bench(size=args.size, number=args.number)))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="syncsgd",
                                 description="Synchronous distributed SGD experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a sweep and write epoch reports")
    _add_overrides(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("predict", help="print closed-form predictions for the sweep")
    _add_overrides(p)
    p.set_defaults(func=cmd_predict)
    p = sub.add_parser("compare", help="compare a report CSV with the model")
    _add_overrides(p)
    p.add_argument("reports", help="report CSV written by 'run'")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("calibrate", help="measure per-batch processing time")
    _add_overrides(p)
    p.add_argument("--reps", type=int, default=7)
    p.set_defaults(func=cmd_calibrate)
    p = sub.add_parser("rank", help="run one TCP rank (used by the tcp backend)")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--launch", required=True)
    p.set_defaults(func=cmd_rank)
    p = sub.add_parser("bench-kernels", help="time compiled vs numpy kernels")
    p.add_argument("--size", type=int, default=109386)
    p.add_argument("--number", type=int, default=200)
    p.set_defaults(func=cmd_bench_kernels)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        category, code = classify(exc)
        if category is None:
            raise
        print(f"syncsgd: {category} error: {exc}", file=sys.stderr)
        return code


def classify(exc):
    """(category, exit code) for a failure, or (None, None) if it is a bug."""
    if isinstance(exc, harness.ExperimentError):
        category, code = classify(exc.cause)
        return (category, code) if category else ("config", EXIT_CONFIG)
    if isinstance(exc, ConfigError):
        return "config", EXIT_CONFIG
    if isinstance(exc, harness.CompareError):
        return "compare", EXIT_COMPARE
    if isinstance(exc, TransportError):
        return "transport", EXIT_TRANSPORT
    if isinstance(exc, (ProtocolError, StragglerTimeout)):
        return "protocol", EXIT_PROTOCOL
    if isinstance(exc, OSError):
        return "io", EXIT_IO
    return None, None
