"""Sweeps, model comparison and CSV/JSON report files.

Report CSV layout (``REPORT_SCHEMA``)::

    # syncsgd-epoch-report/1
    arch,backend,w,ps,sizing,repetition,epoch,n,batch,iterations,model_bytes,...

Comparison CSV layout (``COMPARE_SCHEMA``) starts with the same kind of
header line; see ``COMPARE_FIELDS``. Floats are written with 6 significant
digits. Empty cells mean "not applicable".
"""

from __future__ import annotations

import csv
import io
import json
import math
import os

from ..coord.config import ProtocolError, StragglerTimeout
from ..coord.run import REPORT_FIELDS, EpochReport, run_sim
from ..perfmodel import (ModelInputs, Prediction, _finish, ideal_throughput,
                         ideal_throughput_rate, predict)
from .spec import ExperimentSpec, Point, data_spec_for_tcp, load_dataset, sample_count

REPORT_SCHEMA = "syncsgd-epoch-report/1"
COMPARE_SCHEMA = "syncsgd-comparison/1"
SIM_TOLERANCE = 0.05

COMPARE_FIELDS = (
    "arch", "backend", "w", "ps", "sizing", "repetition", "epoch", "measured_time",
    "predicted_time", "rel_error", "model_gap", "check", "variant", "measured_throughput",
    "predicted_throughput", "ideal_as_written", "ideal_rate", "t_processing", "ps_time",
    "update_time", "t_single",
)

_INT_FIELDS = {"w", "ps", "repetition", "epoch", "n", "batch", "iterations", "model_bytes",
               "messages", "bytes"}
_STR_FIELDS = {"arch", "backend", "sizing", "check", "variant"}


class ExperimentError(RuntimeError):
    """A run failed; the message names the failing point."""

    def __init__(self, point, cause):
        super().__init__(f"{point}: {cause}")
        self.point = point
        self.cause = cause


class CompareError(ValueError):
    pass


def predict_point(spec: ExperimentSpec, point: Point, n=None) -> Prediction:
    """Closed-form prediction for one point. Ring-allreduce uses the per-iteration
    variant so it is comparable with a full epoch; a single collective worker
    has no communication term."""
    n = sample_count(spec) if n is None else n
    cfg = spec.cluster(point)
    inputs = ModelInputs(n=n, b=spec.train.batch_size, w=point.w, W=cfg.model_bytes,
                         B=spec.link.total_bandwidth, ps=point.ps)
    if point.arch in ("p2p", "ra") and point.w == 1:
        t_cpu = inputs.iterations * (spec.calibration.t_processing + spec.calibration.update_time)
        return _finish(point.arch, inputs, t_cpu, 0.0, spec.link.total_bandwidth,
                       variant="local")
    return predict(point.arch, inputs, spec.calibration, ra_per_iteration=True)


def predictions_for(spec: ExperimentSpec, n=None) -> dict:
    return {(p.arch, p.w, p.ps if p.arch == "ps" else 0): predict_point(spec, p, n)
            for p in spec.points}


def run(spec: ExperimentSpec, progress=None) -> list:
    """One EpochReport per (point, repetition, epoch), with predictions attached."""
    dataset = load_dataset(spec)
    n = dataset.n if dataset is not None else sample_count(spec)
    reports = []
    for point in spec.points:
        pred = predict_point(spec, point, n)
        for rep in range(spec.repetitions):
            cfg = spec.cluster(point)
            try:
                if spec.backend == "sim":
                    res = run_sim(cfg, dataset, n=n, repetition=rep)
                else:
                    from ..coord.tcprun import run_tcp

                    if dataset is None:
                        raise ValueError("the tcp backend needs math enabled")
                    res = run_tcp(cfg, dataset, data_spec=data_spec_for_tcp(spec),
                                  repetition=rep)
            except (ProtocolError, StragglerTimeout, OSError, ValueError) as exc:
                raise ExperimentError(point, exc) from exc
            for r in res.reports:
                r.predicted_time = pred.t_total
                reports.append(r)
            if progress:
                progress(point, rep, res.reports)
    return reports


def _key(r):
    return (r.arch, r.w, r.ps)


def compare(reports, predictions, calibration, t_single=None) -> list:
    """Measured vs predicted vs ideal, one row per report.

    Sim rows get a pass/fail check at 5%; tcp rows carry ``model_gap`` (seconds,
    measured minus predicted) and no check.
    """
    if not predictions:
        raise CompareError("no predictions to compare against")
    if not reports:
        raise CompareError("no reports to compare")
    t_single = t_single or calibration.t_single or calibration.t_processing / reports[0].batch
    rows = []
    for r in reports:
        pred = predictions.get(_key(r))
        if pred is None:
            raise CompareError(f"no prediction for point arch={r.arch} w={r.w} ps={r.ps}")
        rel = abs(r.epoch_time - pred.t_total) / pred.t_total
        rows.append({
            "arch": r.arch, "backend": r.backend, "w": r.w, "ps": r.ps, "sizing": r.sizing,
            "repetition": r.repetition, "epoch": r.epoch,
            "measured_time": r.epoch_time, "predicted_time": pred.t_total, "rel_error": rel,
            "model_gap": r.epoch_time - pred.t_total if r.backend == "tcp" else math.nan,
            "check": ("pass" if rel <= SIM_TOLERANCE else "fail") if r.backend == "sim" else "",
            "variant": pred.variant,
            "measured_throughput": r.throughput, "predicted_throughput": pred.throughput,
            "ideal_as_written": ideal_throughput(t_single, r.n, r.w),
            "ideal_rate": ideal_throughput_rate(t_single, r.w),
            "t_processing": calibration.t_processing, "ps_time": calibration.ps_time,
            "update_time": calibration.update_time, "t_single": t_single,
        })
    return rows


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else "%.6g" % v
    return str(v)


def _rows_of(records):
    return [r.as_row() if isinstance(r, EpochReport) else dict(r) for r in records]


def _schema_for(fields):
    return REPORT_SCHEMA if tuple(fields) == REPORT_FIELDS else COMPARE_SCHEMA


def render(records, fmt="csv", fields=REPORT_FIELDS) -> str:
    rows = _rows_of(records)
    schema = _schema_for(fields)
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# {schema}\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(fields)
        for row in rows:
            wr.writerow([_fmt(row[f]) for f in fields])
        return buf.getvalue()
    if fmt == "json":
        def cell(v):
            if isinstance(v, float):
                return None if math.isnan(v) else float("%.6g" % v)
            return v
        doc = {"schema": schema, "fields": list(fields),
               "rows": [[cell(row[f]) for f in fields] for row in rows]}
        return json.dumps(doc, indent=1) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit(records, fmt="csv", path=None, fields=REPORT_FIELDS) -> str:
    """Write records to ``path`` (or just return the text when path is None)."""
    text = render(records, fmt, fields)
    if path is not None:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _typed(field_name, value):
    if field_name in _STR_FIELDS:
        return value
    if value in ("", None):
        return math.nan
    if field_name in _INT_FIELDS:
        return int(value)
    return float(value)


def parse(text, fmt="csv") -> list:
    """Inverse of ``render``: list of row dicts."""
    if fmt == "csv":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# "):
            raise ValueError("missing schema header line")
        rd = csv.reader(lines[1:])
        fields = next(rd)
        return [{f: _typed(f, v) for f, v in zip(fields, row)} for row in rd]
    if fmt == "json":
        doc = json.loads(text)
        return [{f: _typed(f, v) for f, v in zip(doc["fields"], row)} for row in doc["rows"]]
    raise ValueError(f"unknown format {fmt!r}")


def reports_from_rows(rows) -> list:
    return [EpochReport(**{f: row[f] for f in REPORT_FIELDS}) for row in rows]

