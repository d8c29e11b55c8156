"""Aggregation, cross-mode ratios and report files."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from faasbench.analysis.stats import StatsError, ecdf, mean, median, normalize, p95
from faasbench.analysis.store import ResultsFile
from faasbench.observer import derive_metrics, error_rate, is_valid
from faasbench.telemetry import TelemetryError, aggregate
from faasbench.workloads import parse_workload, payload_size

METRICS = ("total_ns", "cold_start_ns", "io_latency_ns", "serialization_ns", "compute_ns", "output_len")
STATS = ("mean", "median", "p95")
MODES = ("native-process", "bytecode-interpreted", "bytecode-aot")
REPORT_FORMATS = ("markdown-table", "csv", "plot-data-csv")
FIGURES = (
    "fig5_image_sizes",
    "fig6_latency",
    "fig7_io_serialization_cdf",
    "fig8_resources",
    "fig9_throughput_cdf",
)
AGGREGATE_COLUMNS = ("workload", "mode", "group", "start_kind", "count", "invalid") + tuple(
    f"{m}_{s}" for m in METRICS for s in STATS
) + ("artifact_load_ns_mean",)
_REPLAY_TAG = "#c"


class ReportError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def replay_experiment_id(base: str, level: int) -> str:
    """Experiment id carried by records of a throughput replay at ``level``."""
    return f"{base}{_REPLAY_TAG}{level}"


def replay_level(experiment_id: str) -> int | None:
    head, sep, tail = experiment_id.rpartition(_REPLAY_TAG)
    return int(tail) if sep and tail.isdigit() else None


@dataclass(frozen=True)
class Summary:
    mean: float
    median: float
    p95: float

    @classmethod
    def of(cls, values: list[float]) -> Summary:
        return cls(mean(values), median(values), p95(values))


CellKey = tuple[str, str, "int | None", str]


@dataclass
class CellStats:
    workload: str
    mode: str
    group: int | None
    start_kind: str
    count: int
    invalid: int
    stats: dict[str, Summary]
    artifact_load_ns: float | None = None  # mean over records that report it

    def value(self, metric: str, stat: str = "mean") -> float:
        return getattr(self.stats[metric], stat)


@dataclass
class AggregateReport:
    cells: dict[CellKey, CellStats] = field(default_factory=dict)
    image_sizes: dict[tuple[str, str], int] = field(default_factory=dict)
    throughput: dict[tuple[str, str], list[tuple[int, float]]] = field(default_factory=dict)
    replay_latencies: dict[tuple[str, str, int], list[int]] = field(default_factory=dict)
    resources: dict[tuple[str, str, int | None], tuple[float, float]] = field(default_factory=dict)
    io_latencies: dict[str, list[int]] = field(default_factory=dict)
    serialization: dict[str, list[int]] = field(default_factory=dict)
    error_rate: float | None = None

    def cell(self, workload: str, mode: str, group: int | None, start_kind: str) -> CellStats:
        try:
            return self.cells[(workload, mode, group, start_kind)]
        except KeyError:
            raise ReportError("missing-cell", f"no aggregate for {workload}/{mode}/g{group}/{start_kind}") from None


def _key_order(key: tuple) -> tuple:
    return tuple((0, "") if k is None else (1, k) for k in key)


def build_report(results: ResultsFile) -> AggregateReport:
    rep = AggregateReport()
    grouped: dict[CellKey, list] = defaultdict(list)
    replays: dict[tuple[str, str, int], list[int]] = defaultdict(list)
    io_by_mode: dict[str, list[int]] = defaultdict(list)
    ser_by_mode: dict[str, list[int]] = defaultdict(list)
    instance_cell: dict[str, tuple[str, str, int | None]] = {}

    for r in results.records:
        level = replay_level(r.experiment_id)
        if level is not None:
            if is_valid(r):
                replays[(r.workload, r.mode, level)].append(derive_metrics(r).total_ns)
            continue
        grouped[(r.workload, r.mode, r.group, r.start_kind)].append(r)
        if r.instance_id:
            instance_cell.setdefault(r.instance_id, (r.workload, r.mode, r.group))

    for key in sorted(grouped, key=_key_order):
        recs = grouped[key]
        valid = [derive_metrics(r) for r in recs if is_valid(r)]
        stats = {}
        if valid:
            for m in METRICS:
                stats[m] = Summary.of([getattr(v, m) for v in valid])
            for v in valid:
                if v.io_latency_ns > 0:
                    io_by_mode[key[1]].append(v.io_latency_ns)
                ser_by_mode[key[1]].append(v.serialization_ns)
        loads = [r.artifact_load_ns for r in recs if r.artifact_load_ns is not None and is_valid(r)]
        rep.cells[key] = CellStats(*key, count=len(valid), invalid=len(recs) - len(valid), stats=stats,
                                   artifact_load_ns=mean(loads) if loads else None)
    if results.records:
        rep.error_rate = error_rate(results.records)

    for a in sorted(results.artifacts, key=lambda a: (a.workload.value, a.mode.value)):
        rep.image_sizes[(a.workload.value, a.mode.value)] = a.image_size

    for s in sorted(results.replays, key=lambda s: (s.workload, s.mode, s.level)):
        rep.throughput.setdefault((s.workload, s.mode), []).append((s.level, s.throughput_rps))
    rep.replay_latencies = {k: sorted(replays[k]) for k in sorted(replays)}

    per_instance: dict[str, list] = defaultdict(list)
    for s in results.samples:
        per_instance[s.instance_id].append(s)
    usage: dict[tuple, list[tuple[int, int]]] = defaultdict(list)
    for iid in sorted(per_instance):
        cell = instance_cell.get(iid)
        if cell is None:
            continue
        try:
            u = aggregate(per_instance[iid])
        except TelemetryError:
            continue
        usage[cell].append((u.cpu_time_delta_ns, u.peak_rss_bytes))
    for cell in sorted(usage, key=_key_order):
        vals = usage[cell]
        rep.resources[cell] = (mean([c for c, _ in vals]), mean([m for _, m in vals]))

    rep.io_latencies = {m: sorted(io_by_mode[m]) for m in sorted(io_by_mode)}
    rep.serialization = {m: sorted(ser_by_mode[m]) for m in sorted(ser_by_mode)}
    return rep


# -- ratios ----------------------------------------------------------


@dataclass(frozen=True)
class RatioRow:
    workload: str
    group: int | None
    start_kind: str
    metric: str
    mode_a: str
    mode_b: str
    value_a: float
    value_b: float
    ratio: float
    flagged: bool = False


def _ratio(a: float, b: float) -> float:
    if b == 0:
        return 1.0 if a == 0 else math.inf
    return a / b


def compare_modes(
    report: AggregateReport,
    mode_a: str,
    mode_b: str,
    metric: str = "total_ns",
    stat: str = "mean",
    start_kind: str | None = None,
    thresholds: dict[str, float] | None = None,
    strict: bool = True,
) -> list[RatioRow]:
    """Ratio ``mode_a / mode_b`` for every cell present for ``mode_a``.

    A cell is flagged when its ratio exceeds ``thresholds[metric]``. With
    ``strict`` a cell lacking its ``mode_b`` counterpart raises
    ``missing-cell``; otherwise it is skipped.
    """
    if metric not in METRICS or stat not in STATS:
        raise ReportError("missing-cell", f"unknown metric/stat {metric}/{stat}")
    limit = (thresholds or {}).get(metric)
    rows = []
    for (w, m, g, k), cell in report.cells.items():
        if m != mode_a or (start_kind is not None and k != start_kind):
            continue
        other = report.cells.get((w, mode_b, g, k))
        if other is None or not other.stats or not cell.stats:
            if strict:
                raise ReportError("missing-cell", f"{w}/g{g}/{k}: no {mode_b if other is None else 'valid'} data")
            continue
        a, b = cell.value(metric, stat), other.value(metric, stat)
        r = _ratio(a, b)
        rows.append(RatioRow(w, g, k, metric, mode_a, mode_b, a, b, r, limit is not None and r > limit))
    if strict and not rows:
        raise ReportError("missing-cell", f"no cells for {mode_a} vs {mode_b}")
    return sorted(rows, key=lambda r: _key_order((r.workload, r.group, r.start_kind)))


def image_ratios(report: AggregateReport, mode_a: str, mode_b: str) -> list[RatioRow]:
    rows = []
    for (w, m), size in sorted(report.image_sizes.items()):
        if m != mode_a or (w, mode_b) not in report.image_sizes:
            continue
        b = report.image_sizes[(w, mode_b)]
        rows.append(RatioRow(w, None, "", "image_bytes", mode_a, mode_b, size, b, _ratio(size, b)))
    return rows


# -- output ----------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(rows: list[tuple], header: tuple[str, ...]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def aggregate_rows(report: AggregateReport) -> list[tuple]:
    rows = []
    for key in sorted(report.cells, key=_key_order):
        c = report.cells[key]
        vals = [getattr(c.stats[m], s) if c.stats else None for m in METRICS for s in STATS]
        rows.append((c.workload, c.mode, c.group, c.start_kind, c.count, c.invalid, *vals, c.artifact_load_ns))
    return rows


def _markdown(report: AggregateReport) -> str:
    head = ("workload", "mode", "group", "start", "n", "invalid", "total mean ms", "total p95 ms",
            "cold start ms", "artifact load ms", "io ms", "serialization ms", "compute ms")
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for key in sorted(report.cells, key=_key_order):
        c = report.cells[key]

        def ms(metric: str, stat: str = "mean") -> str:
            return f"{c.value(metric, stat) / 1e6:.3f}" if c.stats else "-"

        lines.append("| " + " | ".join([
            c.workload, c.mode, _fmt(c.group), c.start_kind, str(c.count), str(c.invalid),
            ms("total_ns"), ms("total_ns", "p95"), ms("cold_start_ns"),
            "-" if c.artifact_load_ns is None else f"{c.artifact_load_ns / 1e6:.3f}", ms("io_latency_ns"),
            ms("serialization_ns"), ms("compute_ns"),
        ]) + " |")
    return "\n".join(lines) + "\n"


def _plot_rows(report: AggregateReport) -> dict[str, list[tuple]]:
    fig5 = [(mode, w, size) for (w, mode), size in sorted(report.image_sizes.items(), key=lambda kv: (kv[0][1], kv[0][0]))]

    fig6 = []
    for key in sorted(report.cells, key=_key_order):
        c = report.cells[key]
        if c.stats:
            fig6.append((f"{c.mode}:{c.start_kind}", f"{c.workload}:g{_fmt(c.group)}", c.value("total_ns")))

    fig7 = []
    for label, table in (("io", report.io_latencies), ("serialization", report.serialization)):
        for mode, values in table.items():
            if values:
                fig7 += [(f"{mode}:{label}", x, y) for x, y in ecdf(values)]

    fig8 = []
    for idx, label in ((0, "cpu"), (1, "memory")):
        group: dict[str, list[float]] = defaultdict(list)
        xs: dict[str, list[str]] = defaultdict(list)
        for (w, mode, g), vals in report.resources.items():
            x = f"{w}:{payload_size(parse_workload(w), g) if g else ''}"
            group[f"{mode}:{label}"].append(vals[idx])
            xs[f"{mode}:{label}"].append(x)
        try:
            normed = normalize(group)
        except StatsError:
            continue
        for series in sorted(normed):
            fig8 += list(zip([series] * len(normed[series]), xs[series], normed[series]))

    fig9 = []
    for (w, mode), curve in report.throughput.items():
        fig9 += [(f"{w}:{mode}:throughput", level, rps) for level, rps in curve]
    for (w, mode, level), lat in report.replay_latencies.items():
        if lat:
            fig9 += [(f"{w}:{mode}:c{level}", x, y) for x, y in ecdf(lat)]
    return dict(zip(FIGURES, (fig5, fig6, fig7, fig8, fig9)))


def emit_report(report: AggregateReport, fmt: str, out_dir: str | Path) -> list[Path]:
    """Writes the report in one format; output bytes depend only on ``report``."""
    if fmt not in REPORT_FORMATS:
        raise ReportError("bad-format", f"unknown report format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def put(name: str, text: str) -> None:
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)

    if fmt == "markdown-table":
        put("aggregates.md", _markdown(report))
    elif fmt == "csv":
        put("aggregates.csv", _csv(aggregate_rows(report), AGGREGATE_COLUMNS))
    else:
        for name, rows in _plot_rows(report).items():
            put(f"{name}.csv", _csv(rows, ("series", "x", "y")))
    return written


# -- findings --------------------------------------------------------

_NATIVE, _INTERP, _AOT = MODES


def _max_ratio(rows: list[RatioRow]) -> RatioRow | None:
    finite = [r for r in rows if math.isfinite(r.ratio)]
    return max(finite, key=lambda r: r.ratio) if finite else None


def _describe(row: RatioRow | None, what: str) -> str:
    if row is None:
        return f"{what}: n/a (missing data)"
    where = row.workload + (f" g{row.group}" if row.group is not None else "")
    return f"{what}: up to {row.ratio:.2f}x ({where}: {row.value_a:.4g} vs {row.value_b:.4g})"


def _safe(fn, *args, **kw) -> list[RatioRow]:
    try:
        return fn(*args, **kw)
    except ReportError:
        return []


def _split(rows: list[RatioRow], data_intensive: bool) -> list[RatioRow]:
    return [r for r in rows if parse_workload(r.workload).high_io == data_intensive]


def _resource_rows(report: AggregateReport, mode: str, idx: int, metric: str) -> list[RatioRow]:
    rows = []
    for (w, m, g), vals in report.resources.items():
        base = report.resources.get((w, _NATIVE, g))
        # a zero baseline is below the sampler's resolution, not a measurement
        if m == mode and base is not None and base[idx] > 0:
            rows.append(RatioRow(w, g, "", metric, mode, _NATIVE, vals[idx], base[idx], _ratio(vals[idx], base[idx])))
    return rows


def findings(report: AggregateReport) -> list[str]:
    """One summary line per headline comparison (Findings 1-6 analogues)."""
    lines = []
    f1 = [_max_ratio(image_ratios(report, _NATIVE, m)) for m in (_INTERP, _AOT)]
    lines.append("Finding 1 (image size): " + "; ".join(
        _describe(r, f"native image / {m} module") for r, m in zip(f1, ("interpreted", "AoT"))))

    warm = {m: _safe(compare_modes, report, m, _NATIVE, start_kind="warm", strict=False) for m in (_INTERP, _AOT)}
    lines.append("Finding 2 (warm latency): " + "; ".join(
        _describe(_max_ratio(warm[m]), f"{label} / native") for m, label in ((_AOT, "AoT"), (_INTERP, "interpreted"))))

    cold = {m: _safe(compare_modes, report, m, _NATIVE, start_kind="cold", strict=False) for m in (_INTERP, _AOT)}
    parts = []
    for m, label in ((_AOT, "AoT"), (_INTERP, "interpreted")):
        for data, kind in ((False, "compute-intensive"), (True, "data-intensive")):
            parts.append(_describe(_max_ratio(_split(cold[m], data)), f"{label} / native cold, {kind}"))
    lines.append("Finding 3 (cold latency): " + "; ".join(parts))

    parts = []
    for m, label in ((_AOT, "AoT"), (_INTERP, "interpreted")):
        for metric, name in (("io_latency_ns", "I/O"), ("serialization_ns", "serialization")):
            rows = _safe(compare_modes, report, m, _NATIVE, metric=metric, strict=False)
            parts.append(_describe(_max_ratio([r for r in rows if r.value_b > 0]), f"{label} / native {name}"))
    lines.append("Finding 4 (I/O and serialization): " + "; ".join(parts))

    parts = []
    for m, label in ((_AOT, "AoT"), (_INTERP, "interpreted")):
        parts.append(_describe(_max_ratio(_resource_rows(report, m, 0, "cpu_time_ns")), f"{label} / native CPU time"))
        parts.append(_describe(_max_ratio(_resource_rows(report, m, 1, "peak_rss_bytes")), f"{label} / native peak memory"))
    lines.append("Finding 5 (resources): " + "; ".join(parts))

    parts = []
    for m, label in ((_INTERP, "interpreted"), (_AOT, "AoT")):
        lat_rows, tput_rows = [], []
        for (w, mode, level), lat in report.replay_latencies.items():
            base = report.replay_latencies.get((w, _NATIVE, level))
            if mode == m and lat and base:
                a, b = median(lat), median(base)
                lat_rows.append(RatioRow(w, None, f"c{level}", "total_ns", m, _NATIVE, a, b, _ratio(a, b)))
        for (w, mode), curve in report.throughput.items():
            base = dict(report.throughput.get((w, _NATIVE), []))
            for level, rps in curve if mode == m else []:
                if level in base:
                    tput_rows.append(RatioRow(w, None, f"c{level}", "throughput", _NATIVE, m, base[level], rps,
                                              _ratio(base[level], rps)))
        parts.append(_describe(_max_ratio(lat_rows), f"{label} / native median latency under load"))
        parts.append(_describe(_max_ratio(tput_rows), f"native / {label} throughput"))
    lines.append("Finding 6 (concurrency): " + "; ".join(parts))
    return lines


def write_report(results: ResultsFile, out_dir: str | Path) -> list[Path]:
    """All report artifacts: aggregates (md, csv), figure data and findings.md."""
    report = build_report(results)
    out = Path(out_dir)
    written = []
    for fmt in REPORT_FORMATS:
        written += emit_report(report, fmt, out)
    text = "# Findings\n\n" + "".join(f"- {line}\n" for line in findings(report))
    if report.error_rate is not None:
        text += f"\nError rate: {report.error_rate:.4f}\n"
    p = out / "findings.md"
    p.write_text(text, encoding="utf-8")
    return written + [p]

