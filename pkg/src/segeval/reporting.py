"""Serialization of cohort results: CSV tables and JSON series.

Formatting is fixed and locale-free (RFC-4180 commas, "." decimal point,
distances/ratios/volumes at 4 decimals, p-values as 2-decimal-mantissa
scientific notation). Every artifact names the run configuration in a
leading ``# config:`` comment or a ``config`` field, and is written
atomically (temp file + rename) so a crashed run never leaves truncated
output.

``anova.csv`` is recomputed from the rows exactly as serialized in
``metrics.csv`` (not from the full-precision in-memory records) so that
re-analysis from the CSV alone reproduces it bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from .cohort import (
    METRIC_NAMES,
    CohortResult,
    EvalConfig,
    MetricRecord,
    VolumeRow,
)
from .errors import MalformedCsv, StatsError, UnknownMetric
from .stats import AnovaTable, GroupSample, one_way_anova

_METRICS_HEADER = (
    ["subject", "method", "structure", "field_strength"]
    + list(METRIC_NAMES)
    + ["v_auto", "v_manual", "space", "status", "error"]
)
_VOLUMES_HEADER = [
    "subject", "method",
    "left_auto", "left_manual", "left_norm_diff",
    "right_auto", "right_manual", "right_norm_diff",
]
_ANOVA_HEADER = ["Measurement", "Source", "SS", "df", "MS", "F", "P-value"]


@dataclass(frozen=True)
class ReportBundle:
    metrics_csv: Path
    volumes_csv: Path
    anova_csv: Path
    boxplot_json: Path
    scatter_json: Path
    run_manifest: Path


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def _fmt_p(p: float) -> str:
    return f"{p:.2E}"


def _atomic_write(path: Path, data: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_dump(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def metrics_csv_text(records: list[MetricRecord], config: EvalConfig) -> str:
    buf = io.StringIO()
    buf.write(f"# config: {config.describe()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_METRICS_HEADER)
    for r in records:
        writer.writerow(
            [
                r.subject,
                r.method,
                r.structure,
                r.field_strength or "",
            ]
            + [_fmt(r.metric(m)) for m in METRIC_NAMES]
            + [_fmt(r.v_auto), _fmt(r.v_manual), r.space, r.status, r.error or ""]
        )
    return buf.getvalue()


def volumes_csv_text(rows: list[VolumeRow], config: EvalConfig) -> str:
    buf = io.StringIO()
    buf.write(f"# config: {config.describe()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_VOLUMES_HEADER)
    for row in rows:
        writer.writerow(
            [row.subject, row.method]
            + [
                _fmt(v)
                for v in (
                    row.left_auto, row.left_manual, row.left_norm_diff,
                    row.right_auto, row.right_manual, row.right_norm_diff,
                )
            ]
        )
    return buf.getvalue()


def anova_csv_text(
    tables: dict[str, AnovaTable], skipped: dict[str, str], config: EvalConfig
) -> str:
    buf = io.StringIO()
    buf.write(f"# config: {config.describe()}\n")
    for metric in sorted(skipped):
        buf.write(f"# skipped {metric}: {skipped[metric]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_ANOVA_HEADER)
    for metric in METRIC_NAMES:
        table = tables.get(metric)
        if table is None:
            continue
        writer.writerow(
            [metric, "Columns", _fmt(table.ss_between), table.df_between,
             _fmt(table.ms_between), _fmt(table.f), _fmt_p(table.p)]
        )
        writer.writerow(
            [metric, "Error", _fmt(table.ss_within), table.df_within,
             _fmt(table.ms_within), "", ""]
        )
        writer.writerow(
            [metric, "Total", _fmt(table.ss_total), table.df_total, "", "", ""]
        )
    return buf.getvalue()


def _split_comments(text: str) -> tuple[list[str], list[str]]:
    comments, data = [], []
    for line in text.splitlines():
        (comments if line.startswith("#") else data).append(line)
    return comments, data


def read_metrics_csv(path: str | Path) -> list[MetricRecord]:
    """Parse a metrics.csv produced by this package back into records."""
    text = Path(path).read_text(encoding="utf-8")
    _, data = _split_comments(text)
    reader = csv.DictReader(data)
    if reader.fieldnames is None:
        raise MalformedCsv(f"{path}: no header row")
    missing = [c for c in _METRICS_HEADER if c not in reader.fieldnames]
    if missing:
        raise MalformedCsv(f"{path}: missing columns {missing}")
    records = []
    for row_no, row in enumerate(reader, start=2):
        try:
            metrics = {
                m: (float(row[m]) if row[m] != "" else None) for m in METRIC_NAMES
            }
            records.append(
                MetricRecord(
                    subject=row["subject"],
                    method=row["method"],
                    structure=row["structure"],
                    field_strength=row["field_strength"] or None,
                    space=row["space"],
                    status=row["status"],
                    error=row["error"] or None,
                    v_auto=float(row["v_auto"]) if row["v_auto"] else None,
                    v_manual=float(row["v_manual"]) if row["v_manual"] else None,
                    **metrics,
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedCsv(f"{path}: row {row_no}: {e}") from None
    return records


def read_volumes_csv(path: str | Path) -> list[VolumeRow]:
    text = Path(path).read_text(encoding="utf-8")
    _, data = _split_comments(text)
    reader = csv.DictReader(data)
    if reader.fieldnames is None or any(
        c not in reader.fieldnames for c in _VOLUMES_HEADER
    ):
        raise MalformedCsv(f"{path}: bad volume table header")
    rows = []
    for row in reader:
        rows.append(
            VolumeRow(
                subject=row["subject"],
                method=row["method"],
                **{
                    c: (float(row[c]) if row[c] else None)
                    for c in _VOLUMES_HEADER[2:]
                },
            )
        )
    return rows


def anova_for_metric(
    records: list[MetricRecord], metric: str, pooling: str = "observation"
) -> AnovaTable:
    """One-way ANOVA across methods for one metric, from records alone.

    Matches the grouping used by cohort evaluation: methods in
    lexicographic order, ok records only, and under subject pooling the
    per-subject mean with subjects that have any errored record excluded.
    """
    if metric not in METRIC_NAMES:
        raise UnknownMetric(f"{metric!r}; valid names: {', '.join(METRIC_NAMES)}")
    from .cohort import _anova_groups  # grouping must match evaluate_cohort

    excluded = (
        {r.subject for r in records if r.status == "error"}
        if pooling == "subject"
        else set()
    )
    groups = _anova_groups(records, metric, pooling, excluded)
    return one_way_anova(groups)


def boxplot_payload(result: CohortResult, config: EvalConfig) -> dict:
    """Five-number summaries + n/mean per (metric, method): the data behind boxplots."""
    series: dict[str, dict[str, dict]] = {}
    ok = [r for r in result.records if r.status == "ok"]
    methods = sorted({r.method for r in ok})
    for metric in METRIC_NAMES:
        series[metric] = {}
        for method in methods:
            values = tuple(r.metric(metric) for r in ok if r.method == method)
            if not values:
                continue
            from .stats import group_summary

            series[metric][method] = asdict(
                group_summary(GroupSample(method, values))
            )
    return {"config": config.describe(), "series": series}


def scatter_payload(result: CohortResult, config: EvalConfig) -> dict:
    """Per-case values per (metric, method), in manifest order."""
    series: dict[str, dict[str, list]] = {metric: {} for metric in METRIC_NAMES}
    for r in result.records:
        if r.status != "ok":
            continue
        for metric in METRIC_NAMES:
            series[metric].setdefault(r.method, []).append(
                {
                    "subject": r.subject,
                    "structure": r.structure,
                    "field_strength": r.field_strength,
                    "value": r.metric(metric),
                }
            )
    return {"config": config.describe(), "series": series}


def write_report_bundle(
    result: CohortResult, out_dir: str | Path, config: EvalConfig
) -> ReportBundle:
    """Write all six artifacts atomically and return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(
        metrics_csv=out / "metrics.csv",
        volumes_csv=out / "volumes.csv",
        anova_csv=out / "anova.csv",
        boxplot_json=out / "boxplot.json",
        scatter_json=out / "scatter.json",
        run_manifest=out / "run_manifest.json",
    )
    started = datetime.now(timezone.utc).isoformat()

    metrics_text = metrics_csv_text(result.records, config)
    _atomic_write(bundle.metrics_csv, metrics_text)

    # ANOVA for the CSV artifact is recomputed from the serialized rows so
    # `segeval anova metrics.csv <metric>` reproduces it exactly.
    reread = read_metrics_csv(bundle.metrics_csv)
    tables: dict[str, AnovaTable] = {}
    skipped: dict[str, str] = {}
    for metric in METRIC_NAMES:
        try:
            tables[metric] = anova_for_metric(reread, metric, config.pooling)
        except StatsError as e:
            skipped[metric] = f"{type(e).__name__}: {e}"
    _atomic_write(bundle.anova_csv, anova_csv_text(tables, skipped, config))

    _atomic_write(bundle.volumes_csv, volumes_csv_text(result.volume_table, config))
    _atomic_write(bundle.boxplot_json, _json_dump(boxplot_payload(result, config)))
    _atomic_write(bundle.scatter_json, _json_dump(scatter_payload(result, config)))

    run_manifest = {
        "tool_version": result.provenance.tool_version,
        "config": {
            "space": config.space,
            "connectivity": config.connectivity,
            "unit": config.unit,
            "pooling": config.pooling,
            "default_rule": str(config.default_rule),
        },
        "config_hash": result.provenance.config_hash,
        "manifest_path": result.provenance.manifest_path,
        "n_cases": result.provenance.n_cases,
        "n_ok": result.provenance.n_ok,
        "n_error": result.provenance.n_error,
        "excluded_subjects": list(result.provenance.excluded_subjects),
        "anova_skipped": result.anova_errors,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    _atomic_write(bundle.run_manifest, _json_dump(run_manifest))
    return bundle


def anova_table_payload(table: AnovaTable) -> dict:
    """Full-precision machine-readable form of one ANOVA table."""
    return {
        "ss_between": table.ss_between,
        "ss_within": table.ss_within,
        "ss_total": table.ss_total,
        "df_between": table.df_between,
        "df_within": table.df_within,
        "df_total": table.df_total,
        "ms_between": table.ms_between,
        "ms_within": table.ms_within,
        "f": table.f,
        "p": table.p,
        "p_printed": _fmt_p(table.p),
    }
