"""Batch evaluation of (subject, method, structure) cases from a manifest.

Cases are independent by construction and evaluated in parallel; per-case
failures degrade to error-status records so a long batch never dies on one
bad file. Aggregation is a deterministic sequential fold: records keep
manifest order, aggregates use lexicographic order, so repeated runs are
byte-identical regardless of the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .errors import (
    AllCasesFailed,
    DuplicateCase,
    EmptySubgroup,
    MalformedRow,
    StatsError,
    UnknownStructure,
)
from .overlap import (
    VolumePair,
    confusion_counts,
    dice,
    normalized_volume_difference,
    precision,
    ravd,
    sensitivity,
    similarity,
    volume,
)
from .stats import AnovaTable, GroupSample, SummaryStats, group_summary, one_way_anova
from .surface import compare_surfaces
from .volume import BinarizeRule, binarize, check_compatible, load_volume

# Canonical metric column order; also the metric names accepted by the
# ANOVA entry points and used as CSV headers.
METRIC_NAMES = (
    "hausdorff",
    "dice",
    "similarity",
    "precision",
    "rms",
    "assd",
    "mean_distance",
    "sensitivity",
    "ravd",
)

LEFT = "left_hippocampus"
RIGHT = "right_hippocampus"
_STRUCTURE_ALIASES = {"left": LEFT, "left_hippocampus": LEFT,
                      "right": RIGHT, "right_hippocampus": RIGHT}
_FIELD_STRENGTH_ALIASES = {"1.5t": "1.5T", "3t": "3T"}
FIELD_STRENGTHS = ("1.5T", "3T")

_MANIFEST_COLUMNS = ("subject", "method", "structure", "auto", "manual")


@dataclass(frozen=True)
class CaseSpec:
    subject_id: str
    method: str
    structure: str
    auto_path: str
    manual_path: str
    field_strength: str | None = None
    binarize_rule: BinarizeRule | None = None


@dataclass(frozen=True)
class EvalConfig:
    space: str = "index"  # "index" | "physical"
    connectivity: int = 6  # 6 | 26
    unit: str = "mm3"  # "mm3" | "voxels"
    pooling: str = "observation"  # "observation" | "subject"
    threads: int | None = None  # None -> machine parallelism
    default_rule: BinarizeRule = field(default_factory=BinarizeRule.nonzero)

    def config_hash(self) -> str:
        # threads excluded: the worker count must not change any output byte
        payload = json.dumps(
            {
                "space": self.space,
                "connectivity": self.connectivity,
                "unit": self.unit,
                "pooling": self.pooling,
                "default_rule": str(self.default_rule),
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def describe(self) -> str:
        return (
            f"space={self.space} connectivity={self.connectivity} "
            f"unit={self.unit} pooling={self.pooling} "
            f"binarize={self.default_rule} hash={self.config_hash()}"
        )


@dataclass(frozen=True)
class MetricRecord:
    """All nine metrics for one case, or an error status."""

    subject: str
    method: str
    structure: str
    field_strength: str | None
    space: str
    status: str  # "ok" | "error"
    error: str | None = None
    hausdorff: float | None = None
    dice: float | None = None
    similarity: float | None = None
    precision: float | None = None
    rms: float | None = None
    assd: float | None = None
    mean_distance: float | None = None
    sensitivity: float | None = None
    ravd: float | None = None
    v_auto: float | None = None
    v_manual: float | None = None

    def metric(self, name: str) -> float | None:
        if name not in METRIC_NAMES:
            raise KeyError(name)
        return getattr(self, name)


@dataclass(frozen=True)
class VolumeRow:
    """One subject × method row of the left/right volume table."""

    subject: str
    method: str
    left_auto: float | None = None
    left_manual: float | None = None
    left_norm_diff: float | None = None
    right_auto: float | None = None
    right_manual: float | None = None
    right_norm_diff: float | None = None


@dataclass(frozen=True)
class Provenance:
    tool_version: str
    config_hash: str
    manifest_path: str
    n_cases: int
    n_ok: int
    n_error: int
    excluded_subjects: tuple[str, ...] = ()


@dataclass(frozen=True)
class CohortResult:
    records: list[MetricRecord]
    anova: dict[str, AnovaTable]
    anova_errors: dict[str, str]
    volume_table: list[VolumeRow]
    subgroup_summaries: dict[str, dict[str, dict[str, SummaryStats]]]
    provenance: Provenance


def _normalize_structure(raw: str, row_no: int) -> str:
    text = raw.strip()
    if not text:
        raise UnknownStructure(f"row {row_no}: blank structure")
    return _STRUCTURE_ALIASES.get(text.lower(), text)


def _normalize_field_strength(raw: str | None, row_no: int) -> str | None:
    if raw is None:
        return None
    text = raw.strip()
    if not text:
        return None
    try:
        return _FIELD_STRENGTH_ALIASES[text.lower()]
    except KeyError:
        raise MalformedRow(
            f"row {row_no}: field_strength {text!r} not one of 1.5T, 3T"
        ) from None


def _row_to_case(row: dict, row_no: int, base: Path) -> CaseSpec:
    for col in _MANIFEST_COLUMNS:
        if col == "structure":
            if row.get(col) is None:
                raise MalformedRow(f"row {row_no}: missing column 'structure'")
            continue  # blank structure gets the more specific UnknownStructure
        if row.get(col) is None or not str(row[col]).strip():
            raise MalformedRow(f"row {row_no}: missing column {col!r}")
    label = row.get("label")
    rule = None
    if label is not None and str(label).strip():
        try:
            rule = BinarizeRule.equals(float(label))
        except ValueError:
            raise MalformedRow(f"row {row_no}: label {label!r} is not a number") from None
    return CaseSpec(
        subject_id=str(row["subject"]).strip(),
        method=str(row["method"]).strip(),
        structure=_normalize_structure(str(row["structure"]), row_no),
        auto_path=str(base / str(row["auto"]).strip()),
        manual_path=str(base / str(row["manual"]).strip()),
        field_strength=_normalize_field_strength(row.get("field_strength"), row_no),
        binarize_rule=rule,
    )


def parse_manifest(path: str | Path) -> list[CaseSpec]:
    """Read a cohort manifest (CSV or JSON-lines) into case specs.

    Relative auto/manual paths are resolved against the manifest's
    directory. The (subject, method, structure) key must be unique.
    """
    path = Path(path)
    base = path.parent
    text = path.read_text(encoding="utf-8")
    rows: list[tuple[int, dict]] = []
    if path.suffix.lower() in (".jsonl", ".ndjson", ".json"):
        for row_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRow(f"row {row_no}: invalid JSON ({e.msg})") from None
            if not isinstance(obj, dict):
                raise MalformedRow(f"row {row_no}: expected a JSON object")
            rows.append((row_no, obj))
    else:
        reader = csv.DictReader(text.splitlines())
        if reader.fieldnames is None:
            raise MalformedRow("manifest has no header row")
        missing = [c for c in _MANIFEST_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise MalformedRow(f"manifest header is missing columns {missing}")
        # data rows start at line 2, after the header
        for row_no, row in enumerate(reader, start=2):
            rows.append((row_no, row))

    cases: list[CaseSpec] = []
    seen: dict[tuple[str, str, str], int] = {}
    for row_no, row in rows:
        case = _row_to_case(row, row_no, base)
        key = (case.subject_id, case.method, case.structure)
        if key in seen:
            raise DuplicateCase(
                f"rows {seen[key]} and {row_no} both define case {key}"
            )
        seen[key] = row_no
        cases.append(case)
    return cases


def compute_record(case: CaseSpec, config: EvalConfig) -> MetricRecord:
    """Compute all nine metrics for one case; raises on any failure."""
    vol_a = load_volume(case.auto_path)
    vol_m = load_volume(case.manual_path)
    rule = case.binarize_rule or config.default_rule
    mask_a = binarize(vol_a, rule)
    mask_m = binarize(vol_m, rule)
    check_compatible(mask_a, mask_m)
    counts = confusion_counts(mask_a, mask_m)
    v_auto = volume(mask_a, config.unit)
    v_manual = volume(mask_m, config.unit)
    pair = VolumePair(v_auto=v_auto, v_manual=v_manual, unit=config.unit)
    surf = compare_surfaces(
        mask_a, mask_m, space=config.space, connectivity=config.connectivity
    )
    return MetricRecord(
        subject=case.subject_id,
        method=case.method,
        structure=case.structure,
        field_strength=case.field_strength,
        space=config.space,
        status="ok",
        hausdorff=surf.hausdorff,
        dice=dice(counts),
        similarity=similarity(counts),
        precision=precision(counts),
        rms=surf.rms,
        assd=surf.assd,
        mean_distance=surf.mean_distance,
        sensitivity=sensitivity(counts),
        ravd=ravd(pair),
        v_auto=v_auto,
        v_manual=v_manual,
    )


def evaluate_case(case: CaseSpec, config: EvalConfig) -> MetricRecord:
    """Like :func:`compute_record`, but failures become error-status records."""
    try:
        return compute_record(case, config)
    except Exception as e:  # noqa: BLE001 - isolation is the contract here
        return MetricRecord(
            subject=case.subject_id,
            method=case.method,
            structure=case.structure,
            field_strength=case.field_strength,
            space=config.space,
            status="error",
            error=f"{type(e).__name__}: {e}",
        )


def _case_worker(args: tuple[CaseSpec, EvalConfig]) -> MetricRecord:
    return evaluate_case(*args)


def _anova_groups(
    records: list[MetricRecord], metric: str, pooling: str, excluded: set[str]
) -> list[GroupSample]:
    methods = sorted({r.method for r in records})
    groups = []
    for method in methods:
        if pooling == "subject":
            by_subject: dict[str, list[float]] = {}
            for r in records:
                if r.status != "ok" or r.method != method or r.subject in excluded:
                    continue
                by_subject.setdefault(r.subject, []).append(r.metric(metric))
            values = [
                sum(vs) / len(vs) for _, vs in sorted(by_subject.items())
            ]
        else:
            values = [
                r.metric(metric)
                for r in records
                if r.status == "ok" and r.method == method
            ]
        if values:
            groups.append(GroupSample(label=method, values=tuple(values)))
    return groups


def _volume_rows(records: list[MetricRecord]) -> list[VolumeRow]:
    cells: dict[tuple[str, str], dict] = {}
    for r in records:
        if r.status != "ok" or r.structure not in (LEFT, RIGHT):
            continue
        side = "left" if r.structure == LEFT else "right"
        entry = cells.setdefault((r.subject, r.method), {})
        entry[f"{side}_auto"] = r.v_auto
        entry[f"{side}_manual"] = r.v_manual
        if r.v_manual and r.v_manual > 0:
            entry[f"{side}_norm_diff"] = normalized_volume_difference(
                VolumePair(r.v_auto, r.v_manual, "n/a")
            )
    return [
        VolumeRow(subject=subject, method=method, **entry)
        for (subject, method), entry in sorted(cells.items())
    ]


def _subgroup_summaries(records: list[MetricRecord]):
    out: dict[str, dict[str, dict[str, SummaryStats]]] = {}
    for fs in FIELD_STRENGTHS:
        fs_records = [r for r in records if r.status == "ok" and r.field_strength == fs]
        if not fs_records:
            continue
        per_method: dict[str, dict[str, SummaryStats]] = {}
        for method in sorted({r.method for r in fs_records}):
            vals = [r for r in fs_records if r.method == method]
            per_method[method] = {
                metric: group_summary(
                    GroupSample(method, tuple(r.metric(metric) for r in vals))
                )
                for metric in METRIC_NAMES
            }
        out[fs] = per_method
    return out


def evaluate_cohort(
    cases: list[CaseSpec], config: EvalConfig, manifest_path: str = ""
) -> CohortResult:
    """Evaluate every case (in parallel) and assemble all aggregate tables.

    Per-metric ANOVA failures (degenerate data, too few methods) are
    recorded per metric rather than aborting the run.
    """
    if not cases:
        raise ValueError("cohort has no cases")
    workers = config.threads or os.cpu_count() or 1
    jobs = [(case, config) for case in cases]
    if workers == 1 or len(cases) == 1:
        records = [evaluate_case(case, config) for case in cases]
    else:
        chunksize = max(1, len(jobs) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_case_worker, jobs, chunksize=chunksize))

    n_ok = sum(1 for r in records if r.status == "ok")
    if n_ok == 0:
        raise AllCasesFailed(f"all {len(records)} cases errored")

    excluded: set[str] = set()
    if config.pooling == "subject":
        excluded = {r.subject for r in records if r.status == "error"}

    anova: dict[str, AnovaTable] = {}
    anova_errors: dict[str, str] = {}
    for metric in METRIC_NAMES:
        groups = _anova_groups(records, metric, config.pooling, excluded)
        if len(groups) < 2:
            anova_errors[metric] = (
                f"InconsistentMethods: only {len(groups)} method(s) with data"
            )
            continue
        try:
            anova[metric] = one_way_anova(groups)
        except StatsError as e:
            anova_errors[metric] = f"{type(e).__name__}: {e}"

    provenance = Provenance(
        tool_version=__version__,
        config_hash=config.config_hash(),
        manifest_path=str(manifest_path),
        n_cases=len(records),
        n_ok=n_ok,
        n_error=len(records) - n_ok,
        excluded_subjects=tuple(sorted(excluded)),
    )
    return CohortResult(
        records=records,
        anova=anova,
        anova_errors=anova_errors,
        volume_table=_volume_rows(records),
        subgroup_summaries=_subgroup_summaries(records),
        provenance=provenance,
    )


def subgroup_compare(result: CohortResult, partition: str = "field_strength") -> dict:
    """Per method per metric: summaries per field strength and 3T−1.5T deltas."""
    return subgroup_report(result.records, partition)


def subgroup_report(
    records: list[MetricRecord], partition: str = "field_strength"
) -> dict:
    """Field-strength comparison from bare records (e.g. a re-read metrics CSV)."""
    if partition != "field_strength":
        raise ValueError(f"unsupported partition {partition!r}")
    tagged = [r for r in records if r.status == "ok" and r.field_strength is not None]
    if not tagged:
        raise EmptySubgroup("no cases carry field_strength")
    methods = sorted({r.method for r in records if r.status == "ok"})
    report: dict = {"partition": partition, "methods": {}}
    for method in methods:
        for fs in FIELD_STRENGTHS:
            if not any(r.method == method and r.field_strength == fs for r in tagged):
                raise EmptySubgroup(f"({method}, {fs})")
        per_metric = {}
        for metric in METRIC_NAMES:
            cell = {}
            for fs in FIELD_STRENGTHS:
                values = tuple(
                    r.metric(metric)
                    for r in tagged
                    if r.method == method and r.field_strength == fs
                )
                cell[fs] = asdict(group_summary(GroupSample(method, values)))
            cell["delta_mean"] = cell["3T"]["mean"] - cell["1.5T"]["mean"]
            per_metric[metric] = cell
        report["methods"][method] = per_metric
    return report
