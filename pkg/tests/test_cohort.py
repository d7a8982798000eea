from __future__ import annotations

import json

import numpy as np
import pytest
from helpers import build_cohort, sphere_bits, write_rawvol

from segeval.cohort import (
    METRIC_NAMES,
    CaseSpec,
    EvalConfig,
    evaluate_cohort,
    parse_manifest,
    subgroup_compare,
)
from segeval.errors import (
    AllCasesFailed,
    DuplicateCase,
    EmptySubgroup,
    MalformedRow,
    UnknownStructure,
)
from segeval.reporting import metrics_csv_text
from segeval.volume import BinarizeRule


def _write_manifest(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestParseManifest:
    def test_four_rows(self, tmp_path):
        manifest = _write_manifest(
            tmp_path / "m.csv",
            [
                "subject,method,structure,auto,manual,field_strength,label",
                "s1,alpha,left_hippocampus,a1.nii,m1.nii,1.5T,",
                "s1,beta,left_hippocampus,a2.nii,m1.nii,1.5T,",
                "s2,alpha,left_hippocampus,a3.nii,m2.nii,3T,",
                "s2,beta,left_hippocampus,a4.nii,m2.nii,3T,",
            ],
        )
        cases = parse_manifest(manifest)
        assert len(cases) == 4
        assert cases[0].subject_id == "s1"
        assert cases[0].field_strength == "1.5T"
        assert cases[2].field_strength == "3T"
        # relative paths resolved against the manifest directory
        assert cases[0].auto_path == str(tmp_path / "a1.nii")

    def test_field_strength_aliases(self, tmp_path):
        manifest = _write_manifest(
            tmp_path / "m.csv",
            [
                "subject,method,structure,auto,manual,field_strength,label",
                "s1,alpha,left,a.nii,m.nii,3t,",
                "s2,alpha,right,a.nii,m.nii,,",
            ],
        )
        cases = parse_manifest(manifest)
        assert cases[0].field_strength == "3T"
        assert cases[0].structure == "left_hippocampus"
        assert cases[1].field_strength is None

    def test_duplicate_names_both_rows(self, tmp_path):
        manifest = _write_manifest(
            tmp_path / "m.csv",
            [
                "subject,method,structure,auto,manual,field_strength,label",
                "s1,alpha,left_hippocampus,a.nii,m.nii,,",
                "s1,alpha,left_hippocampus,b.nii,m.nii,,",
            ],
        )
        with pytest.raises(DuplicateCase, match="rows 2 and 3"):
            parse_manifest(manifest)

    def test_malformed_row(self, tmp_path):
        manifest = _write_manifest(
            tmp_path / "m.csv",
            [
                "subject,method,structure,auto,manual,field_strength,label",
                "s1,alpha,left_hippocampus,,m.nii,,",
            ],
        )
        with pytest.raises(MalformedRow, match="row 2"):
            parse_manifest(manifest)

    def test_blank_structure(self, tmp_path):
        manifest = _write_manifest(
            tmp_path / "m.csv",
            [
                "subject,method,structure,auto,manual,field_strength,label",
                "s1,alpha, ,a.nii,m.nii,,",
            ],
        )
        with pytest.raises(UnknownStructure):
            parse_manifest(manifest)

    def test_custom_structure_text_accepted(self, tmp_path):
        manifest = _write_manifest(
            tmp_path / "m.csv",
            [
                "subject,method,structure,auto,manual,field_strength,label",
                "s1,alpha,amygdala,a.nii,m.nii,,",
            ],
        )
        assert parse_manifest(manifest)[0].structure == "amygdala"

    def test_label_column_becomes_equals_rule(self, tmp_path):
        manifest = _write_manifest(
            tmp_path / "m.csv",
            [
                "subject,method,structure,auto,manual,field_strength,label",
                "s1,alpha,left,a.nii,m.nii,,17",
            ],
        )
        assert parse_manifest(manifest)[0].binarize_rule == BinarizeRule.equals(17)

    def test_bad_field_strength(self, tmp_path):
        manifest = _write_manifest(
            tmp_path / "m.csv",
            [
                "subject,method,structure,auto,manual,field_strength,label",
                "s1,alpha,left,a.nii,m.nii,7T,",
            ],
        )
        with pytest.raises(MalformedRow, match="field_strength"):
            parse_manifest(manifest)

    def test_jsonl_equivalent(self, tmp_path):
        rows = [
            {"subject": "s1", "method": "alpha", "structure": "left_hippocampus",
             "auto": "a.nii", "manual": "m.nii", "field_strength": "1.5T"},
            {"subject": "s2", "method": "alpha", "structure": "right",
             "auto": "b.nii", "manual": "n.nii"},
        ]
        manifest = tmp_path / "m.jsonl"
        manifest.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        cases = parse_manifest(manifest)
        assert len(cases) == 2
        assert cases[1].structure == "right_hippocampus"
        assert cases[1].field_strength is None

    def test_missing_header_columns(self, tmp_path):
        manifest = _write_manifest(tmp_path / "m.csv", ["subject,method", "s1,alpha"])
        with pytest.raises(MalformedRow, match="missing columns"):
            parse_manifest(manifest)


class TestEvaluateCohort:
    def test_identity_cohort(self, tmp_path):
        manifest = build_cohort(tmp_path, n_subjects=2, identity=True)
        result = evaluate_cohort(parse_manifest(manifest), EvalConfig(threads=1))
        assert all(r.status == "ok" for r in result.records)
        for r in result.records:
            assert r.dice == 1.0
            assert r.hausdorff == 0.0
            assert r.rms == 0.0
            assert r.assd == 0.0
            assert r.mean_distance == 0.0
            assert r.ravd == 0.0
        # all methods identical -> within-group variance zero on every metric
        assert result.anova == {}
        assert all("DegenerateData" in v for v in result.anova_errors.values())

    def test_dilated_method_ranks_below_identity(self, tmp_path):
        manifest = build_cohort(tmp_path, n_subjects=3)
        result = evaluate_cohort(parse_manifest(manifest), EvalConfig(threads=1))
        by_case = {}
        for r in result.records:
            by_case.setdefault((r.subject, r.structure), {})[r.method] = r
        for pair in by_case.values():
            assert pair["alpha"].dice == 1.0
            assert pair["beta"].dice < 1.0
            assert pair["beta"].ravd > 0.0  # dilation strictly adds voxels

    def test_record_order_and_counts(self, tmp_path):
        manifest = build_cohort(tmp_path, n_subjects=2)
        cases = parse_manifest(manifest)
        result = evaluate_cohort(cases, EvalConfig(threads=1))
        assert len(result.records) == len(cases)
        assert [(r.subject, r.method, r.structure) for r in result.records] == [
            (c.subject_id, c.method, c.structure) for c in cases
        ]

    def test_determinism_across_worker_counts(self, tmp_path):
        manifest = build_cohort(tmp_path, n_subjects=3)
        cases = parse_manifest(manifest)
        texts = []
        for threads in (1, 2):
            config = EvalConfig(threads=threads)
            result = evaluate_cohort(cases, config)
            texts.append(metrics_csv_text(result.records, config))
        assert texts[0] == texts[1]

    def test_isolation_of_corrupt_case(self, tmp_path):
        manifest = build_cohort(tmp_path, n_subjects=2)
        cases = parse_manifest(manifest)
        config = EvalConfig(threads=1)
        clean = evaluate_cohort(cases, config).records
        victim = cases[3].auto_path
        blob = open(victim, "rb").read()
        open(victim, "wb").write(blob[: len(blob) // 2])
        dirty = evaluate_cohort(cases, config).records
        assert dirty[3].status == "error"
        assert "CorruptFile" in dirty[3].error
        for i, (c, d) in enumerate(zip(clean, dirty)):
            if i != 3:
                assert c == d

    def test_all_cases_failed(self, tmp_path):
        manifest = _write_manifest(
            tmp_path / "m.csv",
            [
                "subject,method,structure,auto,manual,field_strength,label",
                "s1,alpha,left,missing_a.nii,missing_m.nii,,",
            ],
        )
        with pytest.raises(AllCasesFailed):
            evaluate_cohort(parse_manifest(manifest), EvalConfig(threads=1))

    def test_empty_cases_rejected(self):
        with pytest.raises(ValueError):
            evaluate_cohort([], EvalConfig())

    def test_pooling_observation_vs_subject(self, tmp_path):
        n_subjects, n_methods, n_structures = 4, 3, 2
        manifest = build_cohort(tmp_path, n_subjects=n_subjects)
        cases = parse_manifest(manifest)
        res_obs = evaluate_cohort(cases, EvalConfig(threads=1, pooling="observation"))
        res_subj = evaluate_cohort(cases, EvalConfig(threads=1, pooling="subject"))
        t_obs = res_obs.anova["assd"]
        t_subj = res_subj.anova["assd"]
        assert t_obs.df_total == n_subjects * n_methods * n_structures - 1
        assert t_subj.df_total == n_subjects * n_methods - 1

    def test_volume_table_shape(self, tmp_path):
        manifest = build_cohort(tmp_path, n_subjects=2)
        result = evaluate_cohort(parse_manifest(manifest), EvalConfig(threads=1))
        assert len(result.volume_table) == 2 * 3  # subjects x methods
        row = result.volume_table[0]
        assert row.left_auto is not None
        assert row.right_auto is not None
        assert row.left_norm_diff == pytest.approx(
            abs(row.left_auto - row.left_manual) / row.left_manual
        )
        subjects_methods = [(r.subject, r.method) for r in result.volume_table]
        assert subjects_methods == sorted(subjects_methods)


class TestSubgroups:
    def _mirrored_cohort(self, tmp_path):
        """3T cases are byte-identical copies of the 1.5T cases."""
        dims = (12, 12, 12)
        manual = sphere_bits(dims, (6, 6, 6), 3)
        auto = sphere_bits(dims, (7, 6, 6), 3)
        write_rawvol(tmp_path / "m.rawvol", manual.astype(np.uint8))
        write_rawvol(tmp_path / "a.rawvol", auto.astype(np.uint8))
        lines = ["subject,method,structure,auto,manual,field_strength,label"]
        for si, fs in enumerate(("1.5T", "3T")):
            for method in ("alpha", "beta"):
                lines.append(f"s{si},{method},left,a.rawvol,m.rawvol,{fs},")
        return _write_manifest(tmp_path / "m.csv", lines)

    def test_mirrored_subgroups_have_zero_deltas(self, tmp_path):
        manifest = self._mirrored_cohort(tmp_path)
        result = evaluate_cohort(parse_manifest(manifest), EvalConfig(threads=1))
        report = subgroup_compare(result)
        for method, metrics in report["methods"].items():
            for metric, cell in metrics.items():
                assert cell["delta_mean"] == 0.0

    def test_subgroup_counts(self, tmp_path):
        manifest = build_cohort(
            tmp_path, n_subjects=8,
            field_strengths=("1.5T", "3T", "3T", "3T"),  # 2 vs 6 subjects
        )
        result = evaluate_cohort(parse_manifest(manifest), EvalConfig(threads=1))
        report = subgroup_compare(result)
        cell = report["methods"]["alpha"]["dice"]
        assert cell["1.5T"]["n"] == 2 * 2  # subjects x structures
        assert cell["3T"]["n"] == 6 * 2

    def test_missing_subgroup_named(self, tmp_path):
        manifest = build_cohort(tmp_path, n_subjects=2, field_strengths=("1.5T",))
        result = evaluate_cohort(parse_manifest(manifest), EvalConfig(threads=1))
        with pytest.raises(EmptySubgroup, match=r"\(alpha, 3T\)"):
            subgroup_compare(result)

    def test_no_field_strength_at_all(self, tmp_path):
        manifest = build_cohort(tmp_path, n_subjects=2)
        result = evaluate_cohort(parse_manifest(manifest), EvalConfig(threads=1))
        with pytest.raises(EmptySubgroup, match="field_strength"):
            subgroup_compare(result)

    def test_subgroup_summaries_in_result(self, tmp_path):
        manifest = build_cohort(tmp_path, n_subjects=4, field_strengths=("1.5T", "3T"))
        result = evaluate_cohort(parse_manifest(manifest), EvalConfig(threads=1))
        assert set(result.subgroup_summaries) == {"1.5T", "3T"}
        assert set(result.subgroup_summaries["3T"]) == {"alpha", "beta", "gamma"}
        summary = result.subgroup_summaries["3T"]["alpha"]["dice"]
        assert summary.n == 2 * 2
        assert summary.mean == 1.0


def test_single_method_cohort_records_inconsistent_methods(tmp_path):
    manifest = build_cohort(tmp_path, n_subjects=2, methods=("alpha",))
    result = evaluate_cohort(parse_manifest(manifest), EvalConfig(threads=1))
    assert result.anova == {}
    assert all("InconsistentMethods" in v for v in result.anova_errors.values())


def _synthetic_record(subject, method, fs, value):
    from segeval.cohort import MetricRecord

    metrics = {name: value for name in METRIC_NAMES}
    return MetricRecord(
        subject=subject, method=method, structure="left_hippocampus",
        field_strength=fs, space="index", status="ok",
        v_auto=1.0, v_manual=1.0, **metrics,
    )


def test_subgroup_sizes_154_and_270():
    rng = np.random.default_rng(5)
    records = []
    for i in range(154):
        records.append(_synthetic_record(f"a{i}", "alpha", "1.5T", rng.random()))
    for i in range(270):
        records.append(_synthetic_record(f"b{i}", "alpha", "3T", rng.random()))
    from segeval.cohort import subgroup_report

    report = subgroup_report(records)
    cell = report["methods"]["alpha"]["dice"]
    assert cell["1.5T"]["n"] == 154
    assert cell["3T"]["n"] == 270


def test_metric_record_accessor(tmp_path):
    manifest = build_cohort(tmp_path, n_subjects=1)
    result = evaluate_cohort(parse_manifest(manifest), EvalConfig(threads=1))
    record = result.records[0]
    for name in METRIC_NAMES:
        assert record.metric(name) is not None
    with pytest.raises(KeyError):
        record.metric("volume")
