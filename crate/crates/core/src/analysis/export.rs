use std::fs;
use std::path::{Path, PathBuf};

use super::{AnalysisError, StudyResults, Verdict};
use crate::metrics::MetricEntry;

/// JSON schema for `results.json`.
pub const RESULTS_SCHEMA: &str = include_str!("../../schema/results.schema.json");

/// Columns of `long.csv`, one row per group and metric.
pub const LONG_HEADER: [&str; 9] = ["table", "dataset_tag", "stratum", "source", "metric", "value", "ci_lower", "ci_upper", "n"];

const PREFERENCE_HEADER: [&str; 10] = [
    "dataset_tag",
    "stratum",
    "candidate_source",
    "n_tasks",
    "n_ratings",
    "candidate_preferred_pct",
    "original_preferred_pct",
    "equivalent_pct",
    "both_prefer_original_pct",
    "at_least_one_not_pct",
];
const MATRIX_HEADER: [&str; 6] = ["dataset_tag", "stratum", "candidate_source", "first", "second", "count"];
const ERRORS_HEADER: [&str; 17] = [
    "dataset_tag",
    "stratum",
    "source",
    "n_assessments",
    "n_cases",
    "mean_errors",
    "mean_errors_lower",
    "mean_errors_upper",
    "mean_significant",
    "mean_significant_lower",
    "mean_significant_upper",
    "any_error_pct",
    "any_error_pct_lower",
    "any_error_pct_upper",
    "any_significant_pct",
    "any_significant_pct_lower",
    "any_significant_pct_upper",
];
const ERROR_TYPES_HEADER: [&str; 8] =
    ["dataset_tag", "stratum", "source", "n_assessments", "reason", "mean", "mean_lower", "mean_upper"];
const OVERLAP_HEADER: [&str; 14] = [
    "dataset_tag",
    "candidate_source",
    "n_cases",
    "n_quality_skipped",
    "any_candidate_only",
    "any_original_only",
    "any_both",
    "any_neither",
    "non_overlap_any_pct",
    "significant_candidate_only",
    "significant_original_only",
    "significant_both",
    "significant_neither",
    "non_overlap_significant_pct",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedFiles {
    pub json: PathBuf,
    pub csv: Vec<PathBuf>,
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn mean(x: f64) -> String {
    format!("{x:.4}")
}

fn opt(x: Option<f64>, render: fn(f64) -> String) -> String {
    x.map(render).unwrap_or_default()
}

fn entry(e: &MetricEntry, render: fn(f64) -> String) -> [String; 3] {
    [render(e.point), opt(e.ci_lower, render), opt(e.ci_upper, render)]
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnalysisError + '_ {
    move |source| AnalysisError::Io { path: path.display().to_string(), source }
}

/// Writes `results.json` (full precision) and the CSV tables into
/// `out_dir`, creating it if needed. CSV fractions are percentages with one
/// decimal.
pub fn export_results(results: &StudyResults, out_dir: &Path) -> Result<ExportedFiles, AnalysisError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let json = out_dir.join("results.json");
    fs::write(&json, serde_json::to_string_pretty(results)? + "\n").map_err(io_err(&json))?;

    let mut long: Vec<Vec<String>> = Vec::new();
    let mut long_row = |table: &str, key: [&str; 3], metric: &str, values: [String; 3], n: usize| {
        let mut row: Vec<String> = [table].into_iter().chain(key).chain([metric]).map(str::to_string).collect();
        row.extend(values);
        row.push(n.to_string());
        long.push(row);
    };

    let mut preference = Vec::new();
    let mut matrix = Vec::new();
    for g in &results.preference.groups {
        let key = [g.dataset_tag.as_str(), g.stratum.as_str(), g.candidate_source.as_str()];
        let fractions = [
            ("candidate_preferred_pct", g.candidate_preferred, g.n_ratings),
            ("original_preferred_pct", g.original_preferred, g.n_ratings),
            ("equivalent_pct", g.equivalent, g.n_ratings),
            ("both_prefer_original_pct", g.both_prefer_original, g.n_tasks),
            ("at_least_one_not_pct", g.at_least_one_not, g.n_tasks),
        ];
        let mut row: Vec<String> = key.iter().map(|s| s.to_string()).collect();
        row.extend([g.n_tasks.to_string(), g.n_ratings.to_string()]);
        for (metric, value, n) in fractions {
            row.push(pct(value));
            long_row("preference", key, metric, [pct(value), String::new(), String::new()], n);
        }
        preference.push(row);
        for (i, first) in Verdict::ALL.iter().enumerate() {
            for (j, second) in Verdict::ALL.iter().enumerate() {
                let mut row: Vec<String> = key.iter().map(|s| s.to_string()).collect();
                row.extend([first.as_str().to_string(), second.as_str().to_string(), g.matrix[i][j].to_string()]);
                matrix.push(row);
            }
        }
    }

    let mut errors = Vec::new();
    for g in &results.errors.groups {
        let key = [g.dataset_tag.as_str(), g.stratum.as_str(), g.source.as_str()];
        let metrics = [
            ("mean_errors", entry(&g.mean_errors, mean)),
            ("mean_significant", entry(&g.mean_significant, mean)),
            ("any_error_pct", entry(&g.any_error, pct)),
            ("any_significant_pct", entry(&g.any_significant, pct)),
        ];
        let mut row: Vec<String> = key.iter().map(|s| s.to_string()).collect();
        row.extend([g.n_assessments.to_string(), g.n_cases.to_string()]);
        for (metric, values) in metrics {
            row.extend(values.iter().cloned());
            long_row("errors", key, metric, values, g.n_assessments);
        }
        errors.push(row);
    }

    let mut error_types = Vec::new();
    for g in &results.error_types.groups {
        let key = [g.dataset_tag.as_str(), g.stratum.as_str(), g.source.as_str()];
        for (reason, e) in &g.by_reason {
            let values = entry(e, mean);
            let mut row: Vec<String> = key.iter().map(|s| s.to_string()).collect();
            row.extend([g.n_assessments.to_string(), reason.clone()]);
            row.extend(values.iter().cloned());
            error_types.push(row);
            long_row("error_types", key, &format!("mean_{}", reason.to_lowercase()), values, g.n_assessments);
        }
    }

    let mut overlap = Vec::new();
    for g in &results.overlap.groups {
        let key = [g.dataset_tag.as_str(), "", g.candidate_source.as_str()];
        let mut row = vec![g.dataset_tag.to_string(), g.candidate_source.to_string(), g.n_cases.to_string(), g.n_quality_skipped.to_string()];
        for (counts, fraction, label) in
            [(&g.any, g.non_overlap_any, "any"), (&g.significant, g.non_overlap_significant, "significant")]
        {
            let parts = [
                ("candidate_only", counts.candidate_only),
                ("original_only", counts.original_only),
                ("both", counts.both),
                ("neither", counts.neither),
            ];
            for (name, count) in parts {
                row.push(count.to_string());
                long_row("overlap", key, &format!("{label}_{name}"), [count.to_string(), String::new(), String::new()], g.n_cases);
            }
            row.push(opt(fraction, pct));
            long_row("overlap", key, &format!("non_overlap_{label}_pct"), [opt(fraction, pct), String::new(), String::new()], g.n_cases);
        }
        overlap.push(row);
    }

    let tables: [(&str, &[&str], Vec<Vec<String>>); 6] = [
        ("preference.csv", &PREFERENCE_HEADER, preference),
        ("preference_matrix.csv", &MATRIX_HEADER, matrix),
        ("errors.csv", &ERRORS_HEADER, errors),
        ("error_types.csv", &ERROR_TYPES_HEADER, error_types),
        ("overlap.csv", &OVERLAP_HEADER, overlap),
        ("long.csv", &LONG_HEADER, long),
    ];
    let mut csv = Vec::new();
    for (name, header, rows) in tables {
        let path = out_dir.join(name);
        write_table(&path, header, rows)?;
        csv.push(path);
    }
    Ok(ExportedFiles { json, csv })
}

fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(fs::File::create(path).map_err(io_err(path))?);
    w.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_results(path: &Path) -> Result<StudyResults, AnalysisError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}
