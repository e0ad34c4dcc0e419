//! File readers shared by the subcommands.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{bail, Context, Result};
use radeval_core::corpus::{extract_sections, ingest_corpus, Corpus, CorpusFormat, ReportDocument, ReportSource};
use serde::Deserialize;

/// Reads a normalized corpus JSONL; any rejected line is an error.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let outcome = ingest_corpus(path, CorpusFormat::Jsonl).with_context(|| format!("reading {}", path.display()))?;
    if let Some(r) = outcome.rejections.first() {
        bail!("{}: line {}: {}", path.display(), r.line, r.reason);
    }
    Ok(outcome.corpus)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReportField {
    Text(String),
    Sections { findings: Option<String>, impression: String },
}

#[derive(Deserialize)]
struct ReportLine {
    case_id: String,
    #[serde(default)]
    report_id: Option<String>,
    report: ReportField,
}

/// Reads `{"case_id", "report"}` lines where `report` is free text (split
/// on FINDINGS/IMPRESSION markers when present) or a sections object.
pub fn load_reports(path: &Path, source: ReportSource, id_suffix: &str) -> Result<Vec<ReportDocument>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReportLine =
            serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        let (findings, impression) = match rec.report {
            ReportField::Sections { findings, impression } => (findings.unwrap_or_default(), impression),
            ReportField::Text(text) => match extract_sections(&text) {
                Some(s) => (s.findings, s.impression),
                None => (String::new(), text),
            },
        };
        let report_id = rec.report_id.unwrap_or_else(|| format!("{}{id_suffix}", rec.case_id));
        out.push(ReportDocument::new(report_id, &rec.case_id, findings, impression, source));
    }
    Ok(out)
}
