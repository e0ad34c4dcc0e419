use super::{Edit, WorkflowError};
use crate::corpus::{ReportDocument, ReportSource};
use crate::text::{byte_offset, char_len};

/// Spans must be non-empty, inside `text` (character offsets) and pairwise
/// disjoint.
pub fn validate_edit_spans(text: &str, edits: &[Edit]) -> Result<(), WorkflowError> {
    let n = char_len(text);
    for (i, e) in edits.iter().enumerate() {
        if e.span.start >= e.span.end {
            return Err(WorkflowError::validation(format!("edits[{i}].span"), "start must precede end"));
        }
        if e.span.end > n {
            return Err(WorkflowError::validation(
                format!("edits[{i}].span"),
                format!("span {}..{} exceeds text length {n}", e.span.start, e.span.end),
            ));
        }
        if let Some(j) = edits[..i].iter().position(|o| o.span.overlaps(&e.span)) {
            return Err(WorkflowError::validation(format!("edits[{i}].span"), format!("overlaps edits[{j}]")));
        }
    }
    Ok(())
}

fn splice(section: &str, offset: usize, mut edits: Vec<&Edit>) -> String {
    edits.sort_by_key(|e| std::cmp::Reverse(e.span.start));
    let mut out = section.to_string();
    for e in edits {
        let start = byte_offset(&out, e.span.start - offset).expect("validated span");
        let end = byte_offset(&out, e.span.end - offset).expect("validated span");
        out.replace_range(start..end, &e.replacement);
    }
    out
}

/// Splices replacements into the displayed text of `report`, last span
/// first, and returns a CLINICIAN_AI_EDITED copy with id `new_report_id`.
/// A span may not cover the line break between findings and impression, and
/// replacements may not introduce line breaks.
pub fn apply_edits(
    report: &ReportDocument,
    edits: &[Edit],
    new_report_id: impl Into<String>,
) -> Result<ReportDocument, WorkflowError> {
    validate_edit_spans(&report.text(), edits)?;
    for (i, e) in edits.iter().enumerate() {
        if e.replacement.contains(['\n', '\r']) {
            return Err(WorkflowError::validation(format!("edits[{i}].replacement"), "line breaks are not allowed"));
        }
    }
    let split = report.impression_offset();
    let (mut in_findings, mut in_impression) = (Vec::new(), Vec::new());
    for (i, e) in edits.iter().enumerate() {
        if split > 0 && e.span.end < split {
            in_findings.push(e);
        } else if e.span.start >= split {
            in_impression.push(e);
        } else {
            return Err(WorkflowError::validation(format!("edits[{i}].span"), "span crosses the section break"));
        }
    }
    let findings = splice(report.findings(), 0, in_findings);
    let impression = splice(report.impression(), split, in_impression);
    Ok(report
        .clone()
        .with_id(new_report_id)
        .with_source(ReportSource::ClinicianAiEdited)
        .with_sections(findings, impression))
}
