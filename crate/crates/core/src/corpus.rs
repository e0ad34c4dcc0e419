//! Report corpora: ingest, section extraction, training-set filters,
//! inverse-prevalence example weights and stratified evaluation samples.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::tokenize::{tokenize, tokenize_with_spans, TokenSequence};
use crate::text::{normalize_whitespace, Span};

/// Name of the generator used by [`stratified_sample`], recorded in manifests.
pub const SAMPLING_PRNG: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";

const DEFAULT_PRIOR_LEXICON: &str = include_str!("../data/prior_reference_lexicon.txt");

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("split {0} contains no cases")]
    EmptySplit(Split),
    #[error("case {case_id} has no stratum; run the labeler first")]
    Unlabeled { case_id: String },
    #[error("degenerate prevalence: TRAIN split of {dataset} contains only {stratum} cases")]
    DegeneratePrevalence { dataset: DatasetTag, stratum: Stratum },
    #[error("requested {requested} {stratum} cases but only {available} are available")]
    InsufficientCases {
        stratum: Stratum,
        requested: usize,
        available: usize,
    },
    #[error("invalid training mix: {0}")]
    InvalidMix(String),
    #[error("prior-reference lexicon is empty")]
    EmptyLexicon,
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
}

macro_rules! wire_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $wire:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $wire)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $wire),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let t = s.trim();
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str().eq_ignore_ascii_case(t))
                    .ok_or_else(|| format!("unknown {} value {:?}", stringify!($name), s))
            }
        }
    };
}

wire_enum!(
    /// Which collection a case came from.
    DatasetTag { Us => "US", India => "INDIA", Synthetic => "SYNTHETIC" }
);
wire_enum!(View { Ap => "AP", Pa => "PA", Lateral => "LATERAL", Unknown => "UNKNOWN" });
wire_enum!(Stratum { Normal => "NORMAL", Abnormal => "ABNORMAL", Unlabeled => "UNLABELED" });
wire_enum!(Split { Train => "TRAIN", Validation => "VALIDATION", Test => "TEST" });
wire_enum!(
    /// Who wrote a report. Never exposed to raters.
    ReportSource {
        HumanOriginal => "HUMAN_ORIGINAL",
        ModelGenerated => "MODEL_GENERATED",
        ClinicianAiEdited => "CLINICIAN_AI_EDITED",
    }
);

impl ReportSource {
    /// Everything other than the radiologist's original report.
    pub fn is_candidate(&self) -> bool {
        !matches!(self, ReportSource::HumanOriginal)
    }
}

/// One imaging study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub dataset_tag: DatasetTag,
    pub image_ref: String,
    pub view: View,
    pub stratum: Stratum,
    pub split: Split,
}

/// FINDINGS and IMPRESSION text, whitespace-normalized.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sections {
    pub findings: String,
    pub impression: String,
}

impl Sections {
    /// Canonical two-line rendering; [`extract_sections`] inverts it.
    pub fn render(&self) -> String {
        if self.findings.is_empty() {
            format!("IMPRESSION: {}", self.impression)
        } else {
            format!("FINDINGS: {}\nIMPRESSION: {}", self.findings, self.impression)
        }
    }
}

/// Report text with its source. The token cache is rebuilt whenever the
/// text changes, and on deserialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ReportRepr", into = "ReportRepr")]
pub struct ReportDocument {
    report_id: String,
    case_id: String,
    findings: String,
    impression: String,
    source: ReportSource,
    tokens: TokenSequence,
}

#[derive(Serialize, Deserialize)]
struct ReportRepr {
    report_id: String,
    case_id: String,
    findings: String,
    impression: String,
    source: ReportSource,
}

impl From<ReportRepr> for ReportDocument {
    fn from(r: ReportRepr) -> Self {
        ReportDocument::new(r.report_id, r.case_id, r.findings, r.impression, r.source)
    }
}

impl From<ReportDocument> for ReportRepr {
    fn from(r: ReportDocument) -> Self {
        ReportRepr {
            report_id: r.report_id,
            case_id: r.case_id,
            findings: r.findings,
            impression: r.impression,
            source: r.source,
        }
    }
}

impl ReportDocument {
    pub fn new(
        report_id: impl Into<String>,
        case_id: impl Into<String>,
        findings: impl Into<String>,
        impression: impl Into<String>,
        source: ReportSource,
    ) -> Self {
        let mut doc = ReportDocument {
            report_id: report_id.into(),
            case_id: case_id.into(),
            findings: findings.into(),
            impression: impression.into(),
            source,
            tokens: TokenSequence::default(),
        };
        doc.tokens = tokenize(&doc.text());
        doc
    }

    pub fn report_id(&self) -> &str {
        &self.report_id
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn findings(&self) -> &str {
        &self.findings
    }

    pub fn impression(&self) -> &str {
        &self.impression
    }

    pub fn source(&self) -> ReportSource {
        self.source
    }

    pub fn tokens(&self) -> &TokenSequence {
        &self.tokens
    }

    /// The text raters see and that edit offsets index: findings, a newline,
    /// then the impression. The newline is omitted when findings are empty.
    pub fn text(&self) -> String {
        if self.findings.is_empty() {
            self.impression.clone()
        } else {
            format!("{}\n{}", self.findings, self.impression)
        }
    }

    /// Char offset where the impression starts inside [`Self::text`].
    pub fn impression_offset(&self) -> usize {
        if self.findings.is_empty() {
            0
        } else {
            self.findings.chars().count() + 1
        }
    }

    pub fn with_id(mut self, report_id: impl Into<String>) -> Self {
        self.report_id = report_id.into();
        self
    }

    pub fn with_source(mut self, source: ReportSource) -> Self {
        self.source = source;
        self
    }

    pub fn with_sections(mut self, findings: impl Into<String>, impression: impl Into<String>) -> Self {
        self.findings = findings.into();
        self.impression = impression.into();
        self.tokens = tokenize(&self.text());
        self
    }
}

/// Splits a raw report on `FINDINGS:` and `IMPRESSION:` markers.
///
/// Markers are matched case-insensitively at the start of a line (leading
/// whitespace allowed). Each section runs to the next marker or the end of
/// the text. Returns `None` when there is no impression marker or the
/// impression is empty; a missing findings marker yields empty findings.
pub fn extract_sections(raw_report: &str) -> Option<Sections> {
    let markers = find_markers(raw_report);
    let section = |kind: Marker| -> Option<String> {
        let pos = markers.iter().position(|m| m.kind == kind)?;
        let start = markers[pos].content_start;
        let end = markers.get(pos + 1).map_or(raw_report.len(), |m| m.line_start);
        Some(normalize_whitespace(&raw_report[start..end]))
    };
    let impression = section(Marker::Impression).filter(|s| !s.is_empty())?;
    let findings = section(Marker::Findings).unwrap_or_default();
    Some(Sections { findings, impression })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Findings,
    Impression,
}

struct MarkerHit {
    kind: Marker,
    line_start: usize,
    content_start: usize,
}

fn find_markers(text: &str) -> Vec<MarkerHit> {
    let mut hits = Vec::new();
    let mut line_start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        let indent = line.len() - trimmed.len();
        for (kind, word) in [(Marker::Findings, "FINDINGS"), (Marker::Impression, "IMPRESSION")] {
            let head = trimmed.get(..word.len());
            if head.is_some_and(|h| h.eq_ignore_ascii_case(word)) {
                let rest = &trimmed[word.len()..];
                let after = rest.trim_start_matches([' ', '\t']);
                if let Some(body) = after.strip_prefix(':') {
                    let content_start = line_start + line.len() - body.len();
                    hits.push(MarkerHit { kind, line_start: line_start + indent, content_start });
                }
            }
        }
        line_start += line.len();
    }
    hits
}

/// Versioned list of phrases that signal a comparison with a prior study.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorReferenceLexicon {
    pub version: u32,
    phrases: Vec<String>,
    patterns: Vec<Vec<String>>,
}

impl PriorReferenceLexicon {
    pub fn new<S: AsRef<str>>(version: u32, phrases: &[S]) -> Result<Self, CorpusError> {
        let mut lex = PriorReferenceLexicon { version, phrases: Vec::new(), patterns: Vec::new() };
        for (i, p) in phrases.iter().enumerate() {
            lex.push(p.as_ref(), i + 1)?;
        }
        if lex.patterns.is_empty() {
            return Err(CorpusError::EmptyLexicon);
        }
        Ok(lex)
    }

    /// Parses the line format of `data/prior_reference_lexicon.txt`.
    pub fn parse(source: &str) -> Result<Self, CorpusError> {
        let mut lex = PriorReferenceLexicon { version: 0, phrases: Vec::new(), patterns: Vec::new() };
        for (i, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(v) = line.strip_prefix("version ") {
                lex.version = v.trim().parse().map_err(|_| CorpusError::Lexicon {
                    line: i + 1,
                    message: format!("bad version {v:?}"),
                })?;
                continue;
            }
            lex.push(line, i + 1)?;
        }
        if lex.patterns.is_empty() {
            return Err(CorpusError::EmptyLexicon);
        }
        Ok(lex)
    }

    fn push(&mut self, phrase: &str, line: usize) -> Result<(), CorpusError> {
        let pattern = tokenize(phrase).into_inner();
        if pattern.is_empty() {
            return Err(CorpusError::Lexicon { line, message: format!("phrase {phrase:?} has no tokens") });
        }
        self.phrases.push(phrase.to_string());
        self.patterns.push(pattern);
        Ok(())
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    /// Returns a copy with one more phrase.
    pub fn with_phrase(&self, phrase: &str) -> Result<Self, CorpusError> {
        let mut lex = self.clone();
        lex.push(phrase, lex.phrases.len() + 1)?;
        Ok(lex)
    }

    /// Char spans in `text` where some phrase occurs.
    pub fn find(&self, text: &str) -> Vec<Span> {
        let tokens = tokenize_with_spans(text);
        let mut spans = Vec::new();
        for pattern in &self.patterns {
            for (i, window) in tokens.windows(pattern.len()).enumerate() {
                if window.iter().zip(pattern).all(|((t, _), p)| t == p) {
                    spans.push(Span::new(tokens[i].1.start, tokens[i + pattern.len() - 1].1.end));
                }
            }
        }
        spans.sort();
        spans.dedup();
        spans
    }
}

impl Default for PriorReferenceLexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_PRIOR_LEXICON).expect("bundled prior-reference lexicon parses")
    }
}

/// True when findings or impression contain any lexicon phrase.
pub fn detect_prior_reference(report: &ReportDocument, lexicon: &PriorReferenceLexicon) -> bool {
    !lexicon.find(report.findings()).is_empty() || !lexicon.find(report.impression()).is_empty()
}

/// Data-mix coefficients of the joint training objective plus the
/// prior-reference lexicon used when filtering the training split.
#[derive(Debug, Clone)]
pub struct TrainingMixConfig {
    pub lambda_us: f64,
    pub lambda_india: f64,
    pub prior_reference_lexicon: PriorReferenceLexicon,
}

impl TrainingMixConfig {
    pub fn new(lambda_us: f64, lambda_india: f64, lexicon: PriorReferenceLexicon) -> Result<Self, CorpusError> {
        if !(lambda_us >= 0.0 && lambda_india >= 0.0) {
            return Err(CorpusError::InvalidMix("coefficients must be nonnegative".into()));
        }
        if lambda_us + lambda_india <= 0.0 {
            return Err(CorpusError::InvalidMix("coefficients must not both be zero".into()));
        }
        Ok(Self { lambda_us, lambda_india, prior_reference_lexicon: lexicon })
    }

    /// Objective coefficient for a dataset; synthetic data has none.
    pub fn coefficient(&self, tag: DatasetTag) -> Option<f64> {
        match tag {
            DatasetTag::Us => Some(self.lambda_us),
            DatasetTag::India => Some(self.lambda_india),
            DatasetTag::Synthetic => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleWeight {
    pub case_id: String,
    pub dataset_tag: DatasetTag,
    pub stratum: Stratum,
    pub weight: f64,
}

/// A case together with its (single) report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub case: CaseRecord,
    pub report: ReportDocument,
}

/// Immutable collection of cases with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    entries: Vec<CorpusEntry>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, failing on the first duplicate case id.
    pub fn from_entries(entries: Vec<CorpusEntry>) -> Result<Self, String> {
        let mut corpus = Corpus::default();
        for e in entries {
            if corpus.index.contains_key(&e.case.case_id) {
                return Err(format!("duplicate case_id {}", e.case.case_id));
            }
            corpus.index.insert(e.case.case_id.clone(), corpus.entries.len());
            corpus.entries.push(e);
        }
        Ok(corpus)
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, case_id: &str) -> Option<&CorpusEntry> {
        self.index.get(case_id).map(|&i| &self.entries[i])
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.case.split == split)
    }

    /// Returns a corpus with each case's stratum replaced by `stratum_of`.
    pub fn map_strata(&self, mut stratum_of: impl FnMut(&CorpusEntry) -> Stratum) -> Corpus {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let mut e2 = e.clone();
                e2.case.stratum = stratum_of(e);
                e2
            })
            .collect();
        Corpus { entries, index: self.index.clone() }
    }

    fn retain(&self, mut keep: impl FnMut(&CorpusEntry) -> bool) -> Corpus {
        let entries: Vec<_> = self.entries.iter().filter(|e| keep(e)).cloned().collect();
        Corpus::from_entries(entries).expect("subset of a valid corpus has unique ids")
    }

    /// Writes the corpus as JSONL in the ingest schema (sections form).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let rec = serde_json::json!({
                "case_id": e.case.case_id,
                "dataset_tag": e.case.dataset_tag,
                "image_ref": e.case.image_ref,
                "view": e.case.view,
                "split": e.case.split,
                "stratum": e.case.stratum,
                "source": e.report.source(),
                "report_id": e.report.report_id(),
                "report": {"findings": e.report.findings(), "impression": e.report.impression()},
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

/// Why a record was not admitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RejectReason {
    Malformed(String),
    MissingField(&'static str),
    EmptyImpression,
    DuplicateCaseId(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Malformed(m) => write!(f, "malformed record: {m}"),
            RejectReason::MissingField(name) => write!(f, "missing required field {name}"),
            RejectReason::EmptyImpression => f.write_str("empty impression"),
            RejectReason::DuplicateCaseId(id) => write!(f, "duplicate case_id {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based line number (CSV: counting the header line).
    pub line: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub corpus: Corpus,
    pub rejections: Vec<Rejection>,
}

#[derive(Deserialize)]
struct RawRecord {
    case_id: Option<String>,
    dataset_tag: Option<DatasetTag>,
    image_ref: Option<String>,
    view: Option<View>,
    split: Option<Split>,
    #[serde(default)]
    stratum: Option<Stratum>,
    #[serde(default)]
    source: Option<ReportSource>,
    #[serde(default)]
    report_id: Option<String>,
    report: Option<RawReport>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawReport {
    Raw { raw: String },
    Sections { findings: Option<String>, impression: Option<String> },
}

pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<IngestOutcome, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    match format {
        CorpusFormat::Jsonl => ingest_jsonl(BufReader::new(file)).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }),
        CorpusFormat::Csv => ingest_csv(file),
    }
}

pub fn ingest_jsonl(reader: impl BufRead) -> std::io::Result<IngestOutcome> {
    let mut builder = IngestBuilder::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawRecord>(&line)
            .map_err(|e| RejectReason::Malformed(e.to_string()))
            .and_then(admit);
        builder.push(i + 1, parsed);
    }
    Ok(builder.finish())
}

/// CSV columns: `case_id,dataset_tag,image_ref,view,split` plus either
/// `raw` or `findings`/`impression`; `stratum`, `source` and `report_id`
/// are optional.
pub fn ingest_csv(reader: impl Read) -> Result<IngestOutcome, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let cols: BTreeMap<&str, Option<usize>> = [
        "case_id", "dataset_tag", "image_ref", "view", "split", "stratum", "source", "report_id", "raw",
        "findings", "impression",
    ]
    .into_iter()
    .map(|n| (n, col(n)))
    .collect();
    let mut builder = IngestBuilder::default();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                builder.push(line, Err(RejectReason::Malformed(e.to_string())));
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |name: &str| -> Option<String> {
            cols[name].and_then(|c| rec.get(c)).map(str::to_string).filter(|s| !s.trim().is_empty())
        };
        builder.push(line, csv_record(field).and_then(admit));
    }
    Ok(builder.finish())
}

fn csv_record(field: impl Fn(&str) -> Option<String>) -> Result<RawRecord, RejectReason> {
    fn parsed<T: FromStr<Err = String>>(value: Option<String>) -> Result<Option<T>, RejectReason> {
        value.map(|s| s.parse()).transpose().map_err(RejectReason::Malformed)
    }
    let report = match field("raw") {
        Some(raw) => Some(RawReport::Raw { raw }),
        None => match (field("findings"), field("impression")) {
            (None, None) => None,
            (findings, impression) => Some(RawReport::Sections { findings, impression }),
        },
    };
    Ok(RawRecord {
        case_id: field("case_id"),
        dataset_tag: parsed(field("dataset_tag"))?,
        image_ref: field("image_ref"),
        view: parsed(field("view"))?,
        split: parsed(field("split"))?,
        stratum: parsed(field("stratum"))?,
        source: parsed(field("source"))?,
        report_id: field("report_id"),
        report,
    })
}

fn admit(raw: RawRecord) -> Result<CorpusEntry, RejectReason> {
    let case_id = raw.case_id.filter(|s| !s.is_empty()).ok_or(RejectReason::MissingField("case_id"))?;
    let dataset_tag = raw.dataset_tag.ok_or(RejectReason::MissingField("dataset_tag"))?;
    let image_ref = raw.image_ref.ok_or(RejectReason::MissingField("image_ref"))?;
    let view = raw.view.ok_or(RejectReason::MissingField("view"))?;
    let split = raw.split.ok_or(RejectReason::MissingField("split"))?;
    let sections = match raw.report.ok_or(RejectReason::MissingField("report"))? {
        RawReport::Raw { raw } => extract_sections(&raw).ok_or(RejectReason::EmptyImpression)?,
        RawReport::Sections { findings, impression } => Sections {
            findings: normalize_whitespace(findings.as_deref().unwrap_or("")),
            impression: normalize_whitespace(impression.as_deref().unwrap_or("")),
        },
    };
    if sections.impression.is_empty() {
        return Err(RejectReason::EmptyImpression);
    }
    let source = raw.source.unwrap_or(ReportSource::HumanOriginal);
    let report_id = raw.report_id.unwrap_or_else(|| case_id.clone());
    Ok(CorpusEntry {
        report: ReportDocument::new(report_id, case_id.clone(), sections.findings, sections.impression, source),
        case: CaseRecord {
            case_id,
            dataset_tag,
            image_ref,
            view,
            stratum: raw.stratum.unwrap_or(Stratum::Unlabeled),
            split,
        },
    })
}

#[derive(Default)]
struct IngestBuilder {
    entries: Vec<CorpusEntry>,
    seen: HashSet<String>,
    rejections: Vec<Rejection>,
}

impl IngestBuilder {
    fn push(&mut self, line: usize, parsed: Result<CorpusEntry, RejectReason>) {
        match parsed {
            Ok(e) if !self.seen.insert(e.case.case_id.clone()) => self.rejections.push(Rejection {
                line,
                reason: RejectReason::DuplicateCaseId(e.case.case_id),
            }),
            Ok(e) => self.entries.push(e),
            Err(reason) => self.rejections.push(Rejection { line, reason }),
        }
    }

    fn finish(self) -> IngestOutcome {
        IngestOutcome {
            corpus: Corpus::from_entries(self.entries).expect("ids deduplicated during ingest"),
            rejections: self.rejections,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FilterReason {
    LateralOnly,
    NoImpression,
    PriorReference,
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub corpus: Corpus,
    pub removed: Vec<(String, FilterReason)>,
}

/// Drops lateral-only, impression-less and prior-referencing cases from the
/// TRAIN split. Other splits pass through untouched.
pub fn filter_training_set(corpus: &Corpus, lexicon: &PriorReferenceLexicon) -> FilterOutcome {
    let mut removed = Vec::new();
    let kept = corpus.retain(|e| {
        if e.case.split != Split::Train {
            return true;
        }
        let reason = if e.case.view == View::Lateral {
            Some(FilterReason::LateralOnly)
        } else if e.report.impression().trim().is_empty() {
            Some(FilterReason::NoImpression)
        } else if detect_prior_reference(&e.report, lexicon) {
            Some(FilterReason::PriorReference)
        } else {
            None
        };
        match reason {
            Some(r) => {
                removed.push((e.case.case_id.clone(), r));
                false
            }
            None => true,
        }
    });
    FilterOutcome { corpus: kept, removed }
}

/// Inverse-prevalence weights for every TRAIN case: within each dataset,
/// NORMAL cases get `1/p_normal` and ABNORMAL cases `1/(1 - p_normal)`, so
/// both strata carry the same total weight.
pub fn compute_example_weights(corpus: &Corpus) -> Result<Vec<ExampleWeight>, CorpusError> {
    let train: Vec<&CorpusEntry> = corpus.split(Split::Train).collect();
    if train.is_empty() {
        return Err(CorpusError::EmptySplit(Split::Train));
    }
    let mut counts: BTreeMap<DatasetTag, (usize, usize)> = BTreeMap::new();
    for e in &train {
        let c = counts.entry(e.case.dataset_tag).or_default();
        match e.case.stratum {
            Stratum::Normal => c.0 += 1,
            Stratum::Abnormal => c.1 += 1,
            Stratum::Unlabeled => return Err(CorpusError::Unlabeled { case_id: e.case.case_id.clone() }),
        }
    }
    for (&dataset, &(normal, abnormal)) in &counts {
        if normal == 0 || abnormal == 0 {
            let stratum = if normal == 0 { Stratum::Abnormal } else { Stratum::Normal };
            return Err(CorpusError::DegeneratePrevalence { dataset, stratum });
        }
    }
    Ok(train
        .iter()
        .map(|e| {
            let (normal, abnormal) = counts[&e.case.dataset_tag];
            let total = (normal + abnormal) as f64;
            let stratum_count = if e.case.stratum == Stratum::Normal { normal } else { abnormal };
            ExampleWeight {
                case_id: e.case.case_id.clone(),
                dataset_tag: e.case.dataset_tag,
                stratum: e.case.stratum,
                weight: total / stratum_count as f64,
            }
        })
        .collect())
}

/// Reproducible record of a stratified draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub seed: u64,
    pub prng: String,
    pub n_normal: usize,
    pub n_abnormal: usize,
    /// Normal cases first, then abnormal, each in draw order.
    pub case_ids: Vec<String>,
}

/// Draws `n_normal` NORMAL and `n_abnormal` ABNORMAL cases without
/// replacement. Candidates are ordered by case id before drawing, so the
/// result depends only on the corpus contents and the seed.
pub fn stratified_sample(
    corpus: &Corpus,
    n_normal: usize,
    n_abnormal: usize,
    seed: u64,
) -> Result<SampleManifest, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut case_ids = Vec::with_capacity(n_normal + n_abnormal);
    for (stratum, n) in [(Stratum::Normal, n_normal), (Stratum::Abnormal, n_abnormal)] {
        let mut pool: Vec<&str> = corpus
            .entries()
            .iter()
            .filter(|e| e.case.stratum == stratum)
            .map(|e| e.case.case_id.as_str())
            .collect();
        pool.sort_unstable();
        if pool.len() < n {
            return Err(CorpusError::InsufficientCases { stratum, requested: n, available: pool.len() });
        }
        let picked = rand::seq::index::sample(&mut rng, pool.len(), n);
        case_ids.extend(picked.iter().map(|i| pool[i].to_string()));
    }
    Ok(SampleManifest { seed, prng: SAMPLING_PRNG.to_string(), n_normal, n_abnormal, case_ids })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, tag: DatasetTag, split: Split, stratum: Stratum, view: View, text: &str) -> CorpusEntry {
        CorpusEntry {
            case: CaseRecord {
                case_id: id.into(),
                dataset_tag: tag,
                image_ref: format!("img/{id}.png"),
                view,
                stratum,
                split,
            },
            report: ReportDocument::new(id, id, "", text, ReportSource::HumanOriginal),
        }
    }

    #[test]
    fn sections_split_on_markers() {
        let s = extract_sections("FINDINGS: Lungs clear.\n\nIMPRESSION: No acute process.").unwrap();
        assert_eq!(s.findings, "Lungs clear.");
        assert_eq!(s.impression, "No acute process.");
        assert_eq!(extract_sections("FINDINGS: Lungs clear."), None);
        assert_eq!(extract_sections("FINDINGS: Lungs clear.\nIMPRESSION:   \n"), None);
    }

    #[test]
    fn findings_optional_and_preamble_dropped() {
        let s = extract_sections("EXAMINATION: CHEST\n  impression :\n  No\tacute\n process. ").unwrap();
        assert_eq!(s.findings, "");
        assert_eq!(s.impression, "No acute process.");
    }

    #[test]
    fn marker_must_start_line() {
        assert_eq!(extract_sections("See IMPRESSION: below"), None);
    }

    #[test]
    fn render_roundtrips() {
        let s = extract_sections("findings:  a  b\nImpression: c").unwrap();
        assert_eq!(extract_sections(&s.render()).unwrap(), s);
    }

    #[test]
    fn table3_phrases_detected() {
        let lex = PriorReferenceLexicon::default();
        let doc = |t: &str| ReportDocument::new("r", "c", t, "No acute process.", ReportSource::HumanOriginal);
        assert!(detect_prior_reference(
            &doc("As compared to the previous radiograph, the patient has been intubated."),
            &lex
        ));
        assert!(detect_prior_reference(&doc("The patient has been intubated since prior exam."), &lex));
        assert!(!detect_prior_reference(&doc("The lungs are clear."), &lex));
    }

    #[test]
    fn lexicon_matches_whole_tokens() {
        let lex = PriorReferenceLexicon::new(1, &["interval"]).unwrap();
        assert!(lex.find("intervals noted").is_empty());
        assert_eq!(lex.find("worse in the Interval."), vec![Span::new(13, 21)]);
        assert!(matches!(PriorReferenceLexicon::new::<&str>(1, &[]), Err(CorpusError::EmptyLexicon)));
        assert!(PriorReferenceLexicon::new(1, &["..."]).is_err());
    }

    #[test]
    fn tokens_follow_text() {
        let d = ReportDocument::new("r", "c", "Lungs clear.", "No effusion.", ReportSource::HumanOriginal);
        assert_eq!(d.tokens().as_slice(), ["lungs", "clear", "no", "effusion"]);
        let d = d.with_sections("", "Edema.");
        assert_eq!(d.tokens().as_slice(), ["edema"]);
        let back: ReportDocument = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn ingest_jsonl_rejects_with_line_numbers() {
        let input = r#"{"case_id":"a","dataset_tag":"US","image_ref":"a.png","view":"PA","split":"TRAIN","report":{"raw":"FINDINGS: x\nIMPRESSION: y"}}
{"case_id":"b","dataset_tag":"US","image_ref":"b.png","view":"PA","split":"TRAIN","report":{"raw":"FINDINGS: Lungs clear."}}

{"case_id":"a","dataset_tag":"US","image_ref":"a.png","view":"PA","split":"TEST","report":{"findings":"","impression":"z"}}
{"case_id":"c","dataset_tag":"US","view":"PA","split":"TEST","report":{"impression":"z"}}
not json
{"case_id":"d","dataset_tag":"MARS","image_ref":"d.png","view":"PA","split":"TEST","report":{"impression":"z"}}"#;
        let out = ingest_jsonl(input.as_bytes()).unwrap();
        assert_eq!(out.corpus.len(), 1);
        let lines: Vec<usize> = out.rejections.iter().map(|r| r.line).collect();
        assert_eq!(lines, [2, 4, 5, 6, 7]);
        assert_eq!(out.rejections[0].reason.to_string(), "empty impression");
        assert_eq!(out.rejections[1].reason, RejectReason::DuplicateCaseId("a".into()));
        assert_eq!(out.rejections[2].reason, RejectReason::MissingField("image_ref"));
        assert!(matches!(out.rejections[3].reason, RejectReason::Malformed(_)));
    }

    #[test]
    fn ingest_csv_accepts_both_report_forms() {
        let input = "case_id,dataset_tag,image_ref,view,split,raw,findings,impression,stratum\n\
                     a,US,a.png,PA,TRAIN,\"FINDINGS: x\nIMPRESSION: y\",,,NORMAL\n\
                     b,india,b.png,ap,TEST,,Lungs clear.,No effusion.,\n\
                     c,US,c.png,PA,TEST,,Lungs clear.,,\n";
        let out = ingest_csv(input.as_bytes()).unwrap();
        assert_eq!(out.corpus.len(), 2);
        assert_eq!(out.corpus.get("a").unwrap().case.stratum, Stratum::Normal);
        assert_eq!(out.corpus.get("b").unwrap().case.dataset_tag, DatasetTag::India);
        assert_eq!(out.rejections, vec![Rejection { line: 5, reason: RejectReason::EmptyImpression }]);
    }

    #[test]
    fn filter_touches_train_only() {
        let c = Corpus::from_entries(vec![
            entry("t1", DatasetTag::Us, Split::Train, Stratum::Normal, View::Pa, "Unchanged from prior."),
            entry("t2", DatasetTag::Us, Split::Train, Stratum::Normal, View::Lateral, "Clear."),
            entry("t3", DatasetTag::Us, Split::Train, Stratum::Normal, View::Ap, "Clear."),
            entry("v1", DatasetTag::Us, Split::Test, Stratum::Normal, View::Lateral, "Unchanged from prior."),
        ])
        .unwrap();
        let out = filter_training_set(&c, &PriorReferenceLexicon::default());
        let ids: Vec<_> = out.corpus.entries().iter().map(|e| e.case.case_id.as_str()).collect();
        assert_eq!(ids, ["t3", "v1"]);
        assert_eq!(
            out.removed,
            vec![("t1".to_string(), FilterReason::PriorReference), ("t2".to_string(), FilterReason::LateralOnly)]
        );
    }

    #[test]
    fn weights_ninety_ten() {
        let mut entries = Vec::new();
        for i in 0..10 {
            let stratum = if i < 9 { Stratum::Normal } else { Stratum::Abnormal };
            entries.push(entry(&format!("c{i}"), DatasetTag::India, Split::Train, stratum, View::Pa, "x"));
        }
        entries.push(entry("test", DatasetTag::India, Split::Test, Stratum::Normal, View::Pa, "x"));
        let w = compute_example_weights(&Corpus::from_entries(entries).unwrap()).unwrap();
        assert_eq!(w.len(), 10);
        assert!((w[0].weight - 1.0 / 0.9).abs() < 1e-12);
        assert!((w[9].weight - 10.0).abs() < 1e-12);
    }

    #[test]
    fn weights_balanced_and_degenerate() {
        let c = Corpus::from_entries(vec![
            entry("a", DatasetTag::Us, Split::Train, Stratum::Normal, View::Pa, "x"),
            entry("b", DatasetTag::Us, Split::Train, Stratum::Abnormal, View::Pa, "x"),
        ])
        .unwrap();
        assert!(compute_example_weights(&c).unwrap().iter().all(|w| w.weight == 2.0));

        let c = Corpus::from_entries(vec![entry("a", DatasetTag::Us, Split::Train, Stratum::Normal, View::Pa, "x")])
            .unwrap();
        assert!(matches!(compute_example_weights(&c), Err(CorpusError::DegeneratePrevalence { .. })));
        let c = Corpus::from_entries(vec![entry("a", DatasetTag::Us, Split::Test, Stratum::Normal, View::Pa, "x")])
            .unwrap();
        assert!(matches!(compute_example_weights(&c), Err(CorpusError::EmptySplit(Split::Train))));
        let c = Corpus::from_entries(vec![entry("a", DatasetTag::Us, Split::Train, Stratum::Unlabeled, View::Pa, "x")])
            .unwrap();
        assert!(matches!(compute_example_weights(&c), Err(CorpusError::Unlabeled { .. })));
    }

    #[test]
    fn sampling_counts_and_errors() {
        let entries = (0..1000)
            .map(|i| {
                let s = if i % 4 == 0 { Stratum::Normal } else { Stratum::Abnormal };
                entry(&format!("c{i:04}"), DatasetTag::India, Split::Test, s, View::Pa, "x")
            })
            .collect();
        let c = Corpus::from_entries(entries).unwrap();
        let m = stratified_sample(&c, 50, 200, 7).unwrap();
        assert_eq!(m.case_ids.len(), 250);
        let distinct: HashSet<_> = m.case_ids.iter().collect();
        assert_eq!(distinct.len(), 250);
        let normals = m.case_ids.iter().filter(|id| c.get(id).unwrap().case.stratum == Stratum::Normal).count();
        assert_eq!(normals, 50);
        assert_eq!(stratified_sample(&c, 50, 200, 7).unwrap(), m);
        assert_ne!(stratified_sample(&c, 50, 200, 8).unwrap().case_ids, m.case_ids);
        assert!(stratified_sample(&c, 0, 0, 1).unwrap().case_ids.is_empty());
        assert!(matches!(stratified_sample(&c, 251, 0, 1), Err(CorpusError::InsufficientCases { .. })));
    }

    #[test]
    fn mix_config_validates() {
        let lex = PriorReferenceLexicon::default();
        assert!(TrainingMixConfig::new(0.0, 0.0, lex.clone()).is_err());
        assert!(TrainingMixConfig::new(-1.0, 2.0, lex.clone()).is_err());
        let cfg = TrainingMixConfig::new(1.0, 0.5, lex).unwrap();
        assert_eq!(cfg.coefficient(DatasetTag::India), Some(0.5));
    }
}
