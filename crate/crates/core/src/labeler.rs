//! Rule-based extraction of the 14 finding categories from report text.
//!
//! Phrases come from a versioned lexicon file; each occurrence becomes a
//! [`Mention`] whose polarity is set by nearby negation or hedging cues in
//! the same sentence. Mentions are folded into a [`LabelVector`] by
//! precedence, and the vector yields the binary abnormality label.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ReportDocument, Stratum};
use crate::metrics::tokenize::{tokenize, tokenize_with_spans};
use crate::text::Span;

const DEFAULT_LEXICON: &str = include_str!("../data/finding_lexicon.txt");
const DEFAULT_CUES: &str = include_str!("../data/cues.toml");

#[derive(Debug, thiserror::Error)]
pub enum LabelerError {
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("cue file: {0}")]
    Cues(String),
    #[error("NO_FINDING cannot be POSITIVE while {0} is POSITIVE")]
    NoFindingConflict(FindingCategory),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FindingCategory {
    Atelectasis,
    Cardiomegaly,
    Consolidation,
    Edema,
    EnlargedCardiomediastinum,
    Fracture,
    LungLesion,
    LungOpacity,
    NoFinding,
    PleuralEffusion,
    PleuralOther,
    Pneumonia,
    Pneumothorax,
    SupportDevices,
}

impl FindingCategory {
    pub const ALL: [FindingCategory; 14] = [
        FindingCategory::Atelectasis,
        FindingCategory::Cardiomegaly,
        FindingCategory::Consolidation,
        FindingCategory::Edema,
        FindingCategory::EnlargedCardiomediastinum,
        FindingCategory::Fracture,
        FindingCategory::LungLesion,
        FindingCategory::LungOpacity,
        FindingCategory::NoFinding,
        FindingCategory::PleuralEffusion,
        FindingCategory::PleuralOther,
        FindingCategory::Pneumonia,
        FindingCategory::Pneumothorax,
        FindingCategory::SupportDevices,
    ];

    /// The five most prevalent categories, used for the top-5 F1.
    pub const TOP5: [FindingCategory; 5] = [
        FindingCategory::Atelectasis,
        FindingCategory::Cardiomegaly,
        FindingCategory::Edema,
        FindingCategory::Consolidation,
        FindingCategory::PleuralEffusion,
    ];

    /// Conditions with expert consensus labels, pooled for micro-averaged ROC.
    pub const EXPERT_LABELED: [FindingCategory; 6] = [
        FindingCategory::Cardiomegaly,
        FindingCategory::PleuralEffusion,
        FindingCategory::LungOpacity,
        FindingCategory::Edema,
        FindingCategory::EnlargedCardiomediastinum,
        FindingCategory::Fracture,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Everything except NO_FINDING and SUPPORT_DEVICES.
    pub fn is_pathology(self) -> bool {
        !matches!(self, FindingCategory::NoFinding | FindingCategory::SupportDevices)
    }

    pub fn pathologies() -> impl Iterator<Item = FindingCategory> {
        Self::ALL.into_iter().filter(|c| c.is_pathology())
    }

    /// Stable wire name, e.g. `PLEURAL_EFFUSION`.
    pub fn as_str(self) -> &'static str {
        match self {
            FindingCategory::Atelectasis => "ATELECTASIS",
            FindingCategory::Cardiomegaly => "CARDIOMEGALY",
            FindingCategory::Consolidation => "CONSOLIDATION",
            FindingCategory::Edema => "EDEMA",
            FindingCategory::EnlargedCardiomediastinum => "ENLARGED_CARDIOMEDIASTINUM",
            FindingCategory::Fracture => "FRACTURE",
            FindingCategory::LungLesion => "LUNG_LESION",
            FindingCategory::LungOpacity => "LUNG_OPACITY",
            FindingCategory::NoFinding => "NO_FINDING",
            FindingCategory::PleuralEffusion => "PLEURAL_EFFUSION",
            FindingCategory::PleuralOther => "PLEURAL_OTHER",
            FindingCategory::Pneumonia => "PNEUMONIA",
            FindingCategory::Pneumothorax => "PNEUMOTHORAX",
            FindingCategory::SupportDevices => "SUPPORT_DEVICES",
        }
    }

    /// Lowercase human name, e.g. `pleural effusion`.
    pub fn display_name(self) -> String {
        self.as_str().to_lowercase().replace('_', " ")
    }
}

impl fmt::Display for FindingCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FindingCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_uppercase().replace([' ', '-'], "_");
        Self::ALL.into_iter().find(|c| c.as_str() == norm).ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Polarity {
    Positive,
    Negative,
    Uncertain,
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_uppercase().as_str() {
            "POSITIVE" => Ok(Polarity::Positive),
            "NEGATIVE" => Ok(Polarity::Negative),
            "UNCERTAIN" => Ok(Polarity::Uncertain),
            other => Err(format!("unknown polarity {other:?}")),
        }
    }
}

/// Ordered by aggregation precedence: later variants win.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelValue {
    #[default]
    NotMentioned,
    Negative,
    Uncertain,
    Positive,
}

impl LabelValue {
    /// Single-letter code used in label CSVs.
    pub fn code(self) -> &'static str {
        match self {
            LabelValue::Positive => "P",
            LabelValue::Negative => "N",
            LabelValue::Uncertain => "U",
            LabelValue::NotMentioned => "",
        }
    }
}

impl From<Polarity> for LabelValue {
    fn from(p: Polarity) -> Self {
        match p {
            Polarity::Positive => LabelValue::Positive,
            Polarity::Negative => LabelValue::Negative,
            Polarity::Uncertain => LabelValue::Uncertain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub category: FindingCategory,
    pub span: Span,
    pub polarity: Polarity,
}

/// One value per category. NO_FINDING is never POSITIVE alongside a
/// POSITIVE pathology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelVector([LabelValue; 14]);

impl LabelVector {
    pub fn get(&self, c: FindingCategory) -> LabelValue {
        self.0[c.index()]
    }

    pub fn set(&mut self, c: FindingCategory, v: LabelValue) -> Result<(), LabelerError> {
        if v == LabelValue::Positive {
            if c == FindingCategory::NoFinding {
                if let Some(p) = FindingCategory::pathologies().find(|&p| self.get(p) == LabelValue::Positive) {
                    return Err(LabelerError::NoFindingConflict(p));
                }
            } else if c.is_pathology() && self.get(FindingCategory::NoFinding) == LabelValue::Positive {
                return Err(LabelerError::NoFindingConflict(c));
            }
        }
        self.0[c.index()] = v;
        Ok(())
    }

    pub fn with(mut self, c: FindingCategory, v: LabelValue) -> Result<Self, LabelerError> {
        self.set(c, v)?;
        Ok(self)
    }

    pub fn iter(&self) -> impl Iterator<Item = (FindingCategory, LabelValue)> + '_ {
        FindingCategory::ALL.into_iter().map(|c| (c, self.get(c)))
    }

    pub fn is_consistent(&self) -> bool {
        self.get(FindingCategory::NoFinding) != LabelValue::Positive
            || FindingCategory::pathologies().all(|p| self.get(p) != LabelValue::Positive)
    }
}

impl Serialize for LabelVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, LabelValue> = self.iter().map(|(c, v)| (c.as_str(), v)).collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<FindingCategory, LabelValue>::deserialize(d)?;
        let mut v = LabelVector::default();
        // NO_FINDING last so the consistency check sees the pathologies.
        let mut entries: Vec<_> = map.into_iter().collect();
        entries.sort_by_key(|(c, _)| *c == FindingCategory::NoFinding);
        for (c, val) in entries {
            v.set(c, val).map_err(serde::de::Error::custom)?;
        }
        Ok(v)
    }
}

/// Folds one report's mentions: per category the highest-precedence
/// polarity wins. NO_FINDING is POSITIVE iff some explicit normal statement
/// was found and no pathology is POSITIVE or UNCERTAIN.
pub fn aggregate_labels(mentions: &[Mention]) -> LabelVector {
    let mut values = [LabelValue::NotMentioned; 14];
    let mut normal_statement = false;
    for m in mentions {
        if m.category == FindingCategory::NoFinding {
            normal_statement |= m.polarity == Polarity::Positive;
            continue;
        }
        let v = LabelValue::from(m.polarity);
        let slot = &mut values[m.category.index()];
        *slot = (*slot).max(v);
    }
    let pathology_present = FindingCategory::pathologies()
        .any(|p| matches!(values[p.index()], LabelValue::Positive | LabelValue::Uncertain));
    if normal_statement && !pathology_present {
        values[FindingCategory::NoFinding.index()] = LabelValue::Positive;
    }
    LabelVector(values)
}

/// Which labels count towards the binary abnormality label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbnormalityPolicy {
    pub support_devices_abnormal: bool,
    pub uncertain_abnormal: bool,
}

/// 1 when any pathology is present, else 0.
pub fn derive_abnormality(labels: &LabelVector, policy: AbnormalityPolicy) -> u8 {
    let counts = |v: LabelValue| v == LabelValue::Positive || (policy.uncertain_abnormal && v == LabelValue::Uncertain);
    let abnormal = labels.iter().any(|(c, v)| {
        let eligible = c.is_pathology() || (policy.support_devices_abnormal && c == FindingCategory::SupportDevices);
        eligible && counts(v)
    });
    u8::from(abnormal)
}

pub fn stratum_for(labels: &LabelVector, policy: AbnormalityPolicy) -> Stratum {
    if derive_abnormality(labels, policy) == 1 {
        Stratum::Abnormal
    } else {
        Stratum::Normal
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum PatternToken {
    Word(String),
    Any,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Phrase {
    category: FindingCategory,
    text: String,
    pattern: Vec<PatternToken>,
    polarity: Option<Polarity>,
}

/// Category phrase lists, loaded from the `CATEGORY | phrase [| POLARITY]`
/// line format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindingLexicon {
    pub version: u32,
    phrases: Vec<Phrase>,
}

impl FindingLexicon {
    pub fn parse(source: &str) -> Result<Self, LabelerError> {
        let mut lex = FindingLexicon { version: 0, phrases: Vec::new() };
        for (i, line) in source.lines().enumerate() {
            let err = |message: String| LabelerError::Lexicon { line: i + 1, message };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(v) = line.strip_prefix("version ") {
                lex.version = v.trim().parse().map_err(|_| err(format!("bad version {v:?}")))?;
                continue;
            }
            let cols: Vec<&str> = line.split('|').map(str::trim).collect();
            if !(2..=3).contains(&cols.len()) {
                return Err(err("expected CATEGORY | phrase [| POLARITY]".into()));
            }
            let category = cols[0].parse().map_err(err)?;
            let polarity = cols.get(2).map(|p| p.parse()).transpose().map_err(err)?;
            lex.add(category, cols[1], polarity).map_err(err)?;
        }
        Ok(lex)
    }

    pub fn add(&mut self, category: FindingCategory, phrase: &str, polarity: Option<Polarity>) -> Result<(), String> {
        let pattern: Vec<PatternToken> = phrase
            .split_whitespace()
            .flat_map(|w| {
                if w == "*" {
                    vec![PatternToken::Any]
                } else {
                    tokenize(w).into_inner().into_iter().map(PatternToken::Word).collect()
                }
            })
            .collect();
        if !pattern.iter().any(|t| matches!(t, PatternToken::Word(_))) {
            return Err(format!("phrase {phrase:?} has no tokens"));
        }
        self.phrases.push(Phrase { category, text: phrase.to_string(), pattern, polarity });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn phrases(&self) -> impl Iterator<Item = (FindingCategory, &str)> {
        self.phrases.iter().map(|p| (p.category, p.text.as_str()))
    }
}

impl Default for FindingLexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled finding lexicon parses")
    }
}

#[derive(Debug, Clone, Deserialize)]
struct CueFile {
    version: u32,
    window: usize,
    pre_negation: Vec<String>,
    post_negation: Vec<String>,
    pre_uncertainty: Vec<String>,
    post_uncertainty: Vec<String>,
    scope_breakers: Vec<String>,
    abbreviations: Vec<String>,
}

/// Negation and hedging cue lists with the scope window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CueSet {
    pub version: u32,
    pub window: usize,
    pre_negation: Vec<Vec<String>>,
    post_negation: Vec<Vec<String>>,
    pre_uncertainty: Vec<Vec<String>>,
    post_uncertainty: Vec<Vec<String>>,
    scope_breakers: Vec<String>,
    abbreviations: Vec<String>,
}

impl CueSet {
    pub fn parse(source: &str) -> Result<Self, LabelerError> {
        let f: CueFile = toml::from_str(source).map_err(|e| LabelerError::Cues(e.to_string()))?;
        let toks = |list: Vec<String>| -> Vec<Vec<String>> {
            list.iter().map(|c| tokenize(c).into_inner()).filter(|t| !t.is_empty()).collect()
        };
        Ok(CueSet {
            version: f.version,
            window: f.window,
            pre_negation: toks(f.pre_negation),
            post_negation: toks(f.post_negation),
            pre_uncertainty: toks(f.pre_uncertainty),
            post_uncertainty: toks(f.post_uncertainty),
            scope_breakers: f.scope_breakers.iter().map(|s| s.to_lowercase()).collect(),
            abbreviations: f.abbreviations.iter().map(|s| s.to_lowercase()).collect(),
        })
    }
}

impl Default for CueSet {
    fn default() -> Self {
        Self::parse(DEFAULT_CUES).expect("bundled cue file parses")
    }
}

/// Splits text into sentence spans: a `.`, `?` or `!` followed by
/// whitespace (or the end) closes a sentence unless the word before it is a
/// listed abbreviation; line breaks always close one.
pub fn split_sentences(text: &str, abbreviations: &[String]) -> Vec<Span> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let push = |start: usize, end: usize, out: &mut Vec<Span>| {
        if chars[start..end].iter().any(|c| !c.is_whitespace()) {
            out.push(Span::new(start, end));
        }
    };
    for i in 0..chars.len() {
        let c = chars[i];
        let boundary = if c == '\n' {
            true
        } else if matches!(c, '.' | '?' | '!') && chars.get(i + 1).is_none_or(|n| n.is_whitespace()) {
            let word_start = chars[..i].iter().rposition(|c| c.is_whitespace()).map_or(0, |p| p + 1);
            let word: String = chars[word_start..i].iter().collect::<String>().to_lowercase();
            c != '.' || !abbreviations.contains(&word)
        } else {
            false
        };
        if boundary {
            let end = if c == '\n' { i } else { i + 1 };
            push(start, end, &mut out);
            start = i + 1;
        }
    }
    if start < chars.len() {
        push(start, chars.len(), &mut out);
    }
    out
}

/// The labeler: a finding lexicon plus cue lists.
#[derive(Debug, Clone, Default)]
pub struct Labeler {
    pub lexicon: FindingLexicon,
    pub cues: CueSet,
}

struct Candidate {
    category: FindingCategory,
    first: usize,
    last: usize,
    fixed: Option<Polarity>,
}

impl Labeler {
    pub fn new(lexicon: FindingLexicon, cues: CueSet) -> Self {
        Self { lexicon, cues }
    }

    /// Mentions in [`ReportDocument::text`], sorted by span start.
    pub fn extract_mentions(&self, report: &ReportDocument) -> Vec<Mention> {
        self.extract_mentions_text(&report.text())
    }

    pub fn extract_mentions_text(&self, text: &str) -> Vec<Mention> {
        let tokens = tokenize_with_spans(text);
        let mut mentions = Vec::new();
        for sentence in split_sentences(text, &self.cues.abbreviations) {
            let sent: Vec<&(String, Span)> =
                tokens.iter().filter(|(_, s)| sentence.contains(s)).collect();
            let words: Vec<&str> = sent.iter().map(|(w, _)| w.as_str()).collect();
            for m in self.sentence_mentions(&words) {
                mentions.push(Mention {
                    category: m.0,
                    span: Span::new(sent[m.1].1.start, sent[m.2].1.end),
                    polarity: m.3,
                });
            }
        }
        mentions.sort_by_key(|m| (m.span.start, m.span.end, m.category));
        mentions
    }

    pub fn label(&self, text: &str) -> LabelVector {
        aggregate_labels(&self.extract_mentions_text(text))
    }

    pub fn label_report(&self, report: &ReportDocument) -> LabelVector {
        aggregate_labels(&self.extract_mentions(report))
    }

    /// (category, first token, last token, polarity) for one sentence.
    fn sentence_mentions(&self, words: &[&str]) -> Vec<(FindingCategory, usize, usize, Polarity)> {
        let mut found: Vec<Candidate> = Vec::new();
        for phrase in &self.lexicon.phrases {
            let n = phrase.pattern.len();
            for start in 0..words.len().saturating_sub(n - 1) {
                let hit = phrase.pattern.iter().zip(&words[start..start + n]).all(|(p, w)| match p {
                    PatternToken::Any => true,
                    PatternToken::Word(t) => t == w,
                });
                if hit {
                    found.push(Candidate { category: phrase.category, first: start, last: start + n - 1, fixed: phrase.polarity });
                }
            }
        }
        // Drop occurrences nested inside a longer one of the same category.
        let keep: Vec<bool> = found
            .iter()
            .enumerate()
            .map(|(i, a)| {
                !found.iter().enumerate().any(|(j, b)| {
                    i != j
                        && a.category == b.category
                        && b.first <= a.first
                        && a.last <= b.last
                        && (b.last - b.first > a.last - a.first || j < i)
                })
            })
            .collect();
        let mut found: Vec<Candidate> = found.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect();
        found.sort_by_key(|c| (c.first, c.last, c.category));

        let mut out: Vec<(FindingCategory, usize, usize, Polarity)> = Vec::with_capacity(found.len());
        let mut negated_until: Option<usize> = None;
        for c in &found {
            let polarity = match c.fixed {
                Some(p) => p,
                None => self.polarity(words, c.first, c.last, negated_until),
            };
            if polarity == Polarity::Negative && c.fixed.is_none() {
                negated_until = Some(c.last);
            }
            out.push((c.category, c.first, c.last, polarity));
        }
        out
    }

    fn polarity(&self, words: &[&str], first: usize, last: usize, negated_until: Option<usize>) -> Polarity {
        let w = self.cues.window;
        if self.cue_before(words, first, &self.cues.pre_uncertainty)
            || self.cue_after(words, last, &self.cues.post_uncertainty)
        {
            return Polarity::Uncertain;
        }
        if self.cue_before(words, first, &self.cues.pre_negation)
            || self.cue_after(words, last, &self.cues.post_negation)
        {
            return Polarity::Negative;
        }
        // A negated list carries over: "no consolidation, effusion or pneumothorax".
        if let Some(end) = negated_until {
            if end < first && first - end <= w && !self.breaker_between(words, end, first) {
                return Polarity::Negative;
            }
        }
        Polarity::Positive
    }

    fn cue_before(&self, words: &[&str], first: usize, cues: &[Vec<String>]) -> bool {
        cues.iter().any(|cue| {
            let n = cue.len();
            (n..=first).any(|end| {
                let cue_last = end - 1;
                first - cue_last <= self.cues.window
                    && words[end - n..end].iter().zip(cue).all(|(a, b)| a == b)
                    && !self.breaker_between(words, cue_last, first)
            })
        })
    }

    fn cue_after(&self, words: &[&str], last: usize, cues: &[Vec<String>]) -> bool {
        cues.iter().any(|cue| {
            let n = cue.len();
            (last + 1..words.len()).any(|start| {
                start - last <= self.cues.window
                    && start + n <= words.len()
                    && words[start..start + n].iter().zip(cue).all(|(a, b)| a == b)
                    && !self.breaker_between(words, last, start)
            })
        })
    }

    /// Whether a scope breaker lies strictly between token indices `a < b`.
    fn breaker_between(&self, words: &[&str], a: usize, b: usize) -> bool {
        words[a + 1..b].iter().any(|w| self.cues.scope_breakers.iter().any(|s| s == w))
    }
}

/// Writes `case_id,report_id,<one column per category>` with P/N/U/empty cells.
pub fn write_labels_csv<W: std::io::Write>(
    writer: W,
    rows: &[(String, String, LabelVector)],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["case_id".to_string(), "report_id".to_string()];
    header.extend(FindingCategory::ALL.iter().map(|c| c.as_str().to_string()));
    w.write_record(&header)?;
    for (case_id, report_id, labels) in rows {
        let mut rec = vec![case_id.clone(), report_id.clone()];
        rec.extend(labels.iter().map(|(_, v)| v.code().to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use FindingCategory as C;

    fn labeler() -> Labeler {
        Labeler::default()
    }

    fn mentions(text: &str) -> Vec<(FindingCategory, Polarity, String)> {
        labeler()
            .extract_mentions_text(text)
            .into_iter()
            .map(|m| (m.category, m.polarity, crate::text::slice(text, m.span).unwrap().to_string()))
            .collect()
    }

    #[test]
    fn fourteen_categories_with_stable_names() {
        assert_eq!(C::ALL.len(), 14);
        assert_eq!(serde_json::to_string(&C::EnlargedCardiomediastinum).unwrap(), "\"ENLARGED_CARDIOMEDIASTINUM\"");
        for c in C::ALL {
            assert_eq!(c.as_str().parse::<C>().unwrap(), c);
            assert_eq!(c.display_name().parse::<C>().unwrap(), c);
        }
        assert_eq!(C::pathologies().count(), 12);
    }

    #[test]
    fn explicit_negation() {
        assert_eq!(mentions("No pleural effusion."), vec![(C::PleuralEffusion, Polarity::Negative, "pleural effusion".into())]);
    }

    #[test]
    fn positive_effusion_with_atelectasis() {
        let m = mentions("There is a small right-sided pleural effusion with adjacent atelectasis.");
        assert_eq!(
            m,
            vec![
                (C::PleuralEffusion, Polarity::Positive, "pleural effusion".into()),
                (C::Atelectasis, Polarity::Positive, "atelectasis".into()),
            ]
        );
    }

    #[test]
    fn negation_window_is_bounded() {
        // eight tokens between "no" and the phrase
        let m = mentions("No change in the appearance of the chest and pneumothorax.");
        assert_eq!(m[0].1, Polarity::Positive);
        let m = mentions("No evidence of a pneumothorax.");
        assert_eq!(m[0].1, Polarity::Negative);
    }

    #[test]
    fn negated_lists_and_breakers() {
        let m = mentions("No focal consolidation, pleural effusion, or evidence of pneumothorax is seen.");
        assert!(m.iter().all(|x| x.1 == Polarity::Negative), "{m:?}");
        let m = mentions("No pneumothorax, but there is a small effusion.");
        assert_eq!(m[0].1, Polarity::Negative);
        assert_eq!(m[1].1, Polarity::Positive);
    }

    #[test]
    fn hedging() {
        let m = mentions("No large pleural effusion is seen, although a trace right pleural effusion would be difficult to exclude.");
        assert_eq!(m.iter().map(|x| x.1).collect::<Vec<_>>(), [Polarity::Negative, Polarity::Uncertain]);
        let v = labeler().label("No large pleural effusion is seen, although a trace right pleural effusion would be difficult to exclude.");
        assert_eq!(v.get(C::PleuralEffusion), LabelValue::Uncertain);
        assert_eq!(mentions("Possible pneumonia.")[0].1, Polarity::Uncertain);
        assert_eq!(mentions("Pneumothorax cannot be excluded.")[0].1, Polarity::Uncertain);
        assert_eq!(mentions("Pneumothorax is not seen.")[0].1, Polarity::Negative);
    }

    #[test]
    fn nested_same_category_deduplicated() {
        let m = mentions("Large left pleural effusion.");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].2, "pleural effusion");
    }

    #[test]
    fn normal_statement_sets_no_finding() {
        let v = labeler().label("No pneumothorax. IMPRESSION: No acute cardiopulmonary process.");
        assert_eq!(v.get(C::NoFinding), LabelValue::Positive);
        let v = labeler().label("Possible pneumonia. No acute cardiopulmonary process.");
        assert_eq!(v.get(C::NoFinding), LabelValue::NotMentioned);
        assert_eq!(v.get(C::Pneumonia), LabelValue::Uncertain);
        let v = labeler().label("Pacemaker in place. Lungs are clear.");
        assert_eq!(v.get(C::NoFinding), LabelValue::Positive);
        assert_eq!(v.get(C::SupportDevices), LabelValue::Positive);
    }

    #[test]
    fn sentence_splitting() {
        let text = "Dr. Smith was called. Tip 3.5 cm above carina!\nNext line";
        let spans = split_sentences(text, &CueSet::default().abbreviations);
        let parts: Vec<&str> = spans.iter().map(|s| crate::text::slice(text, *s).unwrap()).collect();
        assert_eq!(parts, ["Dr. Smith was called.", " Tip 3.5 cm above carina!", "Next line"]);
    }

    #[test]
    fn precedence_rule() {
        let m = |p| Mention { category: C::Edema, span: Span::new(0, 5), polarity: p };
        let v = aggregate_labels(&[m(Polarity::Negative), m(Polarity::Positive)]);
        assert_eq!(v.get(C::Edema), LabelValue::Positive);
        assert_eq!(aggregate_labels(&[]), LabelVector::default());
        assert!(aggregate_labels(&[]).iter().all(|(_, v)| v == LabelValue::NotMentioned));
    }

    #[test]
    fn abnormality() {
        let p = AbnormalityPolicy::default();
        let normal = LabelVector::default().with(C::NoFinding, LabelValue::Positive).unwrap();
        assert_eq!(derive_abnormality(&normal, p), 0);
        let cm = LabelVector::default().with(C::Cardiomegaly, LabelValue::Positive).unwrap();
        assert_eq!(derive_abnormality(&cm, p), 1);
        let dev = LabelVector::default().with(C::SupportDevices, LabelValue::Positive).unwrap();
        assert_eq!(derive_abnormality(&dev, p), 0);
        assert_eq!(derive_abnormality(&dev, AbnormalityPolicy { support_devices_abnormal: true, ..p }), 1);
        let unc = LabelVector::default().with(C::Edema, LabelValue::Uncertain).unwrap();
        assert_eq!(derive_abnormality(&unc, p), 0);
        assert_eq!(derive_abnormality(&unc, AbnormalityPolicy { uncertain_abnormal: true, ..p }), 1);
    }

    #[test]
    fn no_finding_conflict_rejected() {
        let v = LabelVector::default().with(C::Edema, LabelValue::Positive).unwrap();
        assert!(v.with(C::NoFinding, LabelValue::Positive).is_err());
        let v = LabelVector::default().with(C::NoFinding, LabelValue::Positive).unwrap();
        assert!(v.with(C::Fracture, LabelValue::Positive).is_err());
        assert!(v.with(C::SupportDevices, LabelValue::Positive).is_ok());
    }

    #[test]
    fn label_vector_json_roundtrip() {
        let v = LabelVector::default()
            .with(C::NoFinding, LabelValue::Positive)
            .unwrap()
            .with(C::Edema, LabelValue::Negative)
            .unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<LabelVector>(&s).unwrap(), v);
    }

    #[test]
    fn lexicon_parse_errors() {
        assert!(FindingLexicon::parse("EDEMA").is_err());
        assert!(FindingLexicon::parse("BOGUS | x").is_err());
        assert!(FindingLexicon::parse("EDEMA | x | MAYBE").is_err());
        assert!(FindingLexicon::parse("EDEMA | *").is_err());
        let lex = FindingLexicon::parse("version 3\nEDEMA | wet lungs\n").unwrap();
        assert_eq!(lex.version, 3);
        assert_eq!(lex.len(), 1);
    }

    #[test]
    fn labels_csv_layout() {
        let v = LabelVector::default().with(C::Edema, LabelValue::Positive).unwrap();
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &[("c1".into(), "r1".into(), v)]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert!(lines.next().unwrap().starts_with("case_id,report_id,ATELECTASIS,CARDIOMEGALY,CONSOLIDATION,EDEMA"));
        assert_eq!(lines.next().unwrap(), "c1,r1,,,,P,,,,,,,,,,");
    }

    fn arb_value() -> impl Strategy<Value = LabelValue> {
        prop_oneof![
            Just(LabelValue::NotMentioned),
            Just(LabelValue::Negative),
            Just(LabelValue::Uncertain),
            Just(LabelValue::Positive)
        ]
    }

    fn arb_vector() -> impl Strategy<Value = LabelVector> {
        proptest::collection::vec(arb_value(), 14).prop_map(|vals| {
            let mut v = LabelVector::default();
            for (c, val) in C::ALL.into_iter().zip(vals) {
                let _ = v.set(c, val);
            }
            v
        })
    }

    proptest! {
        #[test]
        fn abnormality_matches_any_of_oracle(v in arb_vector()) {
            let oracle = C::ALL.iter().filter(|c| !matches!(c, C::NoFinding | C::SupportDevices))
                .any(|c| v.get(*c) == LabelValue::Positive);
            prop_assert_eq!(derive_abnormality(&v, AbnormalityPolicy::default()) == 1, oracle);
        }

        #[test]
        fn abnormality_monotone(v in arb_vector(), idx in 0usize..12) {
            let c = C::pathologies().nth(idx).unwrap();
            let before = derive_abnormality(&v, AbnormalityPolicy::default());
            let mut w = v;
            if w.get(c) == LabelValue::NotMentioned && w.get(C::NoFinding) != LabelValue::Positive {
                w.set(c, LabelValue::Positive).unwrap();
                prop_assert!(derive_abnormality(&w, AbnormalityPolicy::default()) >= before);
            }
        }

        #[test]
        fn aggregation_matches_precedence_oracle(
            raw in proptest::collection::vec((0usize..14, 0usize..3), 0..20)
        ) {
            let pols = [Polarity::Positive, Polarity::Negative, Polarity::Uncertain];
            let ms: Vec<Mention> = raw.iter().map(|&(c, p)| Mention {
                category: C::ALL[c], span: Span::new(0, 1), polarity: pols[p],
            }).collect();
            let v = aggregate_labels(&ms);
            for c in C::ALL.into_iter().filter(|c| *c != C::NoFinding) {
                let rank = |p: Polarity| match p { Polarity::Positive => 3, Polarity::Uncertain => 2, Polarity::Negative => 1 };
                let best = ms.iter().filter(|m| m.category == c).map(|m| rank(m.polarity)).max().unwrap_or(0);
                let expected = [LabelValue::NotMentioned, LabelValue::Negative, LabelValue::Uncertain, LabelValue::Positive][best];
                prop_assert_eq!(v.get(c), expected);
            }
            prop_assert!(v.is_consistent());
        }

        #[test]
        fn labeling_is_deterministic_and_consistent(text in "[a-zA-Z ,.]{0,120}") {
            let l = labeler();
            let a = l.label(&text);
            prop_assert_eq!(a, l.label(&text));
            prop_assert!(a.is_consistent());
        }

        #[test]
        fn phrase_free_sentence_is_local(
            idx in 0usize..6,
            filler in "(the|heart|size|is|within|normal|limits|bony|structures|intact)( (the|heart|size|is|within|normal|limits|bony|structures|intact)){0,8}",
        ) {
            let reports = [
                "No pleural effusion.",
                "There is a small right-sided pleural effusion with adjacent atelectasis.",
                "Possible pneumonia. Pacemaker in place.",
                "No acute cardiopulmonary process.",
                "Mild pulmonary edema, worse in the interval.",
                "Lungs are clear. No pneumothorax.",
            ];
            let l = labeler();
            let base = reports[idx];
            let extended = format!("{base} {filler}.");
            prop_assert_eq!(l.label(base), l.label(&extended));
        }
    }
}
