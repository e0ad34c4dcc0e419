use serde::{Deserialize, Serialize};

use crate::text::Span;

/// Lowercase alphanumeric tokens of a report, in order.
///
/// Only [`tokenize`] builds one, so no token is empty or contains whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl std::ops::Deref for TokenSequence {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence(tokenize_with_spans(text).into_iter().map(|(t, _)| t).collect())
}

/// Like [`tokenize`], also returning each token's char span in `text`.
pub fn tokenize_with_spans(text: &str) -> Vec<(String, Span)> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut idx = 0;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if current.is_empty() {
                start = idx;
            }
            current.push(ch);
        } else if !current.is_empty() {
            out.push((current.to_lowercase(), Span::new(start, idx)));
            current.clear();
        }
        idx += 1;
    }
    if !current.is_empty() {
        out.push((current.to_lowercase(), Span::new(start, idx)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(ts: &TokenSequence) -> Vec<&str> {
        ts.iter().map(String::as_str).collect()
    }

    #[test]
    fn basic() {
        assert_eq!(words(&tokenize("No acute process.")), ["no", "acute", "process"]);
        assert!(tokenize("").is_empty());
        assert_eq!(words(&tokenize("3.5 cm, right-sided")), ["3", "5", "cm", "right", "sided"]);
    }

    #[test]
    fn spans_point_at_source() {
        let text = "Tip: ET-tube";
        for (tok, span) in tokenize_with_spans(text) {
            let src = crate::text::slice(text, span).unwrap();
            assert_eq!(src.to_lowercase(), tok);
        }
    }

    proptest! {
        #[test]
        fn matches_regex_split_oracle(s in "\\PC{0,60}") {
            let re = regex::Regex::new(r"[^\p{Alphabetic}\p{N}]+").unwrap();
            let oracle: Vec<String> = re
                .split(&s)
                .filter(|t| !t.is_empty())
                .map(|t| t.to_lowercase())
                .collect();
            prop_assert_eq!(tokenize(&s).into_inner(), oracle);
        }
    }
}
