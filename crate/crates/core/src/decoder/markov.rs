use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ensemble::split_report_tokens;
use super::model::{check_distribution, ConditionalTokenModel, ContextId, TokenId, Vocabulary};
use super::DecodeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovTransition {
    pub from: String,
    pub token: String,
    /// Absent for end-of-sequence transitions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    pub logprob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MarkovFile {
    vocabulary: Vec<String>,
    eos: String,
    states: Vec<String>,
    initial_state: String,
    transitions: Vec<MarkovTransition>,
}

/// Finite-state token model: each state emits a token and moves to the
/// next state. The context is ignored.
#[derive(Debug, Clone)]
pub struct ToyMarkovModel {
    file: MarkovFile,
    vocabulary: Vocabulary,
    initial: usize,
    log_probs: Vec<Vec<f64>>,
    next: Vec<HashMap<TokenId, usize>>,
}

impl ToyMarkovModel {
    pub fn from_json(json: &str) -> Result<Self, DecodeError> {
        let file: MarkovFile = serde_json::from_str(json).map_err(|e| DecodeError::InvalidModel(e.to_string()))?;
        Self::build(file)
    }

    pub fn load(path: &Path) -> Result<Self, DecodeError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("model serializes")
    }

    pub fn new(
        vocabulary: Vec<String>,
        eos: &str,
        states: Vec<String>,
        initial_state: &str,
        transitions: Vec<MarkovTransition>,
    ) -> Result<Self, DecodeError> {
        Self::build(MarkovFile { vocabulary, eos: eos.into(), states, initial_state: initial_state.into(), transitions })
    }

    fn build(file: MarkovFile) -> Result<Self, DecodeError> {
        let vocabulary = Vocabulary::new(file.vocabulary.clone(), &file.eos)?;
        let state_index: HashMap<&str, usize> = file.states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let lookup = |s: &str| {
            state_index.get(s).copied().ok_or_else(|| DecodeError::InvalidModel(format!("unknown state {s:?}")))
        };
        let initial = lookup(&file.initial_state)?;
        let mut log_probs = vec![vec![f64::NEG_INFINITY; vocabulary.len()]; file.states.len()];
        let mut next = vec![HashMap::new(); file.states.len()];
        for t in &file.transitions {
            let from = lookup(&t.from)?;
            let token = vocabulary.id(&t.token)?;
            if log_probs[from][token as usize] != f64::NEG_INFINITY {
                return Err(DecodeError::InvalidModel(format!("duplicate transition {} --{}-->", t.from, t.token)));
            }
            log_probs[from][token as usize] = t.logprob;
            match (&t.to, token == vocabulary.eos()) {
                (Some(to), false) => {
                    next[from].insert(token, lookup(to)?);
                }
                (None, true) => {}
                (Some(_), true) => return Err(DecodeError::InvalidModel("end-of-sequence transition with a target".into())),
                (None, false) => {
                    return Err(DecodeError::InvalidModel(format!("transition {} --{}--> has no target", t.from, t.token)))
                }
            }
        }
        for (state, lp) in file.states.iter().zip(&log_probs) {
            check_distribution(&vocabulary, lp)
                .map_err(|e| DecodeError::InvalidModel(format!("state {state:?}: {e}")))?;
        }
        Ok(ToyMarkovModel { file, vocabulary, initial, log_probs, next })
    }

    /// A model that emits each report verbatim with the given relative
    /// weight. Reports are split into words and punctuation marks.
    pub fn mixture(reports: &[(&str, f64)]) -> Result<Self, DecodeError> {
        const EOS: &str = "</s>";
        if reports.is_empty() || reports.iter().any(|(_, w)| !(w.is_finite() && *w > 0.0)) {
            return Err(DecodeError::InvalidModel("mixture needs positive finite weights".into()));
        }
        struct Node {
            children: Vec<(String, usize, f64)>,
            eos: f64,
        }
        let mut nodes = vec![Node { children: Vec::new(), eos: 0.0 }];
        let mut vocab: Vec<String> = Vec::new();
        for (text, w) in reports {
            let mut at = 0;
            for tok in split_report_tokens(text) {
                if !vocab.contains(&tok) {
                    vocab.push(tok.clone());
                }
                at = match nodes[at].children.iter().position(|c| c.0 == tok) {
                    Some(i) => {
                        nodes[at].children[i].2 += w;
                        nodes[at].children[i].1
                    }
                    None => {
                        nodes.push(Node { children: Vec::new(), eos: 0.0 });
                        let id = nodes.len() - 1;
                        nodes[at].children.push((tok, id, *w));
                        id
                    }
                };
            }
            nodes[at].eos += w;
        }
        vocab.sort();
        vocab.push(EOS.into());
        let name = |i: usize| format!("s{i}");
        let mut transitions = Vec::new();
        for (i, node) in nodes.iter().enumerate() {
            let total: f64 = node.eos + node.children.iter().map(|c| c.2).sum::<f64>();
            for (tok, to, w) in &node.children {
                transitions.push(MarkovTransition { from: name(i), token: tok.clone(), to: Some(name(*to)), logprob: (w / total).ln() });
            }
            if node.eos > 0.0 {
                transitions.push(MarkovTransition { from: name(i), token: EOS.into(), to: None, logprob: (node.eos / total).ln() });
            }
        }
        Self::new(vocab, EOS, (0..nodes.len()).map(name).collect(), &name(0), transitions)
    }

    fn walk(&self, prefix: &[TokenId]) -> Result<usize, DecodeError> {
        let mut state = self.initial;
        for &tok in prefix {
            state = *self.next[state].get(&tok).ok_or_else(|| {
                DecodeError::Backend(format!("prefix has zero probability at token {:?}", self.vocabulary.token(tok)))
            })?;
        }
        Ok(state)
    }
}

impl ConditionalTokenModel for ToyMarkovModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    fn next_log_probs(&self, _context: &ContextId, prefix: &[TokenId]) -> Result<Vec<f64>, DecodeError> {
        Ok(self.log_probs[self.walk(prefix)?].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"{
        "vocabulary": ["a", "b", "</s>"],
        "eos": "</s>",
        "states": ["s0", "s1"],
        "initial_state": "s0",
        "transitions": [
            {"from": "s0", "token": "a", "to": "s1", "logprob": -0.35667494393873245},
            {"from": "s0", "token": "b", "to": "s0", "logprob": -1.2039728043259361},
            {"from": "s1", "token": "b", "to": "s0", "logprob": -0.6931471805599453},
            {"from": "s1", "token": "</s>", "logprob": -0.6931471805599453}
        ]
    }"#;

    #[test]
    fn loads_and_walks() {
        let m = ToyMarkovModel::from_json(CHAIN).unwrap();
        let ctx = ContextId::default();
        let lp = m.next_log_probs(&ctx, &[0]).unwrap();
        assert!((lp[2].exp() - 0.5).abs() < 1e-12);
        assert!(m.next_log_probs(&ctx, &[0, 0]).is_err());
        let again = ToyMarkovModel::from_json(&m.to_json()).unwrap();
        assert_eq!(again.next_log_probs(&ctx, &[1]).unwrap(), m.next_log_probs(&ctx, &[1]).unwrap());
    }

    #[test]
    fn rejects_unnormalized_state() {
        let bad = CHAIN.replace("-1.2039728043259361", "-2.0");
        assert!(matches!(ToyMarkovModel::from_json(&bad), Err(DecodeError::InvalidModel(_))));
        let dangling = CHAIN.replace(r#""to": "s0", "logprob": -1.2"#, r#""to": "s9", "logprob": -1.2"#);
        assert!(ToyMarkovModel::from_json(&dangling).is_err());
    }

    #[test]
    fn mixture_weights() {
        let m = ToyMarkovModel::mixture(&[("large pleural effusion.", 0.7), ("no acute process.", 0.3)]).unwrap();
        let lp = m.next_log_probs(&ContextId::default(), &[]).unwrap();
        let v = m.vocabulary();
        assert!((lp[v.id("large").unwrap() as usize].exp() - 0.7).abs() < 1e-12);
        assert!((lp[v.id("no").unwrap() as usize].exp() - 0.3).abs() < 1e-12);
        assert!(ToyMarkovModel::mixture(&[("x", 0.0)]).is_err());
    }
}
