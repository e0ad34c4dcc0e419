use std::cmp::Ordering;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{check_distribution, ConditionalTokenModel, ContextId, TokenId};
use super::DecodeError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub nucleus_p: f64,
    /// Upper bound on emitted tokens, end-of-sequence included.
    pub max_length: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Rank beam candidates by mean per-token log-likelihood.
    pub length_normalized: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { beam_width: 3, nucleus_p: 0.9, max_length: 128, n_samples: 250, seed: 0, length_normalized: false }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.beam_width == 0 {
            return Err(DecodeError::InvalidConfig("beam_width must be at least 1".into()));
        }
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(DecodeError::InvalidConfig(format!("nucleus_p {} outside (0, 1]", self.nucleus_p)));
        }
        if self.max_length == 0 {
            return Err(DecodeError::InvalidConfig("max_length must be at least 1".into()));
        }
        if self.n_samples == 0 {
            return Err(DecodeError::InvalidConfig("n_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Emitted tokens; ends with the end-of-sequence token when `finished`.
    pub tokens: Vec<String>,
    pub token_ids: Vec<TokenId>,
    pub log_likelihood: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Tokens without the end-of-sequence marker.
    pub fn content_tokens(&self) -> &[String] {
        if self.finished {
            &self.tokens[..self.tokens.len() - 1]
        } else {
            &self.tokens
        }
    }
}

fn query(model: &dyn ConditionalTokenModel, context: &ContextId, prefix: &[TokenId]) -> Result<Vec<f64>, DecodeError> {
    let lp = model.next_log_probs(context, prefix)?;
    check_distribution(model.vocabulary(), &lp)?;
    Ok(lp)
}

fn hypothesis(model: &dyn ConditionalTokenModel, ids: Vec<TokenId>, log_likelihood: f64) -> Hypothesis {
    let v = model.vocabulary();
    Hypothesis {
        tokens: ids.iter().map(|&t| v.token(t).to_string()).collect(),
        finished: ids.last() == Some(&v.eos()),
        token_ids: ids,
        log_likelihood,
    }
}

/// `sum_l log p(y_l | y_<l, context)` over `tokens`, which may end with the
/// end-of-sequence token. Tokens after an end-of-sequence token are rejected.
pub fn sequence_log_likelihood<S: AsRef<str>>(
    model: &dyn ConditionalTokenModel,
    context: &ContextId,
    tokens: &[S],
) -> Result<f64, DecodeError> {
    let v = model.vocabulary();
    let ids = tokens.iter().map(|t| v.id(t.as_ref())).collect::<Result<Vec<_>, _>>()?;
    if ids.iter().rev().skip(1).any(|&t| t == v.eos()) {
        return Err(DecodeError::InvalidConfig("end-of-sequence before the last token".into()));
    }
    let mut total = 0.0;
    for l in 0..ids.len() {
        let lp = query(model, context, &ids[..l])?[ids[l] as usize];
        if lp == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += lp;
    }
    Ok(total)
}

#[derive(Clone)]
struct Beam {
    ids: Vec<TokenId>,
    score: f64,
}

impl Beam {
    fn rank(&self, normalized: bool) -> f64 {
        if normalized && !self.ids.is_empty() {
            self.score / self.ids.len() as f64
        } else {
            self.score
        }
    }
}

/// Best first; equal scores fall back to lexicographic token-id order.
fn better(a: &Beam, b: &Beam, normalized: bool) -> Ordering {
    b.rank(normalized).total_cmp(&a.rank(normalized)).then_with(|| a.ids.cmp(&b.ids))
}

/// Length-bounded beam search. Each step expands every active beam, keeps the
/// `beam_width` best expansions, and moves those that emitted end-of-sequence
/// (or reached `max_length`) into a completed pool of the same width. Without
/// length normalization the search stops once the pool is full and its worst
/// score beats every active beam, since extending a beam never raises its
/// score.
pub fn beam_search(
    model: &dyn ConditionalTokenModel,
    context: &ContextId,
    config: &DecodeConfig,
) -> Result<Vec<Hypothesis>, DecodeError> {
    config.validate()?;
    let k = config.beam_width;
    let norm = config.length_normalized;
    let eos = model.vocabulary().eos();
    let mut active = vec![Beam { ids: Vec::new(), score: 0.0 }];
    let mut pool: Vec<Beam> = Vec::new();

    while !active.is_empty() {
        let prefixes: Vec<&[TokenId]> = active.iter().map(|b| b.ids.as_slice()).collect();
        let dists = model.next_log_probs_batch(context, &prefixes)?;
        let mut candidates = Vec::new();
        for (beam, lp) in active.iter().zip(&dists) {
            check_distribution(model.vocabulary(), lp)?;
            for (tok, &l) in lp.iter().enumerate() {
                if l == f64::NEG_INFINITY {
                    continue;
                }
                let mut ids = beam.ids.clone();
                ids.push(tok as TokenId);
                candidates.push(Beam { ids, score: beam.score + l });
            }
        }
        candidates.sort_by(|a, b| better(a, b, norm));
        candidates.truncate(k);

        active.clear();
        for c in candidates {
            if c.ids.last() == Some(&eos) || c.ids.len() >= config.max_length {
                pool.push(c);
            } else {
                active.push(c);
            }
        }
        pool.sort_by(|a, b| better(a, b, norm));
        pool.truncate(k);

        if !norm && pool.len() == k {
            let worst_kept = pool[k - 1].score;
            let best_active = active.iter().map(|b| b.score).fold(f64::NEG_INFINITY, f64::max);
            if worst_kept > best_active {
                break;
            }
        }
    }
    Ok(pool.into_iter().map(|b| hypothesis(model, b.ids, b.score)).collect())
}

/// Smallest probability-sorted prefix of the vocabulary with mass >= `p`
/// (the token that crosses `p` is included), renormalized. Equal
/// probabilities are ordered by token id.
pub fn nucleus(probs: &[f64], p: f64) -> Vec<(TokenId, f64)> {
    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for i in order {
        kept.push((i as TokenId, probs[i]));
        mass += probs[i];
        if mass >= p {
            break;
        }
    }
    kept.into_iter().map(|(t, q)| (t, q / mass)).collect()
}

/// One nucleus-sampled sequence drawing from `rng`.
pub fn nucleus_sample_with_rng<R: Rng + ?Sized>(
    model: &dyn ConditionalTokenModel,
    context: &ContextId,
    p: f64,
    max_length: usize,
    rng: &mut R,
) -> Result<Hypothesis, DecodeError> {
    let eos = model.vocabulary().eos();
    let mut ids = Vec::new();
    let mut score = 0.0;
    while ids.len() < max_length {
        let lp = query(model, context, &ids)?;
        let probs: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
        let kept = nucleus(&probs, p);
        let dist = WeightedIndex::new(kept.iter().map(|k| k.1)).map_err(|e| DecodeError::Backend(e.to_string()))?;
        let tok = kept[dist.sample(rng)].0;
        score += lp[tok as usize];
        ids.push(tok);
        if tok == eos {
            break;
        }
    }
    Ok(hypothesis(model, ids, score))
}

/// One nucleus-sampled sequence seeded by `config.seed`. The reported
/// log-likelihood is under the unmodified model.
pub fn nucleus_sample(
    model: &dyn ConditionalTokenModel,
    context: &ContextId,
    config: &DecodeConfig,
) -> Result<Hypothesis, DecodeError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    nucleus_sample_with_rng(model, context, config.nucleus_p, config.max_length, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::super::markov::{MarkovTransition, ToyMarkovModel};
    use super::super::model::Vocabulary;
    use super::*;
    use proptest::prelude::*;

    struct Uniform(Vocabulary);

    impl ConditionalTokenModel for Uniform {
        fn vocabulary(&self) -> &Vocabulary {
            &self.0
        }
        fn next_log_probs(&self, _: &ContextId, _: &[TokenId]) -> Result<Vec<f64>, DecodeError> {
            Ok(vec![-(self.0.len() as f64).ln(); self.0.len()])
        }
    }

    fn uniform(n: usize) -> Uniform {
        let mut toks: Vec<String> = (0..n - 1).map(|i| format!("t{i}")).collect();
        toks.push("</s>".into());
        Uniform(Vocabulary::new(toks, "</s>").unwrap())
    }

    /// Random fully connected chain over `n_states` with vocabulary a, b, c, </s>.
    fn random_chain(weights: &[f64], n_states: usize) -> ToyMarkovModel {
        let vocab = ["a", "b", "c", "</s>"];
        let mut transitions = Vec::new();
        for s in 0..n_states {
            let w = &weights[s * 4..s * 4 + 4];
            let total: f64 = w.iter().sum();
            for (i, tok) in vocab.iter().enumerate() {
                transitions.push(MarkovTransition {
                    from: format!("q{s}"),
                    token: tok.to_string(),
                    to: (i < 3).then(|| format!("q{}", (s + i + 1) % n_states)),
                    logprob: (w[i] / total).ln(),
                });
            }
        }
        ToyMarkovModel::new(
            vocab.iter().map(|s| s.to_string()).collect(),
            "</s>",
            (0..n_states).map(|s| format!("q{s}")).collect(),
            "q0",
            transitions,
        )
        .unwrap()
    }

    fn greedy(model: &dyn ConditionalTokenModel, max_length: usize) -> Vec<TokenId> {
        let mut ids = Vec::new();
        while ids.len() < max_length {
            let lp = model.next_log_probs(&ContextId::default(), &ids).unwrap();
            let best = (0..lp.len()).max_by(|&a, &b| lp[a].total_cmp(&lp[b]).then(b.cmp(&a))).unwrap();
            ids.push(best as TokenId);
            if best as TokenId == model.vocabulary().eos() {
                break;
            }
        }
        ids
    }

    #[test]
    fn defaults() {
        let c = DecodeConfig::default();
        assert_eq!((c.beam_width, c.nucleus_p, c.n_samples), (3, 0.9, 250));
        assert!(DecodeConfig { nucleus_p: 0.0, ..c }.validate().is_err());
        assert!(DecodeConfig { beam_width: 0, ..c }.validate().is_err());
    }

    #[test]
    fn uniform_likelihood() {
        let m = uniform(5);
        let ll = sequence_log_likelihood(&m, &ContextId::default(), &["t0", "t3", "t1", "</s>"]).unwrap();
        assert!((ll + 4.0 * 5f64.ln()).abs() < 1e-12);
        assert!(sequence_log_likelihood(&m, &ContextId::default(), &["zz"]).is_err());
    }

    #[test]
    fn deterministic_model_has_zero_likelihood() {
        let m = ToyMarkovModel::mixture(&[("no acute process.", 1.0)]).unwrap();
        let best = &beam_search(&m, &ContextId::default(), &DecodeConfig::default()).unwrap()[0];
        assert_eq!(best.tokens, ["no", "acute", "process", ".", "</s>"]);
        assert_eq!(best.log_likelihood, 0.0);
        assert_eq!(sequence_log_likelihood(&m, &ContextId::default(), &best.tokens).unwrap(), 0.0);
    }

    #[test]
    fn toy_nucleus_arithmetic() {
        let kept = nucleus(&[0.5, 0.3, 0.15, 0.05], 0.9);
        let ids: Vec<TokenId> = kept.iter().map(|k| k.0).collect();
        assert_eq!(ids, [0, 1, 2]);
        let expected = [0.5 / 0.95, 0.3 / 0.95, 0.15 / 0.95];
        for (k, e) in kept.iter().zip(expected) {
            assert!((k.1 - e).abs() < 1e-12);
        }
        assert_eq!(nucleus(&[0.2, 0.5, 0.3], 0.1), vec![(1, 1.0)]);
        assert_eq!(nucleus(&[0.5, 0.5], 0.5), vec![(0, 1.0)]);
    }

    #[test]
    fn tiny_nucleus_is_greedy() {
        let m = random_chain(&[5.0, 1.0, 2.0, 0.5, 1.0, 4.0, 2.0, 3.0, 1.0, 1.0, 6.0, 2.0], 3);
        let cfg = DecodeConfig { nucleus_p: 1e-6, max_length: 8, ..Default::default() };
        for seed in 0..5 {
            let h = nucleus_sample(&m, &ContextId::default(), &DecodeConfig { seed, ..cfg }).unwrap();
            assert_eq!(h.token_ids, greedy(&m, 8));
        }
    }

    /// A wider beam keeps B, whose two children crowd out every child of A;
    /// B's descendants then fan out, so the best finished score drops.
    #[test]
    fn wider_beam_can_lose_the_greedy_optimum() {
        let mut t = Vec::new();
        let mut arc = |from: &str, token: &str, to: Option<&str>, p: f64| {
            t.push(MarkovTransition { from: from.into(), token: token.into(), to: to.map(Into::into), logprob: p.ln() })
        };
        arc("s", "a", Some("sa"), 0.4);
        arc("s", "b", Some("sb"), 0.35);
        arc("s", "c", Some("end"), 0.25);
        for tok in ["a", "b", "c", "d"] {
            arc("sa", tok, Some("end"), 0.25);
        }
        arc("sb", "a", Some("fan"), 0.5);
        arc("sb", "b", Some("fan"), 0.5);
        for i in 0..10 {
            arc("fan", &format!("x{i}"), Some("end"), 0.1);
        }
        arc("end", "</s>", None, 1.0);
        let mut vocab: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        vocab.extend((0..10).map(|i| format!("x{i}")));
        vocab.push("</s>".into());
        let states = ["s", "sa", "sb", "fan", "end"].iter().map(|s| s.to_string()).collect();
        let m = ToyMarkovModel::new(vocab, "</s>", states, "s", t).unwrap();
        let ctx = ContextId::default();
        let best = |k| beam_search(&m, &ctx, &DecodeConfig { beam_width: k, max_length: 4, ..Default::default() }).unwrap()[0].log_likelihood;
        assert!((best(1) - 0.1f64.ln()).abs() < 1e-12);
        assert!((best(2) - 0.0175f64.ln()).abs() < 1e-12);
        assert!(best(1) > best(2));
    }

    fn arb_weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.05f64..1.0, n)
    }

    proptest! {
        #[test]
        fn width_one_is_greedy(w in arb_weights(12)) {
            let m = random_chain(&w, 3);
            let cfg = DecodeConfig { beam_width: 1, max_length: 6, ..Default::default() };
            let hyps = beam_search(&m, &ContextId::default(), &cfg).unwrap();
            prop_assert_eq!(hyps.len(), 1);
            prop_assert_eq!(&hyps[0].token_ids, &greedy(&m, 6));
        }

        #[test]
        fn hypotheses_sorted_with_exact_likelihoods(w in arb_weights(12), k in 1usize..6) {
            let m = random_chain(&w, 3);
            let cfg = DecodeConfig { beam_width: k, max_length: 5, ..Default::default() };
            let hyps = beam_search(&m, &ContextId::default(), &cfg).unwrap();
            prop_assert!(!hyps.is_empty() && hyps.len() <= k);
            prop_assert!(hyps.windows(2).all(|p| p[0].log_likelihood >= p[1].log_likelihood));
            for h in &hyps {
                let ll = sequence_log_likelihood(&m, &ContextId::default(), &h.tokens).unwrap();
                prop_assert!((ll - h.log_likelihood).abs() < 1e-9);
            }
        }

        #[test]
        fn no_width_beats_exhaustive_optimum(w in arb_weights(12), k in 1usize..5) {
            let m = random_chain(&w, 3);
            let ctx = ContextId::default();
            let cfg = DecodeConfig { max_length: 4, ..Default::default() };
            let narrow = beam_search(&m, &ctx, &DecodeConfig { beam_width: k, ..cfg }).unwrap();
            let full = beam_search(&m, &ctx, &DecodeConfig { beam_width: 256, ..cfg }).unwrap();
            prop_assert!(narrow[0].log_likelihood <= full[0].log_likelihood + 1e-12);
        }

        #[test]
        fn seeded_sampling_is_reproducible(w in arb_weights(12), seed in any::<u64>()) {
            let m = random_chain(&w, 3);
            let cfg = DecodeConfig { seed, max_length: 10, ..Default::default() };
            let a = nucleus_sample(&m, &ContextId::default(), &cfg).unwrap();
            let b = nucleus_sample(&m, &ContextId::default(), &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            let ll = sequence_log_likelihood(&m, &ContextId::default(), &a.tokens).unwrap();
            prop_assert!((ll - a.log_likelihood).abs() < 1e-9);
        }
    }
}
