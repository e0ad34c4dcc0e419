use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use radeval_core::decoder::{
    beam_search, detokenize, ensemble_condition_probabilities, ContextId, DecodeConfig, ToyMarkovModel,
};
use radeval_core::labeler::Labeler;
use serde_json::json;

#[derive(Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["beam", "nucleus"]))]
pub struct DecodeArgs {
    /// Toy Markov model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Beam search with this width.
    #[arg(long)]
    beam: Option<usize>,
    /// Nucleus-sampling ensemble with this top-p.
    #[arg(long)]
    nucleus: Option<f64>,
    #[arg(long, default_value_t = DecodeConfig::default().n_samples)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DecodeConfig::default().max_length)]
    max_length: usize,
    /// Rank beams by mean per-token log-likelihood.
    #[arg(long)]
    length_normalized: bool,
    #[arg(long, default_value = "")]
    context: String,
}

pub fn run(args: &DecodeArgs) -> Result<()> {
    let model = ToyMarkovModel::load(&args.model)?;
    let context = ContextId(args.context.clone());
    let mut config = DecodeConfig {
        max_length: args.max_length,
        n_samples: args.samples,
        seed: args.seed,
        length_normalized: args.length_normalized,
        ..DecodeConfig::default()
    };
    let out = if let Some(width) = args.beam {
        config.beam_width = width;
        let hypotheses: Vec<_> = beam_search(&model, &context, &config)?
            .into_iter()
            .map(|h| {
                json!({
                    "text": detokenize(h.content_tokens()),
                    "tokens": h.tokens,
                    "log_likelihood": h.log_likelihood,
                    "finished": h.finished,
                })
            })
            .collect();
        json!({"mode": "beam", "config": config, "hypotheses": hypotheses})
    } else {
        config.nucleus_p = args.nucleus.expect("clap enforces one mode");
        let ensemble = ensemble_condition_probabilities(&model, &context, &config, &Labeler::default())?;
        json!({"mode": "nucleus", "config": config, "ensemble": ensemble})
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
