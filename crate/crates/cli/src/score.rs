use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use radeval_core::corpus::ReportSource;
use radeval_core::labeler::{FindingCategory, Labeler, LabelVector};
use radeval_core::metrics::bootstrap::{bootstrap_with, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use radeval_core::metrics::cider::cider_d_scores;
use radeval_core::metrics::clinical::per_category_f1;
use radeval_core::metrics::graph::{graph_f1_corpus, read_graphs_jsonl};
use radeval_core::metrics::{
    bleu4, micro_f1, rouge_l_corpus, tokenize, MetricEntry, MetricError, MetricReport, TokenSequence, UncertainPolicy,
    ROUGE_L_BETA,
};

use crate::input::load_reports;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricName {
    Bleu4,
    Rouge,
    Cider,
    F1All,
    F1Top5,
    GraphF1,
}

#[derive(Args)]
pub struct ScoreArgs {
    /// Predicted reports, JSONL of {"case_id", "report"}.
    #[arg(long)]
    pred: PathBuf,
    /// Reference reports in the same format.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "bleu4,rouge,cider,f1-all,f1-top5")]
    metrics: Vec<MetricName>,
    /// Bootstrap resamples; 0 disables intervals.
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    bootstrap: usize,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Count UNCERTAIN labels as positive in F1.
    #[arg(long)]
    uncertain_positive: bool,
    /// Annotation graphs (JSONL) of the predictions, for graph-f1.
    #[arg(long)]
    pred_graphs: Option<PathBuf>,
    #[arg(long)]
    ref_graphs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

struct Scorer<'a> {
    args: &'a ScoreArgs,
    n: usize,
}

impl Scorer<'_> {
    /// Point estimate on all cases plus a bootstrap interval over cases.
    fn entry<F>(&self, statistic: F) -> Result<MetricEntry, MetricError>
    where
        F: Fn(&[usize]) -> f64 + Sync,
    {
        if self.args.bootstrap == 0 {
            let all: Vec<usize> = (0..self.n).collect();
            return Ok(MetricEntry::point(statistic(&all)));
        }
        Ok(bootstrap_with(self.n, self.args.bootstrap, self.args.level, self.args.seed, statistic)?.into())
    }
}

fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

pub fn run(args: &ScoreArgs) -> Result<()> {
    let mut refs = load_reports(&args.reference, ReportSource::HumanOriginal, "")?;
    refs.sort_by(|a, b| a.case_id().cmp(b.case_id()));
    let preds: BTreeMap<String, _> =
        load_reports(&args.pred, ReportSource::ModelGenerated, "")?.into_iter().map(|r| (r.case_id().to_string(), r)).collect();
    let mut paired = Vec::with_capacity(refs.len());
    for r in &refs {
        let Some(p) = preds.get(r.case_id()) else { bail!("no prediction for case {}", r.case_id()) };
        paired.push((p, r));
    }
    if paired.is_empty() {
        bail!("no reference reports");
    }
    let cand_tokens: Vec<TokenSequence> = paired.iter().map(|(p, _)| tokenize(&p.text())).collect();
    let ref_tokens: Vec<TokenSequence> = paired.iter().map(|(_, r)| tokenize(&r.text())).collect();
    let scorer = Scorer { args, n: paired.len() };
    let policy = if args.uncertain_positive { UncertainPolicy::Positive } else { UncertainPolicy::Negative };
    let mut report = MetricReport::default();
    let mut labels: Option<(Vec<LabelVector>, Vec<LabelVector>)> = None;

    for metric in &args.metrics {
        match metric {
            MetricName::Bleu4 => {
                let e = scorer.entry(|idx| bleu4(&pick(&cand_tokens, idx), &pick(&ref_tokens, idx)).unwrap_or(0.0))?;
                report.insert("bleu4", e);
            }
            MetricName::Rouge => {
                let e = scorer.entry(|idx| rouge_l_corpus(&pick(&cand_tokens, idx), &pick(&ref_tokens, idx)).unwrap_or(0.0))?;
                report.insert("rouge_l", e);
                report.note("rouge_l_beta", ROUGE_L_BETA);
            }
            MetricName::Cider => {
                let scores = cider_d_scores(&cand_tokens, &ref_tokens, &ref_tokens)?;
                let e = scorer.entry(|idx| idx.iter().map(|&i| scores[i]).sum::<f64>() / idx.len() as f64)?;
                report.insert("cider_d", e);
                report.note("cider_df_corpus", "references");
            }
            MetricName::F1All | MetricName::F1Top5 => {
                let (pred_labels, ref_labels) = labels.get_or_insert_with(|| {
                    let labeler = Labeler::default();
                    paired.iter().map(|(p, r)| (labeler.label_report(p), labeler.label_report(r))).unzip()
                });
                let (name, categories): (&str, &[FindingCategory]) = match metric {
                    MetricName::F1All => ("f1_all", &FindingCategory::ALL),
                    _ => ("f1_top5", &FindingCategory::TOP5),
                };
                let e = scorer.entry(|idx| {
                    micro_f1(&pick(pred_labels, idx), &pick(ref_labels, idx), categories, policy).map_or(0.0, |s| s.f1)
                })?;
                report.insert(name, e);
                for (category, s) in per_category_f1(pred_labels, ref_labels, categories, policy)? {
                    report.insert_category(name, category, MetricEntry::point(s.f1));
                }
                report.note("uncertain_policy", policy);
            }
            MetricName::GraphF1 => {
                let (Some(pg), Some(rg)) = (&args.pred_graphs, &args.ref_graphs) else {
                    bail!("graph-f1 needs --pred-graphs and --ref-graphs");
                };
                let read = |p: &PathBuf| -> Result<_> {
                    let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
                    Ok(read_graphs_jsonl(BufReader::new(f))?)
                };
                let g = graph_f1_corpus(&read(pg)?, &read(rg)?)?;
                report.insert("graph_entity_f1", MetricEntry::point(g.entity_f1));
                report.insert("graph_relation_f1", MetricEntry::point(g.relation_f1));
            }
        }
    }
    report.note("n_cases", paired.len());
    report.note("bootstrap_resamples", args.bootstrap);
    report.note("level", args.level);
    report.note("seed", args.seed);
    std::fs::write(&args.out, report.to_json_pretty() + "\n").with_context(|| format!("writing {}", args.out.display()))?;
    println!("{}", report.to_json_pretty());
    Ok(())
}
