use std::path::Path;

use anyhow::{Context, Result};
use radeval_core::corpus::{
    compute_example_weights, filter_training_set, ingest_corpus, stratified_sample, Corpus, CorpusFormat,
    PriorReferenceLexicon, Stratum,
};
use radeval_core::labeler::{stratum_for, write_labels_csv, AbnormalityPolicy, Labeler};

use crate::input::load_corpus;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Fills UNLABELED strata from the rule-based labeler.
fn with_strata(corpus: &Corpus) -> Corpus {
    let labeler = Labeler::default();
    corpus.map_strata(|e| match e.case.stratum {
        Stratum::Unlabeled => stratum_for(&labeler.label_report(&e.report), AbnormalityPolicy::default()),
        s => s,
    })
}

pub fn ingest(path: &Path, format: CorpusFormat, out: &Path, rejects: Option<&Path>) -> Result<()> {
    let outcome = ingest_corpus(path, format)?;
    write(out, outcome.corpus.to_jsonl())?;
    for r in &outcome.rejections {
        eprintln!("line {}: {}", r.line, r.reason);
    }
    if let Some(p) = rejects {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(["line", "reason"])?;
        for r in &outcome.rejections {
            w.write_record([r.line.to_string(), r.reason.to_string()])?;
        }
        w.flush()?;
    }
    println!("ingested {} cases, rejected {}", outcome.corpus.len(), outcome.rejections.len());
    Ok(())
}

pub fn filter_train(corpus: &Path, out: &Path, lexicon: Option<&Path>, removed: Option<&Path>) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    let lexicon = match lexicon {
        Some(p) => PriorReferenceLexicon::parse(&std::fs::read_to_string(p)?)?,
        None => PriorReferenceLexicon::default(),
    };
    let outcome = filter_training_set(&corpus, &lexicon);
    write(out, outcome.corpus.to_jsonl())?;
    if let Some(p) = removed {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(["case_id", "reason"])?;
        for (case_id, reason) in &outcome.removed {
            w.write_record([case_id.as_str(), &format!("{reason:?}")])?;
        }
        w.flush()?;
    }
    println!("kept {} cases, removed {} (lexicon version {})", outcome.corpus.len(), outcome.removed.len(), lexicon.version);
    Ok(())
}

pub fn weights(corpus: &Path, out: &Path) -> Result<()> {
    let corpus = with_strata(&load_corpus(corpus)?);
    let weights = compute_example_weights(&corpus)?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["case_id", "dataset_tag", "stratum", "weight"])?;
    for x in &weights {
        w.write_record([x.case_id.clone(), x.dataset_tag.to_string(), x.stratum.to_string(), format!("{:.6}", x.weight)])?;
    }
    w.flush()?;
    println!("wrote {} weights", weights.len());
    Ok(())
}

pub fn sample(corpus: &Path, normal: usize, abnormal: usize, seed: u64, out: &Path, cases_out: Option<&Path>) -> Result<()> {
    let corpus = with_strata(&load_corpus(corpus)?);
    let manifest = stratified_sample(&corpus, normal, abnormal, seed)?;
    write(out, serde_json::to_string_pretty(&manifest)? + "\n")?;
    if let Some(p) = cases_out {
        let picked = manifest.case_ids.iter().filter_map(|id| corpus.get(id)).cloned().collect();
        let subset = Corpus::from_entries(picked).map_err(anyhow::Error::msg)?;
        write(p, subset.to_jsonl())?;
    }
    println!("sampled {} cases with {} seed {}", manifest.case_ids.len(), manifest.prng, seed);
    Ok(())
}

pub fn label(corpus: &Path, out: &Path) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    let labeler = Labeler::default();
    let rows: Vec<_> = corpus
        .entries()
        .iter()
        .map(|e| (e.case.case_id.clone(), e.report.report_id().to_string(), labeler.label_report(&e.report)))
        .collect();
    let file = std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_labels_csv(file, &rows)?;
    println!("labelled {} reports", rows.len());
    Ok(())
}
