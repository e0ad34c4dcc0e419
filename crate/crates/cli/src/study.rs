use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use radeval_core::analysis::{export_results, AnalysisConfig, Include, Study, StudyResults};
use radeval_core::corpus::{ReportDocument, ReportSource};
use radeval_core::workflow::{
    generate_collaboration_round, generate_correction_tasks, generate_preference_tasks, Phase, RaterProfile,
    Workflow, WorkflowState,
};
use radeval_service::{wire::TaskPayload, AppState, ServiceConfig};
use serde::Deserialize;

use crate::input::{load_corpus, load_reports};
use crate::GenerateArgs;

fn open(log: &Path) -> Result<Workflow> {
    Workflow::open(log).with_context(|| format!("opening event log {}", log.display()))
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let mut wf = open(&args.log)?;
    if args.phase == Phase::Collaboration {
        let round = generate_collaboration_round(wf.state(), args.policy.into(), args.seed)?;
        wf.add_batch(&round.batch)?;
        for (rater, case) in &round.exclusions {
            wf.add_exclusion(rater, case, Phase::Collaboration)?;
        }
        println!("collaboration round: {} tasks, {} exclusions", round.batch.len(), round.exclusions.len());
        return Ok(());
    }
    let (Some(corpus), Some(candidates)) = (&args.corpus, &args.candidates) else {
        bail!("--corpus and --candidates are required for the {} phase", args.phase);
    };
    let corpus = load_corpus(corpus)?;
    let keep: Option<BTreeSet<String>> = match &args.cases {
        Some(p) => {
            #[derive(Deserialize)]
            struct Manifest {
                case_ids: Vec<String>,
            }
            let m: Manifest = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            Some(m.case_ids.into_iter().collect())
        }
        None => None,
    };
    let entries: Vec<_> =
        corpus.entries().iter().filter(|e| keep.as_ref().is_none_or(|k| k.contains(&e.case.case_id))).collect();
    let cases: Vec<_> = entries.iter().map(|e| e.case.clone()).collect();
    let mut reports: Vec<ReportDocument> =
        entries.iter().map(|e| e.report.clone().with_source(ReportSource::HumanOriginal)).collect();
    let wanted: BTreeSet<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
    reports.extend(
        load_reports(candidates, ReportSource::ModelGenerated, "-model")?
            .into_iter()
            .filter(|r| wanted.contains(r.case_id())),
    );
    let batch = match args.phase {
        Phase::Preference => generate_preference_tasks(&cases, &reports, args.seed)?,
        _ => generate_correction_tasks(&cases, &reports, args.seed)?,
    };
    wf.add_batch(&batch)?;
    println!("{} phase: {} tasks over {} cases", args.phase, batch.len(), cases.len());
    Ok(())
}

#[derive(Deserialize)]
struct RaterRow {
    rater_id: String,
    #[serde(default)]
    qualifications: String,
}

pub fn assign(log: &Path, raters: &Path, per_task: usize, seed: u64) -> Result<()> {
    let mut wf = open(log)?;
    let mut reader = csv::Reader::from_path(raters).with_context(|| format!("reading {}", raters.display()))?;
    for row in reader.deserialize::<RaterRow>() {
        let row = row?;
        if !wf.state().raters.contains_key(&row.rater_id) {
            wf.register_rater(RaterProfile::new(row.rater_id, row.qualifications))?;
        }
    }
    let plan = wf.assign_pending(per_task, seed)?;
    wf.write_snapshot()?;
    println!("assigned {} tasks to {} raters", plan.assignments.len(), wf.state().raters.len());
    Ok(())
}

pub fn export(log: &Path, out: Option<&Path>) -> Result<()> {
    let state = WorkflowState::replay(&radeval_core::workflow::EventLog::read(log)?);
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for record in state.tasks.values() {
        let payload = TaskPayload::from_task(&record.task, &state)
            .with_context(|| format!("task {} references a missing report", record.task.task_id()))?;
        writeln!(sink, "{}", serde_json::to_string(&payload)?)?;
    }
    sink.flush()?;
    Ok(())
}

pub fn analyze(log: &Path, out: &Path, n_resamples: usize, level: f64, seed: u64, complete_only: bool) -> Result<()> {
    let state = WorkflowState::replay(&radeval_core::workflow::EventLog::read(log)?);
    let include = if complete_only { Include::CompleteOnly } else { Include::All };
    let study = Study::from_state(&state, include)?;
    let results = StudyResults::compute(&study, &AnalysisConfig { n_resamples, level, seed })?;
    let files = export_results(&results, out)?;
    println!("wrote {}", files.json.display());
    for f in &files.csv {
        println!("wrote {}", f.display());
    }
    Ok(())
}

pub fn serve(config: Option<&Path>, images: Option<&Path>, print_access_codes: bool) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let config = ServiceConfig::load(config)?;
    if print_access_codes {
        if config.session_secret.is_none() {
            bail!("access codes need a fixed session_secret");
        }
        let app = AppState::from_config(&config)?;
        for rater in app.workflow.read().state().raters.keys() {
            println!("{rater},{}", app.keys.access_code(rater));
        }
        return Ok(());
    }
    if let Some(dir) = images {
        let app = AppState::from_config(&config)?;
        let added = app.images.ingest_cases(app.workflow.read().state().cases.values(), dir)?;
        eprintln!("ingested {added} images");
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        radeval_service::serve(&config, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(())
}
