use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tasks::derived_seed;
use super::{Task, WorkflowError};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    /// task_id -> distinct raters
    pub assignments: BTreeMap<String, Vec<String>>,
    /// rater_id -> tasks in presentation order
    pub queues: BTreeMap<String, Vec<String>>,
}

impl AssignmentPlan {
    pub fn load(&self, rater_id: &str) -> usize {
        self.queues.get(rater_id).map_or(0, Vec::len)
    }
}

/// Assigns `per_task` distinct raters to every task, never pairing a rater
/// with an excluded case. Tasks with the fewest eligible raters are placed
/// first, each going to the least-loaded eligible raters (ties broken by a
/// seeded rater order), which keeps loads within one task of each other
/// when exclusions allow. Each rater's queue is then shuffled with a seed
/// derived from `seed` and the rater id.
pub fn assign_raters(
    tasks: &[Task],
    raters: &[String],
    per_task: usize,
    exclusions: &BTreeSet<(String, String)>,
    seed: u64,
) -> Result<AssignmentPlan, WorkflowError> {
    let distinct: BTreeSet<&String> = raters.iter().collect();
    if distinct.len() != raters.len() {
        return Err(WorkflowError::validation("raters", "duplicate rater id"));
    }
    let mut order: Vec<&String> = distinct.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let rank: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();

    let eligible = |task: &Task| -> Vec<&String> {
        order
            .iter()
            .copied()
            .filter(|r| !exclusions.contains(&((*r).clone(), task.case_id().to_string())))
            .collect()
    };
    let mut pending: Vec<(usize, &Task, Vec<&String>)> =
        tasks.iter().enumerate().map(|(i, t)| (i, t, eligible(t))).collect();
    pending.sort_by_key(|(i, _, e)| (e.len(), *i));

    let mut load: BTreeMap<String, usize> = BTreeMap::new();
    let mut plan = AssignmentPlan::default();
    for (_, task, mut candidates) in pending {
        if candidates.len() < per_task {
            return Err(WorkflowError::Infeasible {
                task_id: task.task_id().to_string(),
                eligible: candidates.len(),
                needed: per_task,
            });
        }
        if plan.assignments.contains_key(task.task_id()) {
            return Err(WorkflowError::DuplicateId(task.task_id().to_string()));
        }
        candidates.sort_by_key(|r| (load.get(r.as_str()).copied().unwrap_or(0), rank[r.as_str()]));
        let chosen: Vec<String> = candidates[..per_task].iter().map(|r| (*r).clone()).collect();
        for r in &chosen {
            *load.entry(r.clone()).or_default() += 1;
            plan.queues.entry(r.clone()).or_default().push(task.task_id().to_string());
        }
        plan.assignments.insert(task.task_id().to_string(), chosen);
    }
    for (rater, queue) in plan.queues.iter_mut() {
        queue.sort();
        queue.shuffle(&mut ChaCha8Rng::seed_from_u64(derived_seed(&["queue", &seed.to_string(), rater])));
    }
    Ok(plan)
}
