//! Client-side iterative stage driver: submit a bag of tasks, block until
//! every unit is terminal, run the between-stages hook (the migration
//! point), repeat. No stage k+1 unit is ever submitted before stage k is
//! fully terminal, so the barrier holds by construction.

use thiserror::Error;

use crate::types::{AppId, ApplicationDescriptor};

/// Anything that can run one application to completion: the in-process
/// simulated cloud, or a client talking to a live master.
pub trait JobRunner {
    fn submit_and_wait(&mut self, descriptor: ApplicationDescriptor) -> Result<StageOutcome, String>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub app_id: AppId,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: usize,
    pub outcome: StageOutcome,
}

/// What the between-stages hook decides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageControl {
    Continue,
    Abort(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StagePolicy {
    /// Any failed unit aborts the run.
    AbortOnFailure,
    /// Keep going; failures surface in the per-stage reports.
    Continue,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StageError {
    #[error("stage count must be >= 1")]
    ZeroStages,
    #[error("stage {stage} failed: {failed} unit(s) failed")]
    StageFailed { stage: usize, failed: usize },
    #[error("aborted after stage {stage}: {reason}")]
    Aborted { stage: usize, reason: String },
    #[error("runner error at stage {stage}: {message}")]
    Runner { stage: usize, message: String },
}

/// Runs `stages` successive bags. `tasks_for_stage` builds the bag for a
/// stage index; `between_stages` runs at each barrier and may abort the
/// remaining stages.
pub fn run_stage_driver<R: JobRunner>(
    stages: usize,
    mut tasks_for_stage: impl FnMut(usize) -> ApplicationDescriptor,
    mut between_stages: impl FnMut(usize, &StageOutcome) -> StageControl,
    policy: StagePolicy,
    runner: &mut R,
) -> Result<Vec<StageReport>, StageError> {
    if stages == 0 {
        return Err(StageError::ZeroStages);
    }
    let mut reports = Vec::with_capacity(stages);
    for stage in 0..stages {
        let descriptor = tasks_for_stage(stage);
        let outcome = runner
            .submit_and_wait(descriptor)
            .map_err(|message| StageError::Runner { stage, message })?;
        if outcome.failed > 0 && policy == StagePolicy::AbortOnFailure {
            return Err(StageError::StageFailed {
                stage,
                failed: outcome.failed,
            });
        }
        let control = between_stages(stage, &outcome);
        reports.push(StageReport { stage, outcome });
        if let StageControl::Abort(reason) = control {
            return Err(StageError::Aborted { stage, reason });
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{CommandSpec, ModelPayload, TaskPayload};

    /// Toy runner: completes everything instantly, remembers submissions.
    struct Recorder {
        bags: Vec<usize>,
    }

    impl JobRunner for Recorder {
        fn submit_and_wait(&mut self, d: ApplicationDescriptor) -> Result<StageOutcome, String> {
            let n = match &d.model {
                ModelPayload::Task(p) => p.tasks.len(),
                _ => 0,
            };
            self.bags.push(n);
            Ok(StageOutcome {
                app_id: AppId::new(format!("app-{}", self.bags.len())),
                completed: n,
                failed: 0,
            })
        }
    }

    fn bag(n: usize) -> ApplicationDescriptor {
        ApplicationDescriptor::new(
            "driver",
            ModelPayload::Task(TaskPayload {
                tasks: (0..n).map(|i| CommandSpec::shell("echo", &[&i.to_string()])).collect(),
            }),
        )
    }

    #[test]
    fn five_stages_of_twenty_run_one_hundred_units() {
        let mut r = Recorder { bags: vec![] };
        let reports = run_stage_driver(
            5,
            |_| bag(20),
            |_, _| StageControl::Continue,
            StagePolicy::AbortOnFailure,
            &mut r,
        )
        .unwrap();
        assert_eq!(reports.len(), 5);
        let total: usize = reports.iter().map(|s| s.outcome.completed).sum();
        assert_eq!(total, 100);
        assert_eq!(r.bags, vec![20; 5]);
    }

    #[test]
    fn single_stage_is_a_plain_bag() {
        let mut r = Recorder { bags: vec![] };
        let reports = run_stage_driver(
            1,
            |_| bag(8),
            |_, _| StageControl::Continue,
            StagePolicy::Continue,
            &mut r,
        )
        .unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].outcome.completed, 8);
    }

    #[test]
    fn abort_at_stage_two_skips_the_rest() {
        let mut r = Recorder { bags: vec![] };
        let err = run_stage_driver(
            5,
            |_| bag(4),
            |stage, _| {
                if stage == 1 {
                    StageControl::Abort("migration veto".into())
                } else {
                    StageControl::Continue
                }
            },
            StagePolicy::AbortOnFailure,
            &mut r,
        )
        .unwrap_err();
        assert_eq!(
            err,
            StageError::Aborted {
                stage: 1,
                reason: "migration veto".into()
            }
        );
        // Stages 0 and 1 ran; 2..5 never submitted.
        assert_eq!(r.bags.len(), 2);
    }

    #[test]
    fn zero_stages_is_rejected() {
        let mut r = Recorder { bags: vec![] };
        let err = run_stage_driver(
            0,
            |_| bag(1),
            |_, _| StageControl::Continue,
            StagePolicy::Continue,
            &mut r,
        )
        .unwrap_err();
        assert_eq!(err, StageError::ZeroStages);
    }
}
