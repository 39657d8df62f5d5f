//! Execution-unit state machine.
//!
//! `transition` is a pure function: it returns a new unit and never mutates
//! its input, so callers own the mutation discipline. The permitted graph:
//!
//! ```text
//! Pending --stage--> Staged --dispatch--> Dispatched --start--> Running
//! Staged|Dispatched|Running --fail--> Failed
//! Running --complete--> Completed
//! Staged|Dispatched|Running --node_lost--> Pending (attempts+1)
//!                                        or Failed once attempts exhaust
//! ```
//!
//! Completed and Failed are terminal: nothing leaves them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ExecutionUnit, UnitResult, UnitState};

/// Default ceiling on delivery attempts after node loss.
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitEvent {
    Stage,
    Dispatch,
    Start,
    Complete,
    Fail,
    NodeLost,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransitionError {
    /// Caller bug: the event is not applicable to the unit's state.
    #[error("illegal transition: {event:?} from {from}")]
    IllegalTransition { from: UnitState, event: UnitEvent },
}

/// Applies `event` to `unit` at time `now`, returning the successor unit.
///
/// A `NodeLost` that would push `attempts` beyond `max_attempts` yields a
/// `Failed` unit (with an attempts-exhausted error recorded) instead of
/// requeueing.
pub fn transition(
    unit: &ExecutionUnit,
    event: UnitEvent,
    now: u64,
    max_attempts: u32,
) -> Result<ExecutionUnit, TransitionError> {
    use UnitEvent::*;
    use UnitState::*;

    let illegal = || TransitionError::IllegalTransition {
        from: unit.state,
        event,
    };

    let mut next = unit.clone();
    match (unit.state, event) {
        (Pending, Stage) => {
            next.state = Staged;
        }
        (Staged, Dispatch) => {
            next.state = Dispatched;
            next.timestamps.dispatched = Some(now);
        }
        (Dispatched, Start) => {
            next.state = Running;
            next.timestamps.started = Some(now);
        }
        (Running, Complete) => {
            next.state = Completed;
            next.timestamps.ended = Some(now);
        }
        (Staged | Dispatched | Running, Fail) => {
            next.state = Failed;
            next.timestamps.ended = Some(now);
        }
        (Staged | Dispatched | Running, NodeLost) => {
            if unit.attempts + 1 > max_attempts {
                next.state = Failed;
                next.timestamps.ended = Some(now);
                let result = next.result.get_or_insert_with(UnitResult::default);
                result.error = Some(format!(
                    "node lost; attempts exhausted ({}/{})",
                    unit.attempts, max_attempts
                ));
            } else {
                next.state = Pending;
                next.attempts = unit.attempts + 1;
                next.assigned_node = None;
                next.timestamps.dispatched = None;
                next.timestamps.started = None;
                next.timestamps.ended = None;
            }
        }
        _ => return Err(illegal()),
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AppId, CommandSpec, UnitId, UnitWork};

    fn unit() -> ExecutionUnit {
        let mut u = ExecutionUnit::new(
            AppId::new("app-1"),
            UnitId::new("t0000"),
            UnitWork::Command(CommandSpec::shell("echo", &["hi"])),
        );
        u.timestamps.submitted = Some(0);
        u
    }

    fn drive(u: &ExecutionUnit, events: &[(UnitEvent, u64)]) -> ExecutionUnit {
        let mut cur = u.clone();
        for (ev, t) in events {
            cur = transition(&cur, *ev, *t, DEFAULT_MAX_ATTEMPTS).unwrap();
        }
        cur
    }

    #[test]
    fn dispatch_without_stage_is_illegal() {
        let err = transition(&unit(), UnitEvent::Dispatch, 1, 3).unwrap_err();
        assert_eq!(
            err,
            TransitionError::IllegalTransition {
                from: UnitState::Pending,
                event: UnitEvent::Dispatch
            }
        );
    }

    #[test]
    fn complete_from_running_sets_ended() {
        let running = drive(
            &unit(),
            &[
                (UnitEvent::Stage, 1),
                (UnitEvent::Dispatch, 2),
                (UnitEvent::Start, 3),
            ],
        );
        let done = transition(&running, UnitEvent::Complete, 9, 3).unwrap();
        assert_eq!(done.state, UnitState::Completed);
        assert_eq!(done.timestamps.ended, Some(9));
    }

    // Replaying the transition table by hand: a running unit with one prior
    // attempt goes back to Pending with attempts bumped to 2.
    #[test]
    fn node_lost_requeues_and_bumps_attempts() {
        let running = drive(
            &unit(),
            &[
                (UnitEvent::Stage, 1),
                (UnitEvent::Dispatch, 2),
                (UnitEvent::Start, 3),
            ],
        );
        assert_eq!(running.attempts, 1);
        let back = transition(&running, UnitEvent::NodeLost, 5, 3).unwrap();
        assert_eq!(back.state, UnitState::Pending);
        assert_eq!(back.attempts, 2);
        assert_eq!(back.timestamps.dispatched, None);
        assert_eq!(back.timestamps.started, None);
    }

    #[test]
    fn third_consecutive_loss_fails_with_max_three() {
        let mut u = unit();
        for round in 0..3u64 {
            u = drive(
                &u,
                &[
                    (UnitEvent::Stage, round * 10 + 1),
                    (UnitEvent::Dispatch, round * 10 + 2),
                    (UnitEvent::Start, round * 10 + 3),
                ],
            );
            u = transition(&u, UnitEvent::NodeLost, round * 10 + 5, 3).unwrap();
        }
        assert_eq!(u.state, UnitState::Failed);
        assert!(u.result.unwrap().error.unwrap().contains("attempts exhausted"));
    }

    #[test]
    fn terminal_states_reject_everything() {
        let done = drive(
            &unit(),
            &[
                (UnitEvent::Stage, 1),
                (UnitEvent::Dispatch, 2),
                (UnitEvent::Start, 3),
                (UnitEvent::Complete, 4),
            ],
        );
        for ev in [
            UnitEvent::Stage,
            UnitEvent::Dispatch,
            UnitEvent::Start,
            UnitEvent::Complete,
            UnitEvent::Fail,
            UnitEvent::NodeLost,
        ] {
            assert!(transition(&done, ev, 10, 3).is_err());
        }
    }

    #[test]
    fn timestamps_stay_ordered() {
        let done = drive(
            &unit(),
            &[
                (UnitEvent::Stage, 1),
                (UnitEvent::Dispatch, 2),
                (UnitEvent::Start, 5),
                (UnitEvent::Complete, 11),
            ],
        );
        let t = done.timestamps;
        assert!(t.submitted <= t.dispatched);
        assert!(t.dispatched <= t.started);
        assert!(t.started <= t.ended);
    }
}
