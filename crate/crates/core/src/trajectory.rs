use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::sokoban::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepStatus {
    Success,
    Failure,
}

/// Observation returned by the environment after a charged step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub status: StepStatus,
    pub budget_after: Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalStatus {
    GoalReached,
    DeadEnd,
    BudgetExhausted,
    HorizonExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Canonical id of the state the action was taken in.
    pub state_id: String,
    pub intended_action: Action,
    pub executed_action: Action,
    pub intended_viable: bool,
    pub executed_viable: bool,
    pub budget_after: Budget,
}

/// One episode. Serialized as a single JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub steps: Vec<StepRecord>,
    pub terminal_status: TerminalStatus,
    pub success: bool,
}

impl TrajectoryRecord {
    pub fn new(steps: Vec<StepRecord>, terminal_status: TerminalStatus) -> Self {
        let mut record = Self {
            steps,
            terminal_status,
            success: false,
        };
        record.success = judge_success(&record);
        record
    }

    /// Index of the goal-reaching step (`T_g`), if the goal was reached.
    pub fn goal_step(&self) -> Option<usize> {
        (self.terminal_status == TerminalStatus::GoalReached).then_some(self.steps.len())
    }

    pub fn to_jsonl(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

/// Success iff the goal was reached and every executed action before it was viable.
pub fn judge_success(record: &TrajectoryRecord) -> bool {
    record.terminal_status == TerminalStatus::GoalReached && record.steps.iter().all(|s| s.executed_viable)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(viable: bool, left: u32) -> StepRecord {
        StepRecord {
            state_id: "p1,1|b2,1".into(),
            intended_action: Action::R,
            executed_action: Action::R,
            intended_viable: viable,
            executed_viable: viable,
            budget_after: Budget::steps(left),
        }
    }

    #[test]
    fn goal_with_all_viable_is_success() {
        let r = TrajectoryRecord::new((0..4).map(|i| step(true, 4 - i)).collect(), TerminalStatus::GoalReached);
        assert!(r.success);
        assert_eq!(r.goal_step(), Some(4));
    }

    #[test]
    fn goal_never_reached() {
        let r = TrajectoryRecord::new(vec![step(true, 1)], TerminalStatus::BudgetExhausted);
        assert!(!r.success);
        assert_eq!(r.goal_step(), None);
    }

    #[test]
    fn non_viable_step_breaks_success() {
        let mut steps: Vec<StepRecord> = (0..3).map(|i| step(true, 3 - i)).collect();
        steps[1].executed_viable = false;
        assert!(!TrajectoryRecord::new(steps, TerminalStatus::GoalReached).success);
    }

    #[test]
    fn jsonl_field_names() {
        let r = TrajectoryRecord::new(vec![step(true, 0)], TerminalStatus::GoalReached);
        let line = r.to_jsonl();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["terminal_status"], "GoalReached");
        let s = &v["steps"][0];
        for key in ["state_id", "intended_action", "executed_action", "intended_viable", "executed_viable", "budget_after"] {
            assert!(s.get(key).is_some(), "missing {key}");
        }
        assert_eq!(s["budget_after"], serde_json::json!([0]));
        let back: TrajectoryRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }
}
