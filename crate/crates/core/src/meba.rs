//! Maximum Execution-based Budget Allocation.
//!
//! HC tasks share one LC-mode budget of `beta* * U_H` (a utilization). Each
//! task keeps its largest execution in the current busy interval, `e_max`,
//! reserved for its future jobs; a dispatched job gets whatever is left:
//!
//! ```text
//! b_i = T_i * (beta* U_H - Σ_{j != i} e_max[j] / T_j)
//! ```
//!
//! A job that uses up `b_i` without completing triggers the switch to HC mode.
//! An idle instant ends the busy interval and clears all bookkeeping.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use crate::ratio::{self, Frac, Time};
use crate::taskmodel::TaskSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Lc,
    Hc,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Lc => "LC",
            Mode::Hc => "HC",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MebaError {
    #[error("operation requires LC mode")]
    WrongMode,
    #[error("task {0} is not an HC task of this set")]
    UnknownTask(usize),
    #[error("task {task}: consumed {consumed} exceeds budget {budget}")]
    BudgetOverrun {
        task: usize,
        consumed: String,
        budget: String,
    },
}

/// Emitted when an HC job exhausts its budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSwitch {
    pub at: Time,
    pub task: usize,
    /// `e_max` per HC task id at the switch, including the triggering job's
    /// consumed budget.
    pub e_max: BTreeMap<usize, Time>,
}

#[derive(Debug, Clone)]
struct Slot {
    id: usize,
    period: Time,
    e_max: Time,
    budget: Time,
}

#[derive(Debug, Clone)]
pub struct MebaState {
    mode: Mode,
    beta_budget: Frac,
    slots: Vec<Slot>,
}

impl MebaState {
    pub fn new(ts: &TaskSet, beta_star: &Frac) -> Self {
        let slots = ts
            .hc_tasks()
            .map(|t| Slot {
                id: t.id(),
                period: t.period().clone(),
                e_max: Time::zero(),
                budget: Time::zero(),
            })
            .collect();
        Self {
            mode: Mode::Lc,
            beta_budget: beta_star * ts.u_hc(),
            slots,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// The shared LC-mode budget `beta* * U_H`.
    pub fn beta_budget(&self) -> &Frac {
        &self.beta_budget
    }

    fn slot(&self, task: usize) -> Result<usize, MebaError> {
        self.slots
            .iter()
            .position(|s| s.id == task)
            .ok_or(MebaError::UnknownTask(task))
    }

    pub fn e_max(&self, task: usize) -> Option<&Time> {
        self.slots.iter().find(|s| s.id == task).map(|s| &s.e_max)
    }

    pub fn budget(&self, task: usize) -> Option<&Time> {
        self.slots.iter().find(|s| s.id == task).map(|s| &s.budget)
    }

    pub fn e_max_snapshot(&self) -> BTreeMap<usize, Time> {
        self.slots.iter().map(|s| (s.id, s.e_max.clone())).collect()
    }

    /// `Σ e_max[i] / T_i`, the reserved part of the shared budget.
    pub fn reserved_load(&self) -> Frac {
        self.slots.iter().map(|s| &s.e_max / &s.period).sum()
    }

    /// Computes and stores the budget of `task`'s job about to run.
    /// Negative results (only reachable from inconsistent inputs) clamp to 0.
    pub fn on_dispatch(&mut self, task: usize) -> Result<Time, MebaError> {
        if self.mode != Mode::Lc {
            return Err(MebaError::WrongMode);
        }
        let k = self.slot(task)?;
        let others: Frac = self
            .slots
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, s)| &s.e_max / &s.period)
            .sum();
        let mut b = &self.slots[k].period * (&self.beta_budget - others);
        if b.is_negative() {
            b = Time::zero();
        }
        self.slots[k].budget = b.clone();
        Ok(b)
    }

    /// The running job of `task` consumed its whole budget without completing.
    pub fn on_budget_exhausted(&mut self, task: usize, at: Time) -> Result<ModeSwitch, MebaError> {
        if self.mode != Mode::Lc {
            return Err(MebaError::WrongMode);
        }
        let k = self.slot(task)?;
        let slot = &mut self.slots[k];
        if slot.budget > slot.e_max {
            slot.e_max = slot.budget.clone();
        }
        self.mode = Mode::Hc;
        Ok(ModeSwitch {
            at,
            task,
            e_max: self.e_max_snapshot(),
        })
    }

    /// A job of `task` was preempted or completed after `consumed` units in total.
    pub fn on_preempt_or_complete(
        &mut self,
        task: usize,
        consumed: &Time,
    ) -> Result<(), MebaError> {
        if self.mode != Mode::Lc {
            return Err(MebaError::WrongMode);
        }
        let k = self.slot(task)?;
        let slot = &mut self.slots[k];
        if consumed > &slot.budget {
            return Err(MebaError::BudgetOverrun {
                task,
                consumed: ratio::format(consumed),
                budget: ratio::format(&slot.budget),
            });
        }
        if consumed > &slot.e_max {
            slot.e_max = consumed.clone();
        }
        Ok(())
    }

    /// Processor idle: a new busy interval starts in LC mode with cleared state.
    pub fn on_idle(&mut self) {
        self.mode = Mode::Lc;
        for s in &mut self.slots {
            s.e_max = Time::zero();
            s.budget = Time::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{int, q};
    use crate::taskmodel::McTask;

    /// tau1 = (10, 5, LC), tau2 = tau3 = (10, 4, HC); beta* = 1/4 so beta* U_H = 1/5.
    fn example() -> MebaState {
        let ts = TaskSet::new(vec![
            McTask::lc(1, int(10), int(5), int(0)).unwrap(),
            McTask::hc(2, int(10), int(4)).unwrap(),
            McTask::hc(3, int(10), int(4)).unwrap(),
        ])
        .unwrap();
        MebaState::new(&ts, &q(1, 4))
    }

    #[test]
    fn first_dispatch_gets_whole_budget() {
        let mut s = example();
        assert_eq!(s.beta_budget(), &q(1, 5));
        assert_eq!(s.on_dispatch(2).unwrap(), int(2));
    }

    #[test]
    fn remaining_budget_after_other_task_ran() {
        let mut s = example();
        s.on_dispatch(2).unwrap();
        s.on_preempt_or_complete(2, &q(3, 2)).unwrap();
        // b_3 = 10 * (1/5 - 1.5/10) = 0.5
        assert_eq!(s.on_dispatch(3).unwrap(), q(1, 2));
    }

    #[test]
    fn dispatch_sequence_uses_maximum() {
        // J_2^1 runs 1, J_3^1 runs partially, J_2^2 runs 1.5: b_3 uses max{1, 1.5}.
        let mut s = example();
        s.on_dispatch(2).unwrap();
        s.on_preempt_or_complete(2, &int(1)).unwrap();
        s.on_dispatch(3).unwrap();
        s.on_preempt_or_complete(3, &q(1, 4)).unwrap();
        s.on_dispatch(2).unwrap();
        s.on_preempt_or_complete(2, &q(3, 2)).unwrap();
        assert_eq!(
            s.on_dispatch(3).unwrap(),
            int(10) * (q(1, 5) - q(3, 2) / int(10))
        );
        assert_eq!(s.e_max(2), Some(&q(3, 2)));
    }

    #[test]
    fn stays_in_lc_mode_example() {
        let mut s = example();
        s.on_dispatch(3).unwrap();
        s.on_preempt_or_complete(3, &q(96, 100)).unwrap();
        // Demand 1.05 against b = 10 * (0.2 - 0.096) = 1.04 exhausts the budget.
        assert_eq!(s.on_dispatch(2).unwrap(), q(104, 100));
        let mut fresh = example();
        assert_eq!(fresh.on_dispatch(2).unwrap(), int(2));
    }

    #[test]
    fn exhaustion_switches_and_snapshots() {
        let mut s = example();
        s.on_dispatch(3).unwrap();
        s.on_preempt_or_complete(3, &q(96, 100)).unwrap();
        s.on_dispatch(2).unwrap();
        let ev = s.on_budget_exhausted(2, int(7)).unwrap();
        assert_eq!(s.mode(), Mode::Hc);
        assert_eq!(ev.e_max[&2], q(104, 100));
        assert_eq!(ev.e_max[&3], q(96, 100));
        assert_eq!(s.reserved_load(), q(1, 5));
        assert_eq!(s.on_dispatch(2), Err(MebaError::WrongMode));
        assert_eq!(
            s.on_preempt_or_complete(2, &int(1)),
            Err(MebaError::WrongMode)
        );
    }

    #[test]
    fn zero_beta_gives_zero_budget() {
        let ts = TaskSet::new(vec![
            McTask::hc(0, int(5), int(1)).unwrap(),
            McTask::hc(1, int(5), int(1)).unwrap(),
        ])
        .unwrap();
        let mut s = MebaState::new(&ts, &int(0));
        assert_eq!(s.on_dispatch(0).unwrap(), int(0));
    }

    #[test]
    fn preempt_updates_are_max() {
        let mut s = example();
        s.on_dispatch(2).unwrap();
        s.on_preempt_or_complete(2, &int(2)).unwrap();
        assert_eq!(s.e_max(2), Some(&int(2)));
        s.on_dispatch(2).unwrap();
        s.on_preempt_or_complete(2, &int(1)).unwrap();
        assert_eq!(s.e_max(2), Some(&int(2)));
        let err = s.on_preempt_or_complete(2, &int(3)).unwrap_err();
        assert!(matches!(err, MebaError::BudgetOverrun { task: 2, .. }));
    }

    #[test]
    fn idle_resets() {
        let mut s = example();
        s.on_dispatch(2).unwrap();
        s.on_preempt_or_complete(2, &int(1)).unwrap();
        s.on_idle();
        assert_eq!(s.e_max(2), Some(&int(0)));
        assert_eq!(s.mode(), Mode::Lc);
        s.on_dispatch(2).unwrap();
        s.on_budget_exhausted(2, int(1)).unwrap();
        s.on_idle();
        s.on_idle();
        assert_eq!(s.mode(), Mode::Lc);
        assert_eq!(s.e_max(2), Some(&int(0)));
        assert_eq!(s.budget(2), Some(&int(0)));
        assert!(s.reserved_load().is_zero());
    }

    #[test]
    fn unknown_task() {
        let mut s = example();
        assert_eq!(s.on_dispatch(1), Err(MebaError::UnknownTask(1)));
    }
}
