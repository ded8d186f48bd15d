//! MC-schedulability of a simulated trace: HC jobs get their full demand; LC
//! jobs get their full demand unless an HC-mode episode overlaps their
//! window, in which case `alpha_i * C_i` is enough.

use std::collections::BTreeMap;

use num_traits::Zero;

use super::trace::{JobRef, ScheduleTrace};
use super::JobSequence;
use crate::ratio::Time;
use crate::taskmodel::TaskSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// An HC job did not receive its demand.
    HcDemand,
    /// An LC job judged in LC mode did not receive its demand.
    LcFull,
    /// An LC job judged in HC mode did not receive `min(demand, alpha C)`.
    LcGuaranteed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub job: JobRef,
    pub kind: ViolationKind,
    pub deadline: Time,
    pub required: Time,
    pub received: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Verification {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl Verification {
    pub fn is_schedulable(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every job whose deadline lies within `horizon` (all jobs if `None`).
pub fn verify_mc_schedulable(
    ts: &TaskSet,
    jobs: &JobSequence,
    trace: &ScheduleTrace,
    horizon: Option<&Time>,
) -> Verification {
    let episodes = trace.hc_episodes();
    let mut segments_by_job: BTreeMap<JobRef, Vec<(&Time, &Time)>> = BTreeMap::new();
    for s in &trace.segments {
        segments_by_job
            .entry(s.job)
            .or_default()
            .push((&s.start, &s.end));
    }
    let mut out = Verification::default();
    for job in jobs.jobs() {
        let Some(task) = ts.get(job.task) else {
            continue;
        };
        let deadline = &job.release + task.deadline();
        if horizon.is_some_and(|h| deadline > *h) {
            continue;
        }
        out.checked += 1;
        let received: Time = segments_by_job
            .get(&job.reference())
            .map(|segs| {
                segs.iter()
                    .filter(|(s, _)| **s < deadline)
                    .map(|(s, e)| std::cmp::min(*e, &deadline) - *s)
                    .sum()
            })
            .unwrap_or_else(Time::zero);
        let (kind, required) = if task.is_hc() {
            (ViolationKind::HcDemand, job.demand.clone())
        } else {
            let touches_hc = episodes.iter().any(|(start, end)| {
                *start < deadline && end.as_ref().is_none_or(|e| *e > job.release)
            });
            if touches_hc {
                (
                    ViolationKind::LcGuaranteed,
                    std::cmp::min(job.demand.clone(), task.hc_budget()),
                )
            } else {
                (ViolationKind::LcFull, job.demand.clone())
            }
        };
        if received < required {
            out.violations.push(Violation {
                job: job.reference(),
                kind,
                deadline,
                required,
                received,
            });
        }
    }
    out
}
