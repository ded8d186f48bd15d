//! Discrete-event uniprocessor simulation of EDF-UVD (with MEBA or fixed
//! budgets) and of classic EDF-VD, with exact time.

pub mod checks;
mod engine;
pub mod jobfile;
pub mod trace;
pub mod verify;

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use crate::analysis::StaticMcTask;
use crate::ratio::{self, Frac, Time};
use crate::taskmodel::{Criticality, TaskSet};

pub use checks::{check_lemma2_optimality, check_mapping_equivalence, MappingReport};
pub use trace::{EventKind, JobRef, ScheduleTrace, Segment, TraceEvent};
pub use verify::{verify_mc_schedulable, Verification, Violation, ViolationKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("invalid job sequence: {0}")]
    InvalidJobSequence(String),
    #[error("HC task {0} has no LC budget for the static policy")]
    MissingLcBudget(usize),
    #[error("fixed budgets violate Σ B_i / T_i <= beta* U_H ({sum} > {limit})")]
    BudgetSumViolation { sum: String, limit: String },
    #[error("virtual deadline factor must lie in (0, 1], got {0}")]
    InvalidDeadlineFactor(String),
}

/// One job: release time and actual execution demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub task: usize,
    /// Per-task sequence number, 0-based in release order.
    pub seq: usize,
    pub release: Time,
    pub demand: Time,
}

impl Job {
    pub fn reference(&self) -> JobRef {
        JobRef {
            task: self.task,
            seq: self.seq,
        }
    }
}

/// Jobs ordered by `(release, task, seq)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JobSequence {
    jobs: Vec<Job>,
}

impl JobSequence {
    /// Builds a sequence from `(task, release, demand)` triples, numbering each
    /// task's jobs in release order.
    pub fn from_releases(items: impl IntoIterator<Item = (usize, Time, Time)>) -> Self {
        let mut raw: Vec<(usize, Time, Time)> = items.into_iter().collect();
        raw.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut next_seq: BTreeMap<usize, usize> = BTreeMap::new();
        let jobs = raw
            .into_iter()
            .map(|(task, release, demand)| {
                let seq = next_seq.entry(task).or_insert(0);
                let job = Job {
                    task,
                    seq: *seq,
                    release,
                    demand,
                };
                *seq += 1;
                job
            })
            .collect();
        Self { jobs }
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn get(&self, r: JobRef) -> Option<&Job> {
        self.jobs
            .iter()
            .find(|j| j.task == r.task && j.seq == r.seq)
    }

    /// Keeps jobs whose release lies in `[from, to)`.
    pub fn released_within(&self, from: &Time, to: Option<&Time>) -> Self {
        let items = self
            .jobs
            .iter()
            .filter(|j| &j.release >= from && to.is_none_or(|t| &j.release < t))
            .map(|j| (j.task, j.release.clone(), j.demand.clone()));
        Self::from_releases(items)
    }

    /// Checks sporadic separation and `0 < demand <= C_i` against `ts`.
    pub fn validate(&self, ts: &TaskSet) -> Result<(), SimError> {
        let tasks: Vec<(usize, Time, Time)> = ts
            .tasks()
            .iter()
            .map(|t| (t.id(), t.period().clone(), t.wcet().clone()))
            .collect();
        self.validate_against(&tasks)
    }

    pub(crate) fn validate_against(&self, tasks: &[(usize, Time, Time)]) -> Result<(), SimError> {
        let mut last: BTreeMap<usize, &Time> = BTreeMap::new();
        for j in &self.jobs {
            let bad = |msg: String| {
                SimError::InvalidJobSequence(format!("job {}#{}: {msg}", j.task, j.seq))
            };
            let (_, period, wcet) = tasks
                .iter()
                .find(|(id, _, _)| *id == j.task)
                .ok_or_else(|| bad("unknown task".into()))?;
            if j.release.is_negative() {
                return Err(bad("negative release".into()));
            }
            if !j.demand.is_positive() || &j.demand > wcet {
                return Err(bad(format!(
                    "demand {} outside (0, {}]",
                    ratio::format(&j.demand),
                    ratio::format(wcet)
                )));
            }
            if let Some(prev) = last.get(&j.task) {
                if &j.release - *prev < *period {
                    return Err(bad(format!(
                        "released less than T = {} after its predecessor",
                        ratio::format(period)
                    )));
                }
            }
            last.insert(j.task, &j.release);
        }
        Ok(())
    }
}

/// Scheduling policy under simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    /// EDF-UVD with MEBA budgets.
    EdfUvdMeba,
    /// Classic EDF-VD: LC jobs always use their real deadlines; HC jobs switch the
    /// mode when they exceed their static `C_i^L`.
    EdfVdStatic,
    /// EDF-UVD where every HC job gets exactly the given budget (keyed by task id).
    FixedBudget(BTreeMap<usize, Time>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub policy: Policy,
    pub beta_star: Frac,
    pub x: Frac,
    /// Simulation stops at this instant; jobs released later are ignored.
    pub horizon: Option<Time>,
}

impl SimConfig {
    pub fn meba(beta_star: Frac, x: Frac) -> Self {
        Self {
            policy: Policy::EdfUvdMeba,
            beta_star,
            x,
            horizon: None,
        }
    }

    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_horizon(mut self, horizon: Time) -> Self {
        self.horizon = Some(horizon);
        self
    }
}

/// How HC jobs are budgeted in LC mode.
#[derive(Debug, Clone)]
pub(crate) enum Budgeting {
    Meba(crate::meba::MebaState),
    /// Per-task fixed budgets (fixed-budget comparator or static `C^L`).
    Fixed(BTreeMap<usize, Time>),
}

/// A task as the engine sees it.
#[derive(Debug, Clone)]
pub(crate) struct SimTask {
    pub id: usize,
    pub period: Time,
    pub criticality: Criticality,
    /// Virtual relative deadline `x * T` (HC tasks, and LC tasks under UVD).
    pub virtual_deadline: Time,
    /// LC tasks: execution scheduled by the virtual deadline in LC mode (`alpha * C`
    /// under UVD, 0 under VD).
    pub virtual_share: Time,
    /// LC tasks: total service allowed once in HC mode.
    pub hc_cap: Time,
}

fn check_x(x: &Frac) -> Result<(), SimError> {
    if x.is_positive() && *x <= Frac::from_integer(1.into()) {
        Ok(())
    } else {
        Err(SimError::InvalidDeadlineFactor(ratio::format(x)))
    }
}

/// Simulates `jobs` of the dynamic task set `ts` under `cfg`.
pub fn simulate(
    ts: &TaskSet,
    cfg: &SimConfig,
    jobs: &JobSequence,
) -> Result<ScheduleTrace, SimError> {
    check_x(&cfg.x)?;
    jobs.validate(ts)?;
    let uvd = !matches!(cfg.policy, Policy::EdfVdStatic);
    let tasks: Vec<SimTask> = ts
        .tasks()
        .iter()
        .map(|t| SimTask {
            id: t.id(),
            period: t.period().clone(),
            criticality: t.criticality(),
            virtual_deadline: &cfg.x * t.period(),
            virtual_share: if uvd && t.is_lc() {
                t.hc_budget()
            } else {
                Time::zero()
            },
            hc_cap: if t.is_lc() {
                t.hc_budget()
            } else {
                t.wcet().clone()
            },
        })
        .collect();
    let budgeting = match &cfg.policy {
        Policy::EdfUvdMeba => Budgeting::Meba(crate::meba::MebaState::new(ts, &cfg.beta_star)),
        Policy::FixedBudget(b) => {
            check_budget_sum(ts, &cfg.beta_star, b)?;
            Budgeting::Fixed(b.clone())
        }
        Policy::EdfVdStatic => {
            let mut budgets = BTreeMap::new();
            for t in ts.hc_tasks() {
                let cl = t.lc_estimate().ok_or(SimError::MissingLcBudget(t.id()))?;
                budgets.insert(t.id(), cl.clone());
            }
            Budgeting::Fixed(budgets)
        }
    };
    Ok(engine::run(tasks, budgeting, jobs, cfg.horizon.as_ref()))
}

/// Simulates a static (mapped) task system under classic EDF-VD: LC tasks are
/// dropped on a mode switch, HC tasks switch the mode past their `C^L`.
pub fn simulate_static(
    tasks: &[StaticMcTask],
    x: &Frac,
    jobs: &JobSequence,
    horizon: Option<&Time>,
) -> Result<ScheduleTrace, SimError> {
    check_x(x)?;
    let shape: Vec<(usize, Time, Time)> = tasks
        .iter()
        .map(|t| (t.id, t.period.clone(), t.wcet.clone()))
        .collect();
    jobs.validate_against(&shape)?;
    let sim_tasks = tasks
        .iter()
        .map(|t| SimTask {
            id: t.id,
            period: t.period.clone(),
            criticality: t.criticality,
            virtual_deadline: x * &t.period,
            virtual_share: Time::zero(),
            hc_cap: if t.criticality == Criticality::Hc {
                t.wcet.clone()
            } else {
                Time::zero()
            },
        })
        .collect();
    let budgets = tasks
        .iter()
        .filter(|t| t.criticality == Criticality::Hc)
        .map(|t| (t.id, t.lc_wcet.clone().unwrap_or_else(|| t.wcet.clone())))
        .collect();
    Ok(engine::run(
        sim_tasks,
        Budgeting::Fixed(budgets),
        jobs,
        horizon,
    ))
}

pub(crate) fn check_budget_sum(
    ts: &TaskSet,
    beta_star: &Frac,
    budgets: &BTreeMap<usize, Time>,
) -> Result<(), SimError> {
    let sum: Frac = ts
        .hc_tasks()
        .map(|t| {
            budgets
                .get(&t.id())
                .map(|b| b / t.period())
                .unwrap_or_else(Frac::zero)
        })
        .sum();
    let limit = beta_star * ts.u_hc();
    if sum > limit {
        return Err(SimError::BudgetSumViolation {
            sum: ratio::format(&sum),
            limit: ratio::format(&limit),
        });
    }
    Ok(())
}

/// First mode-switch instant of the trace.
pub fn mode_switch_instant(trace: &ScheduleTrace) -> Option<Time> {
    trace.mode_switches().next().map(|(t, _)| t.clone())
}
