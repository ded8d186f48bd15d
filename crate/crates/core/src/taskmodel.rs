//! Dynamic mixed-criticality task model.
//!
//! A task carries one execution estimate `C_i`. HC tasks get their LC-mode
//! budget at runtime (see [`crate::meba`]); LC tasks are guaranteed
//! `alpha_i * C_i` after a mode switch.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::ratio::{self, Frac, Time};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("task {id}: WCET must satisfy 0 < C <= T (C = {wcet}, T = {period})")]
    InvalidWcet {
        id: usize,
        wcet: String,
        period: String,
    },
    #[error("task {id}: alpha must lie in [0, 1], got {alpha}")]
    InvalidAlpha { id: usize, alpha: String },
    #[error("task {id}: LC estimate must satisfy 0 < C^L <= C, got {lc}")]
    InvalidLcEstimate { id: usize, lc: String },
    #[error("duplicate task id {0}")]
    DuplicateId(usize),
    #[error("task set has no LC tasks (U_L = 0)")]
    NoLcTasks,
    #[error("{name} must lie in [0, 1], got {value}")]
    InvalidFraction { name: &'static str, value: String },
    #[error("virtual deadline factor must lie in (0, 1], got {0}")]
    InvalidDeadlineFactor(String),
    #[error("no alpha given for LC task {0}")]
    MissingAlpha(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criticality {
    Lc,
    Hc,
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criticality::Lc => "LC",
            Criticality::Hc => "HC",
        })
    }
}

/// An implicit-deadline sporadic task `(T_i, C_i, L_i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McTask {
    id: usize,
    period: Time,
    wcet: Time,
    criticality: Criticality,
    alpha: Frac,
    lc_estimate: Option<Time>,
}

impl McTask {
    pub fn new(
        id: usize,
        period: Time,
        wcet: Time,
        criticality: Criticality,
    ) -> Result<Self, ModelError> {
        if !wcet.is_positive() || wcet > period {
            return Err(ModelError::InvalidWcet {
                id,
                wcet: ratio::format(&wcet),
                period: ratio::format(&period),
            });
        }
        let alpha = match criticality {
            Criticality::Lc => Frac::one(),
            Criticality::Hc => Frac::zero(),
        };
        Ok(Self {
            id,
            period,
            wcet,
            criticality,
            alpha,
            lc_estimate: None,
        })
    }

    pub fn lc(id: usize, period: Time, wcet: Time, alpha: Frac) -> Result<Self, ModelError> {
        Self::new(id, period, wcet, Criticality::Lc)?.with_alpha(alpha)
    }

    pub fn hc(id: usize, period: Time, wcet: Time) -> Result<Self, ModelError> {
        Self::new(id, period, wcet, Criticality::Hc)
    }

    /// Sets the HC-mode service level `alpha_i`. Ignored by HC tasks.
    pub fn with_alpha(mut self, alpha: Frac) -> Result<Self, ModelError> {
        if !ratio::is_fraction(&alpha) {
            return Err(ModelError::InvalidAlpha {
                id: self.id,
                alpha: ratio::format(&alpha),
            });
        }
        if self.criticality == Criticality::Lc {
            self.alpha = alpha;
        }
        Ok(self)
    }

    /// Attaches a static-model LC estimate `C_i^L`.
    pub fn with_lc_estimate(mut self, lc: Time) -> Result<Self, ModelError> {
        if !lc.is_positive() || lc > self.wcet {
            return Err(ModelError::InvalidLcEstimate {
                id: self.id,
                lc: ratio::format(&lc),
            });
        }
        self.lc_estimate = Some(lc);
        Ok(self)
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn period(&self) -> &Time {
        &self.period
    }

    /// Relative deadline; always equal to the period.
    pub fn deadline(&self) -> &Time {
        &self.period
    }

    pub fn wcet(&self) -> &Time {
        &self.wcet
    }

    pub fn criticality(&self) -> Criticality {
        self.criticality
    }

    pub fn is_hc(&self) -> bool {
        self.criticality == Criticality::Hc
    }

    pub fn is_lc(&self) -> bool {
        self.criticality == Criticality::Lc
    }

    /// `alpha_i`; meaningful for LC tasks only (HC tasks report 0).
    pub fn alpha(&self) -> &Frac {
        &self.alpha
    }

    pub fn lc_estimate(&self) -> Option<&Time> {
        self.lc_estimate.as_ref()
    }

    pub fn utilization(&self) -> Frac {
        &self.wcet / &self.period
    }

    /// Fixed LC-mode budget `B_i^L`. HC tasks have none: theirs is decided at runtime.
    pub fn lc_budget(&self) -> Option<Time> {
        self.is_lc().then(|| self.wcet.clone())
    }

    /// HC-mode budget `B_i^H`: `alpha_i * C_i` for LC tasks, `C_i` for HC tasks.
    pub fn hc_budget(&self) -> Time {
        match self.criticality {
            Criticality::Lc => &self.alpha * &self.wcet,
            Criticality::Hc => self.wcet.clone(),
        }
    }
}

/// An ordered collection of tasks with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaskSet {
    tasks: Vec<McTask>,
}

impl TaskSet {
    pub fn new(tasks: Vec<McTask>) -> Result<Self, ModelError> {
        let mut seen = HashSet::new();
        for t in &tasks {
            if !seen.insert(t.id) {
                return Err(ModelError::DuplicateId(t.id));
            }
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[McTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&McTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn lc_tasks(&self) -> impl Iterator<Item = &McTask> {
        self.tasks.iter().filter(|t| t.is_lc())
    }

    pub fn hc_tasks(&self) -> impl Iterator<Item = &McTask> {
        self.tasks.iter().filter(|t| t.is_hc())
    }

    pub fn u_lc(&self) -> Frac {
        self.lc_tasks().map(McTask::utilization).sum()
    }

    pub fn u_hc(&self) -> Frac {
        self.hc_tasks().map(McTask::utilization).sum()
    }

    /// Returns `(U_L, U_H)`.
    pub fn utilizations(&self) -> (Frac, Frac) {
        (self.u_lc(), self.u_hc())
    }

    /// `Σ_{HC} C_i^L / T_i` over HC tasks carrying an LC estimate.
    pub fn lc_estimate_load(&self) -> Frac {
        self.hc_tasks()
            .filter_map(|t| t.lc_estimate().map(|c| c / t.period()))
            .sum()
    }

    /// Returns a copy with per-task alphas replaced from `alphas` (keyed by id).
    pub fn with_alphas(&self, alphas: &BTreeMap<usize, Frac>) -> Result<Self, ModelError> {
        let tasks = self
            .tasks
            .iter()
            .map(|t| {
                if t.is_lc() {
                    let a = alphas.get(&t.id).ok_or(ModelError::MissingAlpha(t.id))?;
                    t.clone().with_alpha(a.clone())
                } else {
                    Ok(t.clone())
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { tasks })
    }

    /// Copy with every LC task given the same `alpha`.
    pub fn with_uniform_alpha(&self, alpha: &Frac) -> Result<Self, ModelError> {
        let alphas = self.lc_tasks().map(|t| (t.id, alpha.clone())).collect();
        self.with_alphas(&alphas)
    }
}

/// System-level service configuration `(beta*, alpha*, x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub beta_star: Frac,
    pub alpha_star: Frac,
    pub x: Frac,
}

impl ServiceConfig {
    pub fn new(beta_star: Frac, alpha_star: Frac, x: Frac) -> Result<Self, ModelError> {
        check_fraction("beta*", &beta_star)?;
        check_fraction("alpha*", &alpha_star)?;
        if !x.is_positive() || x > Frac::one() {
            return Err(ModelError::InvalidDeadlineFactor(ratio::format(&x)));
        }
        Ok(Self {
            beta_star,
            alpha_star,
            x,
        })
    }

    /// True when `alpha*` agrees exactly with the per-task alphas of `ts`.
    /// A set without LC tasks is consistent only with `alpha* = 0`.
    pub fn is_consistent_with(&self, ts: &TaskSet) -> bool {
        match alpha_star_from_per_task(ts) {
            Ok(a) => a == self.alpha_star,
            Err(_) => self.alpha_star.is_zero(),
        }
    }
}

pub(crate) fn check_fraction(name: &'static str, value: &Frac) -> Result<(), ModelError> {
    if ratio::is_fraction(value) {
        Ok(())
    } else {
        Err(ModelError::InvalidFraction {
            name,
            value: ratio::format(value),
        })
    }
}

/// `(U_L, U_H)` of a task set.
pub fn utilizations(ts: &TaskSet) -> (Frac, Frac) {
    ts.utilizations()
}

/// HC system service level: the `u_i`-weighted mean of LC alphas.
pub fn alpha_star_from_per_task(ts: &TaskSet) -> Result<Frac, ModelError> {
    let u_l = ts.u_lc();
    if u_l.is_zero() {
        return Err(ModelError::NoLcTasks);
    }
    let weighted: Frac = ts.lc_tasks().map(|t| t.alpha() * t.utilization()).sum();
    Ok(weighted / u_l)
}

/// Splits the HC-mode budget `alpha* * U_L` so every LC task receives the same
/// `B_i^H / T_i`. Tasks whose share would need `alpha_i > 1` are capped at 1 and
/// the surplus is spread over the rest until nothing else saturates.
pub fn distribute_hc_budget_equal(
    ts: &TaskSet,
    alpha_star: &Frac,
) -> Result<BTreeMap<usize, Frac>, ModelError> {
    check_fraction("alpha*", alpha_star)?;
    let lc: Vec<(usize, Frac)> = ts.lc_tasks().map(|t| (t.id(), t.utilization())).collect();
    if lc.is_empty() {
        return Err(ModelError::NoLcTasks);
    }
    let total: Frac = lc.iter().map(|(_, u)| u.clone()).sum();
    let mut remaining = alpha_star * &total;
    let mut saturated = vec![false; lc.len()];
    let share = loop {
        let open = saturated.iter().filter(|s| !**s).count();
        if open == 0 {
            break Frac::zero();
        }
        let share = &remaining / Frac::from_integer(open.into());
        let mut changed = false;
        for (i, (_, u)) in lc.iter().enumerate() {
            if !saturated[i] && *u <= share {
                saturated[i] = true;
                remaining -= u;
                changed = true;
            }
        }
        if !changed {
            break share;
        }
    };
    Ok(lc
        .into_iter()
        .zip(saturated)
        .map(|((id, u), sat)| (id, if sat { Frac::one() } else { &share / u }))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{int, q};

    fn example_set() -> TaskSet {
        TaskSet::new(vec![
            McTask::lc(1, int(10), int(5), Frac::zero()).unwrap(),
            McTask::hc(2, int(10), int(4)).unwrap(),
            McTask::hc(3, int(10), int(4)).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn utilizations_of_worked_example() {
        assert_eq!(example_set().utilizations(), (q(1, 2), q(4, 5)));
        assert_eq!(TaskSet::default().utilizations(), (int(0), int(0)));
        let single = TaskSet::new(vec![McTask::hc(0, int(4), int(1)).unwrap()]).unwrap();
        assert_eq!(single.utilizations(), (int(0), q(1, 4)));
    }

    #[test]
    fn task_invariants() {
        assert!(matches!(
            McTask::hc(0, int(4), int(5)),
            Err(ModelError::InvalidWcet { .. })
        ));
        assert!(matches!(
            McTask::hc(0, int(4), int(0)),
            Err(ModelError::InvalidWcet { .. })
        ));
        assert!(matches!(
            McTask::lc(0, int(4), int(1), q(3, 2)),
            Err(ModelError::InvalidAlpha { .. })
        ));
        let t = McTask::hc(0, int(4), int(2)).unwrap();
        assert!(t.clone().with_lc_estimate(int(3)).is_err());
        assert!(t.clone().with_lc_estimate(int(0)).is_err());
        assert_eq!(
            t.with_lc_estimate(int(1)).unwrap().lc_estimate(),
            Some(&int(1))
        );
        let dup = vec![
            McTask::hc(0, int(4), int(1)).unwrap(),
            McTask::hc(0, int(5), int(1)).unwrap(),
        ];
        assert_eq!(TaskSet::new(dup), Err(ModelError::DuplicateId(0)));
    }

    #[test]
    fn budgets_per_criticality() {
        let lc = McTask::lc(0, int(10), int(4), q(1, 2)).unwrap();
        assert_eq!(lc.lc_budget(), Some(int(4)));
        assert_eq!(lc.hc_budget(), int(2));
        let hc = McTask::hc(1, int(10), int(4)).unwrap();
        assert_eq!(hc.lc_budget(), None);
        assert_eq!(hc.hc_budget(), int(4));
    }

    fn lc_set(utils: &[(i64, i64)], alphas: &[Frac]) -> TaskSet {
        TaskSet::new(
            utils
                .iter()
                .zip(alphas)
                .enumerate()
                .map(|(i, ((c, t), a))| McTask::lc(i, int(*t), int(*c), a.clone()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn alpha_star_weighted_mean() {
        let ones = lc_set(&[(1, 5), (3, 10)], &[int(1), int(1)]);
        assert_eq!(alpha_star_from_per_task(&ones).unwrap(), int(1));
        let zeros = lc_set(&[(1, 5), (3, 10)], &[int(0), int(0)]);
        assert_eq!(alpha_star_from_per_task(&zeros).unwrap(), int(0));
        let mixed = lc_set(&[(1, 5), (3, 10)], &[int(1), int(0)]);
        assert_eq!(alpha_star_from_per_task(&mixed).unwrap(), q(2, 5));
        let hc_only = TaskSet::new(vec![McTask::hc(0, int(4), int(1)).unwrap()]).unwrap();
        assert_eq!(
            alpha_star_from_per_task(&hc_only),
            Err(ModelError::NoLcTasks)
        );
    }

    #[test]
    fn equal_distribution_examples() {
        let one = lc_set(&[(1, 4)], &[int(1)]);
        let a = distribute_hc_budget_equal(&one, &q(1, 2)).unwrap();
        assert_eq!(a[&0], q(1, 2));

        let even = lc_set(&[(1, 4), (1, 4)], &[int(1), int(1)]);
        let a = distribute_hc_budget_equal(&even, &q(3, 5)).unwrap();
        assert_eq!((a[&0].clone(), a[&1].clone()), (q(3, 5), q(3, 5)));

        // u = (0.4, 0.1), alpha* = 0.9: share 0.225 saturates task 1; the rest goes to task 0.
        let skew = lc_set(&[(4, 10), (1, 10)], &[int(1), int(1)]);
        let a = distribute_hc_budget_equal(&skew, &q(9, 10)).unwrap();
        assert_eq!(a[&1], int(1));
        assert_eq!(a[&0], q(7, 8));
        let total = &a[&0] * q(4, 10) + &a[&1] * q(1, 10);
        assert_eq!(total, q(45, 100));

        let hc_only = TaskSet::new(vec![McTask::hc(0, int(4), int(1)).unwrap()]).unwrap();
        assert_eq!(
            distribute_hc_budget_equal(&hc_only, &q(1, 2)),
            Err(ModelError::NoLcTasks)
        );
    }

    #[test]
    fn service_config_validation() {
        assert!(ServiceConfig::new(q(1, 4), int(0), q(1, 2)).is_ok());
        assert!(ServiceConfig::new(q(5, 4), int(0), q(1, 2)).is_err());
        assert!(ServiceConfig::new(q(1, 4), int(0), int(0)).is_err());
        let cfg = ServiceConfig::new(q(1, 4), int(0), q(1, 2)).unwrap();
        assert!(cfg.is_consistent_with(&example_set()));
    }
}
