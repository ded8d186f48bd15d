//! Offline analysis for MEBA + EDF-UVD.
//!
//! Everything here is a pure function of the class utilizations `(U_L, U_H)`
//! and the system service levels. Schedulability predicates are exact; the
//! weighted-utilization optimizer works in `f64`.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use crate::ratio::{self, Frac, Time};
use crate::taskmodel::{check_fraction, Criticality, McTask, ModelError, TaskSet};

/// Comparison slack for the floating-point SU(w) helpers.
pub const SU_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("weight w must lie in [0, 1], got {0}")]
    InvalidWeight(String),
    #[error("no service level satisfies the schedulability condition: {0}")]
    Infeasible(String),
    #[error("task set has no HC tasks (U_H = 0)")]
    NoHcTasks,
    #[error("task {id}: observed execution {e_max} exceeds WCET {wcet}")]
    BudgetExceedsWcet {
        id: usize,
        e_max: String,
        wcet: String,
    },
}

/// Class utilizations `U_L` and `U_H`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utilization {
    pub lc: Frac,
    pub hc: Frac,
}

impl Utilization {
    pub fn new(lc: Frac, hc: Frac) -> Self {
        Self { lc, hc }
    }

    pub fn of(ts: &TaskSet) -> Self {
        let (lc, hc) = ts.utilizations();
        Self { lc, hc }
    }

    pub fn total(&self) -> Frac {
        &self.lc + &self.hc
    }

    /// `M = (U_H + U_L - 1) / (U_L * U_H)`; undefined when either class is empty.
    pub fn threshold(&self) -> Option<Frac> {
        let denom = &self.lc * &self.hc;
        (!denom.is_zero()).then(|| (self.total() - Frac::one()) / denom)
    }

    fn regime(&self) -> Regime {
        if self.total() <= Frac::one() {
            Regime::Underloaded
        } else {
            match self.threshold() {
                Some(m) => Regime::Threshold(m),
                None => Regime::Overloaded,
            }
        }
    }

    fn lc_f64(&self) -> f64 {
        ratio::to_f64(&self.lc)
    }

    fn hc_f64(&self) -> f64 {
        ratio::to_f64(&self.hc)
    }
}

/// How the schedulability condition behaves for a utilization pair.
enum Regime {
    /// `U_L + U_H <= 1`: `M <= 0` and the condition is vacuous.
    Underloaded,
    /// `U_L + U_H > 1` with both classes present: `M > 0`.
    Threshold(Frac),
    /// `U_L + U_H > 1` with a single class: never schedulable.
    Overloaded,
}

/// Smallest virtual-deadline factor ever reported; keeps `x` strictly positive.
pub fn min_deadline_factor() -> Frac {
    ratio::q(1, 1_000_000)
}

/// Outcome of the utilization-based test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedVerdict {
    pub schedulable: bool,
    /// Smallest admissible virtual-deadline factor (already clamped to be positive).
    pub x_lo: Frac,
    /// Largest admissible virtual-deadline factor (already clamped to 1).
    pub x_hi: Frac,
    /// `M`, when both task classes are present.
    pub m: Option<Frac>,
}

impl SchedVerdict {
    /// Default virtual-deadline factor: the earliest admissible one.
    pub fn default_x(&self) -> Option<Frac> {
        self.schedulable.then(|| self.x_lo.clone())
    }

    pub fn admits(&self, x: &Frac) -> bool {
        self.schedulable && *x >= self.x_lo && *x <= self.x_hi
    }
}

/// Checks `(1 - alpha*)(1 - beta*) >= M` and computes the admissible range for `x`.
pub fn theorem1_test(
    u: &Utilization,
    alpha_star: &Frac,
    beta_star: &Frac,
) -> Result<SchedVerdict, AnalysisError> {
    check_fraction("alpha*", alpha_star)?;
    check_fraction("beta*", beta_star)?;
    let one = Frac::one();
    let m = u.threshold();
    let condition = match u.regime() {
        Regime::Underloaded => true,
        Regime::Threshold(m) => (&one - alpha_star) * (&one - beta_star) >= m,
        Regime::Overloaded => false,
    };

    // Static-system view of the mapped task set: LC-mode load of the HC side,
    // LC-side load, and HC-mode load.
    let lc_residual = (&one - alpha_star) * &u.lc;
    let hc_lo = beta_star * &u.hc + alpha_star * &u.lc;
    let hc_hi = &u.hc + alpha_star * &u.lc;

    let lo_den = &one - &lc_residual;
    let x_lo = if lo_den.is_positive() {
        Some(&hc_lo / &lo_den)
    } else {
        // LC side saturates the processor: only an empty HC reservation fits,
        // and then any positive factor does.
        (lo_den.is_zero() && hc_lo.is_zero()).then(Frac::zero)
    };
    let hi_num = &one - &hc_hi;
    let x_hi = if lc_residual.is_positive() {
        Some(&hi_num / &lc_residual)
    } else {
        // No LC work left for the virtual deadlines to protect.
        (!hi_num.is_negative()).then(|| one.clone())
    };

    match (x_lo, x_hi) {
        (Some(lo), Some(hi)) => {
            let x_lo = std::cmp::max(lo, min_deadline_factor());
            let x_hi = std::cmp::min(hi, one);
            let schedulable = condition && x_lo <= x_hi;
            Ok(SchedVerdict {
                schedulable,
                x_lo,
                x_hi,
                m,
            })
        }
        _ => Ok(SchedVerdict {
            schedulable: false,
            x_lo: one,
            x_hi: Frac::zero(),
            m,
        }),
    }
}

/// Largest `alpha*` admitted by the schedulability condition for a fixed `beta*`.
pub fn max_alpha_given_beta(u: &Utilization, beta_star: &Frac) -> Result<Frac, AnalysisError> {
    check_fraction("beta*", beta_star)?;
    max_other(u, beta_star, "beta*")
}

/// Largest `beta*` admitted by the schedulability condition for a fixed `alpha*`.
pub fn max_beta_given_alpha(u: &Utilization, alpha_star: &Frac) -> Result<Frac, AnalysisError> {
    check_fraction("alpha*", alpha_star)?;
    max_other(u, alpha_star, "alpha*")
}

fn max_other(u: &Utilization, fixed: &Frac, name: &str) -> Result<Frac, AnalysisError> {
    let one = Frac::one();
    match u.regime() {
        Regime::Underloaded => Ok(one),
        Regime::Overloaded => Err(AnalysisError::Infeasible(format!(
            "U_L + U_H = {} > 1 with a single criticality class",
            ratio::format(&u.total())
        ))),
        Regime::Threshold(m) => {
            if *fixed == one {
                return Err(AnalysisError::Infeasible(format!("{name} = 1 while M > 0")));
            }
            let best = &one - m / (&one - fixed);
            Ok(ratio::clamp(best, &Frac::zero(), &one))
        }
    }
}

/// `(SU_L, SU_H)`: system utilization reserved in the LC and HC modes.
pub fn su_levels(u: &Utilization, alpha_star: &Frac, beta_star: &Frac) -> (Frac, Frac) {
    (beta_star * &u.hc + &u.lc, alpha_star * &u.lc + &u.hc)
}

fn check_weight(w: f64) -> Result<(), AnalysisError> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(AnalysisError::InvalidWeight(w.to_string()))
    }
}

/// Weighted system utilization `SU(w)` with `alpha*` at its largest admissible
/// value for the given `beta*`.
pub fn total_system_utilization(
    u: &Utilization,
    w: f64,
    beta_star: f64,
) -> Result<f64, AnalysisError> {
    check_weight(w)?;
    if !(0.0..=1.0).contains(&beta_star) {
        return Err(AnalysisError::Model(ModelError::InvalidFraction {
            name: "beta*",
            value: beta_star.to_string(),
        }));
    }
    let (ul, uh) = (u.lc_f64(), u.hc_f64());
    let alpha = match u.regime() {
        Regime::Underloaded => 1.0,
        Regime::Overloaded => {
            return Err(AnalysisError::Infeasible("single-class overload".into()));
        }
        Regime::Threshold(m) => {
            let m = ratio::to_f64(&m);
            if beta_star > 1.0 - m + SU_EPS {
                return Err(AnalysisError::Infeasible(format!(
                    "beta* = {beta_star} > 1 - M = {}",
                    1.0 - m
                )));
            }
            (1.0 - m / (1.0 - beta_star)).max(0.0)
        }
    };
    Ok(w * (beta_star * uh + ul) + (1.0 - w) * (alpha * ul + uh))
}

/// `beta*` maximizing `SU(w)`; the unique stationary point of the concave
/// objective, clamped to `[0, 1 - M]`.
pub fn optimal_beta_for_su(u: &Utilization, w: f64) -> Result<f64, AnalysisError> {
    check_weight(w)?;
    match u.regime() {
        Regime::Underloaded => Ok(1.0),
        Regime::Overloaded => Err(AnalysisError::Infeasible("single-class overload".into())),
        Regime::Threshold(m) => {
            if w == 0.0 {
                return Ok(0.0);
            }
            let m = ratio::to_f64(&m);
            let stationary = 1.0 - (m * (1.0 - w) * u.lc_f64() / (w * u.hc_f64())).sqrt();
            Ok(stationary.min(1.0 - m).max(0.0))
        }
    }
}

/// `SU(w)` at the optimal `beta*`.
pub fn max_dynamic_su(u: &Utilization, w: f64) -> Result<f64, AnalysisError> {
    let beta = optimal_beta_for_su(u, w)?;
    total_system_utilization(u, w, beta)
}

/// Best `SU(w)` of the static model under EDF-VD with LC tasks dropped in HC mode.
pub fn static_model_su(u: &Utilization, w: f64) -> Result<f64, AnalysisError> {
    check_weight(w)?;
    if u.lc.is_zero() {
        return Err(ModelError::NoLcTasks.into());
    }
    let (ul, uh) = (u.lc_f64(), u.hc_f64());
    Ok(w * ul + w * (1.0 - ul) * (1.0 - uh) / ul + (1.0 - w) * uh)
}

/// Weight above which the optimizer picks `beta* = 1 - M`, making the dynamic
/// and static `SU(w)` coincide. `None` when `M <= 0` or undefined.
pub fn static_overlap_weight(u: &Utilization) -> Option<f64> {
    match u.regime() {
        Regime::Threshold(m) => {
            let m = ratio::to_f64(&m);
            let k = m * u.lc_f64() / u.hc_f64();
            Some(k / (m * m + k))
        }
        _ => None,
    }
}

/// `beta* = (Σ_{HC} C_i^L / T_i) / U_H` from supplied LC estimates.
pub fn beta_star_from_lc_estimates(ts: &TaskSet) -> Result<Frac, AnalysisError> {
    let u_h = ts.u_hc();
    if u_h.is_zero() {
        return Err(AnalysisError::NoHcTasks);
    }
    Ok(ts.lc_estimate_load() / u_h)
}

/// Which row of the dynamic-to-static mapping a static task comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StaticRole {
    /// `tau'_{i,1}`: the guaranteed `alpha_i * C_i` part of an LC task, promoted to HC.
    LcGuaranteed,
    /// `tau'_{i,2}`: the remaining `(1 - alpha_i) * C_i` of an LC task.
    LcOptional,
    /// `tau'_i`: an HC task whose LC estimate is its observed maximum execution.
    Hc,
}

/// A task of the equivalent static (Vestal-style) system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticMcTask {
    /// Id in the static system: `2 * source + (role == LcOptional)`.
    pub id: usize,
    pub source: usize,
    pub role: StaticRole,
    pub period: Time,
    /// `C^L` for HC tasks; `None` for LC tasks.
    pub lc_wcet: Option<Time>,
    pub wcet: Time,
    pub criticality: Criticality,
    /// Virtual-deadline factor for HC tasks.
    pub x: Option<Frac>,
}

impl StaticMcTask {
    pub fn utilization(&self) -> Frac {
        &self.wcet / &self.period
    }

    /// LC-mode utilization `C^L / T` (full `C / T` for LC tasks).
    pub fn lc_utilization(&self) -> Frac {
        self.lc_wcet.as_ref().unwrap_or(&self.wcet) / &self.period
    }
}

pub fn static_id(source: usize, role: StaticRole) -> usize {
    2 * source + usize::from(role == StaticRole::LcOptional)
}

/// Maps a dynamic task set to its static counterpart given each HC task's
/// maximum observed execution `e_max` (absent entries mean 0). Zero-length
/// parts (`alpha_i = 0` or `alpha_i = 1`) are omitted.
pub fn map_to_static(
    ts: &TaskSet,
    e_max: &BTreeMap<usize, Time>,
    x: &Frac,
) -> Result<Vec<StaticMcTask>, AnalysisError> {
    let mut out = Vec::new();
    for t in ts.tasks() {
        let period = t.period().clone();
        if t.is_lc() {
            let guaranteed = t.hc_budget();
            let optional = t.wcet() - &guaranteed;
            if guaranteed.is_positive() {
                out.push(StaticMcTask {
                    id: static_id(t.id(), StaticRole::LcGuaranteed),
                    source: t.id(),
                    role: StaticRole::LcGuaranteed,
                    period: period.clone(),
                    lc_wcet: Some(guaranteed.clone()),
                    wcet: guaranteed,
                    criticality: Criticality::Hc,
                    x: Some(x.clone()),
                });
            }
            if optional.is_positive() {
                out.push(StaticMcTask {
                    id: static_id(t.id(), StaticRole::LcOptional),
                    source: t.id(),
                    role: StaticRole::LcOptional,
                    period,
                    lc_wcet: None,
                    wcet: optional,
                    criticality: Criticality::Lc,
                    x: None,
                });
            }
        } else {
            let e = e_max.get(&t.id()).cloned().unwrap_or_else(Time::zero);
            if &e > t.wcet() || e.is_negative() {
                return Err(AnalysisError::BudgetExceedsWcet {
                    id: t.id(),
                    e_max: ratio::format(&e),
                    wcet: ratio::format(t.wcet()),
                });
            }
            out.push(StaticMcTask {
                id: static_id(t.id(), StaticRole::Hc),
                source: t.id(),
                role: StaticRole::Hc,
                period,
                lc_wcet: Some(e),
                wcet: t.wcet().clone(),
                criticality: Criticality::Hc,
                x: Some(x.clone()),
            });
        }
    }
    Ok(out)
}

/// Static tasks converted to ordinary model tasks (LC estimates attached where positive).
pub fn static_as_model_tasks(tasks: &[StaticMcTask]) -> Result<Vec<McTask>, ModelError> {
    tasks
        .iter()
        .map(|s| {
            let t = McTask::new(s.id, s.period.clone(), s.wcet.clone(), s.criticality)?;
            match &s.lc_wcet {
                Some(cl) if s.criticality == Criticality::Hc && cl.is_positive() => {
                    t.with_lc_estimate(cl.clone())
                }
                _ => Ok(t),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{int, q};

    fn u(lc: (i64, i64), hc: (i64, i64)) -> Utilization {
        Utilization::new(q(lc.0, lc.1), q(hc.0, hc.1))
    }

    #[test]
    fn worked_example_is_schedulable_at_equality() {
        let load = u((1, 2), (4, 5));
        let v = theorem1_test(&load, &int(0), &q(1, 4)).unwrap();
        assert_eq!(v.m, Some(q(3, 4)));
        assert!(v.schedulable);
        // x_lo = 0.2 / 0.5, x_hi = 0.2 / 0.5: the range collapses to a point.
        assert_eq!(v.x_lo, q(2, 5));
        assert_eq!(v.x_hi, q(2, 5));
        assert!(
            !theorem1_test(&load, &q(1, 2), &q(1, 2))
                .unwrap()
                .schedulable
        );
        assert!(
            !theorem1_test(&load, &int(0), &q(26, 100))
                .unwrap()
                .schedulable
        );
    }

    #[test]
    fn underloaded_sets_accept_full_service() {
        let load = u((2, 5), (1, 2));
        let v = theorem1_test(&load, &int(1), &int(1)).unwrap();
        assert!(v.schedulable);
        assert!(v.m.unwrap().is_negative());
        assert_eq!(v.x_hi, int(1));
        assert_eq!(max_alpha_given_beta(&load, &q(1, 3)).unwrap(), int(1));
        assert_eq!(optimal_beta_for_su(&load, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn saturated_lc_side_with_empty_reservation() {
        let v = theorem1_test(&u((1, 1), (1, 100)), &int(0), &int(0)).unwrap();
        assert!(v.schedulable);
        assert_eq!(v.x_lo, min_deadline_factor());
        assert_eq!(v.x_hi, q(99, 100));
    }

    #[test]
    fn single_class_sets() {
        let hc_only = u((0, 1), (9, 10));
        assert!(
            theorem1_test(&hc_only, &int(0), &int(1))
                .unwrap()
                .schedulable
        );
        assert_eq!(hc_only.threshold(), None);
        let overloaded = u((0, 1), (11, 10));
        assert!(
            !theorem1_test(&overloaded, &int(0), &int(0))
                .unwrap()
                .schedulable
        );
        assert!(matches!(
            max_alpha_given_beta(&overloaded, &int(0)),
            Err(AnalysisError::Infeasible(_))
        ));
    }

    #[test]
    fn invalid_fractions_rejected() {
        let load = u((1, 2), (4, 5));
        assert!(theorem1_test(&load, &q(3, 2), &int(0)).is_err());
        assert!(theorem1_test(&load, &int(0), &q(-1, 2)).is_err());
        assert!(total_system_utilization(&load, 1.5, 0.0).is_err());
    }

    #[test]
    fn service_trade_off() {
        let load = u((1, 2), (4, 5));
        assert_eq!(max_alpha_given_beta(&load, &q(1, 4)).unwrap(), int(0));
        assert_eq!(max_beta_given_alpha(&load, &int(0)).unwrap(), q(1, 4));
        assert!(matches!(
            max_alpha_given_beta(&load, &int(1)),
            Err(AnalysisError::Infeasible(_))
        ));
        // M = 0.5: U_L = U_H = 1 - 1/sqrt(2) is irrational, so use U_L = 1/2, U_H = 2/3
        // which gives M = (1/6) / (1/3) = 1/2.
        let half = u((1, 2), (2, 3));
        assert_eq!(half.threshold(), Some(q(1, 2)));
        assert_eq!(max_beta_given_alpha(&half, &int(0)).unwrap(), q(1, 2));
        // Past the frontier the clamp returns 0.
        assert_eq!(max_alpha_given_beta(&half, &q(3, 4)).unwrap(), int(0));
    }

    #[test]
    fn su_level_plug_ins() {
        let load = u((1, 2), (4, 5));
        assert_eq!(su_levels(&load, &int(0), &q(1, 4)), (q(7, 10), q(4, 5)));
        let (sl, _) = su_levels(&load, &q(1, 3), &int(0));
        assert_eq!(sl, q(1, 2));
        let (_, sh) = su_levels(&load, &int(1), &q(1, 3));
        assert_eq!(sh, q(13, 10));
    }

    #[test]
    fn su_closed_forms() {
        let load = u((1, 2), (4, 5));
        let m = 0.75;
        // w = 1: SU = SU_L.
        let su1 = total_system_utilization(&load, 1.0, 0.2).unwrap();
        assert!((su1 - (0.5 + 0.8 * 0.2)).abs() < 1e-12);
        // w = 0, beta = 0: SU = U_H + U_L (1 - M).
        let su0 = total_system_utilization(&load, 0.0, 0.0).unwrap();
        assert!((su0 - (0.8 + 0.5 * (1.0 - m))).abs() < 1e-12);
        assert!(total_system_utilization(&load, 0.5, 0.3).is_err());
        assert_eq!(optimal_beta_for_su(&load, 0.0).unwrap(), 0.0);
        assert!((optimal_beta_for_su(&load, 1.0).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn static_su_plug_ins() {
        let load = u((65, 100), (65, 100));
        assert!((static_model_su(&load, 0.0).unwrap() - 0.65).abs() < 1e-12);
        let expect = 0.65 + 0.35 * 0.35 / 0.65;
        assert!((static_model_su(&load, 1.0).unwrap() - expect).abs() < 1e-12);
        assert!(static_model_su(&u((0, 1), (1, 2)), 0.5).is_err());
    }

    #[test]
    fn table_one_mapping() {
        let ts = TaskSet::new(vec![
            McTask::lc(0, int(10), int(4), q(1, 2)).unwrap(),
            McTask::lc(1, int(8), int(2), int(1)).unwrap(),
            McTask::hc(2, int(12), int(3)).unwrap(),
        ])
        .unwrap();
        let e_max = BTreeMap::from([(2, int(0))]);
        let mapped = map_to_static(&ts, &e_max, &q(1, 2)).unwrap();
        let g = mapped
            .iter()
            .find(|s| s.source == 0 && s.role == StaticRole::LcGuaranteed)
            .unwrap();
        assert_eq!(
            (g.lc_wcet.clone(), g.wcet.clone(), g.criticality),
            (Some(int(2)), int(2), Criticality::Hc)
        );
        let o = mapped
            .iter()
            .find(|s| s.source == 0 && s.role == StaticRole::LcOptional)
            .unwrap();
        assert_eq!((o.wcet.clone(), o.criticality), (int(2), Criticality::Lc));
        // alpha = 1 leaves nothing optional.
        assert!(!mapped
            .iter()
            .any(|s| s.source == 1 && s.role == StaticRole::LcOptional));
        let h = mapped.iter().find(|s| s.source == 2).unwrap();
        assert_eq!(h.lc_wcet, Some(int(0)));
        assert_eq!(h.id, 4);

        let too_big = BTreeMap::from([(2, int(4))]);
        assert!(matches!(
            map_to_static(&ts, &too_big, &q(1, 2)),
            Err(AnalysisError::BudgetExceedsWcet { id: 2, .. })
        ));
    }

    #[test]
    fn lc_estimate_beta() {
        let ts = TaskSet::new(vec![
            McTask::hc(0, int(10), int(4))
                .unwrap()
                .with_lc_estimate(int(1))
                .unwrap(),
            McTask::hc(1, int(10), int(4))
                .unwrap()
                .with_lc_estimate(int(1))
                .unwrap(),
        ])
        .unwrap();
        assert_eq!(beta_star_from_lc_estimates(&ts).unwrap(), q(1, 4));
    }
}
