//! Cross-checks that run the simulator more than once: fixed-budget
//! comparators against MEBA, and the dynamic-to-static mapping.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use super::trace::{merge_segments, JobRef, Segment};
use super::{
    mode_switch_instant, simulate, simulate_static, JobSequence, Policy, SimConfig, SimError,
};
use crate::analysis::{map_to_static, static_id, StaticRole};
use crate::ratio::{Frac, Time};
use crate::taskmodel::TaskSet;

/// `a <= b` where `None` is +∞.
pub fn switch_no_later(a: Option<&Time>, b: Option<&Time>) -> bool {
    match (a, b) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(a), Some(b)) => a <= b,
    }
}

/// True iff every fixed per-task budget vector switches no later than MEBA
/// on `jobs`. Each vector must respect `Σ B_i / T_i <= beta* U_H`.
pub fn check_lemma2_optimality(
    ts: &TaskSet,
    beta_star: &Frac,
    x: &Frac,
    jobs: &JobSequence,
    budget_vectors: &[BTreeMap<usize, Time>],
) -> Result<bool, SimError> {
    for v in budget_vectors {
        super::check_budget_sum(ts, beta_star, v)?;
    }
    let cfg = SimConfig::meba(beta_star.clone(), x.clone());
    let meba = mode_switch_instant(&simulate(ts, &cfg, jobs)?);
    for v in budget_vectors {
        let fixed_cfg = cfg.clone().with_policy(Policy::FixedBudget(v.clone()));
        let fixed = mode_switch_instant(&simulate(ts, &fixed_cfg, jobs)?);
        if !switch_no_later(fixed.as_ref(), meba.as_ref()) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingReport {
    pub equivalent: bool,
    /// First MEBA switch on the full sequence.
    pub dynamic_switch: Option<Time>,
    /// First EDF-VD switch of the mapped static system.
    pub static_switch: Option<Time>,
    /// Compared release window `[start, end)`; the busy interval holding the switch.
    pub window: (Time, Option<Time>),
    pub compared_jobs: usize,
    pub first_difference: Option<String>,
}

/// Runs EDF-UVD + MEBA on `jobs`, maps the task set to its static counterpart
/// with the `e_max` snapshot at the first switch, replays the split job
/// sequence under EDF-VD and compares dispatch intervals and switch instants
/// over the busy interval containing the switch.
pub fn check_mapping_equivalence(
    ts: &TaskSet,
    beta_star: &Frac,
    x: &Frac,
    jobs: &JobSequence,
) -> Result<MappingReport, SimError> {
    let cfg = SimConfig::meba(beta_star.clone(), x.clone());
    let full = simulate(ts, &cfg, jobs)?;
    let t_star = mode_switch_instant(&full);

    let (start, end) = match &t_star {
        Some(t) => {
            let start = full
                .idle_instants()
                .filter(|i| *i <= t)
                .last()
                .cloned()
                .unwrap_or_else(Time::zero);
            let end = full.idle_instants().find(|i| *i > t).cloned();
            (start, end)
        }
        None => (Time::zero(), None),
    };
    let scoped = jobs.released_within(&start, end.as_ref());
    let dynamic = simulate(ts, &cfg, &scoped)?;
    let dyn_switch = mode_switch_instant(&dynamic);

    let e_max: BTreeMap<usize, Time> = match dynamic.mode_switches().next() {
        Some((_, ev)) => match &ev.kind {
            super::EventKind::ModeSwitch { e_max } => e_max.clone(),
            _ => unreachable!(),
        },
        None => {
            let mut m: BTreeMap<usize, Time> = BTreeMap::new();
            for j in scoped
                .jobs()
                .iter()
                .filter(|j| ts.get(j.task).is_some_and(|t| t.is_hc()))
            {
                let e = m.entry(j.task).or_default();
                if j.demand > *e {
                    *e = j.demand.clone();
                }
            }
            m
        }
    };
    let static_tasks =
        map_to_static(ts, &e_max, x).map_err(|e| SimError::InvalidJobSequence(e.to_string()))?;

    // Split every job the way the static system would release it.
    let mut releases = Vec::new();
    let mut source: BTreeMap<(usize, Time), JobRef> = BTreeMap::new();
    for j in scoped.jobs() {
        let task = ts.get(j.task).expect("validated job");
        let mut push = |id: usize, demand: Time| {
            if demand.is_positive() {
                source.insert((id, j.release.clone()), j.reference());
                releases.push((id, j.release.clone(), demand));
            }
        };
        if task.is_hc() {
            push(static_id(j.task, StaticRole::Hc), j.demand.clone());
            continue;
        }
        let share = task.hc_budget();
        let before_switch = dyn_switch.as_ref().is_none_or(|t| j.release < *t);
        let guaranteed = std::cmp::min(j.demand.clone(), share.clone());
        push(static_id(j.task, StaticRole::LcGuaranteed), guaranteed);
        if before_switch && j.demand > share {
            push(
                static_id(j.task, StaticRole::LcOptional),
                &j.demand - &share,
            );
        }
    }
    let static_jobs = JobSequence::from_releases(releases);
    let stat = simulate_static(&static_tasks, x, &static_jobs, None)?;
    let static_switch = mode_switch_instant(&stat);

    let mapped = merge_segments(stat.segments.iter().map(|s| {
        let j = static_jobs.get(s.job).expect("static job");
        Segment {
            job: source[&(j.task, j.release.clone())],
            start: s.start.clone(),
            end: s.end.clone(),
        }
    }));
    let ours = dynamic.merged_segments();

    let mut first_difference = None;
    if dyn_switch != static_switch {
        first_difference = Some(format!(
            "switch instants differ: {dyn_switch:?} vs {static_switch:?}"
        ));
    } else if let Some((a, b)) = ours.iter().zip(&mapped).find(|(a, b)| a != b) {
        first_difference = Some(format!("segments differ: {a:?} vs {b:?}"));
    } else if ours.len() != mapped.len() {
        first_difference = Some(format!(
            "segment counts differ: {} vs {}",
            ours.len(),
            mapped.len()
        ));
    }
    if t_star != dyn_switch && first_difference.is_none() {
        first_difference = Some("rescoped run switched at a different instant".into());
    }
    Ok(MappingReport {
        equivalent: first_difference.is_none(),
        dynamic_switch: t_star,
        static_switch,
        window: (start, end),
        compared_jobs: scoped.len(),
        first_difference,
    })
}
