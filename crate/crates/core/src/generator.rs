//! Random task sets and job sequences.
//!
//! Every task draws from its own ChaCha8 stream (one stream per task index),
//! so a set that grows by one task keeps all earlier draws.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::probability::ExecDistribution;
use crate::ratio::{self, Frac, Time};
use crate::simulator::JobSequence;
use crate::taskmodel::{Criticality, McTask, ModelError, TaskSet};

/// Target `U_A` bands used by the experiments.
pub const BANDS: [(i64, i64); 5] = [(54, 55), (59, 60), (64, 65), (69, 70), (74, 75)];

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator parameter: {0}")]
    InvalidParams(String),
    #[error("no task set landed in the band after {0} restarts")]
    GenerationTimeout(u64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    /// Probability that a task is HC.
    pub p_hc: f64,
    /// Range of the LC estimate draw.
    pub lc_range: (i64, i64),
    /// HC tasks draw `C` from `[C^L, ratio * C^L]`.
    pub ratio: i64,
    pub period_max: i64,
    /// Inclusive `U_A` band.
    pub band: (Frac, Frac),
    pub seed: u64,
    pub max_restarts: u64,
    /// Also inflate LC tasks' `C` by the ratio draw.
    pub inflate_lc: bool,
    /// Draws are multiples of `1 / grain` (1 = integer draws).
    pub grain: i64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            p_hc: 0.5,
            lc_range: (1, 10),
            ratio: 3,
            period_max: 200,
            band: (ratio::q(54, 100), ratio::q(55, 100)),
            seed: 0,
            max_restarts: 1_000_000,
            inflate_lc: false,
            grain: 1,
        }
    }
}

impl GenParams {
    pub fn with_band(mut self, lo: Frac, hi: Frac) -> Self {
        self.band = (lo, hi);
        self
    }

    pub fn with_ratio(mut self, ratio: i64) -> Self {
        self.ratio = ratio;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidParams(m.to_string()));
        if !(0.0..=1.0).contains(&self.p_hc) {
            return bad("p_hc must lie in [0, 1]");
        }
        if self.lc_range.0 < 1 || self.lc_range.0 > self.lc_range.1 {
            return bad("lc_range must satisfy 1 <= lo <= hi");
        }
        if self.ratio < 1 {
            return bad("ratio must be at least 1");
        }
        if self.period_max < self.ratio * self.lc_range.1 {
            return bad("period_max must cover the largest WCET");
        }
        if self.band.0 > self.band.1 || !self.band.1.is_positive() {
            return bad("band must be a non-empty range with a positive upper end");
        }
        if self.grain < 1 {
            return bad("grain must be at least 1");
        }
        Ok(())
    }
}

/// splitmix64 finalizer; spreads nearby seeds apart.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, salt, index)`.
pub fn stream(seed: u64, salt: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(salt)));
    rng.set_stream(index);
    rng
}

/// Uniform draw from the lattice `{k / grain : lo <= k / grain <= hi}`.
fn lattice_draw(rng: &mut impl Rng, lo: &Frac, hi: &Frac, grain: i64) -> Frac {
    let g = Frac::from_integer(grain.into());
    let k_lo = (lo * &g).ceil().to_integer();
    let k_hi = (hi * &g).floor().to_integer();
    let span: BigInt = &k_hi - &k_lo;
    let span = i64::try_from(span).expect("small lattice");
    let k = k_lo + BigInt::from(rng.random_range(0..=span));
    Frac::new(k, grain.into())
}

/// One task with an LC estimate. HC tasks carry it as `lc_estimate`; LC tasks
/// use it as their only WCET unless `inflate_lc` is set.
pub fn gen_task(params: &GenParams, id: usize, rng: &mut impl Rng) -> Result<McTask, GenError> {
    let hc = rng.random_bool(params.p_hc);
    let g = params.grain;
    let cl = lattice_draw(
        rng,
        &ratio::int(params.lc_range.0),
        &ratio::int(params.lc_range.1),
        g,
    );
    let inflate = hc || params.inflate_lc;
    let c = if inflate {
        lattice_draw(rng, &cl, &(&cl * ratio::int(params.ratio)), g)
    } else {
        cl.clone()
    };
    let t = lattice_draw(rng, &c, &ratio::int(params.period_max), g);
    Ok(if hc {
        McTask::hc(id, t, c)?.with_lc_estimate(cl)?
    } else {
        McTask::new(id, t, c, Criticality::Lc)?
    })
}

/// `U_A = (U_L + U_H + Σ_HC C^L / T) / 2`.
pub fn average_utilization(ts: &TaskSet) -> Frac {
    (ts.u_lc() + ts.u_hc() + ts.lc_estimate_load()) / ratio::int(2)
}

fn task_contribution(t: &McTask) -> Frac {
    let extra = t
        .lc_estimate()
        .map(|cl| cl / t.period())
        .unwrap_or_else(Frac::zero);
    (t.utilization() + extra) / ratio::int(2)
}

/// Adds tasks until `U_A` lands in the band, restarting from scratch on
/// overshoot. Attempt `k` of seed `s` is reproducible on its own.
pub fn gen_taskset(params: &GenParams) -> Result<TaskSet, GenError> {
    params.validate()?;
    let (lo, hi) = &params.band;
    for attempt in 0..=params.max_restarts {
        let mut tasks = Vec::new();
        let mut load = Frac::zero();
        loop {
            let mut rng = stream(params.seed, attempt, tasks.len() as u64);
            let t = gen_task(params, tasks.len(), &mut rng)?;
            load += task_contribution(&t);
            tasks.push(t);
            if load > *hi {
                break;
            }
            if load >= *lo {
                return Ok(TaskSet::new(tasks)?);
            }
        }
    }
    Err(GenError::GenerationTimeout(params.max_restarts))
}

/// Execution demand as a fraction of `C`.
#[derive(Debug, Clone, PartialEq)]
pub enum DemandModel {
    /// Scale drawn from a grid distribution.
    FractionGrid(ExecDistribution),
    /// Uniform on the percent grid within `[lo, hi]`.
    Uniform {
        lo: Frac,
        hi: Frac,
    },
    Constant(Frac),
}

impl DemandModel {
    fn draw(&self, rng: &mut impl Rng) -> Frac {
        match self {
            DemandModel::FractionGrid(d) => {
                let s = d.scales()[d.sample_index(rng.random::<f64>())];
                Frac::new((*s.numer()).into(), (*s.denom()).into())
            }
            DemandModel::Uniform { lo, hi } => {
                let lo = std::cmp::max(lo.clone(), ratio::q(1, 100));
                lattice_draw(rng, &lo, hi, 100)
            }
            DemandModel::Constant(f) => f.clone(),
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        let ok = match self {
            DemandModel::FractionGrid(_) => true,
            DemandModel::Uniform { lo, hi } => {
                !lo.is_negative() && lo <= hi && *hi <= Frac::one() && *hi >= ratio::q(1, 100)
            }
            DemandModel::Constant(f) => f.is_positive() && *f <= Frac::one(),
        };
        if ok {
            Ok(())
        } else {
            Err(GenError::InvalidParams(
                "demand fractions must lie in (0, 1]".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobModel {
    pub hc_demand: DemandModel,
    pub lc_demand: DemandModel,
    /// Extra inter-arrival delay, up to this fraction of the period (0 = periodic).
    pub jitter: Frac,
    /// Lattice for jitter draws.
    pub grain: i64,
}

impl JobModel {
    pub fn new(hc_demand: DemandModel) -> Self {
        Self {
            hc_demand,
            lc_demand: DemandModel::Constant(Frac::one()),
            jitter: Frac::zero(),
            grain: 1,
        }
    }

    pub fn with_lc_demand(mut self, lc: DemandModel) -> Self {
        self.lc_demand = lc;
        self
    }

    pub fn with_jitter(mut self, jitter: Frac, grain: i64) -> Self {
        self.jitter = jitter;
        self.grain = grain;
        self
    }
}

/// Jobs released in `[0, horizon)`: demand `s * C` with `s` from the model.
pub fn gen_job_sequence(
    ts: &TaskSet,
    horizon: &Time,
    model: &JobModel,
    seed: u64,
) -> Result<JobSequence, GenError> {
    model.hc_demand.validate()?;
    model.lc_demand.validate()?;
    if model.jitter < Frac::zero() || model.grain < 1 {
        return Err(GenError::InvalidParams(
            "jitter must be non-negative and grain at least 1".into(),
        ));
    }
    let mut releases = Vec::new();
    for t in ts.tasks() {
        let mut rng = stream(seed, u64::MAX, t.id() as u64);
        let demand = if t.is_hc() {
            &model.hc_demand
        } else {
            &model.lc_demand
        };
        let mut at = Time::zero();
        while at < *horizon {
            releases.push((t.id(), at.clone(), demand.draw(&mut rng) * t.wcet()));
            let mut gap = t.period().clone();
            if model.jitter.is_positive() {
                gap += lattice_draw(
                    &mut rng,
                    &Frac::zero(),
                    &(&model.jitter * t.period()),
                    model.grain,
                );
            }
            at += gap;
        }
    }
    Ok(JobSequence::from_releases(releases))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{int, q};

    #[test]
    fn hc_wcet_within_ratio() {
        let p = GenParams::default();
        for i in 0..2000 {
            let t = gen_task(&p, 0, &mut stream(7, 0, i)).unwrap();
            if let Some(cl) = t.lc_estimate() {
                assert!(cl <= t.wcet() && *t.wcet() <= cl * int(3));
            } else {
                assert!(t.is_lc());
            }
            assert!(t.wcet() <= t.period() && *t.period() <= int(200));
        }
    }

    #[test]
    fn no_hc_when_probability_is_zero() {
        let p = GenParams {
            p_hc: 0.0,
            ..GenParams::default()
        };
        let ts = gen_taskset(&p).unwrap();
        assert!(ts.tasks().iter().all(|t| t.is_lc()));
    }

    #[test]
    fn lc_estimate_mean() {
        let p = GenParams::default();
        let n = 100_000;
        let sum: f64 = (0..n)
            .map(|i| {
                let mut rng = stream(11, 1, i);
                ratio::to_f64(&lattice_draw(
                    &mut rng,
                    &int(p.lc_range.0),
                    &int(p.lc_range.1),
                    p.grain,
                ))
            })
            .sum();
        assert!((sum / n as f64 - 5.5).abs() < 0.05);
    }

    #[test]
    fn sets_land_in_band_and_repeat() {
        for seed in 0..200 {
            let p = GenParams::default()
                .with_band(q(69, 100), q(70, 100))
                .with_ratio(4)
                .with_seed(seed);
            let ts = gen_taskset(&p).unwrap();
            let ua = average_utilization(&ts);
            assert!(ua >= q(69, 100) && ua <= q(70, 100));
            assert_eq!(ts, gen_taskset(&p).unwrap());
        }
    }

    #[test]
    fn periodic_job_count() {
        let ts = TaskSet::new(vec![
            McTask::hc(0, int(4), int(2))
                .unwrap()
                .with_lc_estimate(int(1))
                .unwrap(),
            McTask::new(1, int(6), int(1), Criticality::Lc).unwrap(),
        ])
        .unwrap();
        let jobs = gen_job_sequence(
            &ts,
            &int(12),
            &JobModel::new(DemandModel::Constant(Frac::one())),
            3,
        )
        .unwrap();
        assert_eq!(jobs.len(), 3 + 2);
        assert!(jobs
            .jobs()
            .iter()
            .all(|j| j.demand == *ts.get(j.task).unwrap().wcet()));
    }

    #[test]
    fn jitter_never_shortens_gaps() {
        let ts = TaskSet::new(vec![McTask::hc(0, int(5), int(2)).unwrap()]).unwrap();
        let model = JobModel::new(DemandModel::Uniform {
            lo: q(1, 10),
            hi: Frac::one(),
        })
        .with_jitter(q(1, 2), 4);
        let jobs = gen_job_sequence(&ts, &int(500), &model, 9).unwrap();
        let r: Vec<_> = jobs.jobs().iter().map(|j| j.release.clone()).collect();
        assert!(r.windows(2).all(|w| &w[1] - &w[0] >= int(5)));
        assert!(r.windows(2).any(|w| &w[1] - &w[0] > int(5)));
    }

    #[test]
    fn grid_demands_follow_the_distribution() {
        let d = ExecDistribution::table4();
        let ts = TaskSet::new(vec![McTask::hc(0, int(1), int(1)).unwrap()]).unwrap();
        let jobs = gen_job_sequence(
            &ts,
            &int(20_000),
            &JobModel::new(DemandModel::FractionGrid(d.clone())),
            5,
        )
        .unwrap();
        for (k, s) in d.scales().iter().enumerate() {
            let s = Frac::new((*s.numer()).into(), (*s.denom()).into());
            let hits = jobs.jobs().iter().filter(|j| j.demand <= s).count();
            assert!((hits as f64 / jobs.len() as f64 - d.cdf()[k]).abs() < 0.02);
        }
    }
}
