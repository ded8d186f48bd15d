//! Reproducible experiment runners. Each run is fully determined by its
//! [`ExperimentSpec`]; work items are seeded by index and collected in index
//! order, so the worker count never changes the output.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{
    self, beta_star_from_lc_estimates, max_alpha_given_beta, theorem1_test, Utilization,
};
use crate::generator::{
    self, gen_job_sequence, gen_taskset, DemandModel, GenError, GenParams, JobModel,
};
use crate::probability::{self, ExecDistribution, ProbError, Summand};
use crate::ratio::{self, q, Frac, Time};
use crate::simulator::{
    check_lemma2_optimality, check_mapping_equivalence, mode_switch_instant, simulate,
    verify_mc_schedulable, EventKind, JobSequence, ScheduleTrace, SimConfig, SimError,
};
use crate::taskmodel::{distribute_hc_budget_equal, ModelError, TaskSet};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("invalid experiment parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Probability(#[from] ProbError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Experiment {
    Table3Dynamic,
    Figure2,
    Figure3,
    Figure4,
    ReserveInvariants,
    Lemma2Fuzz,
    MappingFuzz,
    E2eVerify,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Table3Dynamic,
        Experiment::Figure2,
        Experiment::Figure3,
        Experiment::Figure4,
        Experiment::ReserveInvariants,
        Experiment::Lemma2Fuzz,
        Experiment::MappingFuzz,
        Experiment::E2eVerify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Table3Dynamic => "table3_dynamic",
            Experiment::Figure2 => "figure2",
            Experiment::Figure3 => "figure3",
            Experiment::Figure4 => "figure4",
            Experiment::ReserveInvariants => "reserve_invariants",
            Experiment::Lemma2Fuzz => "lemma2_fuzz",
            Experiment::MappingFuzz => "mapping_fuzz",
            Experiment::E2eVerify => "e2e_verify",
        }
    }

    /// Default number of work items.
    pub fn default_trials(self) -> usize {
        match self {
            Experiment::Table3Dynamic => 1000,
            Experiment::ReserveInvariants | Experiment::E2eVerify => 10_000,
            Experiment::Lemma2Fuzz => 1000,
            Experiment::MappingFuzz => 100,
            Experiment::Figure2 | Experiment::Figure3 | Experiment::Figure4 => 1,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ExperimentError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub seed: u64,
    /// Sets per cell (table3), simulations or scenarios (suites).
    pub trials: usize,
    /// Fixed-budget vectors per job sequence (lemma2_fuzz).
    pub vectors: usize,
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    pub bands: Vec<(Frac, Frac)>,
    pub ratios: Vec<i64>,
    pub weights: Vec<f64>,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: 1,
            trials: experiment.default_trials(),
            vectors: 100,
            jobs: 0,
            bands: generator::BANDS
                .iter()
                .map(|&(lo, hi)| (q(lo, 100), q(hi, 100)))
                .collect(),
            ratios: vec![3, 4, 5],
            weights: (1..=50).map(|k| k as f64 / 50.0).collect(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs;
        self
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials == 0 || self.vectors == 0 {
            return Err(ExperimentError::InvalidParams(
                "trial counts must be at least 1".into(),
            ));
        }
        if self.weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(ExperimentError::InvalidParams(
                "weights must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        let bands: Vec<String> = self
            .bands
            .iter()
            .map(|(lo, hi)| format!("{}:{}", ratio::format(lo), ratio::format(hi)))
            .collect();
        let ratios: Vec<String> = self.ratios.iter().map(i64::to_string).collect();
        format!(
            "mcdyn {} experiment={} seed={} trials={} vectors={} bands={} ratios={} weights={}",
            env!("CARGO_PKG_VERSION"),
            self.experiment,
            self.seed,
            self.trials,
            self.vectors,
            bands.join(","),
            ratios.join(","),
            self.weights.len()
        )
    }
}

/// Tabular result plus property-check outcome.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    /// Recorded as a `#` comment line at the top of the CSV.
    pub comment: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Number of individual property checks performed.
    pub checks: usize,
    /// Human-readable descriptions of failed checks.
    pub violations: Vec<String>,
}

impl Report {
    fn new(spec: &ExperimentSpec, header: &[&str]) -> Self {
        Self {
            comment: spec.describe(),
            header: header.iter().map(|s| s.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        format!("# {}\n{body}", self.comment)
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))
}

/// Maps `0..n` in parallel, keeping index order.
fn par_map<T: Send>(
    jobs: usize,
    n: usize,
    f: impl Fn(usize) -> Result<T, ExperimentError> + Sync,
) -> Result<Vec<T>, ExperimentError> {
    pool(jobs)?.install(|| (0..n).into_par_iter().map(&f).collect())
}

pub fn run(spec: &ExperimentSpec) -> Result<Report, ExperimentError> {
    spec.validate()?;
    match spec.experiment {
        Experiment::Table3Dynamic => run_table3_dynamic(spec),
        Experiment::Figure2 => run_figure2(spec),
        Experiment::Figure3 => run_figure3(spec),
        Experiment::Figure4 => run_figure4(spec),
        Experiment::ReserveInvariants => run_reserve_invariants(spec),
        Experiment::Lemma2Fuzz => run_lemma2_fuzz(spec),
        Experiment::MappingFuzz => run_mapping_fuzz(spec),
        Experiment::E2eVerify => run_e2e_verify(spec),
    }
}

/// Largest `alpha*` for a generated set with `beta*` fixed by its LC estimates;
/// 0 when no `alpha*` keeps it schedulable.
pub fn best_alpha_star(ts: &TaskSet) -> f64 {
    let u = Utilization::of(ts);
    let beta = beta_star_from_lc_estimates(ts).unwrap_or_else(|_| Frac::one());
    match max_alpha_given_beta(&u, &beta) {
        Ok(a) if theorem1_test(&u, &a, &beta).is_ok_and(|v| v.schedulable) => ratio::to_f64(&a),
        _ => 0.0,
    }
}

/// Mean and sample standard deviation.
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// One cell of the band-by-ratio service table: `(mean, sd)` of the best `alpha*` over `trials` sets.
pub fn table3_cell(
    spec: &ExperimentSpec,
    band: &(Frac, Frac),
    ratio: i64,
    inflate_lc: bool,
) -> Result<(f64, f64), ExperimentError> {
    let base = GenParams {
        inflate_lc,
        ..GenParams::default()
    }
    .with_band(band.0.clone(), band.1.clone())
    .with_ratio(ratio);
    let cell_seed = spec.seed ^ ((ratio as u64) << 32) ^ ratio::to_f64(&band.1).to_bits();
    let values = par_map(spec.jobs, spec.trials, |i| {
        let ts = gen_taskset(&base.clone().with_seed(cell_seed.wrapping_add(i as u64)))?;
        Ok(best_alpha_star(&ts))
    })?;
    Ok(mean_sd(&values))
}

/// Rows `band_lo,band_hi,rc,lc_inflation,mean_alpha,sd_alpha,sets`, both
/// generator variants for every cell.
pub fn run_table3_dynamic(spec: &ExperimentSpec) -> Result<Report, ExperimentError> {
    let mut report = Report::new(
        spec,
        &[
            "band_lo",
            "band_hi",
            "rc",
            "lc_inflation",
            "mean_alpha",
            "sd_alpha",
            "sets",
        ],
    );
    for &rc in &spec.ratios {
        for band in &spec.bands {
            for inflate in [false, true] {
                let (mean, sd) = table3_cell(spec, band, rc, inflate)?;
                report.rows.push(vec![
                    ratio::format(&band.0),
                    ratio::format(&band.1),
                    rc.to_string(),
                    inflate.to_string(),
                    format!("{mean:.4}"),
                    format!("{sd:.4}"),
                    spec.trials.to_string(),
                ]);
            }
        }
    }
    Ok(report)
}

/// `U_L` grid `{lo, lo + 0.1, ..., 1.0}` in exact tenths.
pub fn lc_grid(u_sum: &Frac) -> Vec<Frac> {
    let lo = std::cmp::max(u_sum - Frac::one(), Frac::zero());
    (0..=10)
        .map(|k| q(k, 10))
        .filter(|u| *u >= lo && !u.is_zero())
        .collect()
}

/// Grid for the SU-by-weight sweep: `U_sum = 3/2`.
pub fn figure2_grid() -> Vec<Utilization> {
    let sum = q(3, 2);
    lc_grid(&sum)
        .into_iter()
        .map(|ul| Utilization::new(ul.clone(), &sum - ul))
        .collect()
}

/// Rows `u_l,u_h,w,beta_opt,one_minus_m,endpoint`.
pub fn run_figure2(spec: &ExperimentSpec) -> Result<Report, ExperimentError> {
    let mut report = Report::new(
        spec,
        &["u_l", "u_h", "w", "beta_opt", "one_minus_m", "endpoint"],
    );
    for u in figure2_grid() {
        let top = u
            .threshold()
            .map(|m| 1.0 - ratio::to_f64(&m))
            .unwrap_or(1.0);
        for &w in &spec.weights {
            let b = analysis::optimal_beta_for_su(&u, w)?;
            let endpoint = b.abs() < 1e-12 || (b - top).abs() < 1e-12;
            report.rows.push(vec![
                ratio::format(&u.lc),
                ratio::format(&u.hc),
                format!("{w:.2}"),
                format!("{b:.6}"),
                format!("{top:.6}"),
                endpoint.to_string(),
            ]);
        }
    }
    Ok(report)
}

pub const FIGURE3_BETAS: [(i64, i64); 4] = [(45, 100), (55, 100), (65, 100), (75, 100)];

/// Rows `n,beta,model,p` for both models plus the enumeration/convolution
/// gap; checks the dominance and monotonicity properties.
pub fn run_figure3(spec: &ExperimentSpec) -> Result<Report, ExperimentError> {
    let dist = ExecDistribution::table4();
    let mut report = Report::new(spec, &["n", "beta", "model", "p"]);
    for (bn, bd) in FIGURE3_BETAS {
        let beta = Rational64::new(bn, bd);
        let mut prev_static: Option<f64> = None;
        for n in 1..=probability::MAX_ENUMERATION_TASKS {
            let ps = probability::p_noswitch_static_homogeneous(&dist, n, &beta);
            let pd = probability::p_noswitch_dynamic_homogeneous(&dist, n, &beta, Summand::Pmf)?;
            let pc = probability::p_noswitch_convolve(
                &dist,
                &vec![Rational64::one(); n],
                &beta,
                Summand::Pmf,
                probability::DEFAULT_MAX_CELLS,
            )?;
            report.checks += 3;
            if pd + 1e-12 < ps {
                report
                    .violations
                    .push(format!("n={n} beta={beta}: dynamic {pd} < static {ps}"));
            }
            if prev_static.is_some_and(|p| ps >= p) {
                report.violations.push(format!(
                    "n={n} beta={beta}: static probability not decreasing"
                ));
            }
            if (pd - pc).abs() > 1e-12 {
                report.violations.push(format!(
                    "n={n} beta={beta}: enumeration {pd} vs convolution {pc}"
                ));
            }
            prev_static = Some(ps);
            let b = format!("{:.2}", bn as f64 / bd as f64);
            report.rows.push(vec![
                n.to_string(),
                b.clone(),
                "s".into(),
                format!("{ps:.12}"),
            ]);
            report
                .rows
                .push(vec![n.to_string(), b, "d".into(), format!("{pd:.12}")]);
        }
    }
    Ok(report)
}

/// Grid for the dynamic/static SU ratio sweep: `U_sum = 13/10`.
pub fn figure4_grid() -> Vec<Utilization> {
    let sum = q(13, 10);
    lc_grid(&sum)
        .into_iter()
        .map(|ul| Utilization::new(ul.clone(), &sum - ul))
        .collect()
}

/// Rows `u_l,w,dynamic_su,static_su,ratio,overlap_weight`; checks ratio >= 1
/// everywhere and ratio = 1 above the overlap weight.
pub fn run_figure4(spec: &ExperimentSpec) -> Result<Report, ExperimentError> {
    let mut report = Report::new(
        spec,
        &[
            "u_l",
            "w",
            "dynamic_su",
            "static_su",
            "ratio",
            "overlap_weight",
        ],
    );
    for u in figure4_grid() {
        let overlap = analysis::static_overlap_weight(&u);
        for &w in &spec.weights {
            let dynamic = analysis::max_dynamic_su(&u, w)?;
            let stat = analysis::static_model_su(&u, w)?;
            let r = dynamic / stat;
            report.checks += 1;
            if r < 1.0 - 1e-9 {
                report
                    .violations
                    .push(format!("U_L={} w={w}: ratio {r} < 1", ratio::format(&u.lc)));
            }
            if overlap.is_some_and(|t| w >= t) {
                report.checks += 1;
                if (r - 1.0).abs() > 1e-9 {
                    report.violations.push(format!(
                        "U_L={} w={w}: ratio {r} != 1 above overlap",
                        ratio::format(&u.lc)
                    ));
                }
            }
            report.rows.push(vec![
                ratio::format(&u.lc),
                format!("{w:.2}"),
                format!("{dynamic:.6}"),
                format!("{stat:.6}"),
                format!("{r:.6}"),
                overlap.map(|t| format!("{t:.6}")).unwrap_or_default(),
            ]);
        }
    }
    Ok(report)
}

/// A randomized simulation input.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub ts: TaskSet,
    pub beta_star: Frac,
    pub alpha_star: Frac,
    pub x: Frac,
    pub jobs: JobSequence,
}

fn random_fraction(rng: &mut impl Rng, steps: i64) -> Frac {
    q(rng.random_range(0..=steps), steps)
}

/// Small task sets (periods up to 30) with varied bands, demand models and jitter.
pub fn random_scenario(seed: u64, index: u64) -> Result<Scenario, ExperimentError> {
    let mut rng = generator::stream(seed, 0x5ce7, index);
    let band_hi = rng.random_range(30..=95);
    let params = GenParams {
        lc_range: (1, 5),
        ratio: rng.random_range(1..=4),
        period_max: 30,
        max_restarts: 100_000,
        ..GenParams::default()
    }
    .with_band(q(band_hi - 5, 100), q(band_hi, 100))
    .with_seed(rng.random());
    let ts = gen_taskset(&params)?;
    let beta_star = random_fraction(&mut rng, 20);
    let alpha_star = random_fraction(&mut rng, 20);
    let x = q(rng.random_range(1..=20), 20);
    let ts = with_alpha_star(&ts, &alpha_star)?;
    let hc_demand = match rng.random_range(0..4) {
        0 => DemandModel::FractionGrid(ExecDistribution::table4()),
        1 => DemandModel::Uniform {
            lo: q(1, 10),
            hi: Frac::one(),
        },
        2 => DemandModel::Constant(Frac::one()),
        _ => DemandModel::Constant(q(rng.random_range(1..=10), 10)),
    };
    let lc_demand = if rng.random_bool(0.5) {
        DemandModel::Constant(Frac::one())
    } else {
        DemandModel::Uniform {
            lo: q(1, 10),
            hi: Frac::one(),
        }
    };
    let jitter = if rng.random_bool(0.5) {
        Frac::zero()
    } else {
        q(1, 2)
    };
    let model = JobModel::new(hc_demand)
        .with_lc_demand(lc_demand)
        .with_jitter(jitter, 2);
    let horizon = Time::from_integer(rng.random_range(40..=120).into());
    let jobs = gen_job_sequence(&ts, &horizon, &model, rng.random())?;
    Ok(Scenario {
        ts,
        beta_star,
        alpha_star,
        x,
        jobs,
    })
}

/// Spreads `alpha*` over the LC tasks; sets without LC tasks are returned unchanged.
pub fn with_alpha_star(ts: &TaskSet, alpha_star: &Frac) -> Result<TaskSet, ModelError> {
    if ts.lc_tasks().next().is_none() {
        return Ok(ts.clone());
    }
    ts.with_alphas(&distribute_hc_budget_equal(ts, alpha_star)?)
}

/// Reserved-load bound before each switch and equality at each switch.
pub fn reserve_violations(ts: &TaskSet, trace: &ScheduleTrace) -> (usize, Vec<String>) {
    let budget = trace.beta_budget.clone().unwrap_or_else(Frac::zero);
    let mut checks = 0;
    let mut out = Vec::new();
    for e in &trace.events {
        checks += 1;
        match &e.kind {
            EventKind::ModeSwitch { e_max } => {
                let load: Frac = e_max
                    .iter()
                    .map(|(id, v)| v / ts.get(*id).expect("task").period())
                    .sum();
                if load != budget {
                    out.push(format!(
                        "t={}: reserved load {} != budget {} at switch",
                        ratio::format(&e.time),
                        ratio::format(&load),
                        ratio::format(&budget)
                    ));
                }
            }
            _ if e.mode == crate::meba::Mode::Lc
                && e.reserved_load.as_ref().is_some_and(|l| *l > budget) =>
            {
                out.push(format!(
                    "t={}: reserved load above budget in LC mode",
                    ratio::format(&e.time)
                ));
            }
            _ => {}
        }
    }
    (checks, out)
}

fn collect(report: &mut Report, results: Vec<(usize, Vec<String>)>) {
    for (checks, v) in results {
        report.checks += checks;
        report.violations.extend(v);
    }
}

fn summary_row(report: &mut Report, trials: usize, extra: usize) {
    report.rows.push(vec![
        trials.to_string(),
        extra.to_string(),
        report.checks.to_string(),
        report.violations.len().to_string(),
    ]);
}

/// MEBA's reserved-load invariants over `trials` random simulations.
pub fn run_reserve_invariants(spec: &ExperimentSpec) -> Result<Report, ExperimentError> {
    let mut report = Report::new(spec, &["simulations", "switches", "checks", "violations"]);
    let results = par_map(spec.jobs, spec.trials, |i| {
        let s = random_scenario(spec.seed, i as u64)?;
        let trace = simulate(
            &s.ts,
            &SimConfig::meba(s.beta_star.clone(), s.x.clone()),
            &s.jobs,
        )?;
        let (checks, v) = reserve_violations(&s.ts, &trace);
        let switches = trace.mode_switches().count();
        Ok((
            switches,
            (
                checks,
                v.into_iter()
                    .map(|m| format!("scenario {i}: {m}"))
                    .collect(),
            ),
        ))
    })?;
    let switches = results.iter().map(|(s, _)| s).sum();
    collect(&mut report, results.into_iter().map(|(_, r)| r).collect());
    summary_row(&mut report, spec.trials, switches);
    Ok(report)
}

/// Random fixed budgets with `Σ B_i / T_i <= beta* U_H`.
pub fn random_budget_vector(
    ts: &TaskSet,
    beta_star: &Frac,
    rng: &mut impl Rng,
) -> BTreeMap<usize, Time> {
    let hc: Vec<_> = ts.hc_tasks().collect();
    let weights: Vec<i64> = hc.iter().map(|_| rng.random_range(0..=10)).collect();
    let total: i64 = weights.iter().sum();
    let fill = q(rng.random_range(0..=10), 10);
    let budget = beta_star * ts.u_hc() * fill;
    hc.iter()
        .zip(weights)
        .map(|(t, w)| {
            let share = if total == 0 {
                Frac::zero()
            } else {
                &budget * q(w, total)
            };
            (t.id(), share * t.period())
        })
        .collect()
}

/// Fixed-budget comparators never switch later than MEBA.
pub fn run_lemma2_fuzz(spec: &ExperimentSpec) -> Result<Report, ExperimentError> {
    let mut report = Report::new(
        spec,
        &["sequences", "vectors_per_sequence", "checks", "violations"],
    );
    let results = par_map(spec.jobs, spec.trials, |i| {
        let s = random_scenario(spec.seed, i as u64)?;
        let mut rng = generator::stream(spec.seed, 0xb0d6, i as u64);
        let vectors: Vec<_> = (0..spec.vectors)
            .map(|_| random_budget_vector(&s.ts, &s.beta_star, &mut rng))
            .collect();
        let mut v = Vec::new();
        if !check_lemma2_optimality(&s.ts, &s.beta_star, &s.x, &s.jobs, &vectors)? {
            // Rare path: find the offending vectors.
            for (k, vec) in vectors.iter().enumerate() {
                if !check_lemma2_optimality(
                    &s.ts,
                    &s.beta_star,
                    &s.x,
                    &s.jobs,
                    std::slice::from_ref(vec),
                )? {
                    v.push(format!(
                        "sequence {i} vector {k}: fixed budgets switch later than MEBA"
                    ));
                }
            }
        }
        Ok((vectors.len(), v))
    })?;
    collect(&mut report, results);
    summary_row(&mut report, spec.trials, spec.vectors);
    Ok(report)
}

/// Dynamic trace versus the mapped static trace on switch-inducing scenarios.
pub fn run_mapping_fuzz(spec: &ExperimentSpec) -> Result<Report, ExperimentError> {
    let mut report = Report::new(spec, &["scenarios", "candidates", "checks", "violations"]);
    // Draw candidates in fixed-size rounds until enough of them switch.
    let mut found: Vec<(u64, Scenario)> = Vec::new();
    let mut next = 0u64;
    while found.len() < spec.trials {
        let round = par_map(spec.jobs, 64, |k| {
            let i = next + k as u64;
            let s = random_scenario(spec.seed, i)?;
            let trace = simulate(
                &s.ts,
                &SimConfig::meba(s.beta_star.clone(), s.x.clone()),
                &s.jobs,
            )?;
            Ok(mode_switch_instant(&trace).is_some().then_some((i, s)))
        })?;
        found.extend(round.into_iter().flatten());
        next += 64;
        if next > 1_000_000 {
            return Err(ExperimentError::InvalidParams(
                "too few switch-inducing scenarios".into(),
            ));
        }
    }
    found.truncate(spec.trials);
    let results = par_map(spec.jobs, found.len(), |k| {
        let (i, s) = &found[k];
        let r = check_mapping_equivalence(&s.ts, &s.beta_star, &s.x, &s.jobs)?;
        let v = r
            .first_difference
            .map(|d| format!("scenario {i}: {d}"))
            .into_iter()
            .collect();
        Ok((1, v))
    })?;
    collect(&mut report, results);
    summary_row(&mut report, spec.trials, next as usize);
    Ok(report)
}

/// A scenario whose `(alpha*, beta*, x)` passes the schedulability test, or
/// `None` if the drawn set admits none.
pub fn random_schedulable_scenario(
    seed: u64,
    index: u64,
) -> Result<Option<Scenario>, ExperimentError> {
    let mut s = random_scenario(seed, index)?;
    let mut rng = generator::stream(seed, 0xe2e, index);
    let u = Utilization::of(&s.ts);
    let Ok(max_alpha) = max_alpha_given_beta(&u, &s.beta_star) else {
        return Ok(None);
    };
    // Any alpha* at or below the maximum keeps the test satisfied.
    let alpha = &max_alpha * random_fraction(&mut rng, 10);
    let verdict = theorem1_test(&u, &alpha, &s.beta_star)?;
    if !verdict.schedulable {
        return Ok(None);
    }
    let x = match rng.random_range(0..3) {
        0 => verdict.x_lo.clone(),
        1 => verdict.x_hi.clone(),
        _ => {
            let lo = (&verdict.x_lo * ratio::int(100)).ceil();
            let hi = (&verdict.x_hi * ratio::int(100)).floor();
            if lo > hi {
                verdict.x_lo.clone()
            } else {
                let span = ratio::to_f64(&(&hi - &lo)) as i64;
                (lo + ratio::int(rng.random_range(0..=span))) / ratio::int(100)
            }
        }
    };
    debug_assert!(verdict.admits(&x));
    s.ts = with_alpha_star(&s.ts, &alpha)?;
    s.alpha_star = alpha;
    s.x = x;
    Ok(Some(s))
}

/// Schedulable tuples produce MC-schedulable traces.
pub fn run_e2e_verify(spec: &ExperimentSpec) -> Result<Report, ExperimentError> {
    let mut report = Report::new(spec, &["tuples", "candidates", "checks", "violations"]);
    let mut done = 0usize;
    let mut next = 0u64;
    while done < spec.trials {
        let want = spec.trials - done;
        let round = par_map(spec.jobs, want.max(64), |k| {
            let i = next + k as u64;
            let Some(s) = random_schedulable_scenario(spec.seed, i)? else {
                return Ok(None);
            };
            let trace = simulate(
                &s.ts,
                &SimConfig::meba(s.beta_star.clone(), s.x.clone()),
                &s.jobs,
            )?;
            let ver = verify_mc_schedulable(&s.ts, &s.jobs, &trace, None);
            let v: Vec<String> = ver
                .violations
                .iter()
                .map(|v| {
                    format!(
                        "tuple {i}: job {} {:?} got {} of {}",
                        v.job,
                        v.kind,
                        ratio::format(&v.received),
                        ratio::format(&v.required)
                    )
                })
                .collect();
            Ok(Some((ver.checked, v)))
        })?;
        next += want.max(64) as u64;
        let accepted: Vec<_> = round.into_iter().flatten().take(want).collect();
        done += accepted.len();
        collect(&mut report, accepted);
        if next > 100 * spec.trials as u64 + 10_000 {
            return Err(ExperimentError::InvalidParams(
                "too few schedulable tuples".into(),
            ));
        }
    }
    summary_row(&mut report, spec.trials, next as usize);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("figure9".parse::<Experiment>().is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(figure2_grid().len(), 6);
        assert_eq!(figure4_grid().len(), 8);
        assert!(figure4_grid().iter().all(|u| u.total() == q(13, 10)));
    }

    #[test]
    fn csv_is_deterministic_and_commented() {
        let spec = ExperimentSpec::new(Experiment::Table3Dynamic)
            .with_trials(5)
            .with_jobs(2);
        let a = run(&spec).unwrap().to_csv();
        let b = run(&spec.clone().with_jobs(1)).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("# mcdyn "));
        assert_eq!(
            a.lines().nth(1).unwrap(),
            "band_lo,band_hi,rc,lc_inflation,mean_alpha,sd_alpha,sets"
        );
    }

    #[test]
    fn budget_vectors_respect_the_limit() {
        let s = random_scenario(3, 4).unwrap();
        let mut rng = generator::stream(3, 9, 9);
        for _ in 0..50 {
            let v = random_budget_vector(&s.ts, &s.beta_star, &mut rng);
            let sum: Frac = v
                .iter()
                .map(|(id, b)| b / s.ts.get(*id).unwrap().period())
                .sum();
            assert!(sum <= &s.beta_star * s.ts.u_hc());
        }
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(run(&ExperimentSpec::new(Experiment::Lemma2Fuzz).with_trials(0)).is_err());
    }
}
