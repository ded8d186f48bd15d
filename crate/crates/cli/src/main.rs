//! `mcdyn`: analysis, simulation, generation and experiment front end.
//!
//! Exit codes: 0 on success, 1 when a property or schedulability check
//! fails, 2 on usage or I/O errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mcdyn::analysis::{self, theorem1_test, Utilization};
use mcdyn::experiments::{self, Experiment, ExperimentSpec};
use mcdyn::generator::{self, DemandModel, GenParams, JobModel};
use mcdyn::probability::{self, ExecDistribution, Summand};
use mcdyn::ratio::{self, Exact, Frac, Time};
use mcdyn::simulator::{self, jobfile, Policy, SimConfig};
use mcdyn::taskfile;
use mcdyn::taskmodel::{alpha_star_from_per_task, TaskSet};
use num_rational::Rational64;
use num_traits::ToPrimitive;

#[derive(Parser, Debug)]
#[command(
    name = "mcdyn",
    version,
    about = "Dynamic-budget mixed-criticality scheduling toolkit"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory for generated files.
    #[arg(long, global = true, env = "MCDYN_OUT", default_value = "out")]
    out: PathBuf,
    /// Overrides the experiment's default trial count.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Schedulability test, service-level bounds and SU(w) optimum.
    Analyze(AnalyzeArgs),
    /// Simulate a task set and verify the resulting schedule.
    Simulate(SimulateArgs),
    /// Generate random task sets into the output directory.
    Gen(GenArgs),
    /// No-switch probabilities as CSV `n,beta,model,p`.
    Prob(ProbArgs),
    /// Run a named experiment and write `<name>.csv` to the output directory.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Task-set file; alternatively give --u-lc and --u-hc.
    #[arg(long, conflicts_with_all = ["u_lc", "u_hc"])]
    taskset: Option<PathBuf>,
    #[arg(long, requires = "u_hc", value_parser = parse_frac)]
    u_lc: Option<Frac>,
    #[arg(long, requires = "u_lc", value_parser = parse_frac)]
    u_hc: Option<Frac>,
    #[arg(long, value_parser = parse_frac)]
    alpha_star: Option<Frac>,
    #[arg(long, value_parser = parse_frac)]
    beta_star: Option<Frac>,
    /// Weight of LC-mode utilization in SU(w).
    #[arg(long)]
    w: Option<f64>,
    /// Print the optimal beta* for w = 0.02, 0.04, ..., 1 as CSV.
    #[arg(long)]
    sweep: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PolicyArg {
    Uvd,
    Vd,
    Fixed,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Task-set file.
    #[arg(long)]
    taskset: PathBuf,
    #[arg(long, value_enum, default_value = "uvd")]
    policy: PolicyArg,
    /// Virtual-deadline factor; defaults to the smallest admissible one.
    #[arg(long, value_parser = parse_frac)]
    x: Option<Frac>,
    /// Defaults to the value implied by the HC tasks' LC estimates.
    #[arg(long, value_parser = parse_frac)]
    beta_star: Option<Frac>,
    /// Fixed budgets `id=B,...` for --policy fixed.
    #[arg(long)]
    budgets: Option<String>,
    /// Job sequence CSV `task,release,demand`; generated when absent.
    #[arg(long)]
    job_file: Option<PathBuf>,
    /// Release horizon for generated jobs and simulation cut-off.
    #[arg(long, value_parser = parse_frac)]
    horizon: Option<Time>,
    /// HC demand model: `table4`, `const:F` or `uniform:LO:HI`.
    #[arg(long, default_value = "table4")]
    demand: String,
    /// Write the event trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Target U_A band `lo:hi`.
    #[arg(long, default_value = "0.54:0.55")]
    band: String,
    #[arg(long, default_value_t = 3)]
    rc: i64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Inflate LC tasks' WCET by the RC draw as well.
    #[arg(long)]
    inflate_lc: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModelArg {
    S,
    D,
    Both,
}

#[derive(Args, Debug)]
struct ProbArgs {
    /// `table4` or a file of `scale cdf` lines.
    #[arg(long, default_value = "table4")]
    dist: String,
    /// Task count or range `lo..hi`.
    #[arg(long, default_value = "1..8")]
    n: String,
    #[arg(long, value_delimiter = ',', default_value = "0.45,0.55,0.65,0.75")]
    beta_star: Vec<String>,
    #[arg(long, value_enum, default_value = "both")]
    model: ModelArg,
    /// Weight assignments by raw CDF products instead of the joint PMF.
    #[arg(long)]
    raw_cdf: bool,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// One of table3_dynamic, figure2, figure3, figure4, reserve_invariants,
    /// lemma2_fuzz, mapping_fuzz, e2e_verify.
    name: String,
    /// Fixed-budget vectors per sequence (lemma2_fuzz).
    #[arg(long)]
    vectors: Option<usize>,
}

fn parse_frac(s: &str) -> Result<Frac, String> {
    ratio::parse(s).map_err(|e| e.to_string())
}

/// A command either succeeds, or reports a failed check (exit 1).
enum Outcome {
    Ok,
    CheckFailed,
}

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout(), $($arg)*)?
    };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        // A reader such as `head` closed the pipe; nothing left to report.
        Err(e)
            if e.downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(&cli.global, a),
        Command::Gen(a) => gen(&cli.global, a),
        Command::Prob(a) => prob(a),
        Command::Experiment(a) => experiment(&cli.global, a),
    }
}

fn analyze(a: AnalyzeArgs) -> Result<Outcome> {
    let (u, ts) = match (&a.taskset, a.u_lc, a.u_hc) {
        (Some(p), _, _) => {
            let ts = taskfile::read(p)?;
            (Utilization::of(&ts), Some(ts))
        }
        (None, Some(l), Some(h)) => (Utilization::new(l, h), None),
        _ => bail!("give --taskset or both --u-lc and --u-hc"),
    };
    out!("u_lc={}", Exact(&u.lc));
    out!("u_hc={}", Exact(&u.hc));
    match u.threshold() {
        Some(m) => out!("m={}", Exact(&m)),
        None => out!("m=undefined"),
    }
    let beta = match (&a.beta_star, &ts) {
        (Some(b), _) => Some(b.clone()),
        (None, Some(ts))
            if ts.hc_tasks().all(|t| t.lc_estimate().is_some())
                && ts.hc_tasks().next().is_some() =>
        {
            Some(analysis::beta_star_from_lc_estimates(ts)?)
        }
        _ => None,
    };
    let alpha = match (&a.alpha_star, &ts) {
        (Some(x), _) => Some(x.clone()),
        (None, Some(ts))
            if ts.lc_tasks().next().is_some() && a.beta_star.is_none() && beta.is_none() =>
        {
            Some(alpha_star_from_per_task(ts)?)
        }
        _ => None,
    };
    let mut outcome = Outcome::Ok;
    match (alpha, beta) {
        (Some(alpha), Some(beta)) => {
            let v = theorem1_test(&u, &alpha, &beta)?;
            out!("alpha_star={}", Exact(&alpha));
            out!("beta_star={}", Exact(&beta));
            out!("schedulable={}", v.schedulable);
            if v.schedulable {
                out!("x_range={}..{}", Exact(&v.x_lo), Exact(&v.x_hi));
            } else {
                outcome = Outcome::CheckFailed;
            }
        }
        (Some(alpha), None) => match analysis::max_beta_given_alpha(&u, &alpha) {
            Ok(b) => out!("max_beta_star={}", Exact(&b)),
            Err(e) => out!("max_beta_star=none ({e})"),
        },
        (None, Some(beta)) => match analysis::max_alpha_given_beta(&u, &beta) {
            Ok(al) => out!("max_alpha_star={}", Exact(&al)),
            Err(e) => out!("max_alpha_star=none ({e})"),
        },
        (None, None) => {}
    }
    if let Some(w) = a.w {
        let b = analysis::optimal_beta_for_su(&u, w)?;
        out!("w={w}");
        out!("optimal_beta_star={b:.6}");
        out!("su={:.6}", analysis::total_system_utilization(&u, w, b)?);
        if u.lc > Frac::from_integer(0.into()) {
            out!("static_su={:.6}", analysis::static_model_su(&u, w)?);
        }
    }
    if a.sweep {
        out!("w,beta_opt,su");
        for k in 1..=50 {
            let w = k as f64 / 50.0;
            let b = analysis::optimal_beta_for_su(&u, w)?;
            out!(
                "{w:.2},{b:.6},{:.6}",
                analysis::total_system_utilization(&u, w, b)?
            );
        }
    }
    Ok(outcome)
}

fn parse_demand(s: &str) -> Result<DemandModel> {
    let parts: Vec<&str> = s.split(':').collect();
    let f = |p: &str| ratio::parse(p).map_err(|e| anyhow!("{e}"));
    Ok(match parts.as_slice() {
        ["table4"] => DemandModel::FractionGrid(ExecDistribution::table4()),
        ["const", v] => DemandModel::Constant(f(v)?),
        ["uniform", lo, hi] => DemandModel::Uniform {
            lo: f(lo)?,
            hi: f(hi)?,
        },
        _ => bail!("demand model must be table4, const:F or uniform:LO:HI"),
    })
}

fn parse_budgets(s: &str) -> Result<BTreeMap<usize, Time>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (id, b) = p
                .split_once('=')
                .ok_or_else(|| anyhow!("budget `{p}` is not `id=B`"))?;
            Ok((
                id.trim().parse()?,
                ratio::parse(b.trim()).map_err(|e| anyhow!("{e}"))?,
            ))
        })
        .collect()
}

fn simulate(g: &Global, a: SimulateArgs) -> Result<Outcome> {
    let ts = taskfile::read(&a.taskset)?;
    let u = Utilization::of(&ts);
    let beta = match a.beta_star {
        Some(b) => b,
        None => analysis::beta_star_from_lc_estimates(&ts)
            .context("no --beta-star given and the HC tasks carry no LC estimates")?,
    };
    let x = match a.x {
        Some(x) => x,
        None => {
            let alpha = if ts.lc_tasks().next().is_some() {
                alpha_star_from_per_task(&ts)?
            } else {
                Frac::from_integer(0.into())
            };
            let v = theorem1_test(&u, &alpha, &beta)?;
            v.default_x()
                .unwrap_or_else(|| Frac::from_integer(1.into()))
        }
    };
    let policy = match a.policy {
        PolicyArg::Uvd => Policy::EdfUvdMeba,
        PolicyArg::Vd => Policy::EdfVdStatic,
        PolicyArg::Fixed => Policy::FixedBudget(parse_budgets(
            a.budgets
                .as_deref()
                .ok_or_else(|| anyhow!("--policy fixed needs --budgets"))?,
        )?),
    };
    let jobs = match &a.job_file {
        Some(p) => {
            jobfile::read(fs::File::open(p).with_context(|| format!("opening {}", p.display()))?)?
        }
        None => {
            let horizon = a
                .horizon
                .clone()
                .ok_or_else(|| anyhow!("generated jobs need --horizon"))?;
            generator::gen_job_sequence(
                &ts,
                &horizon,
                &JobModel::new(parse_demand(&a.demand)?),
                g.seed,
            )?
        }
    };
    let mut cfg = SimConfig::meba(beta, x.clone()).with_policy(policy);
    cfg.horizon = a.horizon.clone();
    let trace = simulator::simulate(&ts, &cfg, &jobs)?;
    if let Some(p) = &a.trace {
        let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        trace.write_csv(f)?;
    }
    let check = simulator::verify_mc_schedulable(&ts, &jobs, &trace, a.horizon.as_ref());
    out!("x={}", Exact(&x));
    out!("jobs={}", jobs.len());
    out!("mode_switches={}", trace.mode_switches().count());
    if let Some(t) = simulator::mode_switch_instant(&trace) {
        out!("first_switch={}", Exact(&t));
    }
    out!("checked={}", check.checked);
    out!("violations={}", check.violations.len());
    for v in &check.violations {
        out!(
            "violation job={} kind={:?} deadline={} required={} received={}",
            v.job,
            v.kind,
            Exact(&v.deadline),
            Exact(&v.required),
            Exact(&v.received)
        );
    }
    Ok(if check.is_schedulable() {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}

fn parse_band(s: &str) -> Result<(Frac, Frac)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("band must be `lo:hi`"))?;
    let p = |v: &str| ratio::parse(v).map_err(|e| anyhow!("{e}"));
    Ok((p(lo)?, p(hi)?))
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn gen(g: &Global, a: GenArgs) -> Result<Outcome> {
    let (lo, hi) = parse_band(&a.band)?;
    ensure_dir(&g.out)?;
    for i in 0..a.count {
        let params = GenParams {
            inflate_lc: a.inflate_lc,
            ..GenParams::default()
        }
        .with_band(lo.clone(), hi.clone())
        .with_ratio(a.rc)
        .with_seed(g.seed.wrapping_add(i as u64));
        let ts: TaskSet = generator::gen_taskset(&params)?;
        let path = g.out.join(format!("taskset_{i:04}.txt"));
        taskfile::write(&path, &ts)?;
        out!(
            "{} u_a={:.4} tasks={}",
            path.display(),
            ratio::to_f64(&generator::average_utilization(&ts)),
            ts.len()
        );
    }
    Ok(Outcome::Ok)
}

fn parse_range(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    Ok(match s.split_once("..") {
        Some((lo, hi)) => lo.trim().parse()?..=hi.trim().parse()?,
        None => {
            let n = s.trim().parse()?;
            n..=n
        }
    })
}

fn to_rational64(f: &Frac) -> Result<Rational64> {
    Ok(Rational64::new(
        f.numer()
            .to_i64()
            .ok_or_else(|| anyhow!("value out of range"))?,
        f.denom()
            .to_i64()
            .ok_or_else(|| anyhow!("value out of range"))?,
    ))
}

fn prob(a: ProbArgs) -> Result<Outcome> {
    let dist = if a.dist == "table4" {
        ExecDistribution::table4()
    } else {
        ExecDistribution::parse(
            &fs::read_to_string(&a.dist).with_context(|| format!("reading {}", a.dist))?,
        )?
    };
    let summand = if a.raw_cdf {
        Summand::RawCdf
    } else {
        Summand::Pmf
    };
    let range = parse_range(&a.n)?;
    if *range.start() == 0 {
        bail!("--n must be at least 1");
    }
    out!("n,beta,model,p");
    for b in &a.beta_star {
        let beta = to_rational64(&ratio::parse(b).map_err(|e| anyhow!("{e}"))?)?;
        for n in range.clone() {
            if a.model != ModelArg::D {
                out!(
                    "{n},{b},s,{:.12}",
                    probability::p_noswitch_static_homogeneous(&dist, n, &beta)
                );
            }
            if a.model != ModelArg::S {
                let p = probability::p_noswitch_dynamic_homogeneous(&dist, n, &beta, summand)?;
                out!("{n},{b},d,{p:.12}");
            }
        }
    }
    Ok(Outcome::Ok)
}

fn experiment(g: &Global, a: ExperimentArgs) -> Result<Outcome> {
    let e: Experiment = a.name.parse()?;
    let mut spec = ExperimentSpec::new(e).with_seed(g.seed).with_jobs(g.jobs);
    if let Some(t) = g.trials {
        spec = spec.with_trials(t);
    }
    if let Some(v) = a.vectors {
        spec.vectors = v;
    }
    let report = experiments::run(&spec)?;
    ensure_dir(&g.out)?;
    let path = g.out.join(format!("{e}.csv"));
    fs::write(&path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    out!("wrote {}", path.display());
    out!(
        "checks={} violations={}",
        report.checks,
        report.violations.len()
    );
    for v in report.violations.iter().take(20) {
        out!("violation {v}");
    }
    Ok(if report.passed() {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}
