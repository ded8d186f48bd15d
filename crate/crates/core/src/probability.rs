//! Probability that no mode switch happens within a busy interval.
//!
//! Each HC task's largest execution in a busy interval, as a fraction `s` of
//! its WCET, follows a discrete distribution on a grid of scales. The static
//! model survives only if every task stays within its own fixed share; the
//! dynamic model survives as long as `Σ s_i u_i <= beta* Σ u_i`.
//!
//! The no-switch region is evaluated on an integer lattice: with `L` the least
//! common denominator of all `s_j u_i`, each choice has integer weight
//! `s_j u_i L` and the capacity is `floor(beta* Σ u_i L)`, so membership is
//! decided exactly.

use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{CheckedAdd, CheckedMul, One, Signed, ToPrimitive, Zero};

/// Largest task count handled by brute-force enumeration.
pub const MAX_ENUMERATION_TASKS: usize = 8;

/// Default cap on the number of lattice cells for the convolution.
pub const DEFAULT_MAX_CELLS: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProbError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("lattice needs {cells} cells, more than the configured {limit}")]
    GridOverflow { cells: u128, limit: usize },
    #[error("utilizations must be positive")]
    NonPositiveUtilization,
    #[error("beta* must lie in [0, 1]")]
    InvalidBeta,
    #[error("enumeration supports at most {MAX_ENUMERATION_TASKS} tasks, got {0}")]
    TooManyTasks(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Discrete CDF `P(s)` of the per-busy-interval maximum execution scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecDistribution {
    scales: Vec<Rational64>,
    cdf: Vec<f64>,
}

impl ExecDistribution {
    pub fn new(scales: Vec<Rational64>, cdf: Vec<f64>) -> Result<Self, ProbError> {
        let bad = |m: &str| Err(ProbError::InvalidDistribution(m.to_string()));
        if scales.is_empty() || scales.len() != cdf.len() {
            return bad("scales and cdf must be non-empty and of equal length");
        }
        if !scales[0].is_positive() || scales.windows(2).any(|w| w[0] >= w[1]) {
            return bad("scales must be positive and strictly increasing");
        }
        if *scales.last().unwrap() != Rational64::one() {
            return bad("the last scale must be 1");
        }
        if cdf.iter().any(|p| !(0.0..=1.0).contains(p)) || cdf.windows(2).any(|w| w[0] > w[1]) {
            return bad("cdf must be non-decreasing within [0, 1]");
        }
        if *cdf.last().unwrap() != 1.0 {
            return bad("cdf at scale 1 must be 1");
        }
        Ok(Self { scales, cdf })
    }

    /// The example distribution over `s = 0.1, 0.2, ..., 1.0`.
    pub fn table4() -> Self {
        let scales = (1..=10).map(|k| Rational64::new(k, 10)).collect();
        let cdf = vec![0.01, 0.05, 0.2, 0.5, 0.8, 0.9, 0.95, 0.98, 0.995, 1.0];
        Self::new(scales, cdf).expect("valid table")
    }

    /// Parses lines `s cdf` (`s` as a decimal or `p/q`); `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ProbError> {
        let mut scales = Vec::new();
        let mut cdf = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| ProbError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let mut it = line.split_whitespace();
            let (Some(s), Some(p), None) = (it.next(), it.next(), it.next()) else {
                return Err(err("expected `scale cdf`"));
            };
            let s = crate::ratio::parse(s).map_err(|_| err("bad scale"))?;
            let s = Rational64::new(
                s.numer()
                    .to_i64()
                    .ok_or_else(|| err("scale out of range"))?,
                s.denom()
                    .to_i64()
                    .ok_or_else(|| err("scale out of range"))?,
            );
            scales.push(s);
            cdf.push(p.parse::<f64>().map_err(|_| err("bad probability"))?);
        }
        Self::new(scales, cdf)
    }

    pub fn scales(&self) -> &[Rational64] {
        &self.scales
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// `p(s_k) = P(s_k) - P(s_{k-1})`.
    pub fn pmf(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cdf
            .iter()
            .map(|&p| {
                let d = p - prev;
                prev = p;
                d
            })
            .collect()
    }

    /// `P` at the largest grid scale not above `s` (0 below the grid).
    pub fn cdf_at(&self, s: &Rational64) -> f64 {
        match self.scales.iter().rposition(|g| g <= s) {
            Some(k) => self.cdf[k],
            None => 0.0,
        }
    }

    /// Inverse-CDF draw of a grid index from a uniform `u` in `[0, 1)`.
    pub fn sample_index(&self, u: f64) -> usize {
        self.cdf
            .iter()
            .position(|&p| u < p)
            .unwrap_or(self.cdf.len() - 1)
    }
}

/// Which weight is attached to each grid assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Summand {
    /// Joint mass `Π p(s_i)`: a genuine probability.
    #[default]
    Pmf,
    /// Literal `Π P(s_i)` with CDF values; not a probability measure, kept for comparison.
    RawCdf,
}

/// Static model: `Π P(beta_i)` with each `beta_i` floored to the grid.
pub fn p_noswitch_static(dist: &ExecDistribution, betas: &[Rational64]) -> f64 {
    betas.iter().map(|b| dist.cdf_at(b)).product()
}

/// Static model with `n` identical tasks.
pub fn p_noswitch_static_homogeneous(dist: &ExecDistribution, n: usize, beta: &Rational64) -> f64 {
    dist.cdf_at(beta).powi(n as i32)
}

/// The no-switch region on the integer lattice.
struct Lattice {
    /// `weights[i][k]`: weight of task `i` at grid scale `k`.
    weights: Vec<Vec<u64>>,
    capacity: u64,
}

fn lattice(
    dist: &ExecDistribution,
    utils: &[Rational64],
    beta: &Rational64,
) -> Result<Lattice, ProbError> {
    if utils.iter().any(|u| !u.is_positive()) {
        return Err(ProbError::NonPositiveUtilization);
    }
    if beta.is_negative() || *beta > Rational64::one() {
        return Err(ProbError::InvalidBeta);
    }
    let overflow = || ProbError::GridOverflow {
        cells: u128::MAX,
        limit: usize::MAX,
    };
    // Least common denominator of every s_j u_i, and of beta * Σ u.
    let mut lcd: i128 = 1;
    let mut take = |d: i64| -> Result<(), ProbError> {
        lcd = lcd.lcm(&(d as i128));
        if lcd > i64::MAX as i128 {
            return Err(overflow());
        }
        Ok(())
    };
    let total: Rational64 = utils
        .iter()
        .try_fold(Rational64::zero(), |acc, u| acc.checked_add(u))
        .ok_or_else(overflow)?;
    for u in utils {
        for s in &dist.scales {
            take(s.checked_mul(u).ok_or_else(overflow)?.denom().to_owned())?;
        }
    }
    let budget = beta.checked_mul(&total).ok_or_else(overflow)?;
    take(*budget.denom())?;
    let scaled = |r: &Rational64| -> Result<u64, ProbError> {
        let v = (*r.numer() as i128) * (lcd / (*r.denom() as i128));
        u64::try_from(v).map_err(|_| overflow())
    };
    let weights = utils
        .iter()
        .map(|u| {
            dist.scales
                .iter()
                .map(|s| scaled(&(s * u)))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let capacity = scaled(&budget)?;
    Ok(Lattice { weights, capacity })
}

fn summand_weights(dist: &ExecDistribution, summand: Summand) -> Vec<f64> {
    match summand {
        Summand::Pmf => dist.pmf(),
        Summand::RawCdf => dist.cdf.clone(),
    }
}

/// Brute-force sum over all grid assignments (at most
/// [`MAX_ENUMERATION_TASKS`] tasks). Whole subtrees that fit entirely are
/// added in one step and subtrees that cannot fit are skipped.
pub fn p_noswitch_enumerate(
    dist: &ExecDistribution,
    utils: &[Rational64],
    beta: &Rational64,
    summand: Summand,
) -> Result<f64, ProbError> {
    if utils.len() > MAX_ENUMERATION_TASKS {
        return Err(ProbError::TooManyTasks(utils.len()));
    }
    let lat = lattice(dist, utils, beta)?;
    let mass = summand_weights(dist, summand);
    let n = utils.len();
    // Suffix bounds for pruning.
    let mut max_rest = vec![0u64; n + 1];
    let mut min_rest = vec![0u64; n + 1];
    let mut mass_rest = vec![1.0f64; n + 1];
    let task_mass: f64 = mass.iter().sum();
    for i in (0..n).rev() {
        max_rest[i] = max_rest[i + 1] + lat.weights[i].iter().max().copied().unwrap_or(0);
        min_rest[i] = min_rest[i + 1] + lat.weights[i].iter().min().copied().unwrap_or(0);
        mass_rest[i] = mass_rest[i + 1] * task_mass;
    }

    fn walk(
        i: usize,
        left: u64,
        acc: f64,
        lat: &Lattice,
        mass: &[f64],
        bounds: (&[u64], &[u64], &[f64]),
    ) -> f64 {
        let (max_rest, min_rest, mass_rest) = bounds;
        if i == lat.weights.len() {
            return acc;
        }
        if max_rest[i] <= left {
            return acc * mass_rest[i];
        }
        if min_rest[i] > left {
            return 0.0;
        }
        let mut sum = 0.0;
        for (k, &w) in lat.weights[i].iter().enumerate() {
            if w <= left && mass[k] != 0.0 {
                sum += walk(i + 1, left - w, acc * mass[k], lat, mass, bounds);
            }
        }
        sum
    }
    Ok(walk(
        0,
        lat.capacity,
        1.0,
        &lat,
        &mass,
        (&max_rest, &min_rest, &mass_rest),
    ))
}

/// Dynamic-programming convolution over lattice totals `0..=capacity`.
pub fn p_noswitch_convolve(
    dist: &ExecDistribution,
    utils: &[Rational64],
    beta: &Rational64,
    summand: Summand,
    max_cells: usize,
) -> Result<f64, ProbError> {
    let lat = lattice(dist, utils, beta)?;
    let cells = lat.capacity as u128 + 1;
    if cells > max_cells as u128 {
        return Err(ProbError::GridOverflow {
            cells,
            limit: max_cells,
        });
    }
    let mass = summand_weights(dist, summand);
    let mut table = vec![0.0f64; cells as usize];
    table[0] = 1.0;
    for weights in &lat.weights {
        let mut next = vec![0.0f64; table.len()];
        for (v, &p) in table.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (k, &w) in weights.iter().enumerate() {
                let to = v as u64 + w;
                if to <= lat.capacity {
                    next[to as usize] += p * mass[k];
                }
            }
        }
        table = next;
    }
    Ok(table.iter().sum())
}

/// Dynamic model: mass of the region `Σ s_i u_i <= beta* Σ u_i`. Enumerates
/// for small task counts, convolves otherwise.
pub fn p_noswitch_dynamic(
    dist: &ExecDistribution,
    utils: &[Rational64],
    beta: &Rational64,
    summand: Summand,
) -> Result<f64, ProbError> {
    if utils.len() <= MAX_ENUMERATION_TASKS {
        p_noswitch_enumerate(dist, utils, beta, summand)
    } else {
        p_noswitch_convolve(dist, utils, beta, summand, DEFAULT_MAX_CELLS)
    }
}

/// Dynamic model with `n` identical tasks.
pub fn p_noswitch_dynamic_homogeneous(
    dist: &ExecDistribution,
    n: usize,
    beta: &Rational64,
    summand: Summand,
) -> Result<f64, ProbError> {
    p_noswitch_dynamic(dist, &vec![Rational64::one(); n], beta, summand)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn table_invariants() {
        let d = ExecDistribution::table4();
        let pmf = d.pmf();
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pmf.iter().all(|p| *p >= 0.0));
        assert_eq!(d.cdf_at(&r(45, 100)), 0.5);
        assert_eq!(d.cdf_at(&r(1, 20)), 0.0);
        assert_eq!(d.cdf_at(&r(1, 1)), 1.0);
    }

    #[test]
    fn rejects_bad_distributions() {
        let s = |v: &[i64]| v.iter().map(|k| r(*k, 10)).collect::<Vec<_>>();
        assert!(ExecDistribution::new(s(&[5, 10]), vec![0.6, 0.5]).is_err());
        assert!(ExecDistribution::new(s(&[5, 9]), vec![0.5, 1.0]).is_err());
        assert!(ExecDistribution::new(s(&[5, 10]), vec![0.5, 0.9]).is_err());
        assert!(ExecDistribution::new(s(&[10, 5]), vec![0.5, 1.0]).is_err());
        assert!(ExecDistribution::new(s(&[5, 10]), vec![0.5]).is_err());
    }

    #[test]
    fn parses_files() {
        let d = ExecDistribution::parse("# s cdf\n0.5 0.4\n1/1 1.0\n").unwrap();
        assert_eq!(d.scales(), &[r(1, 2), r(1, 1)]);
        assert!(matches!(
            ExecDistribution::parse("0.5\n"),
            Err(ProbError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn static_examples() {
        let d = ExecDistribution::table4();
        assert_eq!(p_noswitch_static_homogeneous(&d, 1, &r(1, 1)), 1.0);
        assert!((p_noswitch_static_homogeneous(&d, 2, &r(1, 2)) - 0.64).abs() < 1e-12);
        assert!(
            p_noswitch_static_homogeneous(&d, 3, &r(1, 2))
                < p_noswitch_static_homogeneous(&d, 2, &r(1, 2))
        );
    }

    #[test]
    fn single_task_matches_static() {
        let d = ExecDistribution::table4();
        for b in [r(45, 100), r(55, 100), r(7, 10), r(1, 1), r(1, 20)] {
            let dy = p_noswitch_dynamic_homogeneous(&d, 1, &b, Summand::Pmf).unwrap();
            assert!(
                (dy - p_noswitch_static_homogeneous(&d, 1, &b)).abs() < 1e-12,
                "{b}"
            );
        }
    }

    #[test]
    fn full_budget_is_certain() {
        let d = ExecDistribution::table4();
        for n in 1..=4 {
            let p = p_noswitch_dynamic_homogeneous(&d, n, &r(1, 1), Summand::Pmf).unwrap();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heterogeneous_agreement_and_overflow() {
        let d = ExecDistribution::table4();
        let u = [r(1, 7), r(2, 9), r(3, 11)];
        let e = p_noswitch_enumerate(&d, &u, &r(3, 5), Summand::Pmf).unwrap();
        let c = p_noswitch_convolve(&d, &u, &r(3, 5), Summand::Pmf, DEFAULT_MAX_CELLS).unwrap();
        assert!((e - c).abs() < 1e-12);
        assert!(matches!(
            p_noswitch_convolve(&d, &u, &r(3, 5), Summand::Pmf, 10),
            Err(ProbError::GridOverflow { .. })
        ));
        assert!(matches!(
            p_noswitch_enumerate(&d, &[r(1, 1); 9], &r(1, 2), Summand::Pmf),
            Err(ProbError::TooManyTasks(9))
        ));
        assert!(p_noswitch_dynamic(&d, &[r(0, 1)], &r(1, 2), Summand::Pmf).is_err());
    }

    #[test]
    fn raw_cdf_reading_can_exceed_one() {
        let d = ExecDistribution::table4();
        let p = p_noswitch_dynamic_homogeneous(&d, 2, &r(3, 4), Summand::RawCdf).unwrap();
        assert!(p > 1.0);
    }

    #[test]
    fn sampling_follows_cdf() {
        let d = ExecDistribution::table4();
        assert_eq!(d.sample_index(0.0), 0);
        assert_eq!(d.sample_index(0.01), 1);
        assert_eq!(d.sample_index(0.9999), 9);
    }
}
