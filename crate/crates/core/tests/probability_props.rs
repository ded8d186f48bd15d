use mcdyn::probability::{
    p_noswitch_convolve, p_noswitch_dynamic_homogeneous, p_noswitch_enumerate,
    p_noswitch_static_homogeneous, ExecDistribution, Summand, DEFAULT_MAX_CELLS,
};
use num_rational::Rational64;
use proptest::prelude::*;

/// Plain nested loop over every scale assignment.
fn brute_force(dist: &ExecDistribution, utils: &[Rational64], beta: Rational64) -> f64 {
    let pmf = dist.pmf();
    let k = pmf.len();
    let cap = beta * utils.iter().copied().sum::<Rational64>();
    let mut total = 0.0;
    let mut idx = vec![0usize; utils.len()];
    loop {
        let load: Rational64 = idx
            .iter()
            .zip(utils)
            .map(|(&i, &u)| dist.scales()[i] * u)
            .sum();
        if load <= cap {
            total += idx.iter().map(|&i| pmf[i]).product::<f64>();
        }
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return total;
            }
            idx[pos] += 1;
            if idx[pos] < k {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn utils(max: usize) -> impl Strategy<Value = Vec<Rational64>> {
    prop::collection::vec((1i64..=20).prop_map(|k| Rational64::new(k, 20)), 1..=max)
}

fn beta() -> impl Strategy<Value = Rational64> {
    (0i64..=20).prop_map(|k| Rational64::new(k, 20))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_brute_force(u in utils(4), b in beta()) {
        let d = ExecDistribution::table4();
        let got = p_noswitch_enumerate(&d, &u, &b, Summand::Pmf).unwrap();
        prop_assert!((got - brute_force(&d, &u, b)).abs() < 1e-12);
    }

    #[test]
    fn convolution_matches_enumeration(u in utils(6), b in beta()) {
        let d = ExecDistribution::table4();
        let e = p_noswitch_enumerate(&d, &u, &b, Summand::Pmf).unwrap();
        let c = p_noswitch_convolve(&d, &u, &b, Summand::Pmf, DEFAULT_MAX_CELLS).unwrap();
        prop_assert!((e - c).abs() < 1e-9, "{e} vs {c}");
    }

    #[test]
    fn monotone_in_beta(u in utils(5), k in 0i64..20) {
        let d = ExecDistribution::table4();
        let lo = p_noswitch_enumerate(&d, &u, &Rational64::new(k, 20), Summand::Pmf).unwrap();
        let hi = p_noswitch_enumerate(&d, &u, &Rational64::new(k + 1, 20), Summand::Pmf).unwrap();
        prop_assert!(lo <= hi + 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&lo));
    }

    #[test]
    fn pooling_never_hurts(n in 1usize..=6, b in beta()) {
        let d = ExecDistribution::table4();
        let dynamic = p_noswitch_dynamic_homogeneous(&d, n, &b, Summand::Pmf).unwrap();
        let fixed = p_noswitch_static_homogeneous(&d, n, &b);
        prop_assert!(dynamic + 1e-12 >= fixed, "n={n} beta={b}: {dynamic} < {fixed}");
    }
}
