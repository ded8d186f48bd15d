use mcdyn::analysis::{
    max_alpha_given_beta, max_beta_given_alpha, max_dynamic_su, optimal_beta_for_su,
    total_system_utilization,
};
use mcdyn::ratio::{int, one, q, zero};
use mcdyn::taskmodel::distribute_hc_budget_equal;
use mcdyn::{theorem1_test, Frac, McTask, TaskSet, Utilization};
use num_traits::{Signed, Zero};
use proptest::prelude::*;

fn util() -> impl Strategy<Value = Utilization> {
    (1i64..=100, 1i64..=100).prop_map(|(l, h)| Utilization::new(q(l, 100), q(h, 100)))
}

fn frac() -> impl Strategy<Value = Frac> {
    (0i64..=20).prop_map(|k| q(k, 20))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn verdict_matches_load_conditions(u in util(), a in frac(), b in frac()) {
        let v = theorem1_test(&u, &a, &b).unwrap();
        let lc_side = (one() - &a) * &u.lc;
        let lc_mode = |x: &Frac| &lc_side + (&b * &u.hc + &a * &u.lc) / x <= one();
        let hc_mode = |x: &Frac| x * &lc_side + &u.hc + &a * &u.lc <= one();
        if v.schedulable {
            prop_assert!(v.x_lo <= v.x_hi);
            prop_assert!(v.x_lo.is_positive() && v.x_hi <= one());
            prop_assert!(lc_mode(&v.x_lo) && hc_mode(&v.x_lo));
            prop_assert!(lc_mode(&v.x_hi) && hc_mode(&v.x_hi));
        } else {
            // No grid point of x satisfies both load conditions.
            for k in 1..=200 {
                let x = q(k, 200);
                prop_assert!(!(lc_mode(&x) && hc_mode(&x)), "x = {k}/200 admissible");
            }
        }
    }

    #[test]
    fn smaller_service_stays_schedulable(u in util(), a in frac(), b in frac(), da in frac(), db in frac()) {
        let v = theorem1_test(&u, &a, &b).unwrap();
        if v.schedulable {
            let (a2, b2) = (&a * &da, &b * &db);
            prop_assert!(theorem1_test(&u, &a2, &b2).unwrap().schedulable);
        }
    }

    #[test]
    fn max_alpha_is_tight(u in util(), b in (0i64..20).prop_map(|k| q(k, 20))) {
        match max_alpha_given_beta(&u, &b) {
            Ok(a) => {
                prop_assert!(a >= zero() && a <= one());
                if let Some(m) = u.threshold().filter(|_| u.total() > one()) {
                    prop_assert!((one() - &a) * (one() - &b) >= m || a.is_zero());
                    if a < one() && a.is_positive() {
                        let bigger = &a + q(1, 1_000_000);
                        prop_assert!((one() - &bigger) * (one() - &b) < m);
                    }
                }
            }
            Err(_) => prop_assert!(u.total() > one()),
        }
    }

    #[test]
    fn max_alpha_and_max_beta_are_inverse(u in util(), b in (0i64..19).prop_map(|k| q(k, 20))) {
        if let Ok(a) = max_alpha_given_beta(&u, &b) {
            if a.is_positive() && a < one() {
                prop_assert_eq!(max_beta_given_alpha(&u, &a).unwrap(), b);
            }
        }
    }

    #[test]
    fn optimum_beats_a_grid(u in util(), w in (1u32..=50).prop_map(|k| k as f64 / 50.0)) {
        let Ok(best) = max_dynamic_su(&u, w) else { return Ok(()) };
        let beta = optimal_beta_for_su(&u, w).unwrap();
        prop_assert!((0.0..=1.0).contains(&beta));
        for k in 0..=1000 {
            let b = k as f64 / 1000.0;
            if let Ok(su) = total_system_utilization(&u, w, b) {
                prop_assert!(su <= best + 1e-9, "grid {b} gives {su} > {best}");
            }
        }
    }

    #[test]
    fn equal_split_preserves_reserved_load(
        periods in prop::collection::vec((2i64..=50, 1i64..=10), 1..6),
        a in frac(),
    ) {
        let tasks: Vec<McTask> = periods
            .iter()
            .enumerate()
            .map(|(i, &(t, c))| McTask::lc(i + 1, int(t), int(c.min(t)), one()).unwrap())
            .chain(std::iter::once(McTask::hc(100, int(10), int(1)).unwrap()))
            .collect();
        let ts = TaskSet::new(tasks).unwrap();
        let alphas = distribute_hc_budget_equal(&ts, &a).unwrap();
        let mut reserved = zero();
        for t in ts.lc_tasks() {
            let ai = &alphas[&t.id()];
            prop_assert!(*ai >= zero() && *ai <= one());
            reserved += ai * t.utilization();
        }
        prop_assert_eq!(reserved, &a * ts.u_lc());
    }
}
