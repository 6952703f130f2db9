use grokedge::dataset::sample_isotropic;
use grokedge::separability::{
    decide_separability, diameter, epsilon_bound, extended_svm, facet_closeness, is_separable, margin_qp, s_infinity,
};
use grokedge::Dataset;
use proptest::prelude::*;
use std::f64::consts::PI;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Points in the plane are separable from the origin iff some angular gap between
/// consecutive directions exceeds π.
fn angular_gap_oracle(data: &Dataset) -> bool {
    let mut angles: Vec<f64> = data.rows().map(|r| r[1].atan2(r[0])).collect();
    angles.sort_by(f64::total_cmp);
    let wrap = angles[0] + 2.0 * PI - angles[angles.len() - 1];
    angles.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max) > PI
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn planar_decisions_match_angular_gaps(n in 1usize..=12, seed: u64) {
        let data = sample_isotropic(n, 2, 1.0, seed).unwrap();
        prop_assert_eq!(decide_separability(&data).unwrap().separable, angular_gap_oracle(&data));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn margin_and_minimizer_scale_with_the_data(n in 6usize..40, d in 1usize..12, c in 0.05..20.0f64, seed: u64) {
        let data = sample_isotropic(n, d, 1.0, seed).unwrap();
        let scaled = data.scaled(c);
        if is_separable(&data).unwrap() {
            let (a, b) = (margin_qp(&data).unwrap(), margin_qp(&scaled).unwrap());
            prop_assert!((b.margin - c * a.margin).abs() <= 1e-7 * b.margin);
        } else {
            let (a, b) = (s_infinity(&data).unwrap().s, s_infinity(&scaled).unwrap().s);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((y - x / c).abs() <= 1e-7 * norm(&a).max(1.0) / c);
            }
        }
    }

    #[test]
    fn certificates_are_consistent(n in 2usize..40, d in 1usize..20, seed: u64) {
        let data = sample_isotropic(n, d, 1.0, seed).unwrap();
        let rep = decide_separability(&data).unwrap();
        if rep.separable {
            let s = rep.s_star.clone().unwrap();
            let m = rep.margin.unwrap();
            prop_assert!((m * norm(&s) - 1.0).abs() < 1e-8);
            // constant label −1: every logit at or below −1, the support rows on it
            let worst = data.rows().map(|r| dot(&s, r)).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((-1.0 - 1e-8..=-1.0 + 1e-8).contains(&worst), "max logit {}", worst);
            let dir = extended_svm(&data).unwrap();
            let ratio = dir.bias() / norm(dir.spatial());
            prop_assert!((ratio + 1.0 / m).abs() <= 1e-8 * (1.0 / m));
            prop_assert!(rep.s_infinity.is_none());
        } else {
            let p = rep.convex_weights.clone().unwrap();
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mut centroid = vec![0.0; d];
            for (row, w) in data.rows().zip(&p) {
                centroid.iter_mut().zip(row).for_each(|(c, x)| *c += w * x);
            }
            prop_assert!(norm(&centroid) < 1e-8, "weighted centroid {}", norm(&centroid));
            prop_assert!(rep.margin.is_none());
        }
    }

    #[test]
    fn s_infinity_respects_the_norm_bound(n in 4usize..20, d in 1usize..4, seed: u64) {
        let data = sample_isotropic(n, d, 1.0, seed).unwrap();
        prop_assume!(!is_separable(&data).unwrap());
        let s = s_infinity(&data).unwrap().s;
        let fc = facet_closeness(&data, &s);
        prop_assume!(fc.is_ok());
        let fc = fc.unwrap();
        prop_assume!(fc.epsilon > 0.0 && fc.epsilon < 1.0);
        let bound = epsilon_bound(fc.epsilon, diameter(&data), n, fc.facet.len()).unwrap();
        prop_assert!(norm(&s) >= bound * (1.0 - 1e-9) - 1e-12, "|S| {} < bound {}", norm(&s), bound);
    }
}

#[test]
fn one_dimensional_near_separable_family() {
    for k in 1..=8 {
        let eps = 10f64.powi(-k);
        let data = Dataset::from_rows(&[vec![-1.0], vec![eps]]).unwrap();
        let s = s_infinity(&data).unwrap().s[0].abs();
        let oracle = eps.ln().abs() / (1.0 + eps);
        assert!((s - oracle).abs() < 1e-10 * oracle, "eps {eps}: {s} vs {oracle}");
        let bound = epsilon_bound(eps / (1.0 + eps), 1.0 + eps, 2, 1).unwrap();
        assert!(s >= bound * (1.0 - 1e-12), "eps {eps}: {s} vs bound {bound}, oracle {oracle}");
    }
}

#[test]
fn full_rank_with_more_dimensions_than_points_is_separable() {
    for seed in 0..20 {
        let data = sample_isotropic(10, 12, 1.0, seed).unwrap();
        assert!(is_separable(&data).unwrap());
    }
}
