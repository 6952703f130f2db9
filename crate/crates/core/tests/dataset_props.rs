use grokedge::dataset::{
    label_by_quantile, reduce_to_bias_model, sample_generalized, sample_isotropic, sample_two_gaussians,
};
use grokedge::dynamics::{run, GenEvaluator};
use grokedge::{Dataset, DistributionKind, LossKind, OptimizerConfig, OptimizerKind, TwoGaussiansSpec, Weights};
use proptest::prelude::*;

fn kinds() -> impl Strategy<Value = DistributionKind> {
    prop_oneof![
        (0.1..5.0f64).prop_map(|sigma| DistributionKind::Isotropic { sigma }),
        (0.5..2.5f64, 1.0..50.0f64).prop_map(|(alpha, total_variance)| DistributionKind::PowerLawCov {
            alpha,
            total_variance
        }),
        (0.2..2.0f64, 0.05..1.0f64, 0.5..5.0f64).prop_map(|(mu_mix, sigma_mix, scale)| {
            DistributionKind::PerCoordinateMixture {
                mu_mix,
                sigma_mix,
                scale,
            }
        }),
    ]
}

/// Largest per-coordinate `|mean| / (sd / √n)`.
fn max_mean_z(data: &Dataset) -> f64 {
    let (n, d) = (data.n() as f64, data.d());
    (0..d)
        .map(|k| {
            let col: Vec<f64> = data.rows().map(|r| r[k]).collect();
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
            m.abs() / (var / n).sqrt()
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn samplers_are_pure_functions_of_the_seed(kind in kinds(), n in 1usize..40, d in 1usize..12, seed: u64) {
        let a = sample_generalized(kind, n, d, seed).unwrap();
        let b = sample_generalized(kind, n, d, seed).unwrap();
        prop_assert_eq!(a.samples(), b.samples());
        let spec = TwoGaussiansSpec { mu: 0.3, sigma_a: 0.1, sigma_b: 1.0, dim: d + 1 };
        let a = sample_two_gaussians(spec, 2 * n, seed).unwrap();
        let b = sample_two_gaussians(spec, 2 * n, seed).unwrap();
        prop_assert_eq!(a.samples(), b.samples());
        prop_assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn constant_label_generators_are_centered(kind in kinds(), seed: u64) {
        let data = sample_generalized(kind, 4000, 6, seed).unwrap();
        prop_assert!(data.labels().iter().all(|&y| y == -1.0));
        // six coordinates at a 5-sigma cut: a false alarm has probability about 3e-6
        prop_assert!(max_mean_z(&data) < 5.0);
    }

    #[test]
    fn quantile_labels_hit_the_requested_fraction(r in 0.05..1.0f64, seed: u64) {
        let data = label_by_quantile(&sample_isotropic(4000, 3, 2.0, seed).unwrap(), r).unwrap();
        let neg = data.labels().iter().filter(|&&y| y == -1.0).count() as f64 / 4000.0;
        let se = (r * (1.0 - r) / 4000.0).sqrt().max(1e-3);
        prop_assert!((neg - r).abs() < 5.0 * se, "fraction {} vs {}", neg, r);
        for (row, &y) in data.rows().zip(data.labels()) {
            prop_assert!(y == 1.0 || y == -1.0);
            prop_assert!(row.iter().all(|v| v.is_finite()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reduction_round_trip(mu in 0.1..1.0f64, d in 2usize..8, half in 2usize..15, seed: u64) {
        let spec = TwoGaussiansSpec { mu, sigma_a: 0.0, sigma_b: 1.0, dim: d + 1 };
        let full = sample_two_gaussians(spec, 2 * half, seed).unwrap();
        let (reduced, factor) = reduce_to_bias_model(&full, mu).unwrap();
        prop_assert_eq!(reduced.d(), d);
        prop_assert!((factor - mu * mu).abs() < 1e-15);

        let s0: Vec<f64> = (0..=d).map(|k| 0.05 * (k as f64 - 1.5)).collect();
        let w_full = Weights::new(s0.clone(), 0.0);
        let w_red = Weights::new(s0[1..].iter().map(|v| -mu * v).collect(), -mu * s0[0]);
        let kind = |eta: f64| OptimizerKind::GradientFlow { eta, rel_tol: 1e-11, abs_tol: 1e-13 };
        let mut cfg = OptimizerConfig::new(kind(0.5), LossKind::CrossEntropy, 1e3);
        cfg.fit_bias = false;
        cfg.keep_weights = true;
        cfg.evaluator = GenEvaluator::Off;
        let a = run(&full, &w_full, &cfg).unwrap();
        let mut cfg = OptimizerConfig::new(kind(0.5 * factor), LossKind::CrossEntropy, 1e3);
        cfg.evaluator = GenEvaluator::Off;
        let b = run(&reduced, &w_red, &cfg).unwrap();
        prop_assert_eq!(a.rows.len(), b.rows.len());
        for ((snap, ra), rb) in a.snapshots.iter().zip(&a.rows).zip(&b.rows) {
            let s_bar = mu * snap.s[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((s_bar - rb.s_norm).abs() < 1e-7, "t={} {} vs {}", ra.t, s_bar, rb.s_norm);
            prop_assert!((-mu * snap.s[0] - rb.b).abs() < 1e-7);
            prop_assert!((ra.log_train_loss - rb.log_train_loss).abs() < 1e-7);
        }
    }
}

#[test]
fn reduction_rejects_signal_noise() {
    let spec = TwoGaussiansSpec {
        mu: 0.5,
        sigma_a: 0.1,
        sigma_b: 1.0,
        dim: 4,
    };
    let data = sample_two_gaussians(spec, 10, 3).unwrap();
    assert!(reduce_to_bias_model(&data, 0.5).is_err());
}

#[test]
fn csv_has_one_column_per_coordinate_plus_label() {
    let data = sample_isotropic(3, 2, 1.0, 5).unwrap();
    let mut buf = Vec::new();
    data.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,label"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for (line, row) in rows.iter().zip(data.rows()) {
        let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(&vals[..2], row);
        assert_eq!(vals[2], -1.0);
    }
}
