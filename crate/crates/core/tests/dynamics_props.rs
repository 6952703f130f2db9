use grokedge::dataset::sample_isotropic;
use grokedge::dynamics::{
    conformal_divergence_check, conformal_time, default_init, grokking_time_rows, run, GenEvaluator,
};
use grokedge::separability::{is_separable, margin_qp, s_infinity};
use grokedge::{GrokCriterion, LossKind, OptimizerConfig, OptimizerKind, TrajectoryRow};
use proptest::prelude::*;

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn late(rows: &[TrajectoryRow], from_log_t: f64) -> Vec<&TrajectoryRow> {
    rows.iter().filter(|r| r.t > 0.0 && r.t.ln() >= from_log_t).collect()
}

fn flow(eta: f64) -> OptimizerKind {
    OptimizerKind::gradient_flow(eta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn train_loss_never_increases(n in 5usize..60, lambda in 0.05..0.95f64, sigma in 0.3..5.0f64, exp in any::<bool>(), seed: u64) {
        let d = ((lambda * n as f64).round() as usize).max(1);
        let data = sample_isotropic(n, d, sigma, seed).unwrap();
        let loss = if exp { LossKind::Exponential } else { LossKind::CrossEntropy };
        let traj = run(&data, &default_init(d, seed ^ 1), &OptimizerConfig::new(flow(0.05), loss, 1e8)).unwrap();
        prop_assert!(traj.abort.is_none());
        for w in traj.rows.windows(2) {
            let (a, b) = (w[0].log_train_loss, w[1].log_train_loss);
            prop_assert!(b <= a + 1e-9 * a.abs().max(1.0), "loss rose from {} to {} at t={}", a, b, w[1].t);
        }
    }

    #[test]
    fn divergence_bound_holds_with_the_largest_loss(n in 5usize..40, seed: u64) {
        let data = sample_isotropic(n, (n / 3).max(1), 1.0, seed).unwrap();
        let traj = run(&data, &default_init(data.d(), seed), &OptimizerConfig::new(flow(0.1), LossKind::Exponential, 1e6)).unwrap();
        let c = traj.rows.iter().map(|r| r.log_train_loss.exp()).fold(0.0, f64::max);
        prop_assert!(conformal_divergence_check(&traj, c).unwrap());
    }

    #[test]
    fn recorded_tau_matches_trapezoid_rule(n in 5usize..40, seed: u64) {
        let data = sample_isotropic(n, (n / 2).max(1), 2.0, seed).unwrap();
        let mut cfg = OptimizerConfig::new(flow(0.05), LossKind::CrossEntropy, 1e4);
        cfg.record_factor = 1.01;
        let traj = run(&data, &default_init(data.d(), seed), &cfg).unwrap();
        let re = conformal_time(&traj);
        for (a, b) in traj.rows.iter().zip(&re.rows) {
            prop_assert!((a.tau - b.tau).abs() <= 1e-3 * a.tau.max(1.0), "{} vs {}", a.tau, b.tau);
        }
    }
}

#[test]
fn inseparable_run_converges_in_weight_and_bias_tracks_log_time() {
    let data = sample_isotropic(80, 24, 1.0, 8).unwrap();
    assert!(!is_separable(&data).unwrap());
    let traj = run(&data, &default_init(24, 3), &OptimizerConfig::new(flow(0.01), LossKind::CrossEntropy, 1e60)).unwrap();
    let last = late(&traj.rows, 59.0 * std::f64::consts::LN_10);
    let (lo, hi) = last.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.s_norm), hi.max(r.s_norm)));
    assert!((hi - lo) / hi < 0.01, "last-decade |S| spread {lo}..{hi}");
    let target = s_infinity(&data).unwrap().s.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((traj.last().s_norm - target).abs() < 1e-3 * target, "{} vs {target}", traj.last().s_norm);
    let b = slope(&late(&traj.rows, 20.0).iter().map(|r| (r.t.ln(), r.b)).collect::<Vec<_>>());
    assert!((b + 1.0).abs() < 0.02, "db/dlog t = {b}");
    let drift: Vec<f64> = last.iter().map(|r| r.b + r.t.ln()).collect();
    let spread = drift.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - drift.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-3, "b + log t varies by {spread} over the last decade");
}

#[test]
fn separable_run_follows_margin_exponents() {
    for (n, d, seed) in [(60, 48, 2u64), (50, 30, 4)] {
        let data = sample_isotropic(n, d, 1.0, seed).unwrap();
        let m = margin_qp(&data).unwrap().margin;
        let traj = run(&data, &default_init(d, seed), &OptimizerConfig::new(flow(0.01), LossKind::CrossEntropy, 1e40)).unwrap();
        assert!(traj.abort.is_none(), "{:?}", traj.abort);
        let rows = late(&traj.rows, 15.0);
        let b = slope(&rows.iter().map(|r| (r.t.ln(), r.b)).collect::<Vec<_>>());
        let s = slope(&rows.iter().map(|r| (r.t.ln(), r.s_norm)).collect::<Vec<_>>());
        let (pb, ps) = (-1.0 / (1.0 + m * m), m / (1.0 + m * m));
        assert!(((b - pb) / pb).abs() < 0.1, "n {n} d {d}: b slope {b} vs {pb}");
        assert!(((s - ps) / ps).abs() < 0.1, "n {n} d {d}: |S| slope {s} vs {ps}");
    }
}

/// First `(τ, t, b)` at which `σ‖S‖` reaches `level`, interpolated linearly between rows.
fn crossing(rows: &[TrajectoryRow], sigma: f64, level: f64) -> (f64, f64, f64) {
    let k = rows.iter().position(|r| sigma * r.s_norm >= level).expect("level reached");
    let (a, c) = (&rows[k - 1], &rows[k]);
    let f = (level - sigma * a.s_norm) / (sigma * (c.s_norm - a.s_norm));
    let lerp = |x: f64, y: f64| x + f * (y - x);
    (lerp(a.tau, c.tau), lerp(a.t, c.t), lerp(a.b, c.b))
}

#[test]
fn rescaling_the_inputs_speeds_up_the_weights() {
    let base = sample_isotropic(60, 12, 1.0, 5).unwrap();
    let target = s_infinity(&base).unwrap().s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut scaled_tau = Vec::new();
    let mut excess = Vec::new();
    let mut times = Vec::new();
    for sigma in [1.0, 2.0, 5.0, 10.0] {
        let mut cfg = OptimizerConfig::new(flow(0.01), LossKind::Exponential, 1e8);
        cfg.record_factor = 1.01;
        cfg.evaluator = GenEvaluator::Off;
        let mut w0 = default_init(12, 1);
        w0.s.iter_mut().for_each(|v| *v /= sigma);
        let traj = run(&base.scaled(sigma), &w0, &cfg).unwrap();
        let (tau, t, b) = crossing(&traj.rows, sigma, 0.9 * target);
        // t = ∫ e^{-b} dτ with b decreasing from 0
        assert!(t >= tau * (1.0 - 1e-6) && t <= tau * (-b).exp() * (1.0 + 1e-6), "sigma {sigma}: t {t} tau {tau} b {b}");
        scaled_tau.push(tau * sigma * sigma);
        excess.push(t / tau);
        times.push(t);
    }
    // in conformal time the normalized weights follow one path at rate ησ²
    let (lo, hi) = scaled_tau.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert!(hi / lo < 1.01, "sigma^2 tau_90 ranges over {lo}..{hi}");
    assert!(times.windows(2).all(|w| w[1] < w[0]), "{times:?}");
    assert!(excess.windows(2).all(|w| w[1] < w[0]) && excess[3] < 1.1, "t/tau = {excess:?}");
}

#[test]
fn adam_memorizes_before_it_generalizes() {
    let data = sample_isotropic(1000, 495, 1.0, 2).unwrap();
    let mut cfg = OptimizerConfig::new(OptimizerKind::adam(0.01), LossKind::CrossEntropy, 1e4);
    cfg.evaluator = GenEvaluator::Analytic { sigma: 1.0 };
    let traj = run(&data, &default_init(495, 102), &cfg).unwrap();
    let fit = traj.rows.iter().find(|r| r.train_acc >= 1.0).map(|r| r.t).expect("train accuracy reaches 1");
    let rise = traj.rows.iter().find(|r| r.gen_acc > 0.6).map(|r| r.t).expect("gen accuracy eventually rises");
    assert!(rise >= 10.0 * fit, "train fit at {fit}, gen above 0.6 at {rise}");
}

#[test]
fn constructed_crossings_give_the_expected_delay() {
    let row = |t: f64, train_acc: f64, gen_acc: f64| TrajectoryRow {
        t,
        tau: t,
        s_norm: 0.0,
        b: 0.0,
        log_train_loss: 0.0,
        train_acc,
        log_gen_loss: 0.0,
        gen_acc,
    };
    let rows = vec![row(0.0, 0.0, 0.0), row(10.0, 1.0, 0.1), row(1000.0, 1.0, 1.0)];
    let g = grokking_time_rows(&rows, GrokCriterion::Accuracy { level: 1.0 });
    assert_eq!((g.t_train, g.t_gen, g.delta), (Some(10.0), Some(1000.0), Some(990.0)));
    let g = grokking_time_rows(&rows[..2], GrokCriterion::Accuracy { level: 1.0 });
    assert_eq!((g.t_gen, g.delta), (None, None));
}
