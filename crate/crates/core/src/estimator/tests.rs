use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::mathcore::{sigmoid, sigmoid_prime, CovarianceState, Vector};
use crate::rng::{stream_rng, Stream};

fn vec2(a: f64, b: f64) -> Vector<f64> {
    Vector::new(vec![a, b]).unwrap()
}

fn pair(v: &[f64]) -> PairFeature<f64> {
    PairFeature::from_vector(Vector::new(v.to_vec()).unwrap())
}

/// Records with `ψ` uniform in the unit disk (2-dim) and labels drawn from the planted model.
fn planted_records(theta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<PreferenceRecord<f64>> {
    let dim = theta.len();
    (0..n)
        .map(|t| {
            let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            let psi: Vec<f64> = raw.iter().map(|v| v / norm).collect();
            let u: f64 = theta.iter().zip(&psi).map(|(a, b)| a * b).sum();
            let label = if rng.random::<f64>() < sigmoid(u) { 1 } else { -1 };
            PreferenceRecord::new(t, 0, 0, 1, label, pair(&psi))
        })
        .collect()
}

fn direct_objective(records: &[PreferenceRecord<f64>], theta: &[f64], lambda: f64) -> f64 {
    let mut f = 0.5 * lambda * theta.iter().map(|v| v * v).sum::<f64>();
    for r in records {
        let u: f64 = theta.iter().zip(r.psi_policy.psi().as_slice()).map(|(a, b)| a * b).sum();
        f += (1.0 + (-(r.label as f64) * u).exp()).ln();
    }
    f
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Grid search to bracket the minimizer, then nested golden-section refinement.
fn grid_oracle(records: &[PreferenceRecord<f64>], lambda: f64) -> [f64; 2] {
    let obj = |a: f64, b: f64| direct_objective(records, &[a, b], lambda);
    let (mut best, mut best_f) = ((0.0, 0.0), f64::INFINITY);
    let step = 0.05;
    for i in -200..=200 {
        for j in -200..=200 {
            let (a, b) = (i as f64 * step, j as f64 * step);
            let v = obj(a, b);
            if v < best_f {
                best_f = v;
                best = (a, b);
            }
        }
    }
    let inner = |a: f64| golden_section(|b| obj(a, b), best.1 - 2.0 * step, best.1 + 2.0 * step);
    let a = golden_section(|a| obj(a, inner(a)), best.0 - 2.0 * step, best.0 + 2.0 * step);
    [a, inner(a)]
}

#[test]
fn empty_records_give_zero() {
    let fit = fit_mle::<f64>(&[], 4, 0.5, None).unwrap();
    assert!(fit.theta.is_zero());
    assert!(fit.converged);
    assert_eq!(fit.iterations, 0);
}

#[test]
fn planted_two_dim_matches_grid_oracle() {
    let mut rng = stream_rng(2024, Stream::Oracle);
    let records = planted_records(&[1.5, -0.8], 200, &mut rng);
    let fit = fit_mle(&records, 2, 0.1, None).unwrap();
    assert!(fit.converged);
    let oracle = grid_oracle(&records, 0.1);
    for i in 0..2 {
        assert!(
            (fit.theta[i] - oracle[i]).abs() < 1e-6,
            "coordinate {i}: newton {} vs oracle {}",
            fit.theta[i],
            oracle[i]
        );
    }
}

#[test]
fn flipping_labels_negates_the_estimate() {
    let mut rng = stream_rng(5, Stream::Oracle);
    let records = planted_records(&[0.7, 0.2, -1.1, 0.4], 300, &mut rng);
    let flipped: Vec<_> = records
        .iter()
        .map(|r| PreferenceRecord::new(r.round, 0, 0, 1, -r.label, r.psi_policy.clone()))
        .collect();
    let a = fit_mle(&records, 4, 1.0, None).unwrap();
    let b = fit_mle(&flipped, 4, 1.0, None).unwrap();
    for i in 0..4 {
        assert!((a.theta[i] + b.theta[i]).abs() < 1e-10);
    }
}

#[test]
fn warm_start_does_not_change_the_minimizer() {
    let mut rng = stream_rng(6, Stream::Oracle);
    let records = planted_records(&[2.0, -1.0, 0.5, 0.0, 1.0, -0.3], 500, &mut rng);
    let cold = fit_mle(&records, 6, 0.3, None).unwrap();
    let far = Vector::new(vec![5.0, 5.0, -5.0, 3.0, -2.0, 1.0]).unwrap();
    let warm = fit_mle(&records, 6, 0.3, Some(&far)).unwrap();
    assert!(cold.converged && warm.converged);
    for i in 0..6 {
        assert!((cold.theta[i] - warm.theta[i]).abs() < 1e-8);
    }
    assert!(cold.grad_norm <= 1e-10);
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = stream_rng(7, Stream::Oracle);
    let records = planted_records(&[1.0, -2.0, 0.5], 150, &mut rng);
    let data = LogisticData::from_records(&records, 3).unwrap();
    let lambda = 0.7;
    let h = 1e-6;
    for _ in 0..20 {
        let theta: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g = data.gradient(&theta, lambda);
        for i in 0..3 {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (data.objective(&up, lambda) - data.objective(&dn, lambda)) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(1.0);
            assert!(rel <= 1e-5, "coordinate {i}: {} vs {}", g[i], fd);
        }
        // the objective agrees with a direct evaluation
        assert!((data.objective(&theta, lambda) - direct_objective(&records, &theta, lambda)).abs() < 1e-9);
    }
}

#[test]
fn weighted_rows_equal_repeated_rows() {
    let psi = vec2(0.3, -0.4);
    let mut weighted = LogisticData::new(2);
    weighted.push(&psi, 3.0, 2.0).unwrap();
    let mut repeated = LogisticData::new(2);
    for _ in 0..3 {
        repeated.push(&psi, 1.0, 0.0).unwrap();
    }
    for _ in 0..2 {
        repeated.push(&psi, 0.0, 1.0).unwrap();
    }
    let opts = NewtonOptions::for_scalar::<f64>();
    let a = fit_logistic(&weighted, 0.5, None, opts).unwrap();
    let b = fit_logistic(&repeated, 0.5, None, opts).unwrap();
    for i in 0..2 {
        assert!((a.theta[i] - b.theta[i]).abs() < 1e-12);
    }
}

#[test]
fn mle_rejects_bad_lambda_and_dimension() {
    assert!(matches!(
        fit_mle::<f64>(&[], 2, 0.0, None),
        Err(EstimatorError::InvalidParameter(_))
    ));
    let warm = Vector::<f64>::zeros(3);
    assert!(fit_mle::<f64>(&[], 2, 1.0, Some(&warm)).is_err());
}

#[test]
fn gap_estimate_cases() {
    let zero = Vector::<f64>::zeros(4);
    let psi = pair(&[0.1, 0.2, -0.3, 0.4]);
    assert_eq!(gap_estimate(&zero, &psi).unwrap(), 0.0);
    let theta = Vector::new(vec![0.7, -1.3, -0.7, 1.3]).unwrap();
    let a = gap_estimate(&theta, &psi).unwrap();
    let b = gap_estimate(&theta, &psi.swapped()).unwrap();
    assert!((a + b).abs() < 1e-14);
    assert!(gap_estimate(&Vector::<f64>::zeros(2), &psi).is_err());
}

#[test]
fn curvature_cases() {
    let hist = vec![pair(&[0.5, 0.1]), pair(&[-0.2, 0.9])];
    let c = local_curvature(&Vector::<f64>::zeros(2), &hist).unwrap();
    assert_eq!(c.kappa, 0.25);
    assert!(!c.empty);

    let theta = vec2(4.0, 0.0);
    let single = local_curvature(&theta, &[pair(&[0.5, 0.0])]).unwrap();
    assert!((single.kappa - 0.1049935854).abs() < 1e-10);
    assert_eq!(single.logit_bound, 2.0);

    let empty = local_curvature(&theta, &[]).unwrap();
    assert!(empty.empty);
    assert_eq!(empty.kappa, 0.25);
}

#[test]
fn confidence_width_cases() {
    let state = CovarianceState::new(4, 1.0_f64).unwrap();
    let w = confidence_width(0.25, &state, 1.0, 0.1).unwrap();
    let expected = 4.0 * (1.0 + (2.0 * 10f64.ln()).sqrt());
    assert!((w - expected).abs() < 1e-12);
    assert!((w - 12.5838).abs() < 1e-4);

    // δ → 1: log(1/δ) → 0
    let near_one = confidence_width(0.25, &state, 1.0, 1.0 - 1e-15).unwrap();
    assert!((near_one - 4.0).abs() < 1e-6);

    let half = confidence_width(0.125, &state, 1.0, 0.1).unwrap();
    assert!((half - 2.0 * w).abs() < 1e-12);

    assert!(confidence_width(0.0, &state, 1.0, 0.1).is_err());
    assert!(confidence_width(-0.1, &state, 1.0, 0.1).is_err());
    assert!(confidence_width(0.25, &state, 1.0, 1.5).is_err());
}

#[test]
fn confidence_width_grows_with_data() {
    let mut state = CovarianceState::new(2, 1.0_f64).unwrap();
    let mut prev = confidence_width(0.2, &state, 2.0, 0.1).unwrap();
    for i in 0..50 {
        let angle = i as f64 * 0.37;
        state.sm_update(&vec2(angle.cos() * 0.9, angle.sin() * 0.9)).unwrap();
        let w = confidence_width(0.2, &state, 2.0, 0.1).unwrap();
        assert!(w >= prev);
        prev = w;
    }
}

#[test]
fn empirical_width_cases() {
    let state = CovarianceState::new(2, 1.0_f64).unwrap();
    let mut buf = RadiusBuffer::new(8);
    buf.push(pair(&[0.2, 0.0]));
    let ew = empirical_width(&buf, &state, 2e-2, 1e-3).unwrap();
    assert!((ew.r_bar - 0.2).abs() < 1e-15);
    assert!((ew.width_gamma - 0.02 / 0.201).abs() < 1e-15);
    assert!((ew.width_gamma - 0.0995).abs() < 1e-4);

    let mut same = RadiusBuffer::new(8);
    for _ in 0..5 {
        same.push(pair(&[0.0, 0.35]));
    }
    assert!((empirical_width(&same, &state, 0.02, 1e-3).unwrap().r_bar - 0.35).abs() < 1e-15);

    let mut even = RadiusBuffer::new(8);
    even.push(pair(&[0.1, 0.0]));
    even.push(pair(&[0.0, 0.3]));
    assert!((empirical_width(&even, &state, 0.02, 1e-3).unwrap().r_bar - 0.2).abs() < 1e-15);

    let empty = empirical_width(&RadiusBuffer::new(4), &state, 0.02, 1e-3).unwrap();
    assert!(empty.empty);
    assert_eq!(empty.r_bar, 0.0);
    assert!((empty.width_gamma - 20.0).abs() < 1e-12);
}

#[test]
fn buffer_is_fifo_and_bounded() {
    let mut buf = RadiusBuffer::new(3);
    for i in 0..5 {
        buf.push(pair(&[i as f64 * 0.1, 0.0]));
    }
    assert_eq!(buf.len(), 3);
    let firsts: Vec<f64> = buf.iter().map(|p| p.psi()[0]).collect();
    assert_eq!(firsts, vec![0.2, 0.30000000000000004, 0.4]);
}

#[test]
fn width_proxy_on_median_feature() {
    let mut rng = stream_rng(3, Stream::Policy);
    let mut state = CovarianceState::new(4, 1.0_f64).unwrap();
    let mut buf = RadiusBuffer::new(9);
    for _ in 0..9 {
        let raw: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
        let psi = pair(&raw);
        state.sm_update(psi.psi()).unwrap();
        buf.push(psi);
    }
    let (c_b, eps) = (0.02, 1e-3);
    let ew = empirical_width(&buf, &state, c_b, eps).unwrap();
    // odd count: the median is attained by a buffer element
    let median_psi = buf
        .iter()
        .find(|p| (state.quad_form(p.psi()).unwrap().sqrt() - ew.r_bar).abs() == 0.0)
        .unwrap();
    let b = bonus(median_psi, &state, ew.width_gamma).unwrap();
    assert!((b - c_b * ew.r_bar / (ew.r_bar + eps)).abs() < 1e-12);
}

#[test]
fn bonus_cases() {
    let state = CovarianceState::new(2, 1.0_f64).unwrap();
    let psi = pair(&[0.6, 0.8]);
    assert_eq!(bonus(&psi, &state, 0.0).unwrap(), 0.0);
    assert!((bonus(&psi, &state, 1.0).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(bonus(&pair(&[0.0, 0.0]), &state, 3.0).unwrap(), 0.0);

    let mut s = state.clone();
    let e1 = pair(&[1.0, 0.0]);
    let e2 = pair(&[0.0, 1.0]);
    for _ in 0..25 {
        s.sm_update(e1.psi()).unwrap();
    }
    let b1 = bonus(&e1, &s, 1.0).unwrap();
    let b2 = bonus(&e2, &s, 1.0).unwrap();
    assert!(b1 < b2);
    // direct inverse of diag(26, 1)
    assert!((b1 - (1.0_f64 / 26.0).sqrt()).abs() < 1e-12);
    assert!((b2 - 1.0).abs() < 1e-12);
}

#[test]
fn record_orientation_invariant() {
    let psi = pair(&[0.1, 0.2, 0.3, 0.4]);
    let won = PreferenceRecord::new(1, 0, 2, 5, 1, psi.clone());
    assert_eq!((won.winner_id, won.loser_id), (2, 5));
    assert_eq!(won.psi_wl, psi);
    let lost = PreferenceRecord::new(1, 0, 2, 5, -1, psi.clone());
    assert_eq!((lost.winner_id, lost.loser_id), (5, 2));
    assert_eq!(lost.psi_wl, psi.swapped());
}

proptest! {
    #[test]
    fn kappa_is_sigma_prime_of_bound_and_non_increasing(
        theta in proptest::collection::vec(-5.0f64..5.0, 4),
        psis in proptest::collection::vec(proptest::collection::vec(-0.5f64..0.5, 4), 1..40),
    ) {
        let theta = Vector::new(theta).unwrap();
        let mut tracker = CurvatureTracker::new(theta.clone());
        let mut prev = tracker.current();
        let mut history = Vec::new();
        for raw in psis {
            let p = pair(&raw);
            tracker.observe(&p).unwrap();
            history.push(p);
            let cur = tracker.current();
            prop_assert!(cur.kappa <= prev.kappa);
            prop_assert!(cur.logit_bound >= prev.logit_bound);
            prop_assert!((cur.kappa - sigmoid_prime(cur.logit_bound)).abs() <= 1e-14);
            prev = cur;
        }
        let batch = local_curvature(&theta, &history).unwrap();
        let direct_min = history
            .iter()
            .map(|p| sigmoid_prime(theta.dot(p.psi()).unwrap()))
            .fold(f64::INFINITY, f64::min);
        prop_assert!((batch.kappa - direct_min).abs() <= 1e-15);
    }
}
