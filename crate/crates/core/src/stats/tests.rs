use super::*;
use proptest::prelude::*;
use std::f64::consts::PI;

// Oracles: explicit Gaussian log-densities, naive loops, no prefix sums.

fn log_density(x: f64, mean: f64, sigma2: f64) -> f64 {
    -0.5 * (2.0 * PI * sigma2).ln() - (x - mean).powi(2) / (2.0 * sigma2)
}

fn naive_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// log sup_mu prod f_mu(x) - log prod f_ref(x); the supremum sits at the sample mean.
fn log_profile_ratio(xs: &[f64], reference: f64, sigma2: f64) -> f64 {
    let mu_hat = naive_mean(xs);
    xs.iter()
        .map(|&x| log_density(x, mu_hat, sigma2) - log_density(x, reference, sigma2))
        .sum()
}

fn sup_log_lik(xs: &[f64], sigma2: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mu_hat = naive_mean(xs);
    xs.iter().map(|&x| log_density(x, mu_hat, sigma2)).sum()
}

fn oracle_post_terms(xs: &[f64], mu0: f64, sigma2: f64) -> Vec<f64> {
    (1..=xs.len())
        .map(|k| log_profile_ratio(&xs[k - 1..], mu0, sigma2))
        .collect()
}

fn oracle_split_terms(xs: &[f64], sigma2: f64) -> Vec<f64> {
    let n = xs.len();
    let whole = sup_log_lik(xs, sigma2);
    (1..n)
        .map(|k| sup_log_lik(&xs[..k], sigma2) + sup_log_lik(&xs[k..], sigma2) - whole)
        .collect()
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn naive_lse(v: &[f64]) -> f64 {
    v.iter().map(|t| t.exp()).sum::<f64>().ln()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-12
}

fn prefix(xs: &[f64]) -> PrefixState {
    PrefixState::from_observations(xs.iter().copied())
}

#[test]
fn prefix_append_examples() {
    let s0 = PrefixState::new();
    let s1 = prefix_append(&s0, 0.0);
    assert_eq!(s1.len(), 1);
    assert_eq!(s1.cumsum(), &[0.0, 0.0]);
    let s2 = prefix_append(&s1, 2.0);
    assert_eq!(s2.cumsum(), &[0.0, 0.0, 2.0]);
    let s3 = prefix_append(&s2, -1.0);
    assert_eq!(s3.cumsum(), &[0.0, 0.0, 2.0, 1.0]);
    assert_eq!(s0.len(), 0);
}

#[test]
fn segment_mean_examples() {
    let s = prefix(&[0.0, 2.0]);
    assert_eq!(s.segment_mean(1, 2).unwrap(), 1.0);
    assert_eq!(s.segment_mean(2, 2).unwrap(), 2.0);
    let s = prefix(&[0.0, 0.0, 2.0, 2.0]);
    assert_eq!(s.segment_mean(3, 4).unwrap(), 2.0);
    assert!(matches!(s.segment_mean(0, 2), Err(QcdError::IndexRange { .. })));
    assert!(matches!(s.segment_mean(3, 2), Err(QcdError::IndexRange { .. })));
    assert!(matches!(s.segment_mean(1, 5), Err(QcdError::IndexRange { .. })));
}

#[test]
fn compensated_prefix_over_long_horizon() {
    // 1e5 samples of 0.1 around a large offset: the naive running sum drifts.
    let xs: Vec<f64> = (0..100_000).map(|i| 1e6 + if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
    let s = prefix(&xs);
    let mean = s.segment_mean(99_001, 100_000).unwrap();
    assert!((mean - 1e6).abs() < 1e-6, "{mean}");
}

#[test]
fn kl_examples() {
    assert_eq!(kl_gauss(0.0, 0.0, 1.0).unwrap(), 0.0);
    assert_eq!(kl_gauss(1.0, 0.0, 1.0).unwrap(), 0.5);
    assert_eq!(kl_gauss(3.0, 1.0, 2.0).unwrap(), 1.0);
    assert!(matches!(kl_gauss(1.0, 0.0, 0.0), Err(QcdError::NonPositiveVariance(_))));
    assert!(kl_gauss(1.0, 0.0, -1.0).is_err());
}

#[test]
fn llr_matches_density_ratio() {
    assert_eq!(llr_gauss(0.5, 0.0, 1.0, 1.0).unwrap(), 0.0);
    for &(x, expected) in &[(1.0, 0.5), (0.0, -0.5)] {
        let oracle = log_density(x, 1.0, 1.0) - log_density(x, 0.0, 1.0);
        assert!(close(oracle, expected, 1e-12));
        assert!(close(llr_gauss(x, 0.0, 1.0, 1.0).unwrap(), expected, 1e-12));
    }
    assert!(llr_gauss(1.0, 0.0, 1.0, 0.0).is_err());
}

fn cusum_max_form(xs: &[f64], mu0: f64, mu1: f64, sigma2: f64) -> f64 {
    let n = xs.len();
    (1..=n)
        .map(|k| {
            xs[k - 1..]
                .iter()
                .map(|&x| log_density(x, mu1, sigma2) - log_density(x, mu0, sigma2))
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn sr_sum_form(xs: &[f64], mu0: f64, mu1: f64, sigma2: f64) -> f64 {
    let n = xs.len();
    (1..=n)
        .map(|k| {
            xs[k - 1..]
                .iter()
                .map(|&x| (log_density(x, mu1, sigma2) - log_density(x, mu0, sigma2)).exp())
                .product::<f64>()
        })
        .sum()
}

#[test]
fn cusum_examples() {
    assert_eq!(cusum_update(0.0, 0.5), 0.5);
    assert_eq!(cusum_update(-2.0, 0.3), 0.3);
    let xs = [1.0, 1.0];
    let mut c = 0.0;
    for &x in &xs {
        c = cusum_update(c, llr_gauss(x, 0.0, 1.0, 1.0).unwrap());
    }
    assert_eq!(c, 1.0);
    assert!(close(cusum_max_form(&xs, 0.0, 1.0, 1.0), 1.0, 1e-12));
}

#[test]
fn sr_examples() {
    assert_eq!(sr_update(0.0, 1.0).unwrap(), 1.0);
    assert_eq!(sr_update(1.0, 1.0).unwrap(), 2.0);
    assert!(matches!(sr_update(1.0, 0.0), Err(QcdError::NonPositiveLikelihoodRatio(_))));
    assert!(sr_update(1.0, -1.0).is_err());
    let xs = [0.0, 2.0];
    let mut s = 0.0;
    for &x in &xs {
        s = sr_update(s, llr_gauss(x, 0.0, 1.0, 1.0).unwrap().exp()).unwrap();
    }
    assert!(close(s, sr_sum_form(&xs, 0.0, 1.0, 1.0), 1e-12));
}

#[test]
fn glr_post_examples() {
    let w = Window::Full;
    assert_eq!(glr_post_stat(&prefix(&[0.0, 0.0, 0.0]), 0.0, 1.0, w).unwrap(), 0.0);
    assert_eq!(glr_post_stat(&prefix(&[0.0, 2.0]), 0.0, 1.0, w).unwrap(), 2.0);
    assert!(close(max(&oracle_post_terms(&[0.0, 2.0], 0.0, 1.0)), 2.0, 1e-12));
    assert_eq!(glr_post_stat(&prefix(&[2.0]), 0.0, 1.0, w).unwrap(), 2.0);
    assert!(matches!(
        glr_post_stat(&PrefixState::new(), 0.0, 1.0, w),
        Err(QcdError::NotEnoughObservations { .. })
    ));
    assert!(glr_post_stat(&prefix(&[1.0]), 0.0, 1.0, Window::Last(0)).is_err());
}

#[test]
fn gsr_post_examples() {
    let w = Window::Full;
    for n in 1..6 {
        let s = prefix(&vec![0.0; n]);
        assert!(close(gsr_post_logstat(&s, 0.0, 1.0, w).unwrap(), (n as f64).ln(), 1e-12));
    }
    let v = gsr_post_logstat(&prefix(&[0.0, 2.0]), 0.0, 1.0, w).unwrap();
    let oracle = naive_lse(&oracle_post_terms(&[0.0, 2.0], 0.0, 1.0));
    assert!(close(v, oracle, 1e-12));
    assert!((v - 2.3133).abs() < 1e-4);
    assert!(gsr_post_logstat(&PrefixState::new(), 0.0, 1.0, w).is_err());
}

#[test]
fn glr_both_examples() {
    let w = Window::Full;
    assert_eq!(glr_both_stat(&prefix(&[3.5; 7]), 1.0, w).unwrap(), 0.0);
    let xs = [0.0, 0.0, 2.0, 2.0];
    assert_eq!(glr_both_stat(&prefix(&xs), 1.0, w).unwrap(), 2.0);
    let terms = oracle_split_terms(&xs, 1.0);
    assert!(close(terms[0], 2.0 / 3.0, 1e-12));
    assert!(close(terms[1], 2.0, 1e-12));
    assert!(close(terms[2], 2.0 / 3.0, 1e-12));
    assert!(close(glr_both_stat(&prefix(&[5.0, 5.0, 7.0, 7.0]), 1.0, w).unwrap(), 2.0, 1e-12));
    assert!(matches!(
        glr_both_stat(&prefix(&[1.0]), 1.0, w),
        Err(QcdError::NotEnoughObservations { needed: 2, available: 1 })
    ));
}

#[test]
fn gsr_both_examples() {
    let w = Window::Full;
    for n in 2..7 {
        let v = gsr_both_logstat(&prefix(&vec![1.25; n]), 1.0, w).unwrap();
        assert!(close(v, ((n - 1) as f64).ln(), 1e-12), "n={n} v={v}");
        let with_unit = gsr_both_logstat_with(&prefix(&vec![1.25; n]), 1.0, w, true).unwrap();
        assert!(close(with_unit, (n as f64).ln(), 1e-12));
    }
    let xs = [0.0, 0.0, 2.0, 2.0];
    let v = gsr_both_logstat(&prefix(&xs), 1.0, w).unwrap();
    let oracle = naive_lse(&oracle_split_terms(&xs, 1.0));
    assert!(close(v, oracle, 1e-12));
    // log(2 e^{2/3} + e^2)
    assert!((v - 2.423_432_245_538_31).abs() < 1e-12);
    assert!(gsr_both_logstat(&prefix(&[1.0]), 1.0, w).is_err());
}

#[test]
fn logsumexp_examples() {
    assert_eq!(logsumexp(&[0.0]).unwrap(), 0.0);
    let a = -3.7;
    assert!(close(logsumexp(&[a, a]).unwrap(), a + 2f64.ln(), 1e-15));
    let big = logsumexp(&[1000.0, 1000.0]).unwrap();
    assert!(big.is_finite());
    assert!(close(big, 1000.0 + 2f64.ln(), 1e-15));
    assert!(logsumexp(&[1e6, 1e6 - 1.0]).unwrap().is_finite());
    assert_eq!(logsumexp(&[]), Err(QcdError::EmptyInput));
    assert_eq!(log_add_exp(f64::NEG_INFINITY, 0.0), 0.0);
}

#[test]
fn windowed_ranges() {
    assert_eq!(Window::Full.post_range(5), (1, 5));
    assert_eq!(Window::Last(700).post_range(1000), (300, 1000));
    assert_eq!(Window::Last(700).post_range(10), (1, 10));
    assert_eq!(Window::Full.split_range(1), None);
    assert_eq!(Window::Last(3).split_range(10), Some((7, 9)));
    assert_eq!("full".parse::<Window>().unwrap(), Window::Full);
    assert_eq!("700".parse::<Window>().unwrap(), Window::Last(700));
    assert!("0".parse::<Window>().is_err());
    assert!("abc".parse::<Window>().is_err());
}

#[test]
fn windowed_statistics_match_truncated_oracle() {
    let xs: Vec<f64> = (0..40).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
    let s = prefix(&xs);
    let n = xs.len();
    let w = 9;
    let post = oracle_post_terms(&xs, 0.2, 1.5);
    let expected = max(&post[n - w - 1..]);
    assert!(close(glr_post_stat(&s, 0.2, 1.5, Window::Last(w)).unwrap(), expected, 1e-9));
    let split = oracle_split_terms(&xs, 1.5);
    // split index k in [n - w, n - 1] -> terms[k - 1]
    let expected = max(&split[n - w - 1..]);
    assert!(close(glr_both_stat(&s, 1.5, Window::Last(w)).unwrap(), expected, 1e-9));
}

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 1..50)
}

proptest! {
    #[test]
    fn glr_post_equals_density_oracle(xs in series(), mu0 in -3.0f64..3.0, sigma2 in 0.5f64..4.0) {
        let v = glr_post_stat(&prefix(&xs), mu0, sigma2, Window::Full).unwrap();
        let oracle = max(&oracle_post_terms(&xs, mu0, sigma2));
        prop_assert!(close(v, oracle, 1e-9), "{} vs {}", v, oracle);
    }

    #[test]
    fn glr_both_equals_density_oracle(xs in prop::collection::vec(-5.0f64..5.0, 2..50), sigma2 in 0.5f64..4.0) {
        let v = glr_both_stat(&prefix(&xs), sigma2, Window::Full).unwrap();
        let oracle = max(&oracle_split_terms(&xs, sigma2));
        prop_assert!(close(v, oracle, 1e-9), "{} vs {}", v, oracle);
    }

    #[test]
    fn recursions_match_closed_forms(xs in series(), mu0 in -1.0f64..1.0, shift in 0.2f64..1.5, sigma2 in 0.5f64..2.0) {
        let mu1 = mu0 + shift;
        let mut c = 0.0;
        let mut s = 0.0;
        for &x in &xs {
            let llr = llr_gauss(x, mu0, mu1, sigma2).unwrap();
            c = cusum_update(c, llr);
            s = sr_update(s, llr.exp()).unwrap();
        }
        prop_assert!(close(c, cusum_max_form(&xs, mu0, mu1, sigma2), 1e-9));
        prop_assert!(close(s, sr_sum_form(&xs, mu0, mu1, sigma2), 1e-9));
    }

    #[test]
    fn sandwich(xs in prop::collection::vec(-5.0f64..5.0, 2..60), mu0 in -2.0f64..2.0, w in 1usize..80) {
        let s = prefix(&xs);
        let n = xs.len();
        for window in [Window::Full, Window::Last(w)] {
            let (lo, hi) = window.post_range(n);
            let g = glr_post_stat(&s, mu0, 1.0, window).unwrap();
            let lw = gsr_post_logstat(&s, mu0, 1.0, window).unwrap();
            prop_assert!(g >= 0.0);
            prop_assert!(g <= lw + 1e-12 && lw <= g + ((hi - lo + 1) as f64).ln() + 1e-12);

            let (lo, hi) = window.split_range(n).unwrap();
            let g = glr_both_stat(&s, 1.0, window).unwrap();
            let lw = gsr_both_logstat(&s, 1.0, window).unwrap();
            prop_assert!(g >= 0.0);
            prop_assert!(g <= lw + 1e-12 && lw <= g + ((hi - lo + 1) as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn two_sided_shift_invariant(xs in prop::collection::vec(-5.0f64..5.0, 2..50), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let a = glr_both_stat(&prefix(&xs), 1.0, Window::Full).unwrap();
        let b = glr_both_stat(&prefix(&shifted), 1.0, Window::Full).unwrap();
        prop_assert!(close(a, b, 1e-9) || (a - b).abs() < 1e-9);
    }

    #[test]
    fn post_scale_invariant(xs in series(), mu0 in -3.0f64..3.0, a in -10.0f64..10.0, c in 0.1f64..10.0) {
        let mapped: Vec<f64> = xs.iter().map(|x| a + c * x).collect();
        let base = glr_post_stat(&prefix(&xs), mu0, 1.0, Window::Full).unwrap();
        let scaled = glr_post_stat(&prefix(&mapped), a + c * mu0, c * c, Window::Full).unwrap();
        prop_assert!(close(base, scaled, 1e-9) || (base - scaled).abs() < 1e-9);
    }

    #[test]
    fn kl_symmetric_nonnegative(x in -1e3f64..1e3, y in -1e3f64..1e3, s in 0.01f64..10.0) {
        let a = kl_gauss(x, y, s).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a, kl_gauss(y, x, s).unwrap());
    }
}
