use mcid_core::dist::*;
use mcid_core::quadrature::{integrate, QuadratureConfig};
use mcid_core::RngStream;
use proptest::prelude::*;

/// Kolmogorov–Smirnov statistic of `sample` against `cdf`.
fn ks(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// 0.1% critical value.
fn ks_crit(n: usize) -> f64 {
    1.95 / (n as f64).sqrt()
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Inverse Gaussian CDF with mean μ and shape λ.
fn ig_cdf(x: f64, mu: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let r = (lambda / x).sqrt();
    normal_cdf(r * (x / mu - 1.0)) + (2.0 * lambda / mu).exp() * normal_cdf(-r * (x / mu + 1.0))
}

#[test]
fn gig_half_matches_reciprocal_inverse_gaussian_law() {
    for (k, (a, b)) in [(0.3, 2.0), (4.0, 2.5), (1e-3, 2.0), (25.0, 9.0)]
        .into_iter()
        .enumerate()
    {
        let p = GigParams::new(0.5, a, b).unwrap();
        let mut rng = RngStream::new(100, k as u64).rng();
        let draws: Vec<f64> = (0..20_000).map(|_| sample_gig(p, &mut rng).unwrap()).collect();
        let (mu, lambda) = ((b / a).sqrt(), b);
        let d = ks(draws, |x| 1.0 - ig_cdf(1.0 / x, mu, lambda));
        assert!(d < ks_crit(20_000), "a={a} b={b}: D = {d}");
    }
}

#[test]
fn gig_half_first_two_moments() {
    for (k, (a, b)) in [(0.5, 2.0), (3.0, 2.0), (0.05, 4.0)].into_iter().enumerate() {
        let p = GigParams::new(0.5, a, b).unwrap();
        let mut rng = RngStream::new(101, k as u64).rng();
        let draws: Vec<f64> = (0..100_000).map(|_| sample_gig(p, &mut rng).unwrap()).collect();
        let (mu, lambda) = ((b / a).sqrt(), b);
        let mean = 1.0 / mu + 1.0 / lambda;
        let second = 1.0 / (mu * mu) + 3.0 / (mu * lambda) + 3.0 / (lambda * lambda);
        let (m, se) = mean_and_se(&draws);
        assert!((m - mean).abs() < 3.0 * se, "a={a} b={b}: mean {m} vs {mean} (se {se})");
        let sq: Vec<f64> = draws.iter().map(|x| x * x).collect();
        let (m2, se2) = mean_and_se(&sq);
        assert!((m2 - second).abs() < 3.0 * se2, "a={a} b={b}: E[X²] {m2} vs {second}");
    }
}

#[test]
fn gig_mean_from_density_matches_closed_form() {
    let cfg = QuadratureConfig::default();
    for (a, b) in [(0.5, 2.0), (3.0, 7.0)] {
        let p = GigParams::new(0.5, a, b).unwrap();
        let m = integrate(
            |t: f64| Ok(t.exp() * t.exp() * gig_density(t.exp(), p)?),
            -40.0,
            8.0,
            &cfg,
        )
        .unwrap();
        assert!((m - ((a / b).sqrt() + 1.0 / b)).abs() < 1e-8);
    }
}

#[test]
fn gig_density_integrates_to_one() {
    let cfg = QuadratureConfig::default();
    for nu in [0.5, -0.5, 1.5, -1.5] {
        for (a, b) in [(0.5, 2.0), (2.0, 0.5), (10.0, 2.5), (1e-3, 3.0)] {
            let p = GigParams::new(nu, a, b).unwrap();
            let total = integrate(|t: f64| Ok(t.exp() * gig_density(t.exp(), p)?), -40.0, 10.0, &cfg).unwrap();
            assert!((total - 1.0).abs() < 1e-6, "nu={nu} a={a} b={b}: {total}");
        }
    }
    assert!(gig_density(1.0, GigParams::new(0.7, 1.0, 1.0).unwrap()).is_err());
}

#[test]
fn gig_density_peaks_at_mode() {
    for (nu, a, b) in [(0.5, 1.0, 2.0), (1.5, 0.2, 3.0), (-0.5, 4.0, 1.0)] {
        let p = GigParams::new(nu, a, b).unwrap();
        let mode = ((nu - 1.0) + ((nu - 1.0) * (nu - 1.0) + a * b).sqrt()) / b;
        let f = |x| gig_density(x, p).unwrap();
        assert!(f(mode) > f(mode * 1.01) && f(mode) > f(mode * 0.99));
    }
}

/// Mean and variance of N(0, 1) truncated to (a, b).
fn std_trunc_moments(a: f64, b: f64) -> (f64, f64) {
    let phi = |x: f64| if x.is_finite() { normal_pdf(x, 0.0, 1.0) } else { 0.0 };
    let xphi = |x: f64| {
        if x.is_finite() {
            x * normal_pdf(x, 0.0, 1.0)
        } else {
            0.0
        }
    };
    let z = if a > 0.0 {
        normal_sf(a) - normal_sf(b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    };
    let m = (phi(a) - phi(b)) / z;
    (m, 1.0 + (xphi(a) - xphi(b)) / z - m * m)
}

fn trunc_cases() -> Vec<(f64, f64, f64, f64)> {
    // (mean, sd, lower, upper), one per sampler branch
    vec![
        (0.3, 1.0, 0.0, f64::INFINITY),
        (-0.5, 0.8, 0.0, f64::INFINITY),
        (-6.0, 1.2, 0.0, f64::INFINITY),
        (0.4, 0.5, f64::NEG_INFINITY, 0.0),
        (2.0, 1.0, f64::NEG_INFINITY, 0.0),
        (0.0, 1.0, 0.2, 0.7),
        (0.0, 1.0, -0.1, 0.1),
        (0.0, 1.0, 1.0, 3.0),
        (0.0, 1.0, 4.5, 4.6),
        (0.0, 1.0, 5.0, 30.0),
        (1.0, 2.0, -3.0, -1.5),
    ]
}

#[test]
fn truncated_normal_moments() {
    for (k, (mean, sd, lo, hi)) in trunc_cases().into_iter().enumerate() {
        let interval = TruncationInterval::new(lo, hi).unwrap();
        let mut rng = RngStream::new(102, k as u64).rng();
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_trunc_normal(mean, sd * sd, interval, &mut rng).unwrap())
            .collect();
        assert!(draws.iter().all(|x| interval.contains(*x)));
        let (sm, sv) = std_trunc_moments((lo - mean) / sd, (hi - mean) / sd);
        let (m, se) = mean_and_se(&draws);
        let target = mean + sd * sm;
        assert!(
            (m - target).abs() < 3.0 * se,
            "case {k}: mean {m} vs {target} (se {se})"
        );
        let sq: Vec<f64> = draws.iter().map(|x| (x - target) * (x - target)).collect();
        let (v, se_v) = mean_and_se(&sq);
        let tv = sd * sd * sv;
        assert!((v - tv).abs() < 3.0 * se_v, "case {k}: var {v} vs {tv}");
    }
}

#[test]
fn truncated_normal_distribution_function() {
    for (k, (mean, sd, lo, hi)) in trunc_cases().into_iter().enumerate() {
        let interval = TruncationInterval::new(lo, hi).unwrap();
        let mut rng = RngStream::new(103, k as u64).rng();
        let draws: Vec<f64> = (0..20_000)
            .map(|_| sample_trunc_normal(mean, sd * sd, interval, &mut rng).unwrap())
            .collect();
        let (a, b) = ((lo - mean) / sd, (hi - mean) / sd);
        let cdf = |x: f64| {
            let s = (x - mean) / sd;
            if a > 0.0 {
                (normal_sf(a) - normal_sf(s)) / (normal_sf(a) - normal_sf(b))
            } else {
                (normal_cdf(s) - normal_cdf(a)) / (normal_cdf(b) - normal_cdf(a))
            }
        };
        let d = ks(draws, cdf);
        assert!(d < ks_crit(20_000), "case {k}: D = {d}");
    }
}

#[test]
fn truncated_normal_rejects_bad_input() {
    let mut rng = RngStream::new(0, 0).rng();
    let i = TruncationInterval::nonnegative();
    assert!(sample_trunc_normal(0.0, 0.0, i, &mut rng).is_err());
    assert!(sample_trunc_normal(f64::NAN, 1.0, i, &mut rng).is_err());
    assert!(TruncationInterval::new(1.0, 1.0).is_err());
}

#[test]
fn truncated_normal_far_tail_stays_inside() {
    let mut rng = RngStream::new(104, 0).rng();
    for _ in 0..1000 {
        let x = sample_trunc_normal(-50.0, 1e-4, TruncationInterval::nonnegative(), &mut rng).unwrap();
        assert!(x >= 0.0 && x.is_finite());
        let y = sample_trunc_normal(50.0, 1e-4, TruncationInterval::negative(), &mut rng).unwrap();
        assert!(y < 0.0 && y.is_finite());
    }
}

#[test]
fn asymmetric_laplace_sampler_matches_cdf() {
    for (k, tau) in [0.2, 0.5, 0.85].into_iter().enumerate() {
        let al = AlParams::new(Skewness::new(tau).unwrap(), 0.7, 1.3).unwrap();
        let mut rng = RngStream::new(105, k as u64).rng();
        let draws: Vec<f64> = (0..20_000).map(|_| al.sample(&mut rng)).collect();
        assert!(ks(draws.clone(), |x| al.cdf(x)) < ks_crit(20_000));
        // the location is the τ-quantile
        let below = draws.iter().filter(|x| **x <= 0.7).count() as f64 / 20_000.0;
        assert!((below - tau).abs() < 3.0 * (tau * (1.0 - tau) / 20_000.0).sqrt());
    }
}

#[test]
fn al_density_integrates_to_one() {
    let al = AlParams::new(Skewness::new(0.3).unwrap(), -1.0, 0.4).unwrap();
    let cfg = QuadratureConfig::default();
    let left = integrate(|x| Ok(al.density(x)), -40.0, -1.0, &cfg).unwrap();
    let right = integrate(|x| Ok(al.density(x)), -1.0, 40.0, &cfg).unwrap();
    assert!((left - 0.3).abs() < 1e-9 && (right - 0.7).abs() < 1e-9);
}

#[test]
fn multivariate_normal_covariance() {
    use nalgebra::{DMatrix, DVector};
    let mean = DVector::from_vec(vec![1.0, -2.0]);
    let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
    let mut rng = RngStream::new(106, 0).rng();
    let n = 50_000;
    let draws: Vec<DVector<f64>> = (0..n).map(|_| sample_mvn(&mean, &cov, &mut rng).unwrap()).collect();
    let cross: Vec<f64> = draws.iter().map(|d| (d[0] - 1.0) * (d[1] + 2.0)).collect();
    let (c, se) = mean_and_se(&cross);
    assert!((c - 0.6).abs() < 3.0 * se);
    assert!(sample_mvn(&mean, &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), &mut rng).is_err());
}

proptest! {
    #[test]
    fn al_cdf_is_a_distribution_function(tau in 0.01f64..0.99, u in -50.0f64..50.0, h in 0.0f64..5.0) {
        let t = Skewness::new(tau).unwrap();
        let f = al_cdf(u, t);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(al_cdf(u + h, t) >= f);
    }

    #[test]
    fn al_cdf_at_zero_is_tau(tau in 0.01f64..0.99) {
        prop_assert!((al_cdf(0.0, Skewness::new(tau).unwrap()) - tau).abs() < 1e-15);
    }

    #[test]
    fn check_loss_is_convex_and_nonnegative(tau in 0.01f64..0.99, a in -10.0f64..10.0, b in -10.0f64..10.0, w in 0.0f64..1.0) {
        let t = Skewness::new(tau).unwrap();
        prop_assert!(check_loss(a, t) >= 0.0);
        let mid = check_loss(w * a + (1.0 - w) * b, t);
        prop_assert!(mid <= w * check_loss(a, t) + (1.0 - w) * check_loss(b, t) + 1e-12);
    }
}
