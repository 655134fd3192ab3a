//! Distribution kernels used by the losses and the Gibbs sampler: the
//! asymmetric Laplace law, the generalized inverse Gaussian, the truncated
//! normal and the multivariate normal.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::error::{domain, Error, Result};
use crate::linalg;

/// Floor applied to the `a` (x⁻¹) coefficient of a GIG law before sampling.
pub const GIG_A_FLOOR: f64 = 1e-12;

/// Standardized distance from the mean beyond which truncated-normal draws
/// switch from inverse-CDF to tail rejection.
pub const TAIL_SWITCH: f64 = 4.0;

/// Asymmetric-Laplace skewness τ, validated to lie in (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Skewness(f64);

impl Skewness {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(domain(format!("skewness must lie in (0, 1), got {tau}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Skewness {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Skewness> for f64 {
    fn from(s: Skewness) -> f64 {
        s.0
    }
}

/// Check loss ρ_τ(u) = u(τ − 1{u<0}).
pub fn check_loss(u: f64, tau: Skewness) -> f64 {
    let t = tau.get();
    if u < 0.0 {
        u * (t - 1.0)
    } else {
        u * t
    }
}

/// Distribution function of the standard asymmetric Laplace law.
pub fn al_cdf(u: f64, tau: Skewness) -> f64 {
    let t = tau.get();
    if u <= 0.0 {
        t * (-check_loss(u, tau)).exp()
    } else {
        1.0 - (1.0 - t) * (-check_loss(u, tau)).exp()
    }
}

/// Asymmetric Laplace with location and scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlParams {
    pub tau: Skewness,
    pub location: f64,
    pub scale: f64,
}

impl AlParams {
    pub fn new(tau: Skewness, location: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(domain(format!("scale must be positive, got {scale}")));
        }
        if !location.is_finite() {
            return Err(domain("location must be finite"));
        }
        Ok(Self { tau, location, scale })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        al_cdf((x - self.location) / self.scale, self.tau)
    }

    pub fn density(&self, x: f64) -> f64 {
        let t = self.tau.get();
        t * (1.0 - t) / self.scale * (-check_loss((x - self.location) / self.scale, self.tau)).exp()
    }

    /// Draw through the exponential–normal mixture
    /// ε = c₁V₁ + c₂√V₁·V₂ with V₁ ~ Exp(1), V₂ ~ N(0, 1).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = self.tau.get();
        let c1 = (1.0 - 2.0 * t) / (t * (1.0 - t));
        let c2 = (2.0 / (t * (1.0 - t))).sqrt();
        let v1: f64 = rng.sample(Exp1);
        let v2: f64 = rng.sample(StandardNormal);
        self.location + self.scale * (c1 * v1 + c2 * v1.sqrt() * v2)
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail 1 − Φ(x), accurate for large x.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p)
}

/// Density of N(mean, sd²).
pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// GIG(ν, a, b) with density ∝ x^{ν−1} exp{−(a/x + b x)/2}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GigParams {
    pub nu: f64,
    pub a: f64,
    pub b: f64,
}

impl GigParams {
    pub fn new(nu: f64, a: f64, b: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(domain(format!("GIG b must be positive, got {b}")));
        }
        if !(a >= 0.0) || !a.is_finite() {
            return Err(domain(format!("GIG a must be nonnegative, got {a}")));
        }
        if !nu.is_finite() {
            return Err(domain("GIG order must be finite"));
        }
        Ok(Self { nu, a, b })
    }

    /// Copy with `a` raised to at least [`GIG_A_FLOOR`].
    pub fn floored(self) -> Self {
        Self {
            a: self.a.max(GIG_A_FLOOR),
            ..self
        }
    }
}

/// ln κ_ν(t) for the half-integer orders with closed forms.
fn ln_bessel_k_half_integer(nu: f64, t: f64) -> Result<f64> {
    let base = 0.5 * (std::f64::consts::PI / (2.0 * t)).ln() - t;
    if (nu.abs() - 0.5).abs() < 1e-15 {
        Ok(base)
    } else if (nu.abs() - 1.5).abs() < 1e-15 {
        Ok(base + (1.0 + 1.0 / t).ln())
    } else {
        Err(Error::Unsupported(format!(
            "Bessel function of order {nu}; only ±1/2 and ±3/2 have closed forms here"
        )))
    }
}

/// GIG density at `x > 0`. Orders ±½ and ±3/2 are supported.
pub fn gig_density(x: f64, p: GigParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(domain(format!("GIG density needs x > 0, got {x}")));
    }
    if !(p.a > 0.0) {
        return Err(domain("GIG density needs a > 0"));
    }
    let t = (p.a * p.b).sqrt();
    let ln_k = ln_bessel_k_half_integer(p.nu, t)?;
    let ln_norm = 0.5 * p.nu * (p.b / p.a).ln() - std::f64::consts::LN_2 - ln_k;
    Ok((ln_norm + (p.nu - 1.0) * x.ln() - 0.5 * (p.a / x + p.b * x)).exp())
}

/// Draw from GIG(ν, a, b) for ν = ±½.
///
/// ν = −½ is the inverse Gaussian with mean √(a/b) and shape a. ν = ½ is the
/// reciprocal of an inverse Gaussian with mean √(b/a) and shape b. `a` is
/// floored at [`GIG_A_FLOOR`], which makes the a → 0 limit (a Gamma(½, b/2)
/// law) reachable without overflow.
pub fn sample_gig<R: Rng + ?Sized>(p: GigParams, rng: &mut R) -> Result<f64> {
    let p = GigParams::new(p.nu, p.a, p.b)?.floored();
    if (p.nu - 0.5).abs() < 1e-15 {
        Ok(sample_gig_half(p.a, p.b, rng))
    } else if (p.nu + 0.5).abs() < 1e-15 {
        Ok(1.0 / reciprocal_inverse_gaussian((p.a / p.b).sqrt(), p.a, rng))
    } else {
        Err(Error::Unsupported(format!("GIG sampling for order {}", p.nu)))
    }
}

/// GIG(½, a, b) for already validated `a ≥ 0`, `b > 0`; `a` is floored.
pub(crate) fn sample_gig_half<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let a = a.max(GIG_A_FLOOR);
    reciprocal_inverse_gaussian((b / a).sqrt(), b, rng)
}

/// 1/Y for Y ~ IG(mean, shape) (Michael–Schucany–Haas), written so that a
/// huge `mean` loses no precision.
fn reciprocal_inverse_gaussian<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    let v: f64 = rng.sample(StandardNormal);
    let y = mean * v * v;
    // smaller root x = mean - mean/(2 shape) (sqrt(4 shape y + y^2) - y),
    // rewritten as 4 mean shape y / (y + s)^2
    let (x, inv_x) = if y > 0.0 {
        let s = (y * y + 4.0 * shape * y).sqrt();
        let d = y + s;
        let inv = d / (4.0 * mean * shape) * (d / y);
        (1.0 / inv, inv)
    } else {
        (mean, 1.0 / mean)
    };
    let u: f64 = rng.random();
    if u * (mean + x) <= mean {
        inv_x
    } else {
        // other root mean^2 / x, so its reciprocal is x / mean^2
        x / mean / mean
    }
}

/// An interval of the extended real line with `lower < upper`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationInterval {
    pub lower: f64,
    pub upper: f64,
}

impl TruncationInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || !(lower < upper) {
            return Err(domain(format!("empty truncation interval ({lower}, {upper})")));
        }
        Ok(Self { lower, upper })
    }

    /// `[0, ∞)`
    pub const fn nonnegative() -> Self {
        Self {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    /// `(−∞, 0)`
    pub const fn negative() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: 0.0,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }
}

/// Draw from N(mean, var) conditioned on the interval.
///
/// Intervals that reach within [`TAIL_SWITCH`] standard deviations of the
/// mean use the inverse CDF. Intervals lying entirely beyond that use a
/// rejection sampler with bounded expected work: an exponential proposal
/// (Robert, 1995), or a uniform one when the interval is short relative to
/// the tail scale. The result lies strictly inside the interval.
pub fn sample_trunc_normal<R: Rng + ?Sized>(
    mean: f64,
    var: f64,
    interval: TruncationInterval,
    rng: &mut R,
) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(domain(format!("variance must be positive, got {var}")));
    }
    if !mean.is_finite() {
        return Err(domain("mean must be finite"));
    }
    let sd = var.sqrt();
    let a = (interval.lower - mean) / sd;
    let b = (interval.upper - mean) / sd;
    for _ in 0..64 {
        let x = mean + sd * std_trunc_normal(a, b, rng);
        if interval.contains(x) {
            return Ok(x);
        }
    }
    // rounding pinned every draw to an endpoint; step inside
    let x = if interval.lower.is_finite() {
        interval.lower.next_up()
    } else {
        interval.upper.next_down()
    };
    Ok(x)
}

/// Standard normal truncated to `(a, b)`.
fn std_trunc_normal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if b <= 0.0 && a < 0.0 {
        return -std_trunc_normal_right(-b, -a, rng);
    }
    std_trunc_normal_right(a, b, rng)
}

/// Requires `b > 0`: the interval is not entirely to the left of zero.
fn std_trunc_normal_right<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= TAIL_SWITCH || (a >= 0.0 && b == f64::INFINITY) {
        return tail_rejection(a, b, rng);
    }
    if a <= 0.0 && b - a >= 2.0 {
        // the interval holds at least Φ(2) − ½ of the mass
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > a && z < b {
                return z;
            }
        }
    }
    let u: f64 = rng.random();
    if a <= 0.0 {
        // lower tail probabilities are accurate here
        let lo = normal_cdf(a);
        let hi = normal_cdf(b);
        normal_quantile(lo + u * (hi - lo))
    } else {
        // work with upper tails for precision
        let lo = normal_sf(b);
        let hi = normal_sf(a);
        -normal_quantile(lo + u * (hi - lo))
    }
}

fn tail_rejection<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if b.is_finite() && (b - a) * a < 1.0 {
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            let u: f64 = rng.random();
            if u.ln() <= 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = a + e / lambda;
        if z >= b {
            continue;
        }
        let u: f64 = rng.random();
        let d = z - lambda;
        if u.ln() <= -0.5 * d * d {
            return z;
        }
    }
}

/// Draw from N_q(mean, cov) through the Cholesky factor of `cov`.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> Result<DVector<f64>> {
    if cov.nrows() != mean.len() {
        return Err(domain(format!(
            "covariance is {}x{} but mean has length {}",
            cov.nrows(),
            cov.ncols(),
            mean.len()
        )));
    }
    let l = linalg::cholesky_lower(cov)?;
    let xi = DVector::from_iterator(
        mean.len(),
        (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    Ok(mean + l * xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn tau(t: f64) -> Skewness {
        Skewness::new(t).unwrap()
    }

    #[test]
    fn skewness_domain() {
        assert!(Skewness::new(0.0).is_err());
        assert!(Skewness::new(1.0).is_err());
        assert!(Skewness::new(f64::NAN).is_err());
        assert!(Skewness::new(0.3).is_ok());
    }

    #[test]
    fn check_loss_values() {
        assert_eq!(check_loss(0.0, tau(0.3)), 0.0);
        assert!((check_loss(-2.0, tau(0.3)) - 1.4).abs() < 1e-15);
        for u in [-1.0, 2.5] {
            assert!((check_loss(u, tau(0.5)) - u.abs() / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn al_cdf_at_zero() {
        assert_eq!(al_cdf(0.0, tau(0.3)), 0.3);
        assert_eq!(al_cdf(0.0, tau(0.5)), 0.5);
    }

    #[test]
    fn al_density_integrates_to_cdf() {
        // density obtained by differentiating the cdf, integrated numerically
        let p = AlParams::new(tau(0.4), 0.0, 1.0).unwrap();
        let cfg = crate::quadrature::QuadratureConfig {
            tolerance: 1e-12,
            ..Default::default()
        };
        let left = crate::quadrature::integrate(|x| Ok(p.density(x)), -60.0, 0.0, &cfg).unwrap();
        let right = crate::quadrature::integrate(|x| Ok(p.density(x)), 0.0, 1.7, &cfg).unwrap();
        assert!((left + right - al_cdf(1.7, tau(0.4))).abs() < 1e-8);
    }

    #[test]
    fn gig_validation() {
        assert!(GigParams::new(0.5, 1.0, 0.0).is_err());
        assert!(GigParams::new(0.5, -1.0, 1.0).is_err());
        assert!(matches!(
            gig_density(1.0, GigParams::new(0.7, 1.0, 1.0).unwrap()),
            Err(Error::Unsupported(_))
        ));
        let mut rng = RngStream::new(1, 0).rng();
        assert!(matches!(
            sample_gig(
                GigParams {
                    nu: 2.0,
                    a: 1.0,
                    b: 1.0
                },
                &mut rng
            ),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn gig_floored_draw_is_finite_positive() {
        let mut rng = RngStream::new(3, 0).rng();
        for a in [0.0, 1e-12, 1e-300] {
            let p = GigParams::new(0.5, a, 2.0).unwrap();
            for _ in 0..1000 {
                let x = sample_gig(p, &mut rng).unwrap();
                assert!(x.is_finite() && x > 0.0, "a={a} x={x}");
            }
        }
    }

    #[test]
    fn trunc_normal_far_tail_support() {
        let mut rng = RngStream::new(5, 0).rng();
        for _ in 0..2000 {
            let x = sample_trunc_normal(-8.0, 0.01, TruncationInterval::nonnegative(), &mut rng).unwrap();
            assert!(x.is_finite() && x > 0.0);
            let y = sample_trunc_normal(8.0, 0.01, TruncationInterval::negative(), &mut rng).unwrap();
            assert!(y < 0.0);
            let z = sample_trunc_normal(0.0, 1.0, TruncationInterval::new(6.0, 6.05).unwrap(), &mut rng).unwrap();
            assert!(z > 6.0 && z < 6.05);
            let w = sample_trunc_normal(0.0, 1.0, TruncationInterval::new(-9.0, -5.0).unwrap(), &mut rng).unwrap();
            assert!(w > -9.0 && w < -5.0);
        }
    }

    #[test]
    fn trunc_normal_rejects_bad_input() {
        let mut rng = RngStream::new(5, 0).rng();
        assert!(TruncationInterval::new(1.0, 1.0).is_err());
        assert!(sample_trunc_normal(0.0, 0.0, TruncationInterval::nonnegative(), &mut rng).is_err());
    }

    #[test]
    fn mvn_rejects_non_spd() {
        let mut rng = RngStream::new(5, 0).rng();
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let r = sample_mvn(&DVector::zeros(2), &cov, &mut rng);
        assert!(matches!(r, Err(Error::NotPositiveDefinite { minor: 2 })));
    }
}
