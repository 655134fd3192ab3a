//! MCID losses and risks.
//!
//! Every loss here is a function of the margin `m = x − βᵀz` and the label.
//! The 0–1 loss uses `sign(0) = 0`, so a tie costs half the class weight.
//! The BQR working loss drops the `log p(x, z)` term; risk values are
//! therefore only meaningful up to an additive constant, and comparisons
//! across losses are made on minimizers.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Datum, Label};
use crate::dist::{al_cdf, normal_pdf, Skewness};
use crate::error::{domain, Result};
use crate::quadrature::{integrate_pieces, integrate_vec, QuadratureConfig};
use crate::sim::GeneratorSpec;

/// Linear MCID coefficients β, with θ(z) = βᵀz. A population MCID is the
/// one-dimensional case with `z = (1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McidCoef(pub Vec<f64>);

impl McidCoef {
    pub fn scalar(theta: f64) -> Self {
        Self(vec![theta])
    }

    pub fn threshold(&self, z: &[f64]) -> f64 {
        self.0.iter().zip(z).map(|(b, v)| b * v).sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Skewness and scale of the binary quantile regression working model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BqrParams {
    pub tau: Skewness,
    pub eta: f64,
}

impl BqrParams {
    pub fn new(tau: f64, eta: f64) -> Result<Self> {
        let tau = Skewness::new(tau)?;
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(domain(format!("eta must be positive, got {eta}")));
        }
        Ok(Self { tau, eta })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Weighting {
    Unweighted,
    /// w(−1) = (1 − ϖ)⁻¹, w(+1) = ϖ⁻¹.
    InverseClass {
        pi: f64,
    },
}

impl Weighting {
    pub fn weight(self, y: Label) -> f64 {
        match (self, y) {
            (Weighting::Unweighted, _) => 1.0,
            (Weighting::InverseClass { pi }, Label::Positive) => 1.0 / pi,
            (Weighting::InverseClass { pi }, Label::Negative) => 1.0 / (1.0 - pi),
        }
    }
}

/// Smoothed replacements for the 0–1 loss, applied to `u = y(x − βᵀz)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoother {
    /// `min{(1 − u/δ)₊, 1}`
    Hedayat,
    /// piecewise quadratic with a junction at δ/2
    Zhou,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LossKind {
    ZeroOne,
    HedayatSmooth { delta: f64 },
    ZhouSmooth { delta: f64 },
    Bqr(BqrParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub weighting: Weighting,
}

impl LossSpec {
    pub fn new(kind: LossKind, weighting: Weighting) -> Result<Self> {
        match kind {
            LossKind::HedayatSmooth { delta } | LossKind::ZhouSmooth { delta } if !(delta > 0.0) => {
                return Err(domain(format!("delta must be positive, got {delta}")))
            }
            LossKind::Bqr(p) => {
                BqrParams::new(p.tau.get(), p.eta)?;
            }
            _ => {}
        }
        if let Weighting::InverseClass { pi } = weighting {
            if !(pi > 0.0 && pi < 1.0) {
                return Err(domain(format!("class probability must lie in (0, 1), got {pi}")));
            }
        }
        Ok(Self { kind, weighting })
    }

    pub fn zero_one(weighting: Weighting) -> Self {
        Self {
            kind: LossKind::ZeroOne,
            weighting,
        }
    }

    pub fn bqr(params: BqrParams) -> Self {
        Self {
            kind: LossKind::Bqr(params),
            weighting: Weighting::Unweighted,
        }
    }

    /// Loss at margin `m = x − βᵀz`.
    pub fn at_margin(&self, m: f64, y: Label) -> f64 {
        let w = self.weighting.weight(y);
        let base = match self.kind {
            LossKind::ZeroOne => 0.5 * (1.0 - y.sign() * sign(m)),
            LossKind::HedayatSmooth { delta } => smooth_surrogate(y.sign() * m, Smoother::Hedayat, delta),
            LossKind::ZhouSmooth { delta } => smooth_surrogate(y.sign() * m, Smoother::Zhou, delta),
            LossKind::Bqr(p) => bqr_loss_at_margin(m, y, p),
        };
        w * base
    }

    pub fn loss(&self, coef: &McidCoef, d: &Datum) -> f64 {
        self.at_margin(d.x - coef.threshold(&d.z), d.y)
    }

    /// Margins at which the loss is not smooth.
    fn kinks(&self) -> Vec<f64> {
        match self.kind {
            LossKind::ZeroOne | LossKind::Bqr(_) => vec![0.0],
            LossKind::HedayatSmooth { delta } | LossKind::ZhouSmooth { delta } => {
                vec![-delta, -0.5 * delta, 0.0, 0.5 * delta, delta]
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Weighted 0–1 MCID loss `w(y)·½{1 − y·sign(x − βᵀz)}`.
pub fn zero_one_loss(coef: &McidCoef, d: &Datum, weighting: Weighting) -> f64 {
    LossSpec::zero_one(weighting).loss(coef, d)
}

pub fn smooth_surrogate(u: f64, variant: Smoother, delta: f64) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    if u >= delta {
        return 0.0;
    }
    let r = u / delta;
    match variant {
        Smoother::Hedayat => 1.0 - r,
        Smoother::Zhou => {
            if u <= 0.5 * delta {
                1.0 - 2.0 * r * r
            } else {
                2.0 * (1.0 - r) * (1.0 - r)
            }
        }
    }
}

/// Working-model probability `g_β(x, z) = P(Y = +1 | x, z)`.
pub fn bqr_prob(coef: &McidCoef, x: f64, z: &[f64], p: BqrParams) -> f64 {
    bqr_prob_at_margin(x - coef.threshold(z), p)
}

pub fn bqr_prob_at_margin(m: f64, p: BqrParams) -> f64 {
    let t = p.tau.get();
    if m <= 0.0 {
        (1.0 - t) * (t * m / p.eta).exp()
    } else {
        1.0 - t * (-(1.0 - t) * m / p.eta).exp()
    }
}

/// `1 − F_τ((βᵀz − x)/η)`, the same probability through the AL distribution function.
pub fn bqr_prob_via_cdf(coef: &McidCoef, x: f64, z: &[f64], p: BqrParams) -> f64 {
    1.0 - al_cdf((coef.threshold(z) - x) / p.eta, p.tau)
}

/// `−log h_β` without the `log p(x, z)` term.
pub fn bqr_loss(coef: &McidCoef, d: &Datum, p: BqrParams) -> f64 {
    bqr_loss_at_margin(d.x - coef.threshold(&d.z), d.y, p)
}

fn bqr_loss_at_margin(m: f64, y: Label, p: BqrParams) -> f64 {
    let t = p.tau.get();
    let s = m / p.eta;
    match (y, m <= 0.0) {
        (Label::Positive, true) => -(1.0 - t).ln() - t * s,
        (Label::Positive, false) => -(-t * (-(1.0 - t) * s).exp()).ln_1p(),
        (Label::Negative, true) => -(-(1.0 - t) * (t * s).exp()).ln_1p(),
        (Label::Negative, false) => -t.ln() + (1.0 - t) * s,
    }
}

/// d(loss)/dm at margin `m`.
fn bqr_loss_slope(m: f64, y: Label, p: BqrParams) -> f64 {
    let t = p.tau.get();
    let s = m / p.eta;
    match (y, m <= 0.0) {
        (Label::Positive, true) => -t / p.eta,
        (Label::Positive, false) => {
            let e = t * (-(1.0 - t) * s).exp();
            -(1.0 - t) / p.eta * e / (1.0 - e)
        }
        (Label::Negative, true) => {
            let e = (1.0 - t) * (t * s).exp();
            t / p.eta * e / (1.0 - e)
        }
        (Label::Negative, false) => (1.0 - t) / p.eta,
    }
}

/// Gradient of [`bqr_loss`] with respect to β.
pub fn bqr_loss_gradient(coef: &McidCoef, d: &Datum, p: BqrParams) -> Vec<f64> {
    let slope = bqr_loss_slope(d.x - coef.threshold(&d.z), d.y, p);
    d.z.iter().map(|v| -slope * v).collect()
}

/// Mean loss over the dataset.
pub fn empirical_risk(spec: &LossSpec, data: &Dataset, coef: &McidCoef) -> Result<f64> {
    if data.is_empty() {
        return Err(domain("empirical risk of an empty dataset"));
    }
    if coef.dim() != data.dim() {
        return Err(domain(format!(
            "coefficient has length {}, data has {} covariates",
            coef.dim(),
            data.dim()
        )));
    }
    let total: f64 = data.iter().map(|d| spec.loss(coef, &d)).sum();
    Ok(total / data.len() as f64)
}

/// `E_Z[f(Z)]` over the generator's covariate law; `f` receives `z` with
/// the intercept in front.
fn covariate_expectation<F>(gen: &GeneratorSpec, quad: &QuadratureConfig, dim: usize, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let law = gen.covariate_law();
    let mut z = vec![1.0];
    expect_rec(&law, &mut z, quad, dim, &mut f)
}

fn expect_rec(
    law: &[(f64, f64)],
    z: &mut Vec<f64>,
    quad: &QuadratureConfig,
    dim: usize,
    f: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let Some((&(mean, sd), rest)) = law.split_first() else {
        return f(z);
    };
    let half = quad.truncation_sds * sd;
    integrate_vec(
        |u| {
            z.push(u);
            let inner = expect_rec(rest, z, quad, dim, f);
            z.pop();
            let w = normal_pdf(u, mean, sd);
            inner.map(|v| v.into_iter().map(|x| w * x).collect())
        },
        dim,
        mean - half,
        mean + half,
        quad,
    )
}

/// Population risk `E{ℓ(X, Y, Z)}` under the generator, by quadrature over
/// each class-conditional density mixed with weights ϖ and 1 − ϖ.
pub fn population_risk(spec: &LossSpec, gen: &GeneratorSpec, coef: &McidCoef, quad: &QuadratureConfig) -> Result<f64> {
    population_risk_with(|m, y| spec.at_margin(m, y), &spec.kinks(), gen, coef, quad)
}

/// [`population_risk`] for a scalar MCID θ; the generator must have no covariate.
pub fn population_risk_1d(spec: &LossSpec, gen: &GeneratorSpec, theta: f64, quad: &QuadratureConfig) -> Result<f64> {
    require_population(gen)?;
    population_risk(spec, gen, &McidCoef::scalar(theta), quad)
}

/// Population risk of an arbitrary margin loss `loss(m, y)`; `kinks` are
/// the margins where the loss is not smooth.
pub fn population_risk_with<L>(
    loss: L,
    kinks: &[f64],
    gen: &GeneratorSpec,
    coef: &McidCoef,
    quad: &QuadratureConfig,
) -> Result<f64>
where
    L: Fn(f64, Label) -> f64,
{
    check_dim(gen, coef)?;
    let pi = gen.pi();
    let v = covariate_expectation(gen, quad, 1, |z| {
        let t = coef.threshold(z);
        let mut total = 0.0;
        for (y, wy) in [(Label::Positive, pi), (Label::Negative, 1.0 - pi)] {
            let (lo, hi) = gen.class_conditional_range(y, z, quad.truncation_sds);
            let pts = breakpoints(lo, hi, kinks.iter().map(|k| t + k));
            let part = integrate_pieces(
                |x| Ok(loss(x - t, y) * gen.class_conditional_density(y, z, x)?),
                &pts,
                quad,
            )?;
            total += wy * part;
        }
        Ok(vec![total])
    })?;
    Ok(v[0])
}

fn breakpoints(lo: f64, hi: f64, inner: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    pts.extend(inner.filter(|p| *p > lo && *p < hi));
    pts
}

fn require_population(gen: &GeneratorSpec) -> Result<()> {
    if gen.dim() != 1 {
        return Err(domain(format!(
            "{} has covariates; a population-MCID generator is required",
            gen.name()
        )));
    }
    Ok(())
}

fn check_dim(gen: &GeneratorSpec, coef: &McidCoef) -> Result<()> {
    if coef.dim() != gen.dim() {
        return Err(domain(format!(
            "coefficient has length {}, generator {} has {}",
            coef.dim(),
            gen.name(),
            gen.dim()
        )));
    }
    Ok(())
}

/// Residual of the η → 0 stationarity equation for the BQR risk:
///
/// `τϖ ∫ z ∫_{−∞}^{βᵀz} ψ₊,z − (1−τ)(1−ϖ) ∫ z ∫_{βᵀz}^{∞} ψ₋,z`,
///
/// outer integral over the covariate law, inner over `x`.
pub fn mess_residual(coef: &McidCoef, gen: &GeneratorSpec, tau: Skewness, quad: &QuadratureConfig) -> Result<Vec<f64>> {
    check_dim(gen, coef)?;
    let pi = gen.pi();
    let t_ = tau.get();
    let q = coef.dim();
    covariate_expectation(gen, quad, q, |z| {
        let t = coef.threshold(z);
        let (lo_p, hi_p) = gen.class_conditional_range(Label::Positive, z, quad.truncation_sds);
        let (lo_n, hi_n) = gen.class_conditional_range(Label::Negative, z, quad.truncation_sds);
        let below_pos = integrate_pieces(
            |x| gen.class_conditional_density(Label::Positive, z, x),
            &[lo_p, t.clamp(lo_p, hi_p)],
            quad,
        )?;
        let above_neg = integrate_pieces(
            |x| gen.class_conditional_density(Label::Negative, z, x),
            &[t.clamp(lo_n, hi_n), hi_n],
            quad,
        )?;
        let s = t_ * pi * below_pos - (1.0 - t_) * (1.0 - pi) * above_neg;
        Ok(z.iter().map(|v| v * s).collect())
    })
}

/// The η-dependent remainder of the BQR stationarity equation,
///
/// `τ(1−ϖ) ∫ z ∫_{−∞}^{βᵀz} r₋ ψ₋,z − (1−τ)ϖ ∫ z ∫_{βᵀz}^{∞} r₊ ψ₊,z`,
///
/// with `r₋ = (1−τ)e^{−τd/η} / {1 − (1−τ)e^{−τd/η}}` at `d = βᵀz − x` and
/// `r₊ = τe^{−(1−τ)d/η} / {1 − τe^{−(1−τ)d/η}}` at `d = x − βᵀz`.
///
/// The gradient of the population BQR risk is
/// `(mess_residual − rhs_eta) / η`, so β is stationary exactly when the
/// two agree, and `rhs_eta → 0` as η → 0.
pub fn rhs_eta(
    coef: &McidCoef,
    gen: &GeneratorSpec,
    tau: Skewness,
    eta: f64,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    check_dim(gen, coef)?;
    if !(eta > 0.0) {
        return Err(domain(format!("eta must be positive, got {eta}")));
    }
    let pi = gen.pi();
    let tv = tau.get();
    let q = coef.dim();
    let r_minus = move |d: f64| {
        let e = (1.0 - tv) * (-tv * d / eta).exp();
        e / (1.0 - e)
    };
    let r_plus = move |d: f64| {
        let e = tv * (-(1.0 - tv) * d / eta).exp();
        e / (1.0 - e)
    };
    // the ratios decay on the scale η around the threshold
    let layers = [1.0, 4.0, 16.0, 64.0];
    covariate_expectation(gen, quad, q, |z| {
        let t = coef.threshold(z);
        let (lo_n, hi_n) = gen.class_conditional_range(Label::Negative, z, quad.truncation_sds);
        let (lo_p, hi_p) = gen.class_conditional_range(Label::Positive, z, quad.truncation_sds);
        let mut pts_n = vec![lo_n, t.clamp(lo_n, hi_n)];
        pts_n.extend(layers.iter().map(|k| t - k * eta).filter(|p| *p > lo_n && *p < t));
        let mut pts_p = vec![t.clamp(lo_p, hi_p), hi_p];
        pts_p.extend(layers.iter().map(|k| t + k * eta).filter(|p| *p < hi_p && *p > t));
        let left = integrate_pieces(
            |x| Ok(r_minus(t - x) * gen.class_conditional_density(Label::Negative, z, x)?),
            &pts_n,
            quad,
        )?;
        let right = integrate_pieces(
            |x| Ok(r_plus(x - t) * gen.class_conditional_density(Label::Positive, z, x)?),
            &pts_p,
            quad,
        )?;
        let s = tv * (1.0 - pi) * left - (1.0 - tv) * pi * right;
        Ok(z.iter().map(|v| v * s).collect())
    })
}

/// Gradient of the population BQR risk, `(mess_residual − rhs_eta) / η`.
pub fn population_bqr_gradient(
    coef: &McidCoef,
    gen: &GeneratorSpec,
    p: BqrParams,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let lhs = mess_residual(coef, gen, p.tau, quad)?;
    let rhs = rhs_eta(coef, gen, p.tau, p.eta, quad)?;
    Ok(lhs.iter().zip(&rhs).map(|(l, r)| (l - r) / p.eta).collect())
}
