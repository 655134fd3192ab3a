//! Data-augmented Gibbs sampler for the BQR generalized posterior
//!
//! ```text
//! π(β | data) ∝ exp{−Σᵢ ℓ_β(xᵢ, yᵢ, zᵢ)} · N(β | μ₀, Σ₀)
//! ```
//!
//! Each observation carries a latent response `uᵢ` whose sign is `yᵢ` and
//! an exponential mixing scale `v₁ᵢ` from the normal–exponential form of the
//! asymmetric Laplace error. A sweep updates `u`, then `v₁`, then `β`; all
//! three full conditionals are standard (truncated normal, GIG(½), normal).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dist::{sample_gig_half, sample_trunc_normal, GigParams, Skewness, TruncationInterval};
use crate::error::{domain, Error, Result};
use crate::linalg;
use crate::losses::BqrParams;
use crate::rng::RngStream;

/// Gaussian prior N(μ₀, Σ₀) on β.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
    precision_mean: DVector<f64>,
}

impl PriorSpec {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(domain(format!(
                "prior covariance is {}x{} but mean has length {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        if (&cov - cov.transpose()).abs().max() > 1e-12 * cov.abs().max().max(1.0) {
            return Err(domain("prior covariance is not symmetric"));
        }
        let l = linalg::cholesky_lower(&cov)?;
        let precision = linalg::cholesky_inverse(&l);
        let precision_mean = linalg::cholesky_solve(&l, &mean);
        Ok(Self {
            mean,
            cov,
            precision,
            precision_mean,
        })
    }

    /// N(0, I_q).
    pub fn standard(q: usize) -> Self {
        Self::isotropic(q, 1.0)
    }

    /// N(0, variance · I_q).
    pub fn isotropic(q: usize, variance: f64) -> Self {
        Self::new(DVector::zeros(q), DMatrix::identity(q, q) * variance).expect("isotropic prior")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Plain-data form of a [`PriorSpec`] for configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub mu0: Vec<f64>,
    pub sigma0: Vec<Vec<f64>>,
}

impl PriorConfig {
    pub fn standard(q: usize) -> Self {
        Self {
            mu0: vec![0.0; q],
            sigma0: (0..q)
                .map(|i| (0..q).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn build(&self) -> Result<PriorSpec> {
        let q = self.mu0.len();
        if self.sigma0.len() != q || self.sigma0.iter().any(|r| r.len() != q) {
            return Err(domain("sigma0 must be a q x q matrix matching mu0"));
        }
        let flat: Vec<f64> = self.sigma0.iter().flatten().copied().collect();
        PriorSpec::new(
            DVector::from_vec(self.mu0.clone()),
            DMatrix::from_row_slice(q, q, &flat),
        )
    }
}

/// Coefficients of the mixture ε = c₁V₁ + c₂√V₁·V₂.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureCoefs {
    pub c1: f64,
    pub c2: f64,
}

impl MixtureCoefs {
    pub fn from_tau(tau: Skewness) -> Self {
        let t = tau.get();
        Self {
            c1: (1.0 - 2.0 * t) / (t * (1.0 - t)),
            c2: (2.0 / (t * (1.0 - t))).sqrt(),
        }
    }
}

/// β together with the latent `u` and `v₁`. `uᵢ ≥ 0` exactly when `yᵢ = +1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsState {
    pub beta: DVector<f64>,
    pub u: Vec<f64>,
    pub v1: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub total: usize,
    pub burn_in: usize,
    pub thin: usize,
    #[serde(skip)]
    pub stream: RngStream,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            total: 6000,
            burn_in: 1000,
            thin: 1,
            stream: RngStream::new(0, 0),
        }
    }
}

impl ChainConfig {
    pub fn new(total: usize, burn_in: usize, thin: usize, stream: RngStream) -> Result<Self> {
        let c = Self {
            total,
            burn_in,
            thin,
            stream,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.total {
            return Err(domain(format!(
                "burn-in {} must be smaller than the chain length {}",
                self.burn_in, self.total
            )));
        }
        if self.thin == 0 {
            return Err(domain("thinning stride must be at least 1"));
        }
        Ok(())
    }

    pub fn with_stream(self, stream: RngStream) -> Self {
        Self { stream, ..self }
    }

    /// Number of retained draws.
    pub fn retained(&self) -> usize {
        (self.total - self.burn_in) / self.thin
    }
}

/// Retained β draws, row-major `M × q`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    betas: Vec<f64>,
    q: usize,
    pub tau: Skewness,
    pub eta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.betas.len() / self.q
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.q
    }

    pub fn beta(&self, m: usize) -> &[f64] {
        &self.betas[m * self.q..(m + 1) * self.q]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.betas.chunks_exact(self.q)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.q];
        for b in self.iter() {
            for (s, v) in m.iter_mut().zip(b) {
                *s += v;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|s| *s /= n);
        m
    }

    /// θ̃⁽ᵐ⁾ = β⁽ᵐ⁾ᵀ z̃ for every retained draw.
    pub fn mcid_draws(&self, z_tilde: &[f64]) -> Result<Vec<f64>> {
        if z_tilde.len() != self.q {
            return Err(domain(format!(
                "profile has length {}, draws have dimension {}",
                z_tilde.len(),
                self.q
            )));
        }
        Ok(self
            .iter()
            .map(|b| b.iter().zip(z_tilde).map(|(b, z)| b * z).sum())
            .collect())
    }
}

/// The Gaussian full conditional of β: mean μₙ and the Cholesky factor of
/// the precision Σₙ⁻¹.
#[derive(Clone, Debug)]
pub struct BetaConditional {
    pub mean: DVector<f64>,
    pub precision_factor: DMatrix<f64>,
}

impl BetaConditional {
    /// Σₙ, formed explicitly for inspection only.
    pub fn covariance(&self) -> DMatrix<f64> {
        linalg::cholesky_inverse(&self.precision_factor)
    }
}

/// Gibbs sampler for one dataset at fixed (τ, η).
pub struct GibbsSampler<'a> {
    data: &'a Dataset,
    prior: &'a PriorSpec,
    params: BqrParams,
    coefs: MixtureCoefs,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(data: &'a Dataset, prior: &'a PriorSpec, params: BqrParams) -> Result<Self> {
        if prior.dim() != data.dim() {
            return Err(domain(format!(
                "prior has dimension {}, data has {} covariates",
                prior.dim(),
                data.dim()
            )));
        }
        Ok(Self {
            data,
            prior,
            params,
            coefs: MixtureCoefs::from_tau(params.tau),
        })
    }

    /// Override the mixture coefficients.
    pub fn with_coefs(mut self, coefs: MixtureCoefs) -> Self {
        self.coefs = coefs;
        self
    }

    pub fn coefs(&self) -> MixtureCoefs {
        self.coefs
    }

    /// `xᵢ − βᵀzᵢ` for every record.
    pub fn margins(&self, beta: &DVector<f64>) -> Vec<f64> {
        let q = self.data.dim();
        let b = beta.as_slice();
        self.data
            .x()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let z = self.data.z_row(i);
                let mut s = 0.0;
                for k in 0..q {
                    s += z[k] * b[k];
                }
                x - s
            })
            .collect()
    }

    /// mean_i(η) = (xᵢ − βᵀzᵢ) + η c₁ v₁ᵢ
    pub fn latent_mean(&self, i: usize, beta: &DVector<f64>, v1: f64) -> f64 {
        let z = self.data.z_row(i);
        let m = self.data.x()[i] - z.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>();
        m + self.params.eta * self.coefs.c1 * v1
    }

    /// var_i(η) = η² c₂² v₁ᵢ
    pub fn latent_var(&self, v1: f64) -> f64 {
        let s = self.params.eta * self.coefs.c2;
        s * s * v1
    }

    /// β = μ₀, v₁ = 1, and `u` drawn from its conditional.
    pub fn init_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GibbsState> {
        let n = self.data.len();
        let mut state = GibbsState {
            beta: self.prior.mean().clone(),
            u: vec![0.0; n],
            v1: vec![1.0; n],
        };
        self.update_u(&mut state, rng)?;
        Ok(state)
    }

    pub fn update_u<R: Rng + ?Sized>(&self, state: &mut GibbsState, rng: &mut R) -> Result<()> {
        let m = self.margins(&state.beta);
        self.update_u_at(&m, state, rng)
    }

    fn update_u_at<R: Rng + ?Sized>(&self, margins: &[f64], state: &mut GibbsState, rng: &mut R) -> Result<()> {
        let shift = self.params.eta * self.coefs.c1;
        let s2 = (self.params.eta * self.coefs.c2).powi(2);
        for (i, m) in margins.iter().enumerate() {
            let v = state.v1[i];
            let interval = if self.data.y()[i].is_positive() {
                TruncationInterval::nonnegative()
            } else {
                TruncationInterval::negative()
            };
            state.u[i] = sample_trunc_normal(m + shift * v, s2 * v, interval, rng)?;
        }
        Ok(())
    }

    /// GIG(½, a, b) parameters for v₁ᵢ given uᵢ and β.
    pub fn v1_conditional(&self, i: usize, u: f64, beta: &DVector<f64>) -> GigParams {
        let m = self.latent_mean(i, beta, 0.0);
        self.v1_params(u - m)
    }

    fn v1_params(&self, resid: f64) -> GigParams {
        let r = resid / (self.params.eta * self.coefs.c2);
        let b = 2.0 + (self.coefs.c1 / self.coefs.c2).powi(2);
        GigParams { nu: 0.5, a: r * r, b }
    }

    pub fn update_v1<R: Rng + ?Sized>(&self, state: &mut GibbsState, rng: &mut R) -> Result<()> {
        let m = self.margins(&state.beta);
        self.update_v1_at(&m, state, rng)
    }

    fn update_v1_at<R: Rng + ?Sized>(&self, margins: &[f64], state: &mut GibbsState, rng: &mut R) -> Result<()> {
        for (i, m) in margins.iter().enumerate() {
            let p = self.v1_params(state.u[i] - m);
            if !p.a.is_finite() {
                return Err(domain(format!("non-finite GIG parameter for record {i}")));
            }
            state.v1[i] = sample_gig_half(p.a, p.b, rng);
        }
        Ok(())
    }

    /// Σₙ⁻¹ = η⁻²c₂⁻² ZᵀΛ⁻¹Z + Σ₀⁻¹ and
    /// μₙ = Σₙ{Σ₀⁻¹μ₀ − η⁻²c₂⁻² ZᵀΛ⁻¹(u − ηc₁v₁ − X)}.
    pub fn beta_conditional(&self, state: &GibbsState) -> Result<BetaConditional> {
        let q = self.data.dim();
        let s = self.params.eta * self.coefs.c2;
        let scale = 1.0 / (s * s);
        let mut prec = self.prior.precision.clone();
        let mut rhs = self.prior.precision_mean.clone();
        for i in 0..self.data.len() {
            let z = self.data.z_row(i);
            let w = scale / state.v1[i];
            let r = self.data.x()[i] + self.params.eta * self.coefs.c1 * state.v1[i] - state.u[i];
            for a in 0..q {
                rhs[a] += w * z[a] * r;
                for b in 0..=a {
                    prec[(a, b)] += w * z[a] * z[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                prec[(b, a)] = prec[(a, b)];
            }
        }
        let l = linalg::cholesky_lower(&prec).map_err(|e| match e {
            Error::NotPositiveDefinite { minor } => Error::NotPositiveDefinite { minor },
            other => other,
        })?;
        let mean = linalg::cholesky_solve(&l, &rhs);
        Ok(BetaConditional {
            mean,
            precision_factor: l,
        })
    }

    pub fn update_beta<R: Rng + ?Sized>(&self, state: &mut GibbsState, rng: &mut R) -> Result<()> {
        let cond = self.beta_conditional(state)?;
        let q = cond.mean.len();
        let xi = DVector::from_iterator(q, (0..q).map(|_| rng.sample::<f64, _>(StandardNormal)));
        state.beta = cond.mean + linalg::solve_lower_transpose(&cond.precision_factor, &xi);
        Ok(())
    }

    /// One systematic scan: u, then v₁, then β.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut GibbsState, rng: &mut R) -> Result<()> {
        let m = self.margins(&state.beta);
        self.update_u_at(&m, state, rng)?;
        self.update_v1_at(&m, state, rng)?;
        self.update_beta(state, rng)
    }

    /// Run `cfg.total` sweeps and keep every `thin`-th β after burn-in.
    pub fn run(&self, cfg: &ChainConfig) -> Result<PosteriorDraws> {
        cfg.validate()?;
        let q = self.data.dim();
        let mut rng = cfg.stream.rng();
        let mut state = self.init_state(&mut rng)?;
        let mut betas = Vec::with_capacity(cfg.retained() * q);
        for it in 0..cfg.total {
            self.sweep(&mut state, &mut rng)?;
            if it >= cfg.burn_in && (it + 1 - cfg.burn_in).is_multiple_of(cfg.thin) {
                betas.extend(state.beta.iter());
            }
        }
        Ok(PosteriorDraws {
            betas,
            q,
            tau: self.params.tau,
            eta: self.params.eta,
            iterations: cfg.total,
            burn_in: cfg.burn_in,
            thin: cfg.thin,
        })
    }
}

/// Convenience wrapper around [`GibbsSampler::run`].
pub fn run_chain(data: &Dataset, prior: &PriorSpec, params: BqrParams, cfg: &ChainConfig) -> Result<PosteriorDraws> {
    GibbsSampler::new(data, prior, params)?.run(cfg)
}

/// Minimum number of draws accepted by [`credible_interval`].
pub const MIN_INTERVAL_DRAWS: usize = 100;

/// Equal-tailed `100(1 − α)%` interval from the empirical α/2 and 1 − α/2
/// quantiles, interpolating linearly between order statistics
/// (`h = (M − 1)p`, the "type 7" rule).
pub fn credible_interval(draws: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if draws.len() < MIN_INTERVAL_DRAWS {
        return Err(domain(format!(
            "credible interval needs at least {MIN_INTERVAL_DRAWS} draws, got {}",
            draws.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((
        quantile_sorted(&sorted, alpha / 2.0),
        quantile_sorted(&sorted, 1.0 - alpha / 2.0),
    ))
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
