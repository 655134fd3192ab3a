//! Generalized posterior calibration of the loss scale η
//!
//! Coverage of the `1 − α` credible interval at a given η is estimated by
//! bootstrap: the target is the posterior-mean MCID `β̂_ηᵀz̃` on the original
//! data and each of `B` resampled datasets contributes one interval. The
//! Robbins–Monro recursion then moves η toward the root of
//! `ĉ_α(η) = 1 − α`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{domain, Result};
use crate::gibbs::{credible_interval, run_chain, ChainConfig, PriorSpec};
use crate::losses::BqrParams;
use crate::rng::RngStream;
use crate::sim::plug_in_tau;

/// Direction of the η update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignMode {
    /// `η + k(ĉ − (1 − α))`
    Literal,
    /// `η + k((1 − α) − ĉ)`, the contracting direction when coverage grows with η
    MonotoneCorrected,
    /// One probe at `2η₀` picks the direction, which is then fixed.
    AutoDetect,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpcConfig {
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub eta0: f64,
    pub k0: f64,
    pub decay: f64,
    pub eps: f64,
    pub t_max: usize,
    pub eta_min: f64,
    pub sign_mode: SignMode,
}

impl Default for GpcConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            b: 100,
            eta0: 0.5,
            k0: 1.0,
            decay: 0.51,
            eps: 0.02,
            t_max: 25,
            eta_min: 1e-4,
            sign_mode: SignMode::MonotoneCorrected,
        }
    }
}

impl GpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.b == 0 {
            return Err(domain("B must be at least 1"));
        }
        if !(self.eta_min > 0.0 && self.eta0 > self.eta_min) || !self.eta0.is_finite() {
            return Err(domain(format!(
                "need eta0 > eta_min > 0, got eta0 = {}, eta_min = {}",
                self.eta0, self.eta_min
            )));
        }
        if self.t_max == 0 {
            return Err(domain("t_max must be at least 1"));
        }
        if !(self.k0 > 0.0) || !(self.decay > 0.0) || !(self.eps >= 0.0) {
            return Err(domain("k0 and decay must be positive and eps nonnegative"));
        }
        Ok(())
    }

    pub fn target(&self) -> f64 {
        1.0 - self.alpha
    }

    /// `k_t = k₀ / (t + 1)^decay`
    pub fn step_size(&self, t: usize) -> f64 {
        self.k0 / ((t + 1) as f64).powf(self.decay)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Tolerance,
    MaxIterations,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: usize,
    pub eta: f64,
    pub c_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub eta_hat: f64,
    pub trace: Vec<TraceEntry>,
    pub terminated_by: Termination,
    /// The direction actually used; differs from the configured mode only under `AutoDetect`.
    pub sign_mode: SignMode,
}

/// `n` records drawn uniformly with replacement.
pub fn bootstrap_resample<R: Rng + ?Sized>(data: &Dataset, rng: &mut R) -> Result<Dataset> {
    let n = data.len();
    if n == 0 {
        return Err(domain("cannot resample an empty dataset"));
    }
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    Ok(data.select(&idx))
}

/// Everything fixed across Robbins–Monro iterations.
#[derive(Clone, Copy, Debug)]
pub struct CoverageProblem<'a> {
    pub data: &'a Dataset,
    pub z_tilde: &'a [f64],
    pub prior: &'a PriorSpec,
    /// The `stream` field is ignored; streams come from the caller.
    pub chain: ChainConfig,
    pub alpha: f64,
    pub b: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageEstimate {
    pub c_hat: f64,
    /// Posterior mean of β on the original data.
    pub beta_hat: Vec<f64>,
    /// `β̂_ηᵀz̃`
    pub target: f64,
    /// One credible interval per bootstrap replicate, in replicate order.
    pub intervals: Vec<(f64, f64)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn chain_at(
    data: &Dataset,
    problem: &CoverageProblem<'_>,
    eta: f64,
    stream: RngStream,
) -> Result<crate::gibbs::PosteriorDraws> {
    let tau = plug_in_tau(data)?;
    let params = BqrParams { tau, eta };
    run_chain(data, problem.prior, params, &problem.chain.with_stream(stream))
}

/// Bootstrap estimate `ĉ_α(η)`.
///
/// The original-data chain uses `stream.substream(0)`. Replicate `b`
/// resamples with `stream.substream(1 + b).substream(0)` and runs its chain
/// on `stream.substream(1 + b).substream(1)`, so the result does not depend
/// on how the replicates are scheduled across threads.
pub fn estimate_coverage(eta: f64, problem: &CoverageProblem<'_>, stream: RngStream) -> Result<CoverageEstimate> {
    if problem.b == 0 {
        return Err(domain("B must be at least 1"));
    }
    if problem.z_tilde.len() != problem.data.dim() {
        return Err(domain(format!(
            "profile has length {}, data has {} covariates",
            problem.z_tilde.len(),
            problem.data.dim()
        )));
    }
    let original = chain_at(problem.data, problem, eta, stream.substream(0))?;
    let beta_hat = original.mean();
    let target = dot(&beta_hat, problem.z_tilde);
    let intervals = (0..problem.b)
        .into_par_iter()
        .map(|b| {
            let child = stream.substream(1 + b as u64);
            let boot = bootstrap_resample(problem.data, &mut child.substream(0).rng())?;
            let draws = chain_at(&boot, problem, eta, child.substream(1))?;
            credible_interval(&draws.mcid_draws(problem.z_tilde)?, problem.alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    let hits = intervals
        .iter()
        .filter(|(lo, hi)| *lo <= target && target <= *hi)
        .count();
    Ok(CoverageEstimate {
        c_hat: hits as f64 / problem.b as f64,
        beta_hat,
        target,
        intervals,
    })
}

/// One Robbins–Monro update, clamped below at `eta_min`. An unresolved
/// `AutoDetect` steps like `MonotoneCorrected`.
pub fn rm_step(eta_t: f64, c_hat: f64, t: usize, config: &GpcConfig) -> f64 {
    let gap = c_hat - config.target();
    let signed = match config.sign_mode {
        SignMode::Literal => gap,
        SignMode::MonotoneCorrected | SignMode::AutoDetect => -gap,
    };
    (eta_t + config.step_size(t) * signed).max(config.eta_min)
}

/// Source of coverage estimates for [`calibrate_with`]. `key` identifies the
/// call so that implementations can derive a random stream from it.
pub trait CoverageOracle {
    fn coverage(&mut self, eta: f64, key: u64) -> Result<f64>;
}

impl<F: FnMut(f64, u64) -> Result<f64>> CoverageOracle for F {
    fn coverage(&mut self, eta: f64, key: u64) -> Result<f64> {
        self(eta, key)
    }
}

/// Stream key of the `AutoDetect` probe.
pub const PROBE_KEY: u64 = u64::MAX;

/// Robbins–Monro iteration against any coverage oracle. Iteration `t` calls
/// the oracle with key `t`. Stops once `|ĉ − (1 − α)| ≤ eps` holds on two
/// consecutive iterations, or after `t_max` iterations.
pub fn calibrate_with<O: CoverageOracle + ?Sized>(oracle: &mut O, config: &GpcConfig) -> Result<CalibrationResult> {
    config.validate()?;
    let mut cfg = *config;
    let mut eta = config.eta0;
    let mut trace = Vec::with_capacity(config.t_max);
    let mut hits = 0;
    for t in 0..config.t_max {
        let c_hat = oracle.coverage(eta, t as u64)?;
        trace.push(TraceEntry { t, eta, c_hat });
        if (c_hat - cfg.target()).abs() <= cfg.eps {
            hits += 1;
            if hits == 2 {
                return Ok(CalibrationResult {
                    eta_hat: eta,
                    trace,
                    terminated_by: Termination::Tolerance,
                    sign_mode: cfg.sign_mode,
                });
            }
        } else {
            hits = 0;
        }
        if cfg.sign_mode == SignMode::AutoDetect {
            let probe = oracle.coverage(2.0 * eta, PROBE_KEY)?;
            cfg.sign_mode = if probe >= c_hat {
                SignMode::MonotoneCorrected
            } else {
                SignMode::Literal
            };
        }
        eta = rm_step(eta, c_hat, t, &cfg);
    }
    let last = trace.last().expect("t_max >= 1");
    Ok(CalibrationResult {
        eta_hat: last.eta,
        trace,
        terminated_by: Termination::MaxIterations,
        sign_mode: cfg.sign_mode,
    })
}

/// Bootstrap coverage oracle; call `key` uses `stream.substream(key)`.
pub struct BootstrapCoverage<'a> {
    pub problem: CoverageProblem<'a>,
    pub stream: RngStream,
    /// Estimates in call order.
    pub history: Vec<CoverageEstimate>,
}

impl<'a> BootstrapCoverage<'a> {
    pub fn new(problem: CoverageProblem<'a>, stream: RngStream) -> Self {
        Self {
            problem,
            stream,
            history: Vec::new(),
        }
    }
}

impl CoverageOracle for BootstrapCoverage<'_> {
    fn coverage(&mut self, eta: f64, key: u64) -> Result<f64> {
        let est = estimate_coverage(eta, &self.problem, self.stream.substream(key))?;
        let c = est.c_hat;
        self.history.push(est);
        Ok(c)
    }
}

/// Full GPC on one dataset.
pub fn calibrate(
    data: &Dataset,
    z_tilde: &[f64],
    prior: &PriorSpec,
    chain: &ChainConfig,
    config: &GpcConfig,
    stream: RngStream,
) -> Result<CalibrationResult> {
    config.validate()?;
    chain.validate()?;
    let problem = CoverageProblem {
        data,
        z_tilde,
        prior,
        chain: *chain,
        alpha: config.alpha,
        b: config.b,
    };
    calibrate_with(&mut BootstrapCoverage::new(problem, stream), config)
}
