//! Replicated simulation studies and their CSV/JSON outputs.
//!
//! Randomness is keyed by replicate index only. Replicate `r` (1-based) draws
//! its data from `master.substream(r).substream(0)`, calibrates on
//! `substream(1)` and runs its final chain on `substream(2)`, where
//! `master = RngStream::new(seed, 0)`. Results are therefore identical for
//! any worker count.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{domain, Error, Result};
use crate::gibbs::{credible_interval, run_chain, ChainConfig, PriorConfig, PriorSpec};
use crate::gpc::{calibrate, GpcConfig};
use crate::losses::{empirical_risk, population_risk_1d, BqrParams, LossKind, LossSpec, McidCoef, Weighting};
use crate::quadrature::QuadratureConfig;
use crate::rng::RngStream;
use crate::sim::{plug_in_tau, GeneratorSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.02;

/// Full-scale replicate count restored by `--full`.
pub const FULL_REPLICATES: usize = 250;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub generator: GeneratorSpec,
    pub n: usize,
    #[serde(rename = "R")]
    pub replicates: usize,
    /// Defaults to the generator's covariate means.
    #[serde(default)]
    pub z_tilde: Option<Vec<f64>>,
    /// Defaults to N(0, I).
    #[serde(default)]
    pub prior: Option<PriorConfig>,
    pub chain: ChainConfig,
    pub gpc: GpcConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    /// 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    /// Fill `wall_ms`; off by default so that outputs are reproducible byte for byte.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    /// Desk-scale study: n = 200, R = 100, B = 100, 4000 sweeps with 1000 burn-in.
    pub fn desk(generator: GeneratorSpec, seed: u64) -> Self {
        let gpc = gpc_preset(&generator);
        Self {
            schema_version: SCHEMA_VERSION,
            generator,
            n: 200,
            replicates: 100,
            z_tilde: None,
            prior: None,
            chain: ChainConfig {
                total: 4000,
                burn_in: 1000,
                thin: 1,
                stream: RngStream::default(),
            },
            gpc,
            output_dir: None,
            seed,
            workers: 0,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Input(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.generator.validate()?;
        if self.replicates == 0 {
            return Err(domain("R must be at least 1"));
        }
        let q = self.generator.dim();
        if self.n < q + 1 {
            return Err(domain(format!("n = {} is below q + 1 = {}", self.n, q + 1)));
        }
        if self.z_tilde().len() != q {
            return Err(domain(format!("z_tilde must have length {q}")));
        }
        if self.prior()?.dim() != q {
            return Err(domain(format!("prior must have dimension {q}")));
        }
        self.chain.validate()?;
        self.gpc.validate()
    }

    pub fn z_tilde(&self) -> Vec<f64> {
        self.z_tilde.clone().unwrap_or_else(|| self.generator.default_z_tilde())
    }

    pub fn prior(&self) -> Result<PriorSpec> {
        match &self.prior {
            Some(p) => p.build(),
            None => Ok(PriorSpec::standard(self.generator.dim())),
        }
    }

    /// The new patient's true MCID.
    pub fn truth(&self) -> f64 {
        self.generator.true_mcid().at(&self.z_tilde())
    }

    pub fn master(&self) -> RngStream {
        RngStream::new(self.seed, 0)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Calibration defaults per design. Example 1 lives on an η scale about
/// twenty times smaller than the others, so it starts lower with a smaller gain.
pub fn gpc_preset(generator: &GeneratorSpec) -> GpcConfig {
    match generator {
        GeneratorSpec::Example1(_) => GpcConfig {
            eta0: 0.05,
            k0: 0.5,
            ..GpcConfig::default()
        },
        _ => GpcConfig::default(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub rep: usize,
    pub eta_hat: f64,
    pub theta_mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub covered: bool,
    pub bias: f64,
    pub sq_err: f64,
    pub wall_ms: u64,
}

impl ReplicateRecord {
    pub fn length(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub rep: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub coverage: f64,
    /// Mean credible-interval length.
    pub mean_length: f64,
    /// Standard deviation (n − 1 divisor) of the lengths.
    pub sd_length: f64,
    pub mean_bias: f64,
    pub mse: f64,
    pub mean_eta: f64,
    pub failures: usize,
    #[serde(rename = "R")]
    pub replicates: usize,
    pub n: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = v.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    s / k as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v.iter().copied());
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Aggregate successful replicates in `rep` order.
pub fn summarize(records: &[ReplicateRecord], failures: usize, cfg: &ExperimentConfig) -> SummaryReport {
    let lengths: Vec<f64> = records.iter().map(ReplicateRecord::length).collect();
    SummaryReport {
        coverage: mean(records.iter().map(|r| if r.covered { 1.0 } else { 0.0 })),
        mean_length: mean(lengths.iter().copied()),
        sd_length: sample_sd(&lengths),
        mean_bias: mean(records.iter().map(|r| r.bias)),
        mse: mean(records.iter().map(|r| r.sq_err)),
        mean_eta: mean(records.iter().map(|r| r.eta_hat)),
        failures,
        replicates: cfg.replicates,
        n: cfg.n,
        b: cfg.gpc.b,
        seed: cfg.seed,
    }
}

/// Run `f` on a pool of `workers` threads (0 = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

struct Fixed {
    prior: PriorSpec,
    z_tilde: Vec<f64>,
    truth: f64,
}

impl Fixed {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            prior: cfg.prior()?,
            z_tilde: cfg.z_tilde(),
            truth: cfg.truth(),
        })
    }
}

/// Posterior draws of θ̃ = βᵀz̃ at a fixed η, with τ = 1 − ϖ̂.
fn theta_draws(data: &Dataset, fixed: &Fixed, chain: &ChainConfig, eta: f64, stream: RngStream) -> Result<Vec<f64>> {
    let params = BqrParams {
        tau: plug_in_tau(data)?,
        eta,
    };
    run_chain(data, &fixed.prior, params, &chain.with_stream(stream))?.mcid_draws(&fixed.z_tilde)
}

fn run_replicate(cfg: &ExperimentConfig, fixed: &Fixed, rep: usize) -> Result<ReplicateRecord> {
    let start = Instant::now();
    let stream = cfg.master().substream(rep as u64);
    let data = cfg.generator.generate(cfg.n, stream.substream(0))?;
    let cal = calibrate(
        &data,
        &fixed.z_tilde,
        &fixed.prior,
        &cfg.chain,
        &cfg.gpc,
        stream.substream(1),
    )?;
    let draws = theta_draws(&data, fixed, &cfg.chain, cal.eta_hat, stream.substream(2))?;
    let (ci_lo, ci_hi) = credible_interval(&draws, cfg.gpc.alpha)?;
    let theta_mean = mean(draws.iter().copied());
    let bias = theta_mean - fixed.truth;
    Ok(ReplicateRecord {
        rep,
        eta_hat: cal.eta_hat,
        theta_mean,
        ci_lo,
        ci_hi,
        covered: ci_lo <= fixed.truth && fixed.truth <= ci_hi,
        bias,
        sq_err: bias * bias,
        wall_ms: if cfg.record_timing {
            start.elapsed().as_millis() as u64
        } else {
            0
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutcome {
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<FailureRecord>,
    pub summary: SummaryReport,
}

impl ExperimentOutcome {
    /// Write `replicates.csv`, `failures.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("replicates.csv"), &self.records)?;
        write_csv(&dir.join("failures.csv"), &self.failures)?;
        let mut json = serde_json::to_string_pretty(&self.summary)?;
        json.push('\n');
        std::fs::write(dir.join("summary.json"), json)?;
        Ok(())
    }
}

/// GPC-calibrated inference on `R` fresh datasets.
///
/// A failed replicate is kept out of the aggregates as long as no more than
/// 2% of replicates fail; beyond that the whole run is an error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let fixed = Fixed::new(cfg)?;
    let results: Vec<(usize, Result<ReplicateRecord>)> = with_workers(cfg.workers, || {
        (1..=cfg.replicates)
            .into_par_iter()
            .map(|rep| (rep, run_replicate(cfg, &fixed, rep)))
            .collect()
    })?;
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(FailureRecord {
                rep,
                error: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * cfg.replicates as f64 {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: cfg.replicates,
        });
    }
    let summary = summarize(&records, failures.len(), cfg);
    Ok(ExperimentOutcome {
        records,
        failures,
        summary,
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(true)
        .from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// The loss family compared on the population study.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedLoss {
    pub name: String,
    pub spec: LossSpec,
}

/// Unweighted 0–1 ("hedayat"), inverse-class weighted 0–1 ("zhou"), BQR at
/// `τ = 1 − ϖ` and the given η, and the two smoothed 0–1 losses with `delta`.
pub fn standard_losses(pi: f64, eta: f64, delta: f64) -> Result<Vec<NamedLoss>> {
    let weighted = Weighting::InverseClass { pi };
    let named = |name: &str, spec: LossSpec| NamedLoss {
        name: name.to_string(),
        spec,
    };
    Ok(vec![
        named("hedayat", LossSpec::zero_one(Weighting::Unweighted)),
        named("zhou", LossSpec::zero_one(weighted)),
        named("bqr", LossSpec::bqr(BqrParams::new(1.0 - pi, eta)?)),
        named(
            "hedayat_smooth",
            LossSpec::new(LossKind::HedayatSmooth { delta }, Weighting::Unweighted)?,
        ),
        named("zhou_smooth", LossSpec::new(LossKind::ZhouSmooth { delta }, weighted)?),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCurveRow {
    pub loss: String,
    pub theta: f64,
    pub population: f64,
    /// Population risk divided by its minimum over the grid.
    pub population_scaled: f64,
    pub empirical: Option<f64>,
    pub empirical_scaled: Option<f64>,
}

fn scale_by_min(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::INFINITY, f64::min);
    v.iter().map(|x| x / m).collect()
}

/// Population (and optionally empirical) risk of each loss over a θ grid for
/// a scalar-threshold design.
pub fn risk_curve(
    generator: &GeneratorSpec,
    losses: &[NamedLoss],
    grid: &[f64],
    data: Option<&Dataset>,
    quad: &QuadratureConfig,
) -> Result<Vec<RiskCurveRow>> {
    if generator.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "risk curves need a scalar threshold, {} has q = {}",
            generator.name(),
            generator.dim()
        )));
    }
    if grid.is_empty() {
        return Err(domain("empty theta grid"));
    }
    let mut rows = Vec::with_capacity(losses.len() * grid.len());
    for loss in losses {
        let pop = grid
            .iter()
            .map(|t| population_risk_1d(&loss.spec, generator, *t, quad))
            .collect::<Result<Vec<_>>>()?;
        let emp = data
            .map(|d| {
                grid.iter()
                    .map(|t| empirical_risk(&loss.spec, d, &McidCoef::scalar(*t)))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let pop_s = scale_by_min(&pop);
        let emp_s = emp.as_deref().map(scale_by_min);
        for (i, t) in grid.iter().enumerate() {
            rows.push(RiskCurveRow {
                loss: loss.name.clone(),
                theta: *t,
                population: pop[i],
                population_scaled: pop_s[i],
                empirical: emp.as_ref().map(|e| e[i]),
                empirical_scaled: emp_s.as_ref().map(|e| e[i]),
            });
        }
    }
    Ok(rows)
}

/// Grid point with the smallest value among the rows of one loss.
pub fn curve_argmin(rows: &[RiskCurveRow], loss: &str, scaled_empirical: bool) -> Option<f64> {
    rows.iter()
        .filter(|r| r.loss == loss)
        .filter_map(|r| {
            let v = if scaled_empirical { r.empirical? } else { r.population };
            Some((r.theta, v))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, _)| t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurveRow {
    pub eta: f64,
    pub coverage: f64,
    /// Binomial standard error `√(c(1 − c)/R)`.
    pub se: f64,
    pub mean_length: f64,
    #[serde(rename = "R")]
    pub replicates: usize,
}

/// Frequentist coverage of the credible interval at fixed η values, without
/// calibration. All η share the same `R` datasets; dataset `r` comes from
/// `master.substream(r).substream(0)` and the chain for grid point `j` from
/// `master.substream(r).substream(1 + j)`.
pub fn coverage_curve(cfg: &ExperimentConfig, etas: &[f64]) -> Result<Vec<CoverageCurveRow>> {
    cfg.validate()?;
    for &eta in etas {
        if !(eta > 0.0) {
            return Err(domain(format!("eta must be positive, got {eta}")));
        }
    }
    let fixed = Fixed::new(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..etas.len())
        .flat_map(|j| (1..=cfg.replicates).map(move |r| (j, r)))
        .collect();
    let results: Vec<(bool, f64)> = with_workers(cfg.workers, || {
        jobs.par_iter()
            .map(|&(j, r)| {
                let stream = cfg.master().substream(r as u64);
                let data = cfg.generator.generate(cfg.n, stream.substream(0))?;
                let draws = theta_draws(&data, &fixed, &cfg.chain, etas[j], stream.substream(1 + j as u64))?;
                let (lo, hi) = credible_interval(&draws, cfg.gpc.alpha)?;
                Ok((lo <= fixed.truth && fixed.truth <= hi, hi - lo))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(etas
        .iter()
        .enumerate()
        .map(|(j, &eta)| {
            let chunk = &results[j * cfg.replicates..(j + 1) * cfg.replicates];
            let c = mean(chunk.iter().map(|(hit, _)| if *hit { 1.0 } else { 0.0 }));
            CoverageCurveRow {
                eta,
                coverage: c,
                se: (c * (1.0 - c) / cfg.replicates as f64).sqrt(),
                mean_length: mean(chunk.iter().map(|(_, l)| *l)),
                replicates: cfg.replicates,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterSweepRow {
    pub eta: f64,
    /// Mean over replicates of the posterior mean of θ̃.
    pub mean: f64,
    /// SD (n − 1 divisor) of the posterior means.
    pub sd: f64,
    /// `mean − θ̃*`
    pub bias: f64,
    #[serde(rename = "R")]
    pub replicates: usize,
}

/// Distribution of the posterior mean of θ̃ across `R` datasets, per η.
/// Streams are laid out as in [`coverage_curve`].
pub fn center_sweep(cfg: &ExperimentConfig, etas: &[f64]) -> Result<Vec<CenterSweepRow>> {
    cfg.validate()?;
    let fixed = Fixed::new(cfg)?;
    let jobs: Vec<(usize, usize)> = (0..etas.len())
        .flat_map(|j| (1..=cfg.replicates).map(move |r| (j, r)))
        .collect();
    let centers: Vec<f64> = with_workers(cfg.workers, || {
        jobs.par_iter()
            .map(|&(j, r)| {
                let stream = cfg.master().substream(r as u64);
                let data = cfg.generator.generate(cfg.n, stream.substream(0))?;
                let draws = theta_draws(&data, &fixed, &cfg.chain, etas[j], stream.substream(1 + j as u64))?;
                Ok(mean(draws.iter().copied()))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(etas
        .iter()
        .enumerate()
        .map(|(j, &eta)| {
            let chunk = &centers[j * cfg.replicates..(j + 1) * cfg.replicates];
            let m = mean(chunk.iter().copied());
            CenterSweepRow {
                eta,
                mean: m,
                sd: sample_sd(chunk),
                bias: m - fixed.truth,
                replicates: cfg.replicates,
            }
        })
        .collect())
}

/// One reference row of the four-example comparison, for side-by-side reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub example: u8,
    pub method: &'static str,
    pub eta: Option<f64>,
    pub coverage: f64,
    pub length_mean: f64,
    pub length_sd: f64,
    pub bias: f64,
    pub mse: f64,
}

const fn reference(
    example: u8,
    method: &'static str,
    eta: Option<f64>,
    coverage: f64,
    length: (f64, f64),
    bias: f64,
    mse: f64,
) -> ReferenceRow {
    ReferenceRow {
        example,
        method,
        eta,
        coverage,
        length_mean: length.0,
        length_sd: length.1,
        bias,
        mse,
    }
}

/// Reference results at n = 200 over 250 replications. `zhou_asymptotic` is
/// the smoothed-loss estimator with its normal-theory interval, which is not
/// implemented here.
pub const REFERENCE_RESULTS: [ReferenceRow; 8] = [
    reference(1, "zhou_asymptotic", None, 0.97, (0.093, 0.101), 0.0013, 0.0002),
    reference(1, "bqr_gpc", Some(0.02), 0.94, (0.041, 0.008), 0.0007, 0.0001),
    reference(2, "zhou_asymptotic", None, 0.51, (0.185, 0.279), 0.0073, 0.0479),
    reference(2, "bqr_gpc", Some(0.30), 0.95, (0.402, 0.055), 0.0155, 0.0094),
    reference(3, "zhou_asymptotic", None, 0.41, (0.259, 0.281), 0.130, 0.080),
    reference(3, "bqr_gpc", Some(0.37), 0.95, (0.794, 0.139), 0.034, 0.044),
    reference(4, "zhou_asymptotic", None, 0.34, (0.179, 0.290), 0.206, 0.545),
    reference(4, "bqr_gpc", Some(0.38), 0.94, (0.924, 0.206), 0.06, 0.079),
];

/// Example number (1–4) of a study design, if it is one of the four.
pub fn example_number(generator: &GeneratorSpec) -> Option<u8> {
    match generator {
        GeneratorSpec::Example1(_) => Some(1),
        GeneratorSpec::Example2(_) => Some(2),
        GeneratorSpec::Example3(_) => Some(3),
        GeneratorSpec::Example4(_) => Some(4),
        GeneratorSpec::Population(_) => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub eta: Option<f64>,
    pub coverage: f64,
    pub length_mean: f64,
    pub length_sd: f64,
    pub bias: f64,
    pub mse: f64,
}

/// This run next to the reference rows for the same example.
pub fn comparison(summary: &SummaryReport, generator: &GeneratorSpec) -> Vec<ComparisonRow> {
    let mut rows = vec![ComparisonRow {
        method: "this_run".into(),
        eta: Some(summary.mean_eta),
        coverage: summary.coverage,
        length_mean: summary.mean_length,
        length_sd: summary.sd_length,
        bias: summary.mean_bias,
        mse: summary.mse,
    }];
    if let Some(k) = example_number(generator) {
        rows.extend(
            REFERENCE_RESULTS
                .iter()
                .filter(|r| r.example == k)
                .map(|r| ComparisonRow {
                    method: format!("reference_{}", r.method),
                    eta: r.eta,
                    coverage: r.coverage,
                    length_mean: r.length_mean,
                    length_sd: r.length_sd,
                    bias: r.bias,
                    mse: r.mse,
                }),
        );
    }
    rows
}
