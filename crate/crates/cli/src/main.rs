//! `mcid`: simulation, calibration and inference for personalized MCID.
//!
//!   mcid simulate --generator example1 --n 200 --out data/
//!   mcid infer --data data/data.csv --eta 0.02 --out post/
//!   mcid table1 --generator example1 --workers 8 --out runs/ex1
//!
//! Every subcommand accepts `--config <json>` holding an experiment config;
//! explicit flags override the file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mcid_core::gibbs::{credible_interval, run_chain, ChainConfig};
use mcid_core::gpc::calibrate;
use mcid_core::harness::{
    center_sweep, comparison, coverage_curve, curve_argmin, risk_curve, run_experiment, standard_losses, with_workers,
    write_csv, ExperimentConfig, FULL_REPLICATES,
};
use mcid_core::losses::BqrParams;
use mcid_core::quadrature::QuadratureConfig;
use mcid_core::sim::{plug_in_tau, GeneratorSpec};
use mcid_core::{Dataset, RngStream};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "mcid", version, about = "Generalized-Bayes inference for personalized MCID")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Shared {
    /// Experiment config (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Study {
    /// example1 | example2 | example3 | example4 | population
    #[arg(long)]
    generator: Option<String>,
    /// ϖ of the population design
    #[arg(long)]
    pi: Option<f64>,
    /// Sample size per replicate
    #[arg(long)]
    n: Option<usize>,
    /// Replicates
    #[arg(long = "R")]
    replicates: Option<usize>,
    /// Total sweeps per chain
    #[arg(long)]
    sweeps: Option<usize>,
    /// Burn-in sweeps per chain
    #[arg(long)]
    burn_in: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset and write it as CSV
    Simulate {
        #[command(flatten)]
        study: Study,
        #[command(flatten)]
        shared: Shared,
    },
    /// Select η for one dataset by GPC
    Calibrate {
        /// Dataset CSV; simulated from the config when absent
        #[arg(long)]
        data: Option<PathBuf>,
        /// Profile z̃ as comma-separated values, intercept first
        #[arg(long, value_delimiter = ',')]
        z_tilde: Option<Vec<f64>>,
        /// Bootstrap replicates
        #[arg(long = "B")]
        b: Option<usize>,
        #[arg(long)]
        eta0: Option<f64>,
        #[command(flatten)]
        study: Study,
        #[command(flatten)]
        shared: Shared,
    },
    /// Sample the generalized posterior at a fixed η
    Infer {
        /// Dataset CSV with header x,y,z1..zq
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        eta: f64,
        /// Skewness; defaults to 1 − ϖ̂
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        z_tilde: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 6000)]
        sweeps: usize,
        #[arg(long, default_value_t = 1000)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        thin: usize,
        #[command(flatten)]
        shared: Shared,
    },
    /// Replicated GPC study with coverage, length, bias and MSE
    Table1 {
        /// Bootstrap replicates
        #[arg(long = "B")]
        b: Option<usize>,
        /// Full-scale run (R = 250)
        #[arg(long)]
        full: bool,
        /// Record wall-clock time per replicate
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        study: Study,
        #[command(flatten)]
        shared: Shared,
    },
    /// Scaled population and empirical risk curves of the scalar-threshold design
    RiskCurve {
        #[arg(long, default_value_t = 0.7)]
        pi: f64,
        /// η of the BQR loss
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        /// Smoothing width of the smoothed 0–1 losses
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
        #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 4.0)]
        to: f64,
        #[arg(long, default_value_t = 801)]
        points: usize,
        /// Also evaluate empirical risks on a sample of this size (0 = none)
        #[arg(long, default_value_t = 250)]
        n: usize,
        #[command(flatten)]
        shared: Shared,
    },
    /// Coverage of the credible interval over a grid of fixed η
    CoverageCurve {
        #[arg(long, value_delimiter = ',', required = true)]
        etas: Vec<f64>,
        #[command(flatten)]
        study: Study,
        #[command(flatten)]
        shared: Shared,
    },
    /// Spread of posterior means across datasets for several η
    CenterSweep {
        #[arg(long, value_delimiter = ',', required = true)]
        etas: Vec<f64>,
        #[command(flatten)]
        study: Study,
        #[command(flatten)]
        shared: Shared,
    },
}

fn generator(name: &str, pi: Option<f64>) -> Result<GeneratorSpec> {
    let g = match (GeneratorSpec::by_name(name)?, pi) {
        (GeneratorSpec::Population(_), Some(pi)) => GeneratorSpec::population(pi),
        (g, None) => g,
        (_, Some(_)) => bail!("--pi applies to the population design only"),
    };
    g.validate()?;
    Ok(g)
}

/// Defaults, then the config file, then explicit flags.
fn experiment(shared: &Shared, study: &Study, default_generator: &str) -> Result<ExperimentConfig> {
    let mut cfg = match &shared.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::desk(
            generator(study.generator.as_deref().unwrap_or(default_generator), study.pi)?,
            0,
        ),
    };
    if shared.config.is_some() && (study.generator.is_some() || study.pi.is_some()) {
        let g = generator(study.generator.as_deref().unwrap_or(cfg.generator.name()), study.pi)?;
        if g.dim() != cfg.generator.dim() {
            cfg.z_tilde = None;
            cfg.prior = None;
        }
        cfg.generator = g;
    }
    if let Some(s) = shared.seed {
        cfg.seed = s;
    }
    if let Some(w) = shared.workers {
        cfg.workers = w;
    }
    if let Some(n) = study.n {
        cfg.n = n;
    }
    if let Some(r) = study.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = study.sweeps {
        cfg.chain.total = s;
    }
    if let Some(b) = study.burn_in {
        cfg.chain.burn_in = b;
    }
    if let Some(out) = &shared.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg_dir: Option<&Path>, shared: &Shared, default: &str) -> Result<PathBuf> {
    let dir = shared
        .out
        .clone()
        .or_else(|| cfg_dir.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn read_data(path: &Path) -> Result<Dataset> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Dataset::read_csv(f).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { study, shared } => {
            let cfg = experiment(&shared, &study, "example1")?;
            cfg.validate()?;
            let data = cfg.generator.generate(cfg.n, cfg.master().substream(1).substream(0))?;
            let dir = out_dir(cfg.output_dir.as_deref(), &shared, ".")?;
            let path = dir.join("data.csv");
            data.write_csv(fs::File::create(&path)?)?;
            println!("wrote {} records to {}", data.len(), path.display());
        }
        Command::Calibrate {
            data,
            z_tilde,
            b,
            eta0,
            study,
            shared,
        } => {
            let mut cfg = experiment(&shared, &study, "example1")?;
            if let Some(b) = b {
                cfg.gpc.b = b;
            }
            if let Some(e) = eta0 {
                cfg.gpc.eta0 = e;
            }
            let data = match &data {
                Some(p) => read_data(p)?,
                None => cfg.generator.generate(cfg.n, cfg.master().substream(1).substream(0))?,
            };
            if let Some(z) = z_tilde {
                cfg.z_tilde = Some(z);
            } else if data.dim() != cfg.generator.dim() {
                bail!("--z-tilde is required for a dataset with {} covariates", data.dim());
            }
            cfg.validate()?;
            let result = with_workers(cfg.workers, || {
                calibrate(
                    &data,
                    &cfg.z_tilde(),
                    &cfg.prior()?,
                    &cfg.chain,
                    &cfg.gpc,
                    cfg.master().substream(1).substream(1),
                )
            })??;
            let dir = out_dir(cfg.output_dir.as_deref(), &shared, ".")?;
            write_json(&dir.join("calibration.json"), &result)?;
            write_csv(&dir.join("trace.csv"), &result.trace)?;
            println!(
                "eta_hat = {} ({:?} after {} iterations)",
                result.eta_hat,
                result.terminated_by,
                result.trace.len()
            );
        }
        Command::Infer {
            data,
            eta,
            tau,
            z_tilde,
            alpha,
            sweeps,
            burn_in,
            thin,
            shared,
        } => {
            let data = read_data(&data)?;
            let q = data.dim();
            let (prior, seed) = match &shared.config {
                Some(p) => {
                    let cfg = ExperimentConfig::load(p)?;
                    (cfg.prior()?, cfg.seed)
                }
                None => (mcid_core::gibbs::PriorSpec::standard(q), 0),
            };
            let seed = shared.seed.unwrap_or(seed);
            let tau = match tau {
                Some(t) => t,
                None => plug_in_tau(&data)?.get(),
            };
            let chain = ChainConfig::new(sweeps, burn_in, thin, RngStream::new(seed, 0))?;
            let draws = run_chain(&data, &prior, BqrParams::new(tau, eta)?, &chain)?;
            let dir = out_dir(None, &shared, ".")?;
            let mut w = csv::Writer::from_path(dir.join("draws.csv"))?;
            let mut header: Vec<String> = (1..=q).map(|k| format!("beta{k}")).collect();
            let theta = match &z_tilde {
                Some(z) => Some(draws.mcid_draws(z)?),
                None => None,
            };
            if theta.is_some() {
                header.push("theta".into());
            }
            w.write_record(&header)?;
            for (m, b) in draws.iter().enumerate() {
                let mut row: Vec<String> = b.iter().map(f64::to_string).collect();
                if let Some(t) = &theta {
                    row.push(t[m].to_string());
                }
                w.write_record(&row)?;
            }
            w.flush()?;
            #[derive(Serialize)]
            struct Posterior {
                tau: f64,
                eta: f64,
                draws: usize,
                beta_mean: Vec<f64>,
                theta_mean: Option<f64>,
                ci_lo: Option<f64>,
                ci_hi: Option<f64>,
            }
            let ci = theta.as_ref().map(|t| credible_interval(t, alpha)).transpose()?;
            let summary = Posterior {
                tau,
                eta,
                draws: draws.len(),
                beta_mean: draws.mean(),
                theta_mean: theta.as_ref().map(|t| t.iter().sum::<f64>() / t.len() as f64),
                ci_lo: ci.map(|c| c.0),
                ci_hi: ci.map(|c| c.1),
            };
            write_json(&dir.join("posterior.json"), &summary)?;
            println!("wrote {} draws to {}", draws.len(), dir.join("draws.csv").display());
        }
        Command::Table1 {
            b,
            full,
            timing,
            study,
            shared,
        } => {
            let mut cfg = experiment(&shared, &study, "example1")?;
            if full {
                cfg.replicates = FULL_REPLICATES;
            }
            if let Some(b) = b {
                cfg.gpc.b = b;
            }
            cfg.record_timing |= timing;
            let outcome = run_experiment(&cfg)?;
            let dir = out_dir(cfg.output_dir.as_deref(), &shared, ".")?;
            outcome.write(&dir)?;
            write_csv(
                &dir.join("comparison.csv"),
                &comparison(&outcome.summary, &cfg.generator),
            )?;
            write_json(&dir.join("config.json"), &cfg)?;
            let s = &outcome.summary;
            println!(
                "coverage {:.3}  length {:.4} ({:.4})  bias {:.4}  mse {:.5}  eta {:.3}  failures {}",
                s.coverage, s.mean_length, s.sd_length, s.mean_bias, s.mse, s.mean_eta, s.failures
            );
        }
        Command::RiskCurve {
            pi,
            eta,
            delta,
            from,
            to,
            points,
            n,
            shared,
        } => {
            if points < 2 || to <= from || to.is_nan() || from.is_nan() {
                bail!("need --points >= 2 and --to > --from");
            }
            let g = GeneratorSpec::population(pi);
            g.validate()?;
            let grid: Vec<f64> = (0..points)
                .map(|i| from + (to - from) * i as f64 / (points - 1) as f64)
                .collect();
            let data = if n > 0 {
                Some(g.generate(n, RngStream::new(shared.seed.unwrap_or(0), 0))?)
            } else {
                None
            };
            let losses = standard_losses(pi, eta, delta)?;
            let rows = risk_curve(&g, &losses, &grid, data.as_ref(), &QuadratureConfig::default())?;
            let dir = out_dir(None, &shared, ".")?;
            write_csv(&dir.join("risk_curve.csv"), &rows)?;
            for l in &losses {
                println!(
                    "{:>15} population argmin {:.3}",
                    l.name,
                    curve_argmin(&rows, &l.name, false).unwrap_or(f64::NAN)
                );
            }
        }
        Command::CoverageCurve { etas, study, shared } => {
            let cfg = experiment(&shared, &study, "population")?;
            let rows = coverage_curve(&cfg, &etas)?;
            let dir = out_dir(cfg.output_dir.as_deref(), &shared, ".")?;
            write_csv(&dir.join("coverage_curve.csv"), &rows)?;
            for r in &rows {
                println!("eta {:<8} coverage {:.3} ± {:.3}", r.eta, r.coverage, r.se);
            }
        }
        Command::CenterSweep { etas, study, shared } => {
            let cfg = experiment(&shared, &study, "population")?;
            let rows = center_sweep(&cfg, &etas)?;
            let dir = out_dir(cfg.output_dir.as_deref(), &shared, ".")?;
            write_csv(&dir.join("center_sweep.csv"), &rows)?;
            for r in &rows {
                println!("eta {:<8} mean {:+.4}  sd {:.4}", r.eta, r.mean, r.sd);
            }
        }
    }
    Ok(())
}
