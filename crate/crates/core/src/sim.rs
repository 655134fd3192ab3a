//! Synthetic data-generating processes with known MCID.
//!
//! Covariate vectors always carry a leading intercept: `z = (1, z₁, …)`.
//! Two families cover the five shipped designs:
//!
//! * [`ShiftedClasses`]: `Y ~ 2·Ber(ϖ) − 1`, `Z ~ N(μ_Z, s_Z² I)` and
//!   `X | Y=y, Z=z ~ N(a_yᵀz, s_X²)`. The true MCID is `½(a₋ + a₊)ᵀz`.
//! * [`ProbitThreshold`]: `Z ~ N(0, s_Z² I)`, `X | Z=z ~ N(μ(z), s_X²)` and
//!   `Y | X, Z ~ 2·Ber{F_{X|Z}(X | Z)} − 1`, so `P(Y = +1 | x, z)` crosses ½
//!   exactly at `x = μ(z)`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Datum, Label};
use crate::dist::{normal_cdf, normal_pdf, Skewness};
use crate::error::{domain, Error, Result};
use crate::rng::RngStream;

/// Lower and upper clamp on the plug-in skewness `τ = 1 − ϖ̂`.
pub const TAU_CLAMP: (f64, f64) = (0.01, 0.99);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedClasses {
    /// ϖ = P(Y = +1).
    pub pi: f64,
    /// Coefficients `a₊` (intercept first).
    pub a_pos: Vec<f64>,
    /// Coefficients `a₋` (intercept first).
    pub a_neg: Vec<f64>,
    /// Means of the non-intercept covariates.
    pub z_mean: Vec<f64>,
    pub z_sd: f64,
    pub x_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbitThreshold {
    /// `(β₀, β₁, β₂)`.
    pub beta: Vec<f64>,
    /// Subtract `βⱼ zⱼ²` from the conditional mean of `X` (Example 4).
    pub quadratic: bool,
    pub z_sd: f64,
    pub x_sd: f64,
}

impl ProbitThreshold {
    fn mean(&self, z: &[f64]) -> f64 {
        let lin: f64 = self.beta.iter().zip(z).map(|(b, v)| b * v).sum();
        if self.quadratic {
            lin - self.beta.iter().zip(z).skip(1).map(|(b, v)| b * v * v).sum::<f64>()
        } else {
            lin
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum GeneratorSpec {
    Example1(ShiftedClasses),
    Example2(ShiftedClasses),
    Example3(ProbitThreshold),
    Example4(ProbitThreshold),
    Population(ShiftedClasses),
}

pub type McidFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The MCID as a function of the profile `z` (intercept included).
#[derive(Clone)]
pub enum TrueMcid {
    LinearCoef(Vec<f64>),
    Function(McidFn),
}

impl TrueMcid {
    pub fn at(&self, z: &[f64]) -> f64 {
        match self {
            TrueMcid::LinearCoef(b) => b.iter().zip(z).map(|(b, v)| b * v).sum(),
            TrueMcid::Function(f) => f(z),
        }
    }

    pub fn linear(&self) -> Option<&[f64]> {
        match self {
            TrueMcid::LinearCoef(b) => Some(b),
            TrueMcid::Function(_) => None,
        }
    }
}

impl fmt::Debug for TrueMcid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrueMcid::LinearCoef(b) => f.debug_tuple("LinearCoef").field(b).finish(),
            TrueMcid::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl GeneratorSpec {
    pub fn example1() -> Self {
        GeneratorSpec::Example1(ShiftedClasses {
            pi: 0.5,
            a_pos: vec![0.1, 0.55],
            a_neg: vec![-0.1, 0.45],
            z_mean: vec![1.0],
            z_sd: 0.1,
            x_sd: 0.1,
        })
    }

    pub fn example2() -> Self {
        GeneratorSpec::Example2(ShiftedClasses {
            pi: 0.5,
            a_pos: vec![0.05, 0.55, 1.05],
            a_neg: vec![-0.05, 0.49, 0.95],
            z_mean: vec![1.0, 1.0],
            z_sd: 0.1,
            x_sd: 1.0,
        })
    }

    pub fn example3() -> Self {
        GeneratorSpec::Example3(ProbitThreshold {
            beta: vec![0.0, 1.0, 2.0],
            quadratic: false,
            z_sd: 1.0,
            x_sd: 1.0,
        })
    }

    pub fn example4() -> Self {
        GeneratorSpec::Example4(ProbitThreshold {
            beta: vec![0.0, 1.0, 2.0],
            quadratic: true,
            z_sd: 1.0,
            x_sd: 1.0,
        })
    }

    /// Population study: `X | Y=y ~ N(y, 2²)` with `P(Y = +1) = pi`, no covariate.
    pub fn population(pi: f64) -> Self {
        GeneratorSpec::Population(ShiftedClasses {
            pi,
            a_pos: vec![1.0],
            a_neg: vec![-1.0],
            z_mean: vec![],
            z_sd: 1.0,
            x_sd: 2.0,
        })
    }

    /// Preset by name: `example1`..`example4`, `population`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "example1" | "1" => Ok(Self::example1()),
            "example2" | "2" => Ok(Self::example2()),
            "example3" | "3" => Ok(Self::example3()),
            "example4" | "4" => Ok(Self::example4()),
            "population" => Ok(Self::population(0.7)),
            other => Err(Error::Input(format!("unknown generator {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::Example1(_) => "example1",
            GeneratorSpec::Example2(_) => "example2",
            GeneratorSpec::Example3(_) => "example3",
            GeneratorSpec::Example4(_) => "example4",
            GeneratorSpec::Population(_) => "population",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorSpec::Example1(s) | GeneratorSpec::Example2(s) | GeneratorSpec::Population(s) => {
                let q = s.z_mean.len() + 1;
                if s.a_pos.len() != q || s.a_neg.len() != q {
                    return Err(domain(format!("class coefficients must have length {q}")));
                }
                if !(s.pi > 0.0 && s.pi < 1.0) {
                    return Err(domain(format!("pi must lie in (0, 1), got {}", s.pi)));
                }
                if !(s.z_sd > 0.0 && s.x_sd > 0.0) {
                    return Err(domain("standard deviations must be positive"));
                }
            }
            GeneratorSpec::Example3(p) | GeneratorSpec::Example4(p) => {
                if p.beta.is_empty() {
                    return Err(domain("beta must include an intercept"));
                }
                if !(p.z_sd > 0.0 && p.x_sd > 0.0) {
                    return Err(domain("standard deviations must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Length of `z`, intercept included.
    pub fn dim(&self) -> usize {
        match self {
            GeneratorSpec::Example1(s) | GeneratorSpec::Example2(s) | GeneratorSpec::Population(s) => {
                s.z_mean.len() + 1
            }
            GeneratorSpec::Example3(p) | GeneratorSpec::Example4(p) => p.beta.len(),
        }
    }

    /// ϖ = P(Y = +1).
    pub fn pi(&self) -> f64 {
        match self {
            GeneratorSpec::Example1(s) | GeneratorSpec::Example2(s) | GeneratorSpec::Population(s) => s.pi,
            // F_{X|Z}(X | Z) is uniform
            GeneratorSpec::Example3(_) | GeneratorSpec::Example4(_) => 0.5,
        }
    }

    /// `(mean, sd)` of each independent normal non-intercept covariate.
    pub fn covariate_law(&self) -> Vec<(f64, f64)> {
        match self {
            GeneratorSpec::Example1(s) | GeneratorSpec::Example2(s) | GeneratorSpec::Population(s) => {
                s.z_mean.iter().map(|&m| (m, s.z_sd)).collect()
            }
            GeneratorSpec::Example3(p) | GeneratorSpec::Example4(p) => {
                vec![(0.0, p.z_sd); p.beta.len() - 1]
            }
        }
    }

    /// Default new-patient profile: the intercept followed by the covariate means.
    pub fn default_z_tilde(&self) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.covariate_law().into_iter().map(|(m, _)| m))
            .collect()
    }

    pub fn true_mcid(&self) -> TrueMcid {
        match self {
            GeneratorSpec::Example1(s) | GeneratorSpec::Example2(s) | GeneratorSpec::Population(s) => {
                TrueMcid::LinearCoef(s.a_pos.iter().zip(&s.a_neg).map(|(p, n)| 0.5 * (p + n)).collect())
            }
            GeneratorSpec::Example3(p) => TrueMcid::LinearCoef(p.beta.clone()),
            GeneratorSpec::Example4(p) => {
                let p = p.clone();
                TrueMcid::Function(Arc::new(move |z: &[f64]| p.mean(z)))
            }
        }
    }

    /// Draw `n` records. Record `i` uses substream `i` of `stream`, so each
    /// record is a function of `(stream, i)` alone.
    pub fn generate(&self, n: usize, stream: RngStream) -> Result<Dataset> {
        self.validate()?;
        if n == 0 {
            return Err(domain("need at least one record"));
        }
        let q = self.dim();
        let law = self.covariate_law();
        let mut data = Dataset::empty(q);
        for i in 0..n {
            let mut rng = stream.substream(i as u64).rng();
            let datum = match self {
                GeneratorSpec::Example1(s) | GeneratorSpec::Example2(s) | GeneratorSpec::Population(s) => {
                    let positive = rng.random::<f64>() < s.pi;
                    let z = draw_z(&law, &mut rng);
                    let a = if positive { &s.a_pos } else { &s.a_neg };
                    let mean: f64 = a.iter().zip(&z).map(|(a, v)| a * v).sum();
                    let x = mean + s.x_sd * rng.sample::<f64, _>(StandardNormal);
                    Datum {
                        x,
                        y: if positive { Label::Positive } else { Label::Negative },
                        z,
                    }
                }
                GeneratorSpec::Example3(p) | GeneratorSpec::Example4(p) => {
                    let z = draw_z(&law, &mut rng);
                    let mu = p.mean(&z);
                    let x = mu + p.x_sd * rng.sample::<f64, _>(StandardNormal);
                    let m = normal_cdf((x - mu) / p.x_sd);
                    let positive = rng.random::<f64>() < m;
                    Datum {
                        x,
                        y: if positive { Label::Positive } else { Label::Negative },
                        z,
                    }
                }
            };
            data.push(datum)?;
        }
        Ok(data)
    }

    /// Density ψ_{y,z}(x) of `X` given `Y = y`, `Z = z`.
    pub fn class_conditional_density(&self, y: Label, z: &[f64], x: f64) -> Result<f64> {
        self.check_z(z)?;
        match self {
            GeneratorSpec::Example1(s) | GeneratorSpec::Example2(s) | GeneratorSpec::Population(s) => {
                let a = if y.is_positive() { &s.a_pos } else { &s.a_neg };
                let mean: f64 = a.iter().zip(z).map(|(a, v)| a * v).sum();
                Ok(normal_pdf(x, mean, s.x_sd))
            }
            GeneratorSpec::Example3(p) | GeneratorSpec::Example4(p) => {
                // Bayes inversion with P(Y = +1 | z) = 1/2
                let mu = p.mean(z);
                let f = normal_pdf(x, mu, p.x_sd);
                let m = normal_cdf((x - mu) / p.x_sd);
                Ok(if y.is_positive() {
                    2.0 * m * f
                } else {
                    2.0 * (1.0 - m) * f
                })
            }
        }
    }

    /// Interval carrying all but a negligible part of ψ_{y,z}: its center
    /// plus or minus `sds` standard deviations of the underlying normal.
    pub fn class_conditional_range(&self, y: Label, z: &[f64], sds: f64) -> (f64, f64) {
        let (center, sd) = match self {
            GeneratorSpec::Example1(s) | GeneratorSpec::Example2(s) | GeneratorSpec::Population(s) => {
                let a = if y.is_positive() { &s.a_pos } else { &s.a_neg };
                (a.iter().zip(z).map(|(a, v)| a * v).sum(), s.x_sd)
            }
            GeneratorSpec::Example3(p) | GeneratorSpec::Example4(p) => (p.mean(z), p.x_sd),
        };
        (center - sds * sd, center + sds * sd)
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(domain(format!(
                "profile has length {}, generator expects {}",
                z.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

fn draw_z<R: Rng + ?Sized>(law: &[(f64, f64)], rng: &mut R) -> Vec<f64> {
    std::iter::once(1.0)
        .chain(law.iter().map(|&(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// ϖ̂, the fraction of positive labels.
pub fn pi_hat(data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(domain("cannot estimate pi from an empty dataset"));
    }
    let pos = data.y().iter().filter(|y| y.is_positive()).count();
    Ok(pos as f64 / data.len() as f64)
}

/// Plug-in skewness `τ = 1 − ϖ̂`, clamped to [`TAU_CLAMP`].
pub fn plug_in_tau(data: &Dataset) -> Result<Skewness> {
    let tau = (1.0 - pi_hat(data)?).clamp(TAU_CLAMP.0, TAU_CLAMP.1);
    Skewness::new(tau)
}
