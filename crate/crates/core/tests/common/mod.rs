#![allow(dead_code)]

use mcid_core::data::{Dataset, Label};
use mcid_core::dist::{sample_trunc_normal, TruncationInterval};
use mcid_core::gibbs::{GibbsSampler, GibbsState, MixtureCoefs, PriorSpec};
use mcid_core::losses::BqrParams;
use mcid_core::RngStream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

/// Mean and standard error of independent draws.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Mean and batch-means standard error of a correlated series.
pub fn batch_mean_se(v: &[f64], batches: usize) -> (f64, f64) {
    let len = v.len() / batches;
    let means: Vec<f64> = v
        .chunks_exact(len)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    mean_se(&means)
}

pub struct GewekeReport {
    /// (statistic, z-score)
    pub z: Vec<(&'static str, f64)>,
}

impl GewekeReport {
    pub fn max_abs(&self) -> f64 {
        self.z.iter().map(|(_, z)| z.abs()).fold(0.0, f64::max)
    }
}

fn test_functions(beta: f64, v1: &[f64]) -> [f64; 3] {
    [beta, beta * beta, v1.iter().sum::<f64>() / v1.len() as f64]
}

/// Joint simulator: β from the prior, then v₁ ~ Exp(1),
/// u ~ N(x − βz + ηc₁v₁, η²c₂²v₁) and y = sign(u).
fn draw_block<R: Rng>(x: &[f64], z: &[f64], beta: f64, p: BqrParams, rng: &mut R) -> (Vec<f64>, Vec<f64>, Vec<Label>) {
    let c = MixtureCoefs::from_tau(p.tau);
    let mut v1 = Vec::with_capacity(x.len());
    let mut u = Vec::with_capacity(x.len());
    let mut y = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let v: f64 = rng.sample(Exp1);
        let e: f64 = rng.sample(StandardNormal);
        let ui = x[i] - beta * z[i] + p.eta * c.c1 * v + p.eta * c.c2 * v.sqrt() * e;
        v1.push(v);
        u.push(ui);
        y.push(if ui >= 0.0 { Label::Positive } else { Label::Negative });
    }
    (v1, u, y)
}

/// Geweke's two simulators on a q = 1 design with fixed `(x, z)`.
///
/// The successive-conditional chain alternates one Gibbs sweep given `y`
/// with an exact redraw of `(v₁, u, y)` given β, which leaves the joint law
/// invariant and lets `y` move.
pub fn geweke(
    x: &[f64],
    z: &[f64],
    p: BqrParams,
    prior_mean: f64,
    prior_var: f64,
    sweeps: usize,
    seed: u64,
) -> GewekeReport {
    let prior = PriorSpec::new(
        DVector::from_element(1, prior_mean),
        nalgebra::DMatrix::from_element(1, 1, prior_var),
    )
    .unwrap();

    let mut rng = RngStream::new(seed, 0).rng();
    let mut marginal: Vec<[f64; 3]> = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        let e: f64 = rng.sample(StandardNormal);
        let beta = prior_mean + prior_var.sqrt() * e;
        let (v1, _, _) = draw_block(x, z, beta, p, &mut rng);
        marginal.push(test_functions(beta, &v1));
    }

    let mut rng = RngStream::new(seed, 1).rng();
    let e: f64 = rng.sample(StandardNormal);
    let mut beta = prior_mean + prior_var.sqrt() * e;
    let (mut v1, mut u, mut y) = draw_block(x, z, beta, p, &mut rng);
    let mut successive: Vec<[f64; 3]> = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        let data = Dataset::new(x.to_vec(), y.clone(), z.to_vec(), 1).unwrap();
        let sampler = GibbsSampler::new(&data, &prior, p).unwrap();
        let mut state = GibbsState {
            beta: DVector::from_element(1, beta),
            u: u.clone(),
            v1: v1.clone(),
        };
        sampler.sweep(&mut state, &mut rng).unwrap();
        beta = state.beta[0];
        successive.push(test_functions(beta, &state.v1));
        let block = draw_block(x, z, beta, p, &mut rng);
        v1 = block.0;
        u = block.1;
        y = block.2;
    }

    let names = ["beta", "beta^2", "mean v1"];
    let z = (0..3)
        .map(|k| {
            let a: Vec<f64> = marginal.iter().map(|r| r[k]).collect();
            let b: Vec<f64> = successive.iter().map(|r| r[k]).collect();
            let (ma, sa) = mean_se(&a);
            let (mb, sb) = batch_mean_se(&b, 50);
            (names[k], (ma - mb) / (sa * sa + sb * sb).sqrt())
        })
        .collect();
    GewekeReport { z }
}

/// Draw `u` for fixed labels with the sign constraint satisfied.
pub fn latent_for<R: Rng>(y: &[Label], rng: &mut R) -> Vec<f64> {
    y.iter()
        .map(|l| {
            let i = if l.is_positive() {
                TruncationInterval::nonnegative()
            } else {
                TruncationInterval::negative()
            };
            sample_trunc_normal(0.0, 1.0, i, rng).unwrap()
        })
        .collect()
}

/// Golden-section minimizer of a unimodal function on `[a, b]`.
pub fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Bisection root of a function with a sign change on `[a, b]`.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    assert!(fa * f(b) <= 0.0, "no sign change on [{a}, {b}]");
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

pub fn random_problem(n: usize, q: usize, seed: u64) -> (Dataset, PriorSpec, GibbsState) {
    let mut rng = RngStream::new(seed, 0).rng();
    let mut z = Vec::with_capacity(n * q);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        z.push(1.0);
        for _ in 1..q {
            z.push(rng.sample::<f64, _>(StandardNormal));
        }
        x.push(rng.sample::<f64, _>(StandardNormal));
        y.push(if i % 3 == 0 { Label::Negative } else { Label::Positive });
    }
    let data = Dataset::new(x, y.clone(), z, q).unwrap();
    let a = DMatrix::from_fn(q, q, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cov = &a * a.transpose() + DMatrix::identity(q, q) * 0.5;
    let mean = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
    let prior = PriorSpec::new(mean, cov).unwrap();
    let state = GibbsState {
        beta: DVector::zeros(q),
        u: latent_for(&y, &mut rng),
        v1: (0..n).map(|_| 0.05 + rng.sample::<f64, _>(Exp1)).collect(),
    };
    (data, prior, state)
}

/// Weighted least squares with the prior as extra information, solved by a
/// general matrix inverse.
pub fn gls_oracle(data: &Dataset, prior: &PriorSpec, state: &GibbsState, p: BqrParams) -> (DVector<f64>, DMatrix<f64>) {
    let c = MixtureCoefs::from_tau(p.tau);
    let n = data.len();
    let q = data.dim();
    let zm = DMatrix::from_fn(n, q, |i, k| data.z_row(i)[k]);
    let w = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 / (p.eta * p.eta * c.c2 * c.c2 * state.v1[i])
        } else {
            0.0
        }
    });
    let r = DVector::from_fn(n, |i, _| data.x()[i] + p.eta * c.c1 * state.v1[i] - state.u[i]);
    let p0 = prior.cov().clone().try_inverse().unwrap();
    let cov = (zm.transpose() * &w * &zm + &p0).try_inverse().unwrap();
    let mean = &cov * (&p0 * prior.mean() + zm.transpose() * &w * r);
    (mean, cov)
}
