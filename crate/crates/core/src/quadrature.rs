//! Gauss–Legendre quadrature with order doubling.
//!
//! Rules are built once per order (Newton iteration on the Legendre
//! recurrence) and cached for the life of the process. An integral is
//! accepted when the estimates at orders `n` and `2n` agree to within the
//! configured tolerance.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_LOG2_ORDER: u32 = 2;
const MAX_LOG2_ORDER: u32 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// First order tried; rounded up to a power of two.
    pub min_order: usize,
    /// Highest order tried before reporting non-convergence.
    pub max_order: usize,
    /// Absolute agreement required between successive orders.
    pub tolerance: f64,
    /// Integration range half-width, in class-conditional standard deviations.
    pub truncation_sds: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            min_order: 16,
            max_order: 1024,
            tolerance: 1e-8,
            truncation_sds: 10.0,
        }
    }
}

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[m - 1] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Fixed-order estimate of `∫_a^b f`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached rule of order `2^log2`.
pub fn rule(log2: u32) -> &'static GaussLegendre {
    static RULES: [OnceLock<GaussLegendre>; (MAX_LOG2_ORDER + 1) as usize] =
        [const { OnceLock::new() }; (MAX_LOG2_ORDER + 1) as usize];
    assert!(log2 <= MAX_LOG2_ORDER, "order 2^{log2} exceeds the cached range");
    RULES[log2 as usize].get_or_init(|| GaussLegendre::new(1usize << log2))
}

fn order_range(cfg: &QuadratureConfig) -> (u32, u32) {
    let lo = cfg
        .min_order
        .max(1)
        .next_power_of_two()
        .trailing_zeros()
        .max(MIN_LOG2_ORDER);
    let hi = cfg
        .max_order
        .max(1)
        .next_power_of_two()
        .trailing_zeros()
        .min(MAX_LOG2_ORDER);
    (lo, hi.max(lo + 1))
}

/// `∫_a^b f` with order doubling.
pub fn integrate<F>(mut f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi) = order_range(cfg);
    let mut err = None;
    let mut eval = |log2: u32| -> f64 {
        rule(log2).integrate(
            |x| match f(x) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            },
            a,
            b,
        )
    };
    let mut prev = eval(lo);
    let mut change = f64::INFINITY;
    for log2 in (lo + 1)..=hi {
        let next = eval(log2);
        change = (next - prev).abs();
        if change <= cfg.tolerance {
            if let Some(e) = err {
                return Err(e);
            }
            return Ok(next);
        }
        prev = next;
    }
    if let Some(e) = err {
        return Err(e);
    }
    Err(Error::Quadrature { change, order: 1 << hi })
}

/// `∫ f` over the union of `[p_k, p_{k+1}]`, one adaptive integral per
/// piece. Breakpoints are sorted and deduplicated; put kinks of the
/// integrand here to keep the rule spectrally accurate.
pub fn integrate_pieces<F>(mut f: F, points: &[f64], cfg: &QuadratureConfig) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut pts: Vec<f64> = points.iter().copied().filter(|p| p.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += integrate(&mut f, w[0], w[1], cfg)?;
    }
    Ok(total)
}

/// Vector-valued variant of [`integrate`]; convergence is judged on the
/// largest componentwise change.
pub fn integrate_vec<F>(mut f: F, dim: usize, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    if a == b {
        return Ok(vec![0.0; dim]);
    }
    let (lo, hi) = order_range(cfg);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let mut eval = |log2: u32| -> Result<Vec<f64>> {
        let r = rule(log2);
        let mut acc = vec![0.0; dim];
        for (&x, &w) in r.nodes.iter().zip(&r.weights) {
            let v = f(mid + half * x)?;
            for (s, vi) in acc.iter_mut().zip(v) {
                *s += w * vi;
            }
        }
        acc.iter_mut().for_each(|s| *s *= half);
        Ok(acc)
    };
    let mut prev = eval(lo)?;
    let mut change = f64::INFINITY;
    for log2 in (lo + 1)..=hi {
        let next = eval(log2)?;
        change = next.iter().zip(&prev).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if change <= cfg.tolerance {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature { change, order: 1 << hi })
}
