//! Interaction weight families.
//!
//! Three modes are supported:
//!
//! * **Topological discrete**: a nonnegative table `g[r]` indexed by neighbor
//!   rank.  Rows of the communication matrix are divided by the normalizer
//!   `gamma_n = g[0] + ... + g[n-1]`, which makes them sum to one.
//! * **Topological normalized**: a nonnegative kernel `g(s)` on `[0, 1]`
//!   evaluated at separations scaled into the unit interval; the continuum
//!   normalizer is `gamma = integral of g over [0, 1]`.
//! * **Metric**: `g(s) = lambda / (sigma^2 + s^2)^beta` evaluated at
//!   Euclidean distances and divided by the agent count.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Kernel on the unit interval used by the normalized mode.
#[derive(Clone)]
pub enum NormalizedKernel {
    /// `g(s) = value`.
    Constant(f64),
    /// `g(s) = intercept + slope * s`, required nonnegative on `[0, 1]`.
    Affine { intercept: f64, slope: f64 },
    /// `g(s) = (amplitude / length) * exp(-s / length)`.
    Exponential { amplitude: f64, length: f64 },
    /// Arbitrary nonnegative function; its integral is computed by
    /// composite Simpson quadrature with 1024 subintervals.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for NormalizedKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormalizedKernel::Constant(c) => write!(f, "Constant({c})"),
            NormalizedKernel::Affine { intercept, slope } => {
                write!(f, "Affine {{ intercept: {intercept}, slope: {slope} }}")
            }
            NormalizedKernel::Exponential { amplitude, length } => {
                write!(f, "Exponential {{ amplitude: {amplitude}, length: {length} }}")
            }
            NormalizedKernel::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

const SIMPSON_SUBINTERVALS: usize = 1024;

fn simpson_unit<F: Fn(f64) -> f64>(f: F) -> f64 {
    let n = SIMPSON_SUBINTERVALS;
    let h = 1.0 / n as f64;
    let mut acc = f(0.0) + f(1.0);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * h);
    }
    acc * h / 3.0
}

impl NormalizedKernel {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            NormalizedKernel::Constant(c) => *c,
            NormalizedKernel::Affine { intercept, slope } => intercept + slope * s,
            NormalizedKernel::Exponential { amplitude, length } => {
                (amplitude / length) * (-s / length).exp()
            }
            NormalizedKernel::Custom(f) => f(s),
        }
    }

    /// Integral over `[0, 1]`; closed form for the built-in families,
    /// Simpson quadrature for custom kernels.
    pub fn integral(&self) -> f64 {
        match self {
            NormalizedKernel::Constant(c) => *c,
            NormalizedKernel::Affine { intercept, slope } => intercept + 0.5 * slope,
            NormalizedKernel::Exponential { amplitude, length } => {
                amplitude * (-(-1.0 / length).exp_m1())
            }
            NormalizedKernel::Custom(f) => simpson_unit(|s| f(s)),
        }
    }

    /// Maximum over `[0, 1]` (sampled for custom kernels).
    pub fn max_on_unit(&self) -> f64 {
        match self {
            NormalizedKernel::Constant(c) => *c,
            NormalizedKernel::Affine { intercept, slope } => {
                (intercept).max(intercept + slope)
            }
            NormalizedKernel::Exponential { amplitude, length } => amplitude / length,
            NormalizedKernel::Custom(f) => (0..=SIMPSON_SUBINTERVALS)
                .map(|k| f(k as f64 / SIMPSON_SUBINTERVALS as f64))
                .fold(0.0, f64::max),
        }
    }

    /// Minimum over `[0, 1]` (sampled for custom kernels).
    pub fn min_on_unit(&self) -> f64 {
        match self {
            NormalizedKernel::Constant(c) => *c,
            NormalizedKernel::Affine { intercept, slope } => {
                (intercept).min(intercept + slope)
            }
            NormalizedKernel::Exponential { amplitude, length } => {
                (amplitude / length) * (-1.0 / length).exp()
            }
            NormalizedKernel::Custom(f) => (0..=SIMPSON_SUBINTERVALS)
                .map(|k| f(k as f64 / SIMPSON_SUBINTERVALS as f64))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Upper bound on the Lipschitz constant over `[0, 1]` (finite-difference
    /// sample for custom kernels).
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            NormalizedKernel::Constant(_) => 0.0,
            NormalizedKernel::Affine { slope, .. } => slope.abs(),
            NormalizedKernel::Exponential { amplitude, length } => amplitude / (length * length),
            NormalizedKernel::Custom(f) => {
                let n = SIMPSON_SUBINTERVALS;
                let h = 1.0 / n as f64;
                (0..n)
                    .map(|k| {
                        let s = k as f64 * h;
                        ((f(s + h) - f(s)) / h).abs()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidParameter {
            name: "kernel",
            reason: reason.into(),
        };
        match self {
            NormalizedKernel::Constant(c) => {
                if !c.is_finite() || *c < 0.0 {
                    return Err(bad("constant must be finite and nonnegative"));
                }
            }
            NormalizedKernel::Affine { intercept, slope } => {
                if !intercept.is_finite() || !slope.is_finite() {
                    return Err(bad("affine coefficients must be finite"));
                }
                if *intercept < 0.0 || intercept + slope < 0.0 {
                    return Err(bad("affine kernel must be nonnegative on [0, 1]"));
                }
            }
            NormalizedKernel::Exponential { amplitude, length } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(bad("amplitude must be finite and nonnegative"));
                }
                if !(length.is_finite() && *length > 0.0) {
                    return Err(bad("length must be finite and positive"));
                }
            }
            NormalizedKernel::Custom(_) => {}
        }
        Ok(())
    }
}

/// Interaction weight function; see the module docs for the three modes.
#[derive(Clone, Debug)]
pub enum WeightFunction {
    TopologicalDiscrete { table: Vec<f64> },
    TopologicalNormalized { kernel: NormalizedKernel },
    Metric { lambda: f64, sigma: f64, beta: f64 },
}

impl WeightFunction {
    /// Discrete rank table `g[0..]`; entries must be finite and nonnegative.
    pub fn topological(table: Vec<f64>) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::WeightTableTooShort { len: 0, needed: 1 });
        }
        if table.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::InvalidParameter {
                name: "table",
                reason: "entries must be finite and nonnegative".into(),
            });
        }
        Ok(WeightFunction::TopologicalDiscrete { table })
    }

    pub fn normalized(kernel: NormalizedKernel) -> Result<Self> {
        kernel.validate()?;
        Ok(WeightFunction::TopologicalNormalized { kernel })
    }

    /// Metric weights `g(s) = lambda / (sigma^2 + s^2)^beta`.
    pub fn metric(lambda: f64, sigma: f64, beta: f64) -> Result<Self> {
        for (name, v, positive) in [
            ("lambda", lambda, true),
            ("sigma", sigma, true),
            ("beta", beta, false),
        ] {
            if !v.is_finite() || v < 0.0 || (positive && v == 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be finite and positive".into(),
                });
            }
        }
        Ok(WeightFunction::Metric { lambda, sigma, beta })
    }

    /// Rank-table lookup; requires `table.len() >= n`.
    pub fn rank_weight(&self, rank: usize, n: usize) -> Result<f64> {
        match self {
            WeightFunction::TopologicalDiscrete { table } => {
                if table.len() < n {
                    return Err(Error::WeightTableTooShort { len: table.len(), needed: n });
                }
                Ok(table[rank])
            }
            _ => Err(Error::UnsupportedWeightMode {
                op: "rank_weight",
                expected: "topological-discrete",
            }),
        }
    }

    /// Discrete normalizer `gamma_n = g[0] + ... + g[n-1]`.
    pub fn gamma_n(&self, n: usize) -> Result<f64> {
        match self {
            WeightFunction::TopologicalDiscrete { table } => {
                if table.len() < n {
                    return Err(Error::WeightTableTooShort { len: table.len(), needed: n });
                }
                Ok(table[..n].iter().sum())
            }
            _ => Err(Error::UnsupportedWeightMode {
                op: "gamma_n",
                expected: "topological-discrete",
            }),
        }
    }

    /// Metric kernel value at distance `s`.
    pub fn metric_weight(&self, s: f64) -> Result<f64> {
        match self {
            WeightFunction::Metric { lambda, sigma, beta } => {
                Ok(lambda / (sigma * sigma + s * s).powf(*beta))
            }
            _ => Err(Error::UnsupportedWeightMode {
                op: "metric_weight",
                expected: "metric",
            }),
        }
    }
}
