//! Squared-exponential covariance kernel and its scaled-sigmoid hyperprior.
//!
//! The kernel is `h² · exp(-Σ_j (x_j - y_j)² / (2 l_j²))` with one length
//! scale per input dimension. Each hyperparameter `θ` is given the prior
//! `θ = θ_max · sigmoid(x)` with `x` standard normal.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub output_scale: f64,
    pub input_scales: Vec<f64>,
}

impl HyperParams {
    pub fn new(output_scale: f64, input_scales: Vec<f64>) -> Result<Self> {
        if !(output_scale > 0.0 && output_scale.is_finite()) {
            return Err(Error::input(format!(
                "output scale must be positive and finite, got {output_scale}"
            )));
        }
        if input_scales.is_empty() {
            return Err(Error::input("at least one input scale is required"));
        }
        if let Some(l) = input_scales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::input(format!(
                "input scales must be positive and finite, got {l}"
            )));
        }
        Ok(HyperParams {
            output_scale,
            input_scales,
        })
    }

    /// Same length scale in every one of `dim` dimensions.
    pub fn isotropic(output_scale: f64, input_scale: f64, dim: usize) -> Result<Self> {
        HyperParams::new(output_scale, vec![input_scale; dim])
    }

    pub fn dim(&self) -> usize {
        self.input_scales.len()
    }

    /// Prior variance `h²` of the log-intensity at any single location.
    pub fn variance(&self) -> f64 {
        self.output_scale * self.output_scale
    }

    /// All hyperparameters as one vector: output scale first.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.input_scales.len());
        v.push(self.output_scale);
        v.extend_from_slice(&self.input_scales);
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub max_output_scale: f64,
    pub max_input_scales: Vec<f64>,
}

impl HyperPrior {
    pub fn new(max_output_scale: f64, max_input_scales: Vec<f64>) -> Result<Self> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(max_output_scale) || max_input_scales.is_empty() || !max_input_scales.iter().all(|v| ok(*v)) {
            return Err(Error::input(
                "hyperprior bounds must be strictly positive and finite",
            ));
        }
        Ok(HyperPrior {
            max_output_scale,
            max_input_scales,
        })
    }

    /// Shared `l_max` across `dim` input dimensions.
    pub fn shared(max_output_scale: f64, max_input_scale: f64, dim: usize) -> Result<Self> {
        HyperPrior::new(max_output_scale, vec![max_input_scale; dim])
    }

    pub fn dim(&self) -> usize {
        self.max_input_scales.len()
    }

    fn bounds(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.max_output_scale).chain(self.max_input_scales.iter().copied())
    }

    /// Map latent standard-normal coordinates (output first, then one per
    /// input dimension) through the scaled sigmoid.
    pub fn from_latent(&self, latent: &[f64]) -> Result<HyperParams> {
        if latent.len() != 1 + self.dim() {
            return Err(Error::input(format!(
                "expected {} latent coordinates, got {}",
                1 + self.dim(),
                latent.len()
            )));
        }
        let theta: Vec<f64> = self
            .bounds()
            .zip(latent)
            .map(|(max, &x)| max * sigmoid(x))
            .collect();
        HyperParams::new(theta[0], theta[1..].to_vec())
    }

    /// Draw `θ_i = θ_i,max / (1 + exp(-x_i))`, `x_i ~ N(0, 1)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HyperParams {
        loop {
            let latent: Vec<f64> = (0..=self.dim()).map(|_| rng.sample(StandardNormal)).collect();
            // sigmoid(x) underflows to 0 only for |x| > 700, which a normal draw never reaches,
            // but guard anyway so the result always lies strictly inside the support.
            if let Ok(p) = self.from_latent(&latent) {
                if self.contains(&p) {
                    return p;
                }
            }
        }
    }

    pub fn contains(&self, params: &HyperParams) -> bool {
        params.dim() == self.dim()
            && self
                .bounds()
                .zip(params.to_vec())
                .all(|(max, v)| v > 0.0 && v < max)
    }

    /// Log-density of `θ` (in θ-space, Jacobian included). `-inf` outside the support.
    pub fn log_density(&self, params: &HyperParams) -> f64 {
        if !self.contains(params) {
            return f64::NEG_INFINITY;
        }
        self.bounds()
            .zip(params.to_vec())
            .map(|(max, v)| {
                let u = v / max;
                let x = (u / (1.0 - u)).ln();
                // dθ/dx = max · u · (1 - u)
                -0.5 * x * x - LN_SQRT_2PI - (max * u * (1.0 - u)).ln()
            })
            .sum()
    }
}

pub fn sample_hyper<R: Rng + ?Sized>(prior: &HyperPrior, rng: &mut R) -> HyperParams {
    prior.sample(rng)
}

pub fn log_hyper_prior_density(params: &HyperParams, prior: &HyperPrior) -> f64 {
    prior.log_density(params)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Stationary squared-exponential kernel with fixed hyperparameters.
#[derive(Clone, Debug)]
pub struct Kernel {
    params: HyperParams,
    variance: f64,
    inv_scales: Vec<f64>,
}

impl Kernel {
    pub fn new(params: HyperParams) -> Self {
        let variance = params.variance();
        let inv_scales = params.input_scales.iter().map(|l| 1.0 / l).collect();
        Kernel {
            params,
            variance,
            inv_scales,
        }
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn dim(&self) -> usize {
        self.inv_scales.len()
    }

    /// Unchecked evaluation; both slices must have the kernel's dimension.
    #[inline]
    pub fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((x, y), s) in a.iter().zip(b).zip(&self.inv_scales) {
            let d = (x - y) * s;
            r2 += d * d;
        }
        self.variance * (-0.5 * r2).exp()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(Error::input(format!(
                "kernel of dimension {} evaluated on points of dimension {} and {}",
                self.dim(),
                a.len(),
                b.len()
            )));
        }
        Ok(self.eval_unchecked(a, b))
    }

    pub fn check_points(&self, points: &Points) -> Result<()> {
        if points.dim() != self.dim() {
            return Err(Error::input(format!(
                "points of dimension {} used with a kernel of dimension {}",
                points.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn gram(&self, x: &Points, y: &Points) -> Result<DMatrix<f64>> {
        self.check_points(x)?;
        self.check_points(y)?;
        Ok(DMatrix::from_fn(x.len(), y.len(), |i, j| {
            self.eval_unchecked(x.get(i), y.get(j))
        }))
    }
}

pub fn kernel_eval(a: &[f64], b: &[f64], params: &HyperParams) -> Result<f64> {
    Kernel::new(params.clone()).eval(a, b)
}

/// Cross-covariance matrix `K[i, j] = k(x_i, y_j)`.
pub fn gram(x: &Points, y: &Points, params: &HyperParams) -> Result<DMatrix<f64>> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::input("gram matrix needs nonempty point lists"));
    }
    Kernel::new(params.clone()).gram(x, y)
}
