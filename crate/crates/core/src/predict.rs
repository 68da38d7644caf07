//! Posterior predictive summaries of the log-intensity.
//!
//! Per draw `(G, θ)` the log-intensity at a point is Gaussian. Across draws the
//! summaries are combined with the laws of total expectation and variance:
//!
//! ```text
//! E[x]   = mean_d E[x | d]
//! Var[x] = mean_d Var[x | d] + var_d E[x | d]
//! ```
//!
//! At observed events the per-draw law is `N(M_i + v_i, v_i)`: the conditional
//! Gaussian tilted by the `λ(s_i)` factor of the likelihood. Everywhere else it
//! is the untilted conditional `N(m(s), γ(s, s))`. The intensity mean uses
//! `E[exp X] = exp(mean + var / 2)` per draw before averaging.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditional::{dot, ConditionalGp, GPValues};
use crate::error::{Error, Result};
use crate::kernel::HyperParams;
use crate::mcmc::PosteriorSamples;
use crate::points::Points;
use crate::posterior::PosteriorContext;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityEstimate {
    pub locations: Points,
    pub log_mean: Vec<f64>,
    pub log_var: Vec<f64>,
    pub intensity_mean: Vec<f64>,
}

impl IntensityEstimate {
    pub fn new(locations: Points, log_mean: Vec<f64>, log_var: Vec<f64>, intensity_mean: Vec<f64>) -> Result<Self> {
        let n = locations.len();
        if log_mean.len() != n || log_var.len() != n || intensity_mean.len() != n {
            return Err(Error::input("estimate columns must match the number of locations"));
        }
        if log_var.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::input("log-intensity variances must be finite and nonnegative"));
        }
        if log_mean.iter().chain(&intensity_mean).any(|v| !v.is_finite()) {
            return Err(Error::input("estimates must be finite"));
        }
        Ok(IntensityEstimate {
            locations,
            log_mean,
            log_var,
            intensity_mean,
        })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn log_sd(&self, i: usize) -> f64 {
        self.log_var[i].sqrt()
    }

    /// One standard deviation band of the log-intensity, mapped to intensity
    /// scale: `exp(mean ∓ sd)`.
    pub fn band(&self, i: usize) -> (f64, f64) {
        let sd = self.log_sd(i);
        ((self.log_mean[i] - sd).exp(), (self.log_mean[i] + sd).exp())
    }
}

/// Predictive summaries at the events the chain was fitted to, read from the
/// streaming summary recorded during sampling.
pub fn predictive_at_data(samples: &PosteriorSamples, data: &Points) -> Result<IntensityEstimate> {
    let summary = samples
        .data_summary
        .as_ref()
        .ok_or_else(|| Error::input("samples carry no data-point summaries"))?;
    if summary.count == 0 {
        return Err(Error::input("samples are empty"));
    }
    if summary.len() != data.len() {
        return Err(Error::input(format!(
            "summaries cover {} events but {} were supplied",
            summary.len(),
            data.len()
        )));
    }
    let c = summary.count as f64;
    let log_var = summary
        .var_mean
        .iter()
        .zip(&summary.tilted_m2)
        .map(|(v, m2)| (v + m2 / c).max(0.0))
        .collect();
    finish(
        data.clone(),
        summary.tilted_mean.clone(),
        log_var,
        summary.intensity_mean.clone(),
    )
}

/// Build an estimate from computed summaries; non-finite values mean the
/// posterior put mass where `exp` overflows.
fn finish(locations: Points, log_mean: Vec<f64>, log_var: Vec<f64>, intensity_mean: Vec<f64>) -> Result<IntensityEstimate> {
    let bad = log_mean
        .iter()
        .chain(&log_var)
        .chain(&intensity_mean)
        .position(|v| !v.is_finite());
    if let Some(i) = bad {
        return Err(Error::Overflow(format!(
            "posterior summary at location {} is not finite",
            i % locations.len().max(1)
        )));
    }
    IntensityEstimate::new(locations, log_mean, log_var, intensity_mean)
}

#[derive(Clone, Copy, Default)]
struct Accumulator {
    mean: f64,
    m2: f64,
    var_mean: f64,
    intensity: f64,
}

/// Whitened cross-covariances of a point set under one `θ`.
struct GridFactor {
    params: HyperParams,
    gp: ConditionalGp,
    whitened: Vec<f64>,
    var: Vec<f64>,
}

impl GridFactor {
    fn new(samples: &PosteriorSamples, grid: &Points, params: &HyperParams) -> Result<Self> {
        let gp = ConditionalGp::new(&samples.inducing, params)?;
        let k = gp.k();
        let h2 = params.variance();
        let mut whitened = vec![0.0; grid.len() * k];
        if k == 0 {
            return Ok(GridFactor {
                params: params.clone(),
                gp,
                whitened,
                var: vec![h2; grid.len()],
            });
        }
        let var = whitened
            .par_chunks_mut(k)
            .zip(grid.coords().par_chunks(grid.dim()))
            .map(|(row, s)| {
                gp.whiten_into(s, row);
                gp.clamp_variance(h2 - dot(row, row))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(GridFactor {
            params: params.clone(),
            gp,
            whitened,
            var,
        })
    }

    fn whiten_draw(&self, samples: &PosteriorSamples, log_lambda: &[f64]) -> Result<Vec<f64>> {
        self.gp.whiten_values(&GPValues {
            log_lambda: log_lambda.to_vec(),
            m_star: samples.m_star,
        })
    }
}

/// Visit every draw with the untilted conditional moments `(m(s), γ(s, s))`
/// at each grid point. The factorization is reused while `θ` is unchanged.
fn for_each_draw(
    samples: &PosteriorSamples,
    grid: &Points,
    mut visit: impl FnMut(&GridFactor, &[f64]),
) -> Result<()> {
    let mut factor: Option<GridFactor> = None;
    for draw in &samples.draws {
        if factor.as_ref().map_or(true, |f| f.params != draw.params) {
            factor = Some(GridFactor::new(samples, grid, &draw.params)?);
        }
        let f = factor.as_ref().expect("factor set above");
        let z = f.whiten_draw(samples, &draw.log_lambda)?;
        visit(f, &z);
    }
    Ok(())
}

fn check_grid(samples: &PosteriorSamples, grid: &Points, ctx: &PosteriorContext) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::input("samples are empty"));
    }
    if ctx.inducing() != &samples.inducing {
        return Err(Error::input("samples were drawn with different inducing points"));
    }
    if grid.dim() != ctx.domain().dim() {
        return Err(Error::input("grid dimension does not match the domain"));
    }
    if let Some(i) = grid.iter().position(|p| !ctx.domain().contains(p)) {
        return Err(Error::input(format!("grid point {i} lies outside the domain")));
    }
    Ok(())
}

/// Predictive summaries at arbitrary points of the domain.
pub fn predictive_on_grid(
    samples: &PosteriorSamples,
    grid: &Points,
    ctx: &PosteriorContext,
) -> Result<IntensityEstimate> {
    check_grid(samples, grid, ctx)?;
    let mut acc = vec![Accumulator::default(); grid.len()];
    let mut count = 0.0;
    for_each_draw(samples, grid, |f, z| {
        count += 1.0;
        let k = z.len();
        acc.par_iter_mut().enumerate().for_each(|(i, a)| {
            let m = samples.m_star + if k == 0 { 0.0 } else { dot(&f.whitened[i * k..(i + 1) * k], z) };
            let v = f.var[i];
            let delta = m - a.mean;
            a.mean += delta / count;
            a.m2 += delta * (m - a.mean);
            a.var_mean += (v - a.var_mean) / count;
            a.intensity += ((m + 0.5 * v).exp() - a.intensity) / count;
        });
    })?;
    finish(
        grid.clone(),
        acc.iter().map(|a| a.mean).collect(),
        acc.iter().map(|a| (a.var_mean + a.m2 / count).max(0.0)).collect(),
        acc.iter().map(|a| a.intensity).collect(),
    )
}

/// Per-draw conditional intensity mean `exp(m(s) + γ(s, s) / 2)` on a grid,
/// keeping every `stride`-th draw. Rows are draws.
pub fn per_draw_intensity(
    samples: &PosteriorSamples,
    grid: &Points,
    ctx: &PosteriorContext,
    stride: usize,
) -> Result<Vec<Vec<f64>>> {
    check_grid(samples, grid, ctx)?;
    let stride = stride.max(1);
    let mut rows = Vec::with_capacity(samples.len() / stride + 1);
    let mut index = 0usize;
    for_each_draw(samples, grid, |f, z| {
        if index % stride == 0 {
            let k = z.len();
            rows.push(
                (0..grid.len())
                    .map(|i| {
                        let m = samples.m_star + if k == 0 { 0.0 } else { dot(&f.whitened[i * k..(i + 1) * k], z) };
                        (m + 0.5 * f.var[i]).exp()
                    })
                    .collect(),
            );
        }
        index += 1;
    })?;
    Ok(rows)
}
