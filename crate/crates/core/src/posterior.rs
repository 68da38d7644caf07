//! Marginal posterior of the inducing log-intensities and hyperparameters.
//!
//! Up to a constant,
//!
//! ```text
//! log p(G, θ | D) = log p(θ) + log N(G | m* 1, K_{D'D'})
//!                 + 1ᵀM + ½ Tr(Σ_DD) - α_I log(1 + β_I)
//! ```
//!
//! where the data-point log-intensities have been integrated out through the
//! Gaussian moment generating function and `I = ∫ λ` through the Gamma Laplace
//! transform at one.
//!
//! Everything that depends only on `θ` lives in a [`ThetaCache`]; per-`G` work
//! is O(k + p^{2d}).

use serde::{Deserialize, Serialize};

use crate::conditional::{dot, ConditionalGp, GPValues, InducingSet};
use crate::error::{Error, Result};
use crate::kernel::{HyperParams, HyperPrior};
use crate::points::Points;
use crate::quadrature::{gamma_moments, gauss_legendre_rule, moment_match_cached, Domain, GammaMoments, QuadratureRule};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Data, inducing locations and quadrature for one posterior.
#[derive(Clone, Debug)]
pub struct PosteriorContext {
    data: Points,
    inducing: InducingSet,
    domain: Domain,
    rule: QuadratureRule,
    prior: HyperPrior,
    m_star: f64,
}

impl PosteriorContext {
    /// `m*` is set to `log(n / μ(S))`, which needs at least one event.
    pub fn new(
        data: Points,
        inducing: InducingSet,
        domain: Domain,
        quadrature_order: usize,
        prior: HyperPrior,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::input(
                "the prior mean log(n / volume) needs at least one event; use with_m_star",
            ));
        }
        let m_star = GPValues::prior_mean(data.len(), domain.volume());
        PosteriorContext::with_m_star(data, inducing, domain, quadrature_order, prior, m_star)
    }

    pub fn with_m_star(
        data: Points,
        inducing: InducingSet,
        domain: Domain,
        quadrature_order: usize,
        prior: HyperPrior,
        m_star: f64,
    ) -> Result<Self> {
        let d = domain.dim();
        if prior.dim() != d || inducing.dim() != d || data.dim() != d {
            return Err(Error::input("data, inducing points, prior and domain must share a dimension"));
        }
        if let Some(i) = data.iter().position(|p| !domain.contains(p)) {
            return Err(Error::input(format!("event {i} lies outside the domain")));
        }
        inducing.check_within(&domain)?;
        if !m_star.is_finite() {
            return Err(Error::input("prior mean must be finite"));
        }
        let rule = gauss_legendre_rule(quadrature_order, &domain)?;
        Ok(PosteriorContext {
            data,
            inducing,
            domain,
            rule,
            prior,
            m_star,
        })
    }

    pub fn data(&self) -> &Points {
        &self.data
    }

    pub fn inducing(&self) -> &InducingSet {
        &self.inducing
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn prior(&self) -> &HyperPrior {
        &self.prior
    }

    pub fn m_star(&self) -> f64 {
        self.m_star
    }

    pub fn k(&self) -> usize {
        self.inducing.len()
    }

    pub fn theta_cache(&self, params: &HyperParams) -> Result<ThetaCache> {
        ThetaCache::new(self, params)
    }

    /// `∂(1ᵀM)/∂G = K⁻¹ Σ_i k_{D's_i}`.
    pub fn mean_sum_gradient(&self, params: &HyperParams) -> Result<Vec<f64>> {
        let cache = self.theta_cache(params)?;
        let mut g = cache.whitened_sum.clone();
        cache.gp.factor().solve_upper_in_place(&mut g);
        Ok(g)
    }
}

/// The two factors of the marginal likelihood, kept apart so either can be
/// checked on its own.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodParts {
    /// `1ᵀM + ½ Tr(Σ_DD)`
    pub mgf: f64,
    /// `-α_I log(1 + β_I)`
    pub integral: f64,
    pub gamma: GammaMoments,
}

impl LikelihoodParts {
    pub fn total(&self) -> f64 {
        self.mgf + self.integral
    }
}

/// Hyperparameter-dependent quantities shared by every likelihood evaluation
/// at the same `θ`.
#[derive(Clone, Debug)]
pub struct ThetaCache {
    params: HyperParams,
    gp: ConditionalGp,
    /// n×k whitened data cross-covariance, row-major.
    data_whitened: Vec<f64>,
    /// Clamped conditional variances at the data points.
    data_var: Vec<f64>,
    whitened_sum: Vec<f64>,
    /// `Tr(Σ_DD) = n h² - Tr(K_{DD'} K⁻¹ K_{D'D})`
    var_trace: f64,
    node_whitened: Vec<f64>,
    node_half_var: Vec<f64>,
    node_expm1: Vec<f64>,
}

impl ThetaCache {
    fn new(ctx: &PosteriorContext, params: &HyperParams) -> Result<Self> {
        let gp = ConditionalGp::new(&ctx.inducing, params)?;
        let k = gp.k();
        let h2 = params.variance();
        let n = ctx.data.len();

        let mut data_whitened = vec![0.0; n * k];
        let mut data_var = Vec::with_capacity(n);
        let mut whitened_sum = vec![0.0; k];
        let mut reduction = 0.0;
        if k == 0 {
            data_var.resize(n, h2);
        } else {
            for (s, row) in ctx.data.iter().zip(data_whitened.chunks_exact_mut(k)) {
                gp.whiten_into(s, row);
                let r = dot(row, row);
                reduction += r;
                data_var.push(gp.clamp_variance(h2 - r)?);
                for (acc, v) in whitened_sum.iter_mut().zip(row.iter()) {
                    *acc += v;
                }
            }
        }
        let var_trace = n as f64 * h2 - reduction;

        let nodes = ctx.rule.nodes();
        let p = nodes.len();
        let mut node_whitened = vec![0.0; p * k];
        let mut node_half_var = Vec::with_capacity(p);
        for (i, s) in nodes.iter().enumerate() {
            let row = &mut node_whitened[i * k..(i + 1) * k];
            gp.whiten_into(s, row);
            node_half_var.push(0.5 * gp.clamp_variance(h2 - dot(row, row))?);
        }
        let mut node_expm1 = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..=i {
                let cov = gp.kernel().eval_unchecked(nodes.get(i), nodes.get(j))
                    - dot(&node_whitened[i * k..(i + 1) * k], &node_whitened[j * k..(j + 1) * k]);
                let v = if i == j { 2.0 * node_half_var[i] } else { cov }.exp_m1();
                node_expm1[i * p + j] = v;
                node_expm1[j * p + i] = v;
            }
        }

        Ok(ThetaCache {
            params: params.clone(),
            gp,
            data_whitened,
            data_var,
            whitened_sum,
            var_trace,
            node_whitened,
            node_half_var,
            node_expm1,
        })
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn gp(&self) -> &ConditionalGp {
        &self.gp
    }

    pub fn k(&self) -> usize {
        self.gp.k()
    }

    /// Whitened coordinates `z = L⁻¹ (G - m*)`.
    pub fn whiten_values(&self, values: &GPValues) -> Result<Vec<f64>> {
        self.gp.whiten_values(values)
    }

    /// `G = m* + L z`.
    pub fn values_from_whitened(&self, m_star: f64, z: &[f64]) -> GPValues {
        let lz = self.gp.factor().mul_lower(z);
        GPValues {
            log_lambda: lz.into_iter().map(|v| v + m_star).collect(),
            m_star,
        }
    }

    /// `log N(G | m* 1, K)` written in whitened coordinates.
    pub fn log_prior_values(&self, z: &[f64]) -> f64 {
        -0.5 * dot(z, z) - 0.5 * self.gp.factor().log_det() - 0.5 * z.len() as f64 * LN_2PI
    }

    pub fn likelihood_parts(&self, ctx: &PosteriorContext, z: &[f64]) -> Result<LikelihoodParts> {
        let n = ctx.data.len() as f64;
        let m_star = ctx.m_star;
        let mean_sum = if n > 0.0 { n * m_star + dot(&self.whitened_sum, z) } else { 0.0 };
        let mgf = mean_sum + 0.5 * self.var_trace;

        let k = self.k();
        let log_f: Vec<f64> = self
            .node_half_var
            .iter()
            .enumerate()
            .map(|(i, hv)| m_star + dot(&self.node_whitened[i * k..(i + 1) * k], z) + hv)
            .collect();
        let gamma = moment_match_cached(ctx.rule.weights(), &log_f, &self.node_expm1)?;
        Ok(LikelihoodParts {
            mgf,
            integral: gamma.log_laplace_at_one(),
            gamma,
        })
    }

    pub fn log_likelihood(&self, ctx: &PosteriorContext, z: &[f64]) -> Result<f64> {
        Ok(self.likelihood_parts(ctx, z)?.total())
    }

    /// Conditional mean `M_i` and variance `Σ_DD[i, i]` at data point `i`.
    #[inline]
    pub fn data_moments(&self, m_star: f64, z: &[f64], i: usize) -> (f64, f64) {
        let k = self.k();
        (
            m_star + dot(&self.data_whitened[i * k..(i + 1) * k], z),
            self.data_var[i],
        )
    }

    pub fn n_data(&self) -> usize {
        self.data_var.len()
    }
}

/// `1ᵀM + ½ Tr(Σ_DD) - α_I log(1 + β_I)` evaluated from scratch.
pub fn log_likelihood_parts(
    values: &GPValues,
    params: &HyperParams,
    ctx: &PosteriorContext,
) -> Result<LikelihoodParts> {
    let gp = ConditionalGp::new(&ctx.inducing, params)?;
    let n = ctx.data.len();
    let mean_sum = if n > 0 {
        gp.conditional_mean(&ctx.data, values)?.iter().sum::<f64>()
    } else {
        0.0
    };
    let reduction = if ctx.inducing.is_empty() { 0.0 } else { gp.trace_reduction(&ctx.data)? };
    let mgf = mean_sum + 0.5 * (n as f64 * params.variance() - reduction);
    let gamma = gamma_moments(&ctx.inducing, values, params, &ctx.rule)?;
    Ok(LikelihoodParts {
        mgf,
        integral: gamma.log_laplace_at_one(),
        gamma,
    })
}

pub fn log_likelihood_term(values: &GPValues, params: &HyperParams, ctx: &PosteriorContext) -> Result<f64> {
    Ok(log_likelihood_parts(values, params, ctx)?.total())
}

/// Unnormalized log posterior; `-inf` when `θ` is outside the prior support.
pub fn log_posterior(values: &GPValues, params: &HyperParams, ctx: &PosteriorContext) -> Result<f64> {
    let log_prior_theta = ctx.prior.log_density(params);
    if log_prior_theta == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let cache = ctx.theta_cache(params)?;
    let z = cache.whiten_values(values)?;
    Ok(log_prior_theta + cache.log_prior_values(&z) + cache.log_likelihood(ctx, &z)?)
}
