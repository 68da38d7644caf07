//! Block Gibbs sampler over hyperparameters and inducing log-intensities.
//!
//! Each sweep makes one Metropolis–Hastings move on `θ` with the prior as
//! proposal, then one elliptical slice update of the inducing values. The
//! state is kept in whitened coordinates `z = L_θ⁻¹ (G - m*)`, whose prior is
//! `N(0, I)` for every `θ`; with `z` held fixed the hyperprior and the
//! proposal cancel and the acceptance ratio is the likelihood ratio alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conditional::{GPValues, InducingSet};
use crate::error::{Error, Result};
use crate::kernel::HyperParams;
use crate::posterior::{PosteriorContext, ThetaCache};

pub const MAX_SHRINKS: usize = 1000;

/// Log-likelihood in whitened coordinates. The marginal likelihood is the
/// real one; [`FlatLikelihood`] lets the sampler kernels be checked against
/// their prior.
pub trait Likelihood {
    fn log_likelihood(&self, ctx: &PosteriorContext, cache: &ThetaCache, z: &[f64]) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MarginalLikelihood;

impl Likelihood for MarginalLikelihood {
    fn log_likelihood(&self, ctx: &PosteriorContext, cache: &ThetaCache, z: &[f64]) -> Result<f64> {
        cache.log_likelihood(ctx, z)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FlatLikelihood;

impl Likelihood for FlatLikelihood {
    fn log_likelihood(&self, _: &PosteriorContext, _: &ThetaCache, _: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub n_samples: usize,
    pub thinning: usize,
    pub seed: u64,
    pub quadrature_order: usize,
    /// When false the hyperparameters stay at their initial value.
    pub update_hyper: bool,
    /// Accumulate predictive summaries at the data points while sampling.
    pub data_summary: bool,
}

impl SamplerConfig {
    pub fn new(burn_in: usize, n_samples: usize, seed: u64) -> Self {
        SamplerConfig {
            burn_in,
            n_samples,
            thinning: 1,
            seed,
            quadrature_order: 20,
            update_hyper: true,
            data_summary: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::input("n_samples must be at least 1"));
        }
        if self.thinning == 0 {
            return Err(Error::input("thinning must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ChainState {
    pub values: GPValues,
    pub params: HyperParams,
    /// `L_θ⁻¹ (G - m*)`
    pub whitened: Vec<f64>,
    pub log_likelihood: f64,
    pub iteration: u64,
    cache: ThetaCache,
}

impl ChainState {
    /// Start at `G = m*` (prior mean) under `params`.
    pub fn new<L: Likelihood>(ctx: &PosteriorContext, params: HyperParams, likelihood: &L) -> Result<Self> {
        let cache = ctx.theta_cache(&params)?;
        let whitened = vec![0.0; ctx.k()];
        ChainState::from_parts(ctx, cache, whitened, likelihood)
    }

    /// Start from explicit inducing values.
    pub fn with_values<L: Likelihood>(
        ctx: &PosteriorContext,
        params: HyperParams,
        values: &GPValues,
        likelihood: &L,
    ) -> Result<Self> {
        let cache = ctx.theta_cache(&params)?;
        let whitened = cache.whiten_values(values)?;
        ChainState::from_parts(ctx, cache, whitened, likelihood)
    }

    fn from_parts<L: Likelihood>(
        ctx: &PosteriorContext,
        cache: ThetaCache,
        whitened: Vec<f64>,
        likelihood: &L,
    ) -> Result<Self> {
        let log_likelihood = likelihood.log_likelihood(ctx, &cache, &whitened)?;
        if !log_likelihood.is_finite() {
            return Err(Error::Sampler("initial state has non-finite likelihood".into()));
        }
        Ok(ChainState {
            values: cache.values_from_whitened(ctx.m_star(), &whitened),
            params: cache.params().clone(),
            whitened,
            log_likelihood,
            iteration: 0,
            cache,
        })
    }

    pub fn cache(&self) -> &ThetaCache {
        &self.cache
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub hyper_proposals: u64,
    pub hyper_accepted: u64,
    /// Proposals rejected because the Gram matrix or the integral failed numerically.
    pub numerical_rejections: u64,
    pub slice_evaluations: u64,
}

impl ChainStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.hyper_proposals == 0 {
            0.0
        } else {
            self.hyper_accepted as f64 / self.hyper_proposals as f64
        }
    }

    fn merge(&mut self, other: &ChainStats) {
        self.hyper_proposals += other.hyper_proposals;
        self.hyper_accepted += other.hyper_accepted;
        self.numerical_rejections += other.numerical_rejections;
        self.slice_evaluations += other.slice_evaluations;
    }
}

/// Metropolis–Hastings update of `θ` with a prior proposal and `z` held fixed.
pub fn mh_hyper_step_with<L: Likelihood, R: Rng + ?Sized>(
    state: ChainState,
    ctx: &PosteriorContext,
    likelihood: &L,
    proposal: HyperParams,
    stats: &mut ChainStats,
    rng: &mut R,
) -> ChainState {
    stats.hyper_proposals += 1;
    let log_u: f64 = rng.random::<f64>().ln();
    let candidate = ctx.theta_cache(&proposal).and_then(|cache| {
        let ll = likelihood.log_likelihood(ctx, &cache, &state.whitened)?;
        Ok((cache, ll))
    });
    let mut state = state;
    state.iteration += 1;
    match candidate {
        Ok((cache, ll)) if ll.is_finite() => {
            if log_u < ll - state.log_likelihood {
                stats.hyper_accepted += 1;
                state.values = cache.values_from_whitened(ctx.m_star(), &state.whitened);
                state.params = proposal;
                state.log_likelihood = ll;
                state.cache = cache;
            }
        }
        Ok(_) => stats.numerical_rejections += 1,
        Err(e) => {
            log::debug!("hyperparameter proposal rejected: {e}");
            stats.numerical_rejections += 1;
        }
    }
    state
}

pub fn mh_hyper_step<R: Rng + ?Sized>(state: ChainState, ctx: &PosteriorContext, rng: &mut R) -> ChainState {
    let proposal = ctx.prior().sample(rng);
    mh_hyper_step_with(state, ctx, &MarginalLikelihood, proposal, &mut ChainStats::default(), rng)
}

/// One elliptical slice update of the inducing values.
pub fn ess_step_with<L: Likelihood, R: Rng + ?Sized>(
    state: ChainState,
    ctx: &PosteriorContext,
    likelihood: &L,
    stats: &mut ChainStats,
    rng: &mut R,
) -> Result<ChainState> {
    let k = state.whitened.len();
    let nu: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let threshold = state.log_likelihood + rng.random::<f64>().ln();
    let mut angle = rng.random::<f64>() * std::f64::consts::TAU;
    let (mut lo, mut hi) = (angle - std::f64::consts::TAU, angle);
    let mut proposal = vec![0.0; k];
    for _ in 0..MAX_SHRINKS {
        let (sin, cos) = angle.sin_cos();
        for ((p, z), n) in proposal.iter_mut().zip(&state.whitened).zip(&nu) {
            *p = z * cos + n * sin;
        }
        stats.slice_evaluations += 1;
        let ll = likelihood
            .log_likelihood(ctx, &state.cache, &proposal)
            .unwrap_or(f64::NEG_INFINITY);
        if ll > threshold {
            let mut state = state;
            state.values = state.cache.values_from_whitened(ctx.m_star(), &proposal);
            state.whitened = proposal;
            state.log_likelihood = ll;
            state.iteration += 1;
            return Ok(state);
        }
        if angle < 0.0 {
            lo = angle;
        } else {
            hi = angle;
        }
        angle = lo + rng.random::<f64>() * (hi - lo);
    }
    Err(Error::Sampler(format!(
        "elliptical slice sampler did not find an acceptable point in {MAX_SHRINKS} shrinks"
    )))
}

pub fn ess_step<R: Rng + ?Sized>(state: ChainState, ctx: &PosteriorContext, rng: &mut R) -> Result<ChainState> {
    ess_step_with(state, ctx, &MarginalLikelihood, &mut ChainStats::default(), rng)
}

/// Running predictive moments of the data-point log-intensities.
///
/// Per draw, `log λ(s_i)` given the inducing values is `N(M_i + v_i, v_i)`
/// (the Gaussian conditional tilted by the `λ(s_i)` likelihood factor).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub count: u64,
    /// Mean over draws of `M_i + v_i`.
    pub tilted_mean: Vec<f64>,
    /// Sum of squared deviations of `M_i + v_i` (Welford).
    pub tilted_m2: Vec<f64>,
    /// Mean over draws of `v_i`.
    pub var_mean: Vec<f64>,
    /// Mean over draws of `exp(M_i + 3 v_i / 2)`.
    pub intensity_mean: Vec<f64>,
}

impl DataSummary {
    pub fn new(n: usize) -> Self {
        DataSummary {
            count: 0,
            tilted_mean: vec![0.0; n],
            tilted_m2: vec![0.0; n],
            var_mean: vec![0.0; n],
            intensity_mean: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.tilted_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tilted_mean.is_empty()
    }

    fn record(&mut self, cache: &ThetaCache, m_star: f64, z: &[f64]) {
        self.record_moments((0..self.len()).map(|i| cache.data_moments(m_star, z, i)));
    }

    /// Add one draw given its untilted conditional moments `(M_i, v_i)`.
    pub fn record_moments(&mut self, moments: impl IntoIterator<Item = (f64, f64)>) {
        self.count += 1;
        let c = self.count as f64;
        for (i, (m, v)) in moments.into_iter().enumerate().take(self.tilted_mean.len()) {
            let t = m + v;
            let delta = t - self.tilted_mean[i];
            self.tilted_mean[i] += delta / c;
            self.tilted_m2[i] += delta * (t - self.tilted_mean[i]);
            self.var_mean[i] += (v - self.var_mean[i]) / c;
            self.intensity_mean[i] += ((m + 1.5 * v).exp() - self.intensity_mean[i]) / c;
        }
    }

    /// Pool two summaries (parallel Welford).
    pub fn merge(&mut self, other: &DataSummary) -> Result<()> {
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        if other.tilted_mean.len() != self.tilted_mean.len() {
            return Err(Error::input("cannot pool summaries over different data sets"));
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.tilted_mean.len() {
            let delta = other.tilted_mean[i] - self.tilted_mean[i];
            self.tilted_m2[i] += other.tilted_m2[i] + delta * delta * na * nb / n;
            self.tilted_mean[i] += delta * nb / n;
            self.var_mean[i] = (self.var_mean[i] * na + other.var_mean[i] * nb) / n;
            self.intensity_mean[i] = (self.intensity_mean[i] * na + other.intensity_mean[i] * nb) / n;
        }
        self.count += other.count;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub log_lambda: Vec<f64>,
    pub params: HyperParams,
    pub log_likelihood: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub m_star: f64,
    pub inducing: InducingSet,
    pub draws: Vec<Draw>,
    pub data_summary: Option<DataSummary>,
    pub stats: ChainStats,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Trace of inducing value `j` across draws.
    pub fn value_series(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.log_lambda[j]).collect()
    }

    /// Average effective sample size of the inducing values, per 1000 draws.
    pub fn ess_per_1000(&self) -> f64 {
        let k = self.inducing.len();
        if k == 0 || self.draws.len() < 10 {
            return f64::NAN;
        }
        let mean_ess = (0..k)
            .map(|j| effective_sample_size(&self.value_series(j)).unwrap_or(f64::NAN))
            .sum::<f64>()
            / k as f64;
        1000.0 * mean_ess / self.draws.len() as f64
    }

    /// Concatenate chains that share the same model.
    pub fn pool(chains: Vec<PosteriorSamples>) -> Result<PosteriorSamples> {
        let mut iter = chains.into_iter();
        let mut pooled = iter
            .next()
            .ok_or_else(|| Error::input("no chains to pool"))?;
        for chain in iter {
            if chain.inducing != pooled.inducing || chain.m_star != pooled.m_star {
                return Err(Error::input("chains disagree on the model"));
            }
            pooled.draws.extend(chain.draws);
            pooled.stats.merge(&chain.stats);
            match (&mut pooled.data_summary, &chain.data_summary) {
                (Some(a), Some(b)) => a.merge(b)?,
                (None, None) => {}
                _ => return Err(Error::input("chains disagree on data summaries")),
            }
        }
        Ok(pooled)
    }
}

/// Sampler bound to a posterior and a likelihood.
pub struct Sampler<'a, L: Likelihood = MarginalLikelihood> {
    ctx: &'a PosteriorContext,
    likelihood: L,
}

impl<'a> Sampler<'a, MarginalLikelihood> {
    pub fn new(ctx: &'a PosteriorContext) -> Self {
        Sampler {
            ctx,
            likelihood: MarginalLikelihood,
        }
    }
}

impl<'a, L: Likelihood> Sampler<'a, L> {
    pub fn with_likelihood(ctx: &'a PosteriorContext, likelihood: L) -> Self {
        Sampler { ctx, likelihood }
    }

    pub fn likelihood(&self) -> &L {
        &self.likelihood
    }

    /// Draw starting hyperparameters from the prior until the likelihood is finite.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChainState> {
        let mut last_err = None;
        for _ in 0..100 {
            let params = self.ctx.prior().sample(rng);
            match ChainState::new(self.ctx, params, &self.likelihood) {
                Ok(s) => return Ok(s),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or_else(|| Error::Sampler("no valid starting point".into())))
    }

    pub fn mh_step<R: Rng + ?Sized>(&self, state: ChainState, stats: &mut ChainStats, rng: &mut R) -> ChainState {
        let proposal = self.ctx.prior().sample(rng);
        mh_hyper_step_with(state, self.ctx, &self.likelihood, proposal, stats, rng)
    }

    pub fn ess_step<R: Rng + ?Sized>(
        &self,
        state: ChainState,
        stats: &mut ChainStats,
        rng: &mut R,
    ) -> Result<ChainState> {
        ess_step_with(state, self.ctx, &self.likelihood, stats, rng)
    }

    /// Run one chain from `initial`. On a sampler error the draws collected so
    /// far are returned alongside it.
    pub fn run_from<R: Rng + ?Sized>(
        &self,
        initial: ChainState,
        config: &SamplerConfig,
        rng: &mut R,
    ) -> std::result::Result<PosteriorSamples, (Error, PosteriorSamples)> {
        let mut samples = PosteriorSamples {
            m_star: self.ctx.m_star(),
            inducing: self.ctx.inducing().clone(),
            draws: Vec::with_capacity(config.n_samples),
            data_summary: config.data_summary.then(|| DataSummary::new(self.ctx.data().len())),
            stats: ChainStats::default(),
        };
        if let Err(e) = config.validate() {
            return Err((e, samples));
        }
        let total = config.burn_in + config.n_samples * config.thinning;
        let mut state = initial;
        for it in 0..total {
            if config.update_hyper {
                state = self.mh_step(state, &mut samples.stats, rng);
            }
            state = match self.ess_step(state, &mut samples.stats, rng) {
                Ok(s) => s,
                Err(e) => return Err((e, samples)),
            };
            if it >= config.burn_in && (it - config.burn_in) % config.thinning == 0 {
                samples.draws.push(Draw {
                    log_lambda: state.values.log_lambda.clone(),
                    params: state.params.clone(),
                    log_likelihood: state.log_likelihood,
                });
                if let Some(summary) = samples.data_summary.as_mut() {
                    summary.record(&state.cache, self.ctx.m_star(), &state.whitened);
                }
            }
        }
        Ok(samples)
    }
}

/// Run one chain of the block Gibbs sampler, seeded from `config.seed`.
pub fn run_chain(ctx: &PosteriorContext, config: &SamplerConfig) -> Result<PosteriorSamples> {
    if ctx.inducing().is_empty() {
        return Err(Error::input("the sampler needs at least one inducing point"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sampler = Sampler::new(ctx);
    let initial = sampler.initial_state(&mut rng)?;
    sampler.run_from(initial, config, &mut rng).map_err(|(e, _)| e)
}

/// Effective sample size `n / (1 + 2 Σ ρ_t)` with Geyer's initial monotone
/// positive sequence truncation. A constant series has ESS 1.
pub fn effective_sample_size(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 10 {
        return Err(Error::input("effective sample size needs at least 10 values"));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("effective sample size needs finite values"));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 <= f64::EPSILON * mean.abs().max(1.0) * mean.abs().max(1.0) * 1e-6 || c0 == 0.0 {
        return Ok(1.0);
    }
    let autocorr = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * c0)
    };
    // Γ_m = ρ_{2m} + ρ_{2m+1}; keep while positive, force monotone decrease.
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = autocorr(2 * m) + autocorr(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        m += 1;
    }
    // Σ_{t≥0} ρ_t ≈ Σ Γ_m, and 1 + 2 Σ_{t≥1} ρ_t = 2 Σ Γ_m - 1
    let tau = (2.0 * sum_pairs - 1.0).max(1.0 / n as f64);
    Ok(n as f64 / tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::HyperPrior;
    use crate::points::Points;
    use crate::quadrature::Domain;

    fn toy_context() -> PosteriorContext {
        PosteriorContext::new(
            Points::from_scalars(&[0.5, 1.5, 2.2, 3.9]),
            InducingSet::new(Points::from_scalars(&[1.0, 3.0])).unwrap(),
            Domain::interval(0.0, 4.0).unwrap(),
            10,
            HyperPrior::shared(2.0, 3.0, 1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn ess_of_constant_series_is_one() {
        assert_eq!(effective_sample_size(&[2.5; 50]).unwrap(), 1.0);
        assert!(effective_sample_size(&[1.0; 5]).is_err());
    }

    #[test]
    fn ess_iid_and_ar1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let iid: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let r = effective_sample_size(&iid).unwrap() / 1e4;
        assert!((0.8..=1.2).contains(&r), "{r}");

        let mut x = 0.0;
        let ar: Vec<f64> = (0..100_000)
            .map(|_| {
                x = 0.9 * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let r = effective_sample_size(&ar).unwrap() / 1e5;
        let expected = 0.1 / 1.9;
        assert!((r / expected - 1.0).abs() < 0.3, "{r} vs {expected}");
    }

    #[test]
    fn proposing_the_current_theta_is_always_accepted() {
        let ctx = toy_context();
        let params = HyperParams::isotropic(1.0, 1.5, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state = ChainState::new(&ctx, params.clone(), &MarginalLikelihood).unwrap();
        let mut stats = ChainStats::default();
        for _ in 0..200 {
            state = ess_step_with(state, &ctx, &MarginalLikelihood, &mut stats, &mut rng).unwrap();
            state = mh_hyper_step_with(state, &ctx, &MarginalLikelihood, params.clone(), &mut stats, &mut rng);
        }
        assert_eq!(stats.hyper_accepted, 200);
    }

    #[test]
    fn flat_likelihood_accepts_everything() {
        let ctx = toy_context();
        let sampler = Sampler::with_likelihood(&ctx, FlatLikelihood);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = sampler.initial_state(&mut rng).unwrap();
        let mut stats = ChainStats::default();
        for _ in 0..10_000 {
            state = sampler.mh_step(state, &mut stats, &mut rng);
        }
        assert_eq!(stats.acceptance_rate(), 1.0);
    }

    #[test]
    fn slice_step_lands_above_threshold() {
        let ctx = toy_context();
        let sampler = Sampler::new(&ctx);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut state = sampler.initial_state(&mut rng).unwrap();
        let mut stats = ChainStats::default();
        for _ in 0..500 {
            state = sampler.ess_step(state, &mut stats, &mut rng).unwrap();
            assert!(state.log_likelihood.is_finite());
            // stored likelihood equals a fresh evaluation
            let fresh = state.cache().log_likelihood(&ctx, &state.whitened).unwrap();
            assert!((fresh - state.log_likelihood).abs() <= 1e-10 * fresh.abs().max(1.0));
        }
    }

    #[test]
    fn chains_are_reproducible_and_sized() {
        let ctx = toy_context();
        let mut cfg = SamplerConfig::new(20, 30, 9);
        cfg.thinning = 2;
        cfg.quadrature_order = 10;
        let a = run_chain(&ctx, &cfg).unwrap();
        let b = run_chain(&ctx, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert_eq!(a.data_summary.as_ref().unwrap().count, 30);
        assert!(a.draws.iter().all(|d| d.log_lambda.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn pooled_summary_matches_single_pass() {
        let ctx = toy_context();
        let cfg = SamplerConfig::new(5, 40, 1);
        let whole = run_chain(&ctx, &cfg).unwrap();
        // split the same draws into two halves by replaying the summary
        let mut first = DataSummary::new(ctx.data().len());
        let mut second = DataSummary::new(ctx.data().len());
        for (i, d) in whole.draws.iter().enumerate() {
            let cache = ctx.theta_cache(&d.params).unwrap();
            let values = GPValues::new(d.log_lambda.clone(), ctx.m_star()).unwrap();
            let z = cache.whiten_values(&values).unwrap();
            if i < 17 {
                first.record(&cache, ctx.m_star(), &z);
            } else {
                second.record(&cache, ctx.m_star(), &z);
            }
        }
        first.merge(&second).unwrap();
        let reference = whole.data_summary.unwrap();
        for i in 0..ctx.data().len() {
            assert!((first.tilted_mean[i] - reference.tilted_mean[i]).abs() < 1e-9);
            assert!((first.tilted_m2[i] - reference.tilted_m2[i]).abs() < 1e-8);
            assert!((first.var_mean[i] - reference.var_mean[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_inducing_set_is_rejected() {
        let ctx = PosteriorContext::new(
            Points::from_scalars(&[0.5]),
            InducingSet::empty(1),
            Domain::interval(0.0, 1.0).unwrap(),
            4,
            HyperPrior::shared(1.0, 1.0, 1).unwrap(),
        )
        .unwrap();
        assert!(run_chain(&ctx, &SamplerConfig::new(0, 1, 0)).is_err());
    }
}
