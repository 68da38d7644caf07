mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sparsecox::mcmc::{effective_sample_size, ChainStats, FlatLikelihood, MarginalLikelihood, Sampler};
use sparsecox::{
    ChainState, Domain, HyperParams, HyperPrior, InducingSet, Points, PosteriorContext, SamplerConfig,
};

use common::{ks_distance, mean, variance, OnePointToy};

fn context(prior: HyperPrior) -> PosteriorContext {
    PosteriorContext::new(
        Points::from_scalars(&[1.0, 2.5, 4.0, 7.5]),
        InducingSet::new(Points::from_scalars(&[2.0, 5.0, 8.0])).unwrap(),
        Domain::interval(0.0, 10.0).unwrap(),
        10,
        prior,
    )
    .unwrap()
}

/// With a flat likelihood the θ-marginal of the chain is the hyperprior.
#[test]
fn hyper_step_recovers_the_prior() {
    let prior = HyperPrior::shared(2.0, 4.0, 1).unwrap();
    let ctx = context(prior.clone());
    let sampler = Sampler::with_likelihood(&ctx, FlatLikelihood);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut state = sampler.initial_state(&mut rng).unwrap();
    let mut stats = ChainStats::default();
    let (mut h, mut l) = (Vec::new(), Vec::new());
    for _ in 0..10_000 {
        state = sampler.mh_step(state, &mut stats, &mut rng);
        state = sampler.ess_step(state, &mut stats, &mut rng).unwrap();
        h.push(state.params.output_scale);
        l.push(state.params.input_scales[0]);
    }
    assert_eq!(stats.acceptance_rate(), 1.0);

    let mut reference_rng = ChaCha8Rng::seed_from_u64(12);
    let reference: Vec<HyperParams> = (0..100_000).map(|_| prior.sample(&mut reference_rng)).collect();
    let ref_h: Vec<f64> = reference.iter().map(|p| p.output_scale).collect();
    let ref_l: Vec<f64> = reference.iter().map(|p| p.input_scales[0]).collect();
    let (dh, dl) = (ks_distance(&h, &ref_h), ks_distance(&l, &ref_l));
    assert!(dh < 0.02 && dl < 0.02, "KS distances {dh}, {dl}");
}

/// With a flat likelihood and fixed θ the slice sampler leaves `N(m*, Σ*)`
/// invariant.
#[test]
fn slice_step_recovers_the_prior() {
    let prior = HyperPrior::shared(2.0, 4.0, 1).unwrap();
    let ctx = context(prior);
    let params = HyperParams::new(1.3, vec![2.0]).unwrap();
    let sampler = Sampler::with_likelihood(&ctx, FlatLikelihood);
    let initial = ChainState::new(&ctx, params.clone(), &FlatLikelihood).unwrap();
    let mut config = SamplerConfig::new(200, 20_000, 0);
    config.update_hyper = false;
    config.data_summary = false;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let samples = sampler.run_from(initial, &config, &mut rng).unwrap();

    let prior_var = params.variance() * (1.0 + 1e-8);
    for j in 0..3 {
        let series = samples.value_series(j);
        let ess = effective_sample_size(&series).unwrap();
        let m = mean(&series);
        let bound = 3.0 * prior_var.sqrt() / ess.sqrt();
        assert!((m - ctx.m_star()).abs() < bound, "coordinate {j}: mean {m} vs {} ± {bound}", ctx.m_star());
        let v = variance(&series);
        assert!((v / prior_var - 1.0).abs() < 0.10, "coordinate {j}: variance {v} vs {prior_var}");
    }
}

/// One inducing point, two events, θ fixed: the chain mean of `G` matches
/// dense quadrature of the posterior.
#[test]
fn single_inducing_point_posterior_matches_quadrature() {
    let toy = OnePointToy {
        a: 0.0,
        b: 10.0,
        u: 5.0,
        h: 1.0,
        l: 3.0,
        data: vec![3.0, 4.0],
    };
    let (oracle_mean, oracle_sd) = toy.posterior_moments();

    let ctx = PosteriorContext::new(
        Points::from_scalars(&toy.data),
        InducingSet::new(Points::from_scalars(&[toy.u])).unwrap(),
        Domain::interval(toy.a, toy.b).unwrap(),
        20,
        HyperPrior::shared(2.0, 10.0, 1).unwrap(),
    )
    .unwrap();
    // the cached likelihood agrees with the oracle pointwise
    let params = HyperParams::new(toy.h, vec![toy.l]).unwrap();
    let cache = ctx.theta_cache(&params).unwrap();
    for g in [-3.0, -1.6, 0.0, 1.0] {
        let z = (g - toy.m_star()) / (toy.h * (1.0f64 + 1e-8).sqrt());
        let lib = cache.log_likelihood(&ctx, &[z]).unwrap();
        let oracle = toy.log_likelihood(g);
        assert!((lib - oracle).abs() < 1e-4 * oracle.abs().max(1.0), "G = {g}: {lib} vs {oracle}");
    }

    let sampler = Sampler::new(&ctx);
    let initial = ChainState::new(&ctx, params, &MarginalLikelihood).unwrap();
    let mut config = SamplerConfig::new(500, 40_000, 0);
    config.update_hyper = false;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let samples = sampler.run_from(initial, &config, &mut rng).unwrap();
    let g = samples.value_series(0);
    let chain_mean = mean(&g);
    let chain_sd = variance(&g).sqrt();
    assert!(
        (chain_mean / oracle_mean - 1.0).abs() < 0.02,
        "chain {chain_mean} vs oracle {oracle_mean}"
    );
    assert!((chain_sd / oracle_sd - 1.0).abs() < 0.05, "chain sd {chain_sd} vs oracle {oracle_sd}");
}
