//! Greedy selection of inducing points by expected variance reduction.
//!
//! The utility of a set `D'` is the Monte Carlo average, over hyperparameters
//! drawn once from the prior, of `Tr(K_{DD'} K_{D'D'}⁻¹ K_{D'D})`: the total
//! reduction in predictive variance at the data points from knowing the
//! log-intensity at `D'`. Points are added one at a time, each maximizing the
//! utility of the enlarged set, until the relative gain `(u_k - u_{k-1}) / u_k`
//! drops below `alpha`.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditional::{dot, ConditionalGp, InducingSet};
use crate::error::{Error, Result};
use crate::kernel::{HyperParams, HyperPrior};
use crate::optim::NelderMead;
use crate::points::Points;
use crate::quadrature::Domain;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximizerSettings {
    /// Local searches started at the best-scoring data points.
    pub data_starts: usize,
    /// Local searches started uniformly in the domain.
    pub uniform_starts: usize,
    /// Data points scored when picking starts.
    pub seed_pool: usize,
    pub max_iterations: usize,
}

impl Default for MaximizerSettings {
    fn default() -> Self {
        MaximizerSettings {
            data_starts: 4,
            uniform_starts: 4,
            seed_pool: 512,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub alpha: f64,
    pub n_theta: usize,
    pub prior: HyperPrior,
    pub maximizer: MaximizerSettings,
    pub max_points: usize,
    /// Above this many data points the search scores a fixed random subsample.
    pub subsample_limit: usize,
}

impl SelectionConfig {
    pub fn new(alpha: f64, n_theta: usize, prior: HyperPrior) -> Result<Self> {
        let cfg = SelectionConfig {
            alpha,
            n_theta,
            prior,
            maximizer: MaximizerSettings::default(),
            max_points: 256,
            subsample_limit: 20_000,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::input(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n_theta == 0 {
            return Err(Error::input("at least one hyperparameter sample is required"));
        }
        if self.max_points == 0 || self.subsample_limit == 0 {
            return Err(Error::input("max_points and subsample_limit must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    /// Chosen locations in selection order.
    pub points: Points,
    /// `u_k` for `k = 1..=points.len()`.
    pub utilities: Vec<f64>,
    /// Average total unconditional variance at the data points.
    pub w_inf: f64,
    pub theta_samples: Vec<HyperParams>,
    /// Whether the stopping rule fired (false when the trace is partial).
    pub converged: bool,
}

impl SelectionTrace {
    pub fn k(&self) -> usize {
        self.points.len()
    }

    /// `u_k / w_inf` for every k.
    pub fn normalized(&self) -> Vec<f64> {
        self.utilities.iter().map(|u| u / self.w_inf).collect()
    }

    /// Smallest k whose normalized utility reaches `level`.
    pub fn k_for_level(&self, level: f64) -> Option<usize> {
        self.normalized().iter().position(|v| *v >= level).map(|i| i + 1)
    }

    /// The first `k` selected points.
    pub fn inducing_prefix(&self, k: usize) -> InducingSet {
        let idx: Vec<usize> = (0..k.min(self.k())).collect();
        InducingSet::new(self.points.select(&idx)).expect("selected points are distinct")
    }

    pub fn inducing(&self) -> InducingSet {
        self.inducing_prefix(self.k())
    }
}

/// `w_inf = (1/N) Σ_i n h_i²`.
pub fn average_total_variance(n: usize, theta_samples: &[HyperParams]) -> f64 {
    theta_samples.iter().map(|p| n as f64 * p.variance()).sum::<f64>() / theta_samples.len() as f64
}

/// Monte Carlo utility of `candidate_set`; zero for the empty set.
pub fn utility(candidate_set: &Points, data: &Points, theta_samples: &[HyperParams]) -> Result<f64> {
    if theta_samples.is_empty() {
        return Err(Error::input("utility needs at least one hyperparameter sample"));
    }
    if candidate_set.is_empty() {
        return Ok(0.0);
    }
    let inducing = InducingSet::new(candidate_set.clone())?;
    let terms: Vec<Result<f64>> = theta_samples
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            ConditionalGp::new(&inducing, theta)
                .and_then(|gp| gp.trace_reduction(data))
                .map_err(|e| match e {
                    Error::Conditioning(msg) => Error::Conditioning(format!(
                        "hyperparameter sample {i} ({theta:?}): {msg}"
                    )),
                    other => other,
                })
        })
        .collect();
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total / theta_samples.len() as f64)
}

/// Per-hyperparameter state for the current inducing set: the factorization
/// and the whitened data cross-covariance `A = K_{DD'} L⁻ᵀ` (n×k, row-major).
struct ThetaState {
    gp: ConditionalGp,
    whitened: Vec<f64>,
}

impl ThetaState {
    fn new(inducing: &InducingSet, theta: &HyperParams, data: &Points) -> Result<Self> {
        let gp = ConditionalGp::new(inducing, theta)?;
        let k = gp.k();
        let mut whitened = vec![0.0; data.len() * k];
        if k > 0 {
            for (s, row) in data.iter().zip(whitened.chunks_exact_mut(k)) {
                gp.whiten_into(s, row);
            }
        }
        Ok(ThetaState { gp, whitened })
    }

    fn trace(&self) -> f64 {
        self.whitened.iter().map(|v| v * v).sum()
    }

    /// Gain in trace reduction from adding `s`, by the Schur complement update.
    fn gain(&self, s: &[f64], data: &Points, scratch: &mut Vec<f64>) -> f64 {
        let k = self.gp.k();
        scratch.resize(k, 0.0);
        self.gp.whiten_into(s, scratch);
        let kernel = self.gp.kernel();
        let schur = kernel.variance() + self.gp.factor().jitter().max(crate::linalg::INITIAL_RELATIVE_JITTER * kernel.variance())
            - dot(scratch, scratch);
        if !(schur > 0.0) {
            return 0.0;
        }
        let mut total = 0.0;
        for (j, x) in data.iter().enumerate() {
            let cross = kernel.eval_unchecked(x, s);
            let r = if k == 0 {
                cross
            } else {
                cross - dot(&self.whitened[j * k..(j + 1) * k], scratch)
            };
            total += r * r;
        }
        total / schur
    }
}

/// Working state of the greedy search over a (possibly subsampled) data set.
struct Search<'a> {
    data: &'a Points,
    scale: f64,
    thetas: Vec<ThetaState>,
}

impl<'a> Search<'a> {
    fn new(inducing: &InducingSet, data: &'a Points, scale: f64, theta_samples: &[HyperParams]) -> Result<Self> {
        let thetas = theta_samples
            .par_iter()
            .map(|t| ThetaState::new(inducing, t, data))
            .collect::<Result<Vec<_>>>()?;
        Ok(Search { data, scale, thetas })
    }

    /// Incremental utility `Ũ(D' ∪ {s}) - Ũ(D')`.
    fn gain(&self, s: &[f64]) -> f64 {
        let gains: Vec<f64> = self
            .thetas
            .par_iter()
            .map_init(Vec::new, |scratch, t| t.gain(s, self.data, scratch))
            .collect();
        self.scale * gains.iter().sum::<f64>() / self.thetas.len() as f64
    }

    fn utility(&self) -> f64 {
        self.scale * self.thetas.iter().map(ThetaState::trace).sum::<f64>() / self.thetas.len() as f64
    }

    fn argmax<R: Rng + ?Sized>(
        &self,
        inducing: &InducingSet,
        domain: &Domain,
        settings: &MaximizerSettings,
        rng: &mut R,
    ) -> Vec<f64> {
        let n = self.data.len();
        let pool: Vec<usize> = if n <= settings.seed_pool {
            (0..n).collect()
        } else {
            let mut idx = sample(rng, n, settings.seed_pool).into_vec();
            idx.sort_unstable();
            idx
        };
        let mut candidates: Vec<(Vec<f64>, f64)> = pool
            .iter()
            .map(|&i| {
                let s = self.data.get(i).to_vec();
                let g = self.gain(&s);
                (s, g)
            })
            .collect();
        // stable: ties keep data order
        let mut ranked: Vec<usize> = (0..candidates.len()).collect();
        ranked.sort_by(|a, b| candidates[*b].1.total_cmp(&candidates[*a].1));

        let mut starts: Vec<Vec<f64>> = ranked
            .iter()
            .take(settings.data_starts)
            .map(|&i| candidates[i].0.clone())
            .collect();
        for _ in 0..settings.uniform_starts {
            starts.push(
                (0..domain.dim())
                    .map(|j| domain.lower[j] + rng.random::<f64>() * domain.width(j))
                    .collect(),
            );
        }

        let nm = NelderMead {
            max_iterations: settings.max_iterations,
            tolerance: 1e-12,
        };
        let step: Vec<f64> = (0..domain.dim()).map(|j| 0.02 * domain.width(j)).collect();
        for start in starts {
            let objective = |x: &[f64]| {
                let mut p = x.to_vec();
                domain.clamp(&mut p);
                -self.gain(&p)
            };
            let (mut x, fx) = nm.minimize(objective, &start, &step);
            domain.clamp(&mut x);
            candidates.push((x, -fx));
        }

        let existing = inducing.points();
        candidates
            .into_iter()
            .filter(|(s, _)| !existing.iter().any(|e| e == s.as_slice()))
            .fold(None::<(Vec<f64>, f64)>, |best, c| match best {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            })
            .map(|b| b.0)
            .unwrap_or_else(|| self.data.get(0).to_vec())
    }
}

fn check_data(data: &Points, domain: &Domain) -> Result<()> {
    if data.is_empty() {
        return Err(Error::input("inducing-point selection needs at least one data point"));
    }
    if data.dim() != domain.dim() {
        return Err(Error::input("data and domain dimensions differ"));
    }
    Ok(())
}

/// The point of `domain` maximizing `Ũ(current ∪ {s})`.
///
/// Multi-start Nelder–Mead: starts at the data points with the largest
/// incremental utility and uniformly in the domain; the best of every start
/// and every scored data point wins.
pub fn argmax_next_point<R: Rng + ?Sized>(
    current: &InducingSet,
    data: &Points,
    theta_samples: &[HyperParams],
    domain: &Domain,
    settings: &MaximizerSettings,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_data(data, domain)?;
    if theta_samples.is_empty() {
        return Err(Error::input("need at least one hyperparameter sample"));
    }
    let search = Search::new(current, data, 1.0, theta_samples)?;
    Ok(search.argmax(current, domain, settings, rng))
}

/// Greedy selection until `(u_k - u_{k-1}) / u_k < alpha`.
pub fn select_inducing_points<R: Rng + ?Sized>(
    data: &Points,
    domain: &Domain,
    config: &SelectionConfig,
    rng: &mut R,
) -> Result<SelectionTrace> {
    check_data(data, domain)?;
    config.validate()?;
    if config.prior.dim() != domain.dim() {
        return Err(Error::input("hyperprior and domain dimensions differ"));
    }
    let theta_samples: Vec<HyperParams> = (0..config.n_theta).map(|_| config.prior.sample(rng)).collect();
    let w_inf = average_total_variance(data.len(), &theta_samples);

    let n = data.len();
    let subsampled;
    let (search_data, scale) = if n > config.subsample_limit {
        let mut idx = sample(rng, n, config.subsample_limit).into_vec();
        idx.sort_unstable();
        subsampled = data.select(&idx);
        (&subsampled, n as f64 / config.subsample_limit as f64)
    } else {
        (data, 1.0)
    };

    let mut inducing = InducingSet::empty(domain.dim());
    let mut utilities: Vec<f64> = Vec::new();
    let mut search = Search::new(&inducing, search_data, scale, &theta_samples)?;
    let mut previous = 0.0;
    let mut converged = false;

    while inducing.len() < config.max_points {
        let s = search.argmax(&inducing, domain, &config.maximizer, rng);
        inducing = inducing.with_point(&s)?;
        search = Search::new(&inducing, search_data, scale, &theta_samples)?;
        let u = search.utility();
        utilities.push(u);
        let e = if utilities.len() == 1 || u <= 0.0 {
            1.0
        } else {
            (u - previous) / u
        };
        log::debug!("selected point {} at {:?}: u = {u:.6e}, e = {e:.3e}", inducing.len(), s);
        previous = u;
        if e < config.alpha {
            converged = true;
            break;
        }
    }

    let mut trace = SelectionTrace {
        points: inducing.points().clone(),
        utilities,
        w_inf,
        theta_samples,
        converged,
    };
    if scale != 1.0 {
        // report utilities on the full data set
        for k in 1..=trace.k() {
            let prefix = trace.inducing_prefix(k);
            trace.utilities[k - 1] = utility(prefix.points(), data, &trace.theta_samples)?;
        }
    }
    if !converged {
        return Err(Error::Selection {
            message: format!("stopping rule not met after {} points", config.max_points),
            trace: Box::new(trace),
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn thetas(seed: u64, n: usize) -> Vec<HyperParams> {
        let prior = HyperPrior::shared(2.0, 3.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| prior.sample(&mut rng)).collect()
    }

    #[test]
    fn empty_set_has_zero_utility() {
        let data = Points::from_scalars(&[1.0, 2.0]);
        assert_eq!(utility(&Points::empty(1), &data, &thetas(1, 4)).unwrap(), 0.0);
    }

    #[test]
    fn full_data_set_recovers_total_variance() {
        let data = Points::from_scalars(&[0.5, 3.0, 4.2, 8.0]);
        let t = thetas(2, 10);
        let u = utility(&data, &data, &t).unwrap();
        let w = average_total_variance(4, &t);
        assert_relative_eq!(u, w, max_relative = 1e-6);
    }

    #[test]
    fn single_point_utility_is_mean_variance() {
        let data = Points::from_scalars(&[0.5]);
        let t = thetas(3, 7);
        let expected = t.iter().map(|p| p.variance()).sum::<f64>() / 7.0;
        assert_relative_eq!(utility(&data, &data, &t).unwrap(), expected, max_relative = 1e-7);
    }

    #[test]
    fn schur_gain_matches_direct_utility_difference() {
        let data = Points::from_scalars(&[0.3, 1.1, 2.5, 4.0, 4.4, 6.0]);
        let t = thetas(4, 5);
        let current = InducingSet::new(Points::from_scalars(&[1.0, 4.5])).unwrap();
        let search = Search::new(&current, &data, 1.0, &t).unwrap();
        for s in [0.0, 2.2, 3.3, 5.9] {
            let with = current.with_point(&[s]).unwrap();
            let direct = utility(with.points(), &data, &t).unwrap() - utility(current.points(), &data, &t).unwrap();
            assert_relative_eq!(search.gain(&[s]), direct, max_relative = 1e-6, epsilon = 1e-10);
        }
    }

    #[test]
    fn singleton_data_attracts_the_first_point() {
        let data = Points::from_scalars(&[3.7]);
        let domain = Domain::interval(0.0, 10.0).unwrap();
        let t = thetas(5, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = argmax_next_point(
            &InducingSet::empty(1),
            &data,
            &t,
            &domain,
            &MaximizerSettings::default(),
            &mut rng,
        )
        .unwrap();
        let min_l = t.iter().map(|p| p.input_scales[0]).fold(f64::INFINITY, f64::min);
        assert!((s[0] - 3.7).abs() < 1e-3 * min_l, "{s:?}");
    }

    #[test]
    fn selection_is_deterministic_and_monotone() {
        let data = Points::from_scalars(&[0.5, 1.0, 1.2, 5.0, 7.5, 8.0, 9.1]);
        let domain = Domain::interval(0.0, 10.0).unwrap();
        let cfg = SelectionConfig::new(1e-3, 8, HyperPrior::shared(2.0, 3.0, 1).unwrap()).unwrap();
        let a = select_inducing_points(&data, &domain, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = select_inducing_points(&data, &domain, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.utilities[0] > 0.0);
        for w in a.utilities.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-9));
        }
        for u in &a.utilities {
            assert!(*u <= a.w_inf * (1.0 + 1e-9));
        }
        assert!(a.points.iter().all(|p| domain.contains(p)));
    }

    #[test]
    fn iteration_cap_returns_partial_trace() {
        let data = Points::from_scalars(&[0.5, 2.0, 4.0, 6.0, 8.0]);
        let domain = Domain::interval(0.0, 10.0).unwrap();
        let mut cfg = SelectionConfig::new(1e-9, 4, HyperPrior::shared(2.0, 1.0, 1).unwrap()).unwrap();
        cfg.max_points = 2;
        match select_inducing_points(&data, &domain, &cfg, &mut ChaCha8Rng::seed_from_u64(1)) {
            Err(Error::Selection { trace, .. }) => {
                assert_eq!(trace.k(), 2);
                assert!(!trace.converged);
            }
            other => panic!("expected selection error, got {other:?}"),
        }
    }

    #[test]
    fn subsampled_search_reports_full_data_utilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = Points::from_scalars(&(0..300).map(|_| rng.random::<f64>() * 10.0).collect::<Vec<_>>());
        let domain = Domain::interval(0.0, 10.0).unwrap();
        let mut cfg = SelectionConfig::new(0.05, 4, HyperPrior::shared(2.0, 5.0, 1).unwrap()).unwrap();
        cfg.subsample_limit = 100;
        let trace = select_inducing_points(&data, &domain, &cfg, &mut rng).unwrap();
        let last = trace.k();
        let direct = utility(trace.inducing_prefix(last).points(), &data, &trace.theta_samples).unwrap();
        assert_relative_eq!(trace.utilities[last - 1], direct, max_relative = 1e-12);
        assert_relative_eq!(trace.w_inf, average_total_variance(300, &trace.theta_samples));
    }
}
