//! Accuracy metrics against a known intensity and held-out predictive scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;
use crate::predict::IntensityEstimate;
use crate::quadrature::Domain;
use crate::simulate::{interpolate, EventDataset, IntensitySpec};

pub use crate::mcmc::effective_sample_size;

pub const MIN_ERROR_GRID: usize = 50;
pub const MIN_PREDICTIVE_GRID: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae: f64,
    pub rmse: f64,
    pub lp_mean: f64,
    pub lp_sd: f64,
    /// Held-out score averaging likelihoods over draws inside the log.
    pub lp_per_draw_mean: Option<f64>,
    pub lp_per_draw_sd: Option<f64>,
    pub ess_per_1000: Option<f64>,
    pub wall_seconds: Option<f64>,
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("cannot summarize an empty list"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Summary { mean, sd })
    }
}

/// MAE and RMSE of the posterior mean intensity over the estimate's locations,
/// both divided by the mean true intensity.
pub fn normalized_errors(estimate: &IntensityEstimate, truth: &IntensitySpec) -> Result<(f64, f64)> {
    let grid = &estimate.locations;
    if grid.len() < MIN_ERROR_GRID {
        return Err(Error::input(format!(
            "error metrics need at least {MIN_ERROR_GRID} grid points, got {}",
            grid.len()
        )));
    }
    if grid.dim() != truth.domain.dim() || grid.iter().any(|p| !truth.domain.contains(p)) {
        return Err(Error::input("estimate locations do not lie in the truth's domain"));
    }
    let n = grid.len() as f64;
    let true_values: Vec<f64> = grid.iter().map(|s| truth.eval(s)).collect();
    let scale = true_values.iter().sum::<f64>() / n;
    if !(scale > 0.0) {
        return Err(Error::input("the true intensity has zero mean on the grid"));
    }
    let (mut abs, mut sq) = (0.0, 0.0);
    for (est, t) in estimate.intensity_mean.iter().zip(&true_values) {
        abs += (est - t).abs();
        sq += (est - t).powi(2);
    }
    Ok((abs / n / scale, (sq / n).sqrt() / scale))
}

/// A function tabulated on `domain.grid(per_dim)`.
struct Lattice<'a> {
    domain: &'a Domain,
    per_dim: usize,
    values: &'a [f64],
}

impl<'a> Lattice<'a> {
    fn from_locations(locations: &Points, values: &'a [f64], domain: &'a Domain) -> Result<Self> {
        let d = domain.dim();
        if locations.dim() != d {
            return Err(Error::input("grid dimension does not match the domain"));
        }
        let per_dim = (locations.len() as f64).powf(1.0 / d as f64).round() as usize;
        let expected = domain.grid(per_dim);
        let tol = 1e-9 * domain.lower.iter().chain(&domain.upper).fold(1.0f64, |m, v| m.max(v.abs()));
        let matches = expected.len() == locations.len()
            && expected.coords().iter().zip(locations.coords()).all(|(a, b)| (a - b).abs() <= tol);
        if !matches {
            return Err(Error::input("the estimate is not on the regular lattice of the domain"));
        }
        Ok(Lattice {
            domain,
            per_dim,
            values,
        })
    }

    fn at(&self, s: &[f64]) -> f64 {
        interpolate(self.domain, self.per_dim, self.values, s)
    }

    /// Trapezoid rule on the lattice.
    fn integral(&self) -> f64 {
        let p = self.per_dim;
        let w = |i: usize| if i == 0 || i == p - 1 { 0.5 } else { 1.0 };
        let cell: f64 = (0..self.domain.dim()).map(|j| self.domain.width(j) / (p - 1) as f64).product();
        let sum: f64 = match self.domain.dim() {
            1 => (0..p).map(|i| w(i) * self.values[i]).sum(),
            _ => (0..p)
                .flat_map(|i| (0..p).map(move |j| (i, j)))
                .map(|(i, j)| w(i) * w(j) * self.values[i * p + j])
                .sum(),
        };
        cell * sum
    }
}

fn check_heldout(heldout: &[EventDataset], domain: &Domain) -> Result<()> {
    if heldout.is_empty() {
        return Err(Error::input("no held-out datasets"));
    }
    for (k, set) in heldout.iter().enumerate() {
        if set.points.dim() != domain.dim() {
            return Err(Error::input(format!("held-out set {k} has the wrong dimension")));
        }
        if let Some(i) = set.points.iter().position(|p| !domain.contains(p)) {
            return Err(Error::input(format!("held-out set {k}: event {i} lies outside the domain")));
        }
    }
    Ok(())
}

fn poisson_log_likelihood(lattice: &Lattice, events: &Points) -> f64 {
    -lattice.integral() + events.iter().map(|s| lattice.at(s).ln()).sum::<f64>()
}

/// Held-out Poisson log-likelihood `-∫λ̂ + Σ log λ̂(s_i)` of the posterior mean
/// intensity, one value per held-out set, summarized over sets.
pub fn log_predictive(estimate: &IntensityEstimate, heldout: &[EventDataset], domain: &Domain) -> Result<Summary> {
    Summary::of(&log_predictive_values(estimate, heldout, domain)?)
}

pub fn log_predictive_values(
    estimate: &IntensityEstimate,
    heldout: &[EventDataset],
    domain: &Domain,
) -> Result<Vec<f64>> {
    if estimate.len() < MIN_PREDICTIVE_GRID {
        return Err(Error::input(format!(
            "the predictive score needs at least {MIN_PREDICTIVE_GRID} grid points, got {}",
            estimate.len()
        )));
    }
    check_heldout(heldout, domain)?;
    let lattice = Lattice::from_locations(&estimate.locations, &estimate.intensity_mean, domain)?;
    Ok(heldout.iter().map(|set| poisson_log_likelihood(&lattice, &set.points)).collect())
}

/// Held-out score `log mean_d L_d` with `L_d` the likelihood under draw `d`'s
/// conditional intensity mean. `per_draw` rows are draws over `locations`.
pub fn log_predictive_per_draw(
    per_draw: &[Vec<f64>],
    locations: &Points,
    heldout: &[EventDataset],
    domain: &Domain,
) -> Result<Summary> {
    if per_draw.is_empty() {
        return Err(Error::input("no draws"));
    }
    if locations.len() < MIN_PREDICTIVE_GRID {
        return Err(Error::input(format!(
            "the predictive score needs at least {MIN_PREDICTIVE_GRID} grid points"
        )));
    }
    check_heldout(heldout, domain)?;
    let lattices = per_draw
        .iter()
        .map(|row| Lattice::from_locations(locations, row, domain))
        .collect::<Result<Vec<_>>>()?;
    let log_draws = (lattices.len() as f64).ln();
    let values: Vec<f64> = heldout
        .iter()
        .map(|set| {
            let ll: Vec<f64> = lattices.iter().map(|l| poisson_log_likelihood(l, &set.points)).collect();
            log_sum_exp(&ll) - log_draws
        })
        .collect();
    Summary::of(&values)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate, synthetic_bimodal};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn estimate_of(grid: Points, f: impl Fn(&[f64]) -> f64) -> IntensityEstimate {
        let lambda: Vec<f64> = grid.iter().map(&f).collect();
        let n = grid.len();
        IntensityEstimate::new(grid, lambda.iter().map(|v| v.ln()).collect(), vec![0.0; n], lambda).unwrap()
    }

    fn unit() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    fn events(domain: &Domain, xs: &[f64]) -> EventDataset {
        EventDataset::new(Points::from_scalars(xs), domain.clone()).unwrap()
    }

    #[test]
    fn exact_estimate_has_no_error() {
        let truth = IntensitySpec::synthetic();
        let est = estimate_of(truth.domain.grid(100), |s| truth.eval(s));
        assert_eq!(normalized_errors(&est, &truth).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn offset_by_the_mean_gives_unit_errors() {
        let truth = IntensitySpec::synthetic();
        let grid = truth.domain.grid(100);
        let mean = grid.iter().map(|s| truth.eval(s)).sum::<f64>() / 100.0;
        let est = estimate_of(grid, |s| truth.eval(s) + mean);
        let (mae, rmse) = normalized_errors(&est, &truth).unwrap();
        assert_relative_eq!(mae, 1.0, max_relative = 1e-12);
        assert_relative_eq!(rmse, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn doubled_estimate() {
        let truth = IntensitySpec::synthetic();
        let grid = truth.domain.grid(100);
        let t: Vec<f64> = grid.iter().map(|s| truth.eval(s)).collect();
        let mean = t.iter().sum::<f64>() / 100.0;
        let mean_sq = t.iter().map(|v| v * v).sum::<f64>() / 100.0;
        let est = estimate_of(grid, |s| 2.0 * truth.eval(s));
        let (mae, rmse) = normalized_errors(&est, &truth).unwrap();
        assert_relative_eq!(mae, 1.0, max_relative = 1e-12);
        assert_relative_eq!(rmse, mean_sq.sqrt() / mean, max_relative = 1e-12);
    }

    #[test]
    fn coarse_grids_and_zero_truth_are_rejected() {
        let truth = IntensitySpec::synthetic();
        let est = estimate_of(truth.domain.grid(20), |s| truth.eval(s));
        assert!(normalized_errors(&est, &truth).is_err());
        let zero = IntensitySpec::constant(0.0, unit()).unwrap();
        let est = estimate_of(unit().grid(60), |_| 1.0);
        assert!(normalized_errors(&est, &zero).is_err());
    }

    #[test]
    fn unit_intensity_with_one_event() {
        let est = estimate_of(unit().grid(500), |_| 1.0);
        let lp = log_predictive(&est, &[events(&unit(), &[0.3])], &unit()).unwrap();
        assert_relative_eq!(lp.mean, -1.0, max_relative = 1e-12);
        assert_eq!(lp.sd, 0.0);
    }

    #[test]
    fn constant_two_with_no_events() {
        let est = estimate_of(unit().grid(500), |_| 2.0);
        let lp = log_predictive(&est, &[events(&unit(), &[])], &unit()).unwrap();
        assert_relative_eq!(lp.mean, -2.0, max_relative = 1e-12);
    }

    #[test]
    fn events_outside_domain_are_rejected() {
        let est = estimate_of(unit().grid(500), |_| 1.0);
        let outside = EventDataset {
            points: Points::from_scalars(&[1.5]),
            domain: Domain::interval(0.0, 2.0).unwrap(),
        };
        assert!(log_predictive(&est, &[outside], &unit()).is_err());
    }

    #[test]
    fn non_lattice_estimates_are_rejected() {
        let mut grid = unit().grid(500).coords().to_vec();
        grid[3] += 1e-4;
        let est = estimate_of(Points::new(1, grid).unwrap(), |_| 1.0);
        assert!(log_predictive(&est, &[events(&unit(), &[0.3])], &unit()).is_err());
    }

    #[test]
    fn predictive_is_stable_under_grid_refinement() {
        let spec = IntensitySpec::synthetic();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let heldout: Vec<EventDataset> = (0..10).map(|_| simulate(&spec, &mut rng).unwrap()).collect();
        let f = |s: &[f64]| synthetic_bimodal(s[0]);
        let coarse = log_predictive(&estimate_of(spec.domain.grid(500), f), &heldout, &spec.domain).unwrap();
        let fine = log_predictive(&estimate_of(spec.domain.grid(1000), f), &heldout, &spec.domain).unwrap();
        assert!((coarse.mean - fine.mean).abs() < 0.1);
    }

    #[test]
    fn two_dimensional_trapezoid_of_a_bilinear_function_is_exact() {
        let domain = Domain::new(vec![0.0, 1.0], vec![2.0, 4.0]).unwrap();
        let est = estimate_of(domain.grid(30), |s| 1.0 + s[0] * s[1]);
        let lattice = Lattice::from_locations(&est.locations, &est.intensity_mean, &domain).unwrap();
        // ∫∫ 1 + xy = 6 + 2 * 7.5
        assert_relative_eq!(lattice.integral(), 21.0, max_relative = 1e-12);
    }

    #[test]
    fn per_draw_score_of_identical_draws_equals_plug_in() {
        let grid = unit().grid(500);
        let row: Vec<f64> = grid.iter().map(|s| 1.0 + s[0]).collect();
        let est = estimate_of(grid.clone(), |s| 1.0 + s[0]);
        let heldout = [events(&unit(), &[0.1, 0.7]), events(&unit(), &[0.5])];
        let plug_in = log_predictive(&est, &heldout, &unit()).unwrap();
        let per_draw = log_predictive_per_draw(&[row.clone(), row], &grid, &heldout, &unit()).unwrap();
        assert_relative_eq!(plug_in.mean, per_draw.mean, max_relative = 1e-12);
        assert_relative_eq!(plug_in.sd, per_draw.sd, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn mae_never_exceeds_rmse(noise in prop::collection::vec(-1.0f64..1.0, 64)) {
            let truth = IntensitySpec::synthetic();
            let grid = truth.domain.grid(64);
            let lambda: Vec<f64> = grid.iter().zip(&noise).map(|(s, e)| (truth.eval(s) + e).abs() + 1e-3).collect();
            let est = IntensityEstimate::new(grid, lambda.iter().map(|v| v.ln()).collect(), vec![0.0; 64], lambda).unwrap();
            let (mae, rmse) = normalized_errors(&est, &truth).unwrap();
            prop_assert!(mae <= rmse + 1e-15);
        }

        #[test]
        fn predictive_ignores_event_order(mut xs in prop::collection::vec(0.0f64..1.0, 1..20), seed in any::<u64>()) {
            let est = estimate_of(unit().grid(500), |s| 0.5 + s[0] * s[0]);
            let a = log_predictive(&est, &[events(&unit(), &xs)], &unit()).unwrap();
            use rand::seq::SliceRandom;
            xs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let b = log_predictive(&est, &[events(&unit(), &xs)], &unit()).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-10);
        }
    }
}
