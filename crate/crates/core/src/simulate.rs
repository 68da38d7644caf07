//! Poisson point process simulation by thinning.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;
use crate::quadrature::{gauss_legendre_rule, Domain};

/// Safety factor applied to the tabulated maximum when bounding the intensity.
pub const TABULATED_BOUND_FACTOR: f64 = 1.01;

/// Observed events together with the window they were observed in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventDataset {
    pub points: Points,
    pub domain: Domain,
}

impl EventDataset {
    pub fn new(points: Points, domain: Domain) -> Result<Self> {
        if points.dim() != domain.dim() {
            return Err(Error::input("events and domain differ in dimension"));
        }
        let outside: Vec<usize> = points
            .iter()
            .enumerate()
            .filter(|(_, p)| !domain.contains(p))
            .map(|(i, _)| i)
            .collect();
        if !outside.is_empty() {
            return Err(Error::input(format!("events outside the domain at rows {outside:?}")));
        }
        Ok(EventDataset { points, domain })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Intensity {
    /// `2 exp(-t/15) + exp(-((t - 25)/10)²)` in one dimension.
    SyntheticBimodal,
    Constant { rate: f64 },
    /// Piecewise constant along the first coordinate: `values[j]` on
    /// `[breaks[j], breaks[j + 1])`.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
    /// Values on `domain.grid(per_dim)`, linearly (bilinearly) interpolated.
    Tabulated { per_dim: usize, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensitySpec {
    pub intensity: Intensity,
    pub domain: Domain,
}

pub fn synthetic_bimodal(t: f64) -> f64 {
    2.0 * (-t / 15.0).exp() + (-((t - 25.0) / 10.0).powi(2)).exp()
}

impl IntensitySpec {
    pub fn new(intensity: Intensity, domain: Domain) -> Result<Self> {
        match &intensity {
            Intensity::SyntheticBimodal => {
                if domain.dim() != 1 {
                    return Err(Error::input("the synthetic intensity is one-dimensional"));
                }
            }
            Intensity::Constant { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(Error::input(format!("constant rate must be finite and >= 0, got {rate}")));
                }
            }
            Intensity::Piecewise { breaks, values } => {
                if breaks.len() != values.len() + 1 || values.is_empty() {
                    return Err(Error::input("piecewise intensity needs one more break than values"));
                }
                if breaks.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::input("piecewise breaks must increase strictly"));
                }
                if breaks[0] > domain.lower[0] || breaks[breaks.len() - 1] < domain.upper[0] {
                    return Err(Error::input("piecewise breaks must cover the domain"));
                }
                check_values(values)?;
            }
            Intensity::Tabulated { per_dim, values } => {
                if *per_dim < 2 || values.len() != per_dim.pow(domain.dim() as u32) {
                    return Err(Error::input(format!(
                        "tabulated intensity needs {}^{} values on the domain lattice",
                        per_dim,
                        domain.dim()
                    )));
                }
                check_values(values)?;
            }
        }
        Ok(IntensitySpec { intensity, domain })
    }

    /// The synthetic benchmark on `[0, 50]`.
    pub fn synthetic() -> Self {
        IntensitySpec::new(Intensity::SyntheticBimodal, Domain::interval(0.0, 50.0).expect("valid interval"))
            .expect("valid spec")
    }

    pub fn constant(rate: f64, domain: Domain) -> Result<Self> {
        IntensitySpec::new(Intensity::Constant { rate }, domain)
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        match &self.intensity {
            Intensity::SyntheticBimodal => synthetic_bimodal(s[0]),
            Intensity::Constant { rate } => *rate,
            Intensity::Piecewise { breaks, values } => {
                let j = breaks.partition_point(|b| *b <= s[0]);
                values[j.clamp(1, values.len()) - 1]
            }
            Intensity::Tabulated { per_dim, values } => interpolate(&self.domain, *per_dim, values, s),
        }
    }

    /// An upper bound of the intensity over the domain.
    pub fn upper_bound(&self) -> f64 {
        match &self.intensity {
            // The exponential decays from the left edge; the bump peaks at 1.
            Intensity::SyntheticBimodal => 2.0 * (-self.domain.lower[0] / 15.0).exp() + 1.0,
            Intensity::Constant { rate } => *rate,
            Intensity::Piecewise { values, .. } => values.iter().cloned().fold(0.0, f64::max),
            Intensity::Tabulated { values, .. } => TABULATED_BOUND_FACTOR * values.iter().cloned().fold(0.0, f64::max),
        }
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(i) => Err(Error::input(format!("intensity value {i} is negative or not finite"))),
        None => Ok(()),
    }
}

/// Cell index and fractional offset of `x` on a lattice axis.
fn locate(x: f64, lo: f64, width: f64, per_dim: usize) -> (usize, f64) {
    let u = ((x - lo) / width * (per_dim - 1) as f64).clamp(0.0, (per_dim - 1) as f64);
    let i = (u.floor() as usize).min(per_dim - 2);
    (i, u - i as f64)
}

pub(crate) fn interpolate(domain: &Domain, per_dim: usize, values: &[f64], s: &[f64]) -> f64 {
    let (i, a) = locate(s[0], domain.lower[0], domain.width(0), per_dim);
    if domain.dim() == 1 {
        return (1.0 - a) * values[i] + a * values[i + 1];
    }
    let (j, b) = locate(s[1], domain.lower[1], domain.width(1), per_dim);
    let at = |x: usize, y: usize| values[x * per_dim + y];
    (1.0 - a) * ((1.0 - b) * at(i, j) + b * at(i, j + 1)) + a * ((1.0 - b) * at(i + 1, j) + b * at(i + 1, j + 1))
}

fn uniform_point<R: Rng + ?Sized>(domain: &Domain, rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    for (a, b) in domain.lower.iter().zip(&domain.upper) {
        out.push(a + (b - a) * rng.random::<f64>());
    }
}

/// Draw one realization: a homogeneous process at the upper bound, thinned by
/// `λ(s) / λ_max`.
pub fn simulate<R: Rng + ?Sized>(spec: &IntensitySpec, rng: &mut R) -> Result<EventDataset> {
    let bound = spec.upper_bound();
    let domain = spec.domain.clone();
    if !(bound > 0.0) {
        return Ok(EventDataset {
            points: Points::empty(domain.dim()),
            domain,
        });
    }
    let mean = bound * domain.volume();
    let count = Poisson::new(mean)
        .map_err(|e| Error::input(format!("cannot draw a Poisson count with mean {mean}: {e}")))?
        .sample(rng) as usize;
    let mut coords = Vec::new();
    let mut s = Vec::with_capacity(domain.dim());
    for _ in 0..count {
        uniform_point(&domain, rng, &mut s);
        let lambda = spec.eval(&s);
        if lambda < 0.0 {
            return Err(Error::input(format!("intensity is negative at {s:?}")));
        }
        if rng.random::<f64>() * bound < lambda {
            coords.extend_from_slice(&s);
        }
    }
    Ok(EventDataset {
        points: Points::new(domain.dim(), coords)?,
        domain,
    })
}

/// Exactly `n` independent points with density proportional to `λ`, by
/// rejection. Used for conditioning on the event count.
pub fn simulate_count<R: Rng + ?Sized>(spec: &IntensitySpec, n: usize, rng: &mut R) -> Result<EventDataset> {
    let bound = spec.upper_bound();
    let domain = spec.domain.clone();
    if n > 0 && !(bound > 0.0) {
        return Err(Error::input("cannot place events under a zero intensity"));
    }
    let mut coords = Vec::with_capacity(n * domain.dim());
    let mut s = Vec::with_capacity(domain.dim());
    let mut accepted = 0;
    while accepted < n {
        uniform_point(&domain, rng, &mut s);
        if rng.random::<f64>() * bound < spec.eval(&s) {
            coords.extend_from_slice(&s);
            accepted += 1;
        }
    }
    Ok(EventDataset {
        points: Points::new(domain.dim(), coords)?,
        domain,
    })
}

/// `∫_S λ` by an order-`p` Gauss–Legendre rule.
pub fn integral_of(spec: &IntensitySpec, p: usize) -> Result<f64> {
    integrate_over(|s| spec.eval(s), &spec.domain, p)
}

pub fn integrate_over(f: impl FnMut(&[f64]) -> f64, domain: &Domain, p: usize) -> Result<f64> {
    Ok(gauss_legendre_rule(p, domain)?.integrate(f))
}
