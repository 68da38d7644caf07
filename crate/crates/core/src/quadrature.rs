//! Gauss–Legendre rules on rectangles and Gamma moment matching of `I = ∫ λ`.

use serde::{Deserialize, Serialize};

use crate::conditional::{dot, ConditionalGp, GPValues, InducingSet};
use crate::error::{Error, Result};
use crate::kernel::HyperParams;
use crate::points::Points;

pub const MAX_ORDER: usize = 64;

/// Floor for `σ_I²` relative to `μ_I²`.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Axis-aligned rectangle `Π [lower_j, upper_j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::input("domain bounds must be nonempty and of equal length"));
        }
        for (j, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::input(format!(
                    "domain dimension {j}: need finite lower < upper, got [{a}, {b}]"
                )));
            }
        }
        Ok(Domain { lower, upper })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Domain::new(vec![a], vec![b])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (a, b))| *x >= *a && *x <= *b)
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    /// Project a point onto the rectangle.
    pub fn clamp(&self, p: &mut [f64]) {
        for (x, (a, b)) in p.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*a, *b);
        }
    }

    /// Regular lattice with `per_dim` points per axis, endpoints included.
    pub fn grid(&self, per_dim: usize) -> Points {
        let per_dim = per_dim.max(2);
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|j| {
                (0..per_dim)
                    .map(|i| self.lower[j] + self.width(j) * i as f64 / (per_dim - 1) as f64)
                    .collect()
            })
            .collect();
        tensor(&axes, self.dim())
    }
}

fn tensor(axes: &[Vec<f64>], dim: usize) -> Points {
    let mut coords = Vec::new();
    match dim {
        1 => coords.extend_from_slice(&axes[0]),
        _ => {
            for x in &axes[0] {
                for y in &axes[1] {
                    coords.push(*x);
                    coords.push(*y);
                }
            }
        }
    }
    Points::new(dim, coords).expect("finite lattice")
}

/// Nodes and weights of the order-`p` Gauss–Legendre rule on `[-1, 1]`,
/// nodes in increasing order.
pub fn gauss_legendre(p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if p == 0 || p > MAX_ORDER {
        return Err(Error::input(format!(
            "Gauss-Legendre order must be in 1..={MAX_ORDER}, got {p}"
        )));
    }
    let mut nodes = vec![0.0; p];
    let mut weights = vec![0.0; p];
    let n = p as f64;
    for i in 0..p.div_ceil(2) {
        // Tricomi's initial guess for the i-th largest root
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            let (value, d) = legendre_with_derivative(p, x);
            deriv = d;
            let step = value / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(p, x);
        if d != 0.0 {
            deriv = d;
        }
        let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
        nodes[p - 1 - i] = x;
        nodes[i] = -x;
        weights[p - 1 - i] = w;
        weights[i] = w;
    }
    if p % 2 == 1 {
        nodes[p / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// `(P_p(x), P_p'(x))` by the three-term recurrence.
fn legendre_with_derivative(p: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = x;
    for k in 2..=p {
        let k = k as f64;
        let next = ((2.0 * k - 1.0) * x * cur - (k - 1.0) * prev) / k;
        prev = cur;
        cur = next;
    }
    if p == 0 {
        return (1.0, 0.0);
    }
    let deriv = p as f64 * (x * cur - prev) / (x * x - 1.0);
    (cur, deriv)
}

/// Tensor-product Gauss–Legendre rule mapped onto a rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    order: usize,
    nodes: Points,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &Points {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

pub fn gauss_legendre_rule(p: usize, domain: &Domain) -> Result<QuadratureRule> {
    let d = domain.dim();
    if !(1..=2).contains(&d) {
        return Err(Error::input(format!(
            "quadrature supports dimension 1 or 2, got {d}"
        )));
    }
    let (x, w) = gauss_legendre(p)?;
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let half = 0.5 * domain.width(j);
            let mid = 0.5 * (domain.upper[j] + domain.lower[j]);
            x.iter().map(|xi| half * xi + mid).collect()
        })
        .collect();
    let scaled: Vec<Vec<f64>> = (0..d)
        .map(|j| w.iter().map(|wi| 0.5 * domain.width(j) * wi).collect())
        .collect();
    let weights = if d == 1 {
        scaled[0].clone()
    } else {
        scaled[0]
            .iter()
            .flat_map(|a| scaled[1].iter().map(move |b| a * b))
            .collect()
    };
    Ok(QuadratureRule {
        order: p,
        nodes: tensor(&axes, d),
        weights,
    })
}

/// Gamma distribution matched to the mean and variance of `∫ λ̂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaMoments {
    pub mu: f64,
    pub sigma2: f64,
    /// shape
    pub alpha: f64,
    /// scale
    pub beta: f64,
}

impl GammaMoments {
    /// Shape `μ²/σ²` and scale `σ²/μ`, with `σ²` floored at `1e-12·μ²`.
    pub fn from_mean_variance(mu: f64, sigma2: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Internal(format!(
                "integral mean must be positive and finite, got {mu}"
            )));
        }
        let sigma2 = if sigma2.is_nan() { f64::NAN } else { sigma2.max(VARIANCE_FLOOR * mu * mu) };
        if !sigma2.is_finite() {
            return Err(Error::Internal(format!("integral variance is not finite: {sigma2}")));
        }
        Ok(GammaMoments {
            mu,
            sigma2,
            alpha: mu * mu / sigma2,
            beta: sigma2 / mu,
        })
    }

    /// `log E[exp(-I)] = -α log(1 + β)`.
    pub fn log_laplace_at_one(&self) -> f64 {
        -self.alpha * self.beta.ln_1p()
    }
}

/// Mean and covariance of the latent log-intensity at quadrature nodes.
pub trait NodeMoments {
    fn mean(&self, i: usize) -> f64;
    fn cov(&self, i: usize, j: usize) -> f64;
}

/// Match a Gamma to `∫ exp(g)` where `g` is Gaussian with the given node moments.
///
/// `μ = Σ w_i f_i` with `f_i = exp(m_i + γ_ii/2)` and
/// `σ² = Σ_ij w_i f_i w_j f_j (exp(γ_ij) - 1)`, which equals
/// `Σ_ij w_i w_j g(s_i, s_j) - μ²` without the cancellation.
pub fn moment_match(weights: &[f64], moments: &impl NodeMoments) -> Result<GammaMoments> {
    let p = weights.len();
    let log_f: Vec<f64> = (0..p)
        .map(|i| moments.mean(i) + 0.5 * moments.cov(i, i))
        .collect();
    let mut expm1_cov = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let v = moments.cov(i, j).exp_m1();
            expm1_cov[i * p + j] = v;
            expm1_cov[j * p + i] = v;
        }
    }
    moment_match_cached(weights, &log_f, &expm1_cov)
}

/// As [`moment_match`] with `log f_i` and the `expm1(γ_ij)` matrix (row-major)
/// precomputed.
pub fn moment_match_cached(weights: &[f64], log_f: &[f64], expm1_cov: &[f64]) -> Result<GammaMoments> {
    let p = weights.len();
    let mut wf = Vec::with_capacity(p);
    for (i, (w, lf)) in weights.iter().zip(log_f).enumerate() {
        let f = lf.exp();
        if !f.is_finite() {
            return Err(Error::Range {
                node: i,
                log_value: *lf,
            });
        }
        wf.push(w * f);
    }
    let mu: f64 = wf.iter().sum();
    let mut sigma2 = 0.0;
    for i in 0..p {
        let row = &expm1_cov[i * p..(i + 1) * p];
        sigma2 += wf[i] * dot(row, &wf);
    }
    if !sigma2.is_finite() {
        let node = wf.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |x| x.0);
        return Err(Error::Range {
            node,
            log_value: log_f[node],
        });
    }
    GammaMoments::from_mean_variance(mu, sigma2)
}

struct ConditionalNodeMoments {
    mean: Vec<f64>,
    whitened: Vec<Vec<f64>>,
    prior_cov: Vec<f64>,
    size: usize,
}

impl NodeMoments for ConditionalNodeMoments {
    fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    fn cov(&self, i: usize, j: usize) -> f64 {
        let v = self.prior_cov[i * self.size + j] - dot(&self.whitened[i], &self.whitened[j]);
        if i == j {
            v.max(0.0)
        } else {
            v
        }
    }
}

/// Gamma moments of `∫ λ̂` for the conditional GP anchored at `values`.
pub fn gamma_moments(
    inducing: &InducingSet,
    values: &GPValues,
    params: &HyperParams,
    rule: &QuadratureRule,
) -> Result<GammaMoments> {
    let gp = ConditionalGp::new(inducing, params)?;
    let nodes = rule.nodes();
    let mean = gp.conditional_mean(nodes, values)?;
    let whitened: Vec<Vec<f64>> = nodes.iter().map(|s| gp.whiten(s)).collect();
    let size = nodes.len();
    let mut prior_cov = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            prior_cov[i * size + j] = gp.kernel().eval_unchecked(nodes.get(i), nodes.get(j));
        }
    }
    // validate the diagonal against the negative-variance tolerance
    for (i, b) in whitened.iter().enumerate() {
        gp.clamp_variance(prior_cov[i * size + i] - dot(b, b))?;
    }
    moment_match(
        rule.weights(),
        &ConditionalNodeMoments {
            mean,
            whitened,
            prior_cov,
            size,
        },
    )
}
