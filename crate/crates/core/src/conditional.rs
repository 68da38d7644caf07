//! Moments of the log-intensity conditioned on its values at the inducing points.
//!
//! For inducing locations `D'` with Gram factor `K_{D'D'} + jI = L Lᵀ`:
//!
//! * mean:     `m(s) = m* + k_{sD'} K⁻¹ G`
//! * variance: `γ(s, s) = h² - k_{sD'} K⁻¹ k_{D's}`
//!
//! Everything is computed through the whitened cross-covariance
//! `b(s) = L⁻¹ k_{D's}`, so no n×n matrix is ever formed.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{HyperParams, Kernel};
use crate::linalg::JitteredCholesky;
use crate::points::Points;
use crate::quadrature::Domain;

/// Roundoff allowance for negative conditional variances, relative to `h²`.
pub const NEGATIVE_VARIANCE_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducingSet {
    points: Points,
}

impl InducingSet {
    pub fn new(points: Points) -> Result<Self> {
        for i in 0..points.len() {
            for j in 0..i {
                if points.get(i) == points.get(j) {
                    return Err(Error::input(format!(
                        "inducing points {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(InducingSet { points })
    }

    pub fn empty(dim: usize) -> Self {
        InducingSet {
            points: Points::empty(dim),
        }
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn check_within(&self, domain: &Domain) -> Result<()> {
        match self.points.iter().position(|p| !domain.contains(p)) {
            Some(i) => Err(Error::input(format!("inducing point {i} lies outside the domain"))),
            None => Ok(()),
        }
    }

    pub fn with_point(&self, point: &[f64]) -> Result<InducingSet> {
        let mut points = self.points.clone();
        points.push(point)?;
        InducingSet::new(points)
    }
}

/// Log-intensities at the inducing points together with the prior mean `m*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GPValues {
    pub log_lambda: Vec<f64>,
    pub m_star: f64,
}

impl GPValues {
    pub fn new(log_lambda: Vec<f64>, m_star: f64) -> Result<Self> {
        if !m_star.is_finite() || log_lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("GP values must be finite"));
        }
        Ok(GPValues { log_lambda, m_star })
    }

    /// `m* = log(n / μ(S))`.
    pub fn prior_mean(n: usize, volume: f64) -> f64 {
        (n as f64 / volume).ln()
    }

    /// `G = log λ(D') - m*`.
    pub fn centered(&self) -> Vec<f64> {
        self.log_lambda.iter().map(|v| v - self.m_star).collect()
    }
}

/// Conditional GP for fixed inducing locations and hyperparameters. Holds the
/// single factorization shared by every mean and covariance query; changing
/// the hyperparameters means building a new one.
#[derive(Clone, Debug)]
pub struct ConditionalGp {
    kernel: Kernel,
    inducing: InducingSet,
    factor: JitteredCholesky,
}

impl ConditionalGp {
    pub fn new(inducing: &InducingSet, params: &HyperParams) -> Result<Self> {
        let kernel = Kernel::new(params.clone());
        if !inducing.is_empty() {
            kernel.check_points(inducing.points())?;
        }
        let factor = if inducing.is_empty() {
            JitteredCholesky::empty()
        } else {
            let k = kernel.gram(inducing.points(), inducing.points())?;
            JitteredCholesky::new(k, kernel.variance())?
        };
        Ok(ConditionalGp {
            kernel,
            inducing: inducing.clone(),
            factor,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn factor(&self) -> &JitteredCholesky {
        &self.factor
    }

    pub fn inducing(&self) -> &InducingSet {
        &self.inducing
    }

    pub fn k(&self) -> usize {
        self.inducing.len()
    }

    /// Write `L⁻¹ k_{D's}` into `out` (length k).
    #[inline]
    pub fn whiten_into(&self, s: &[f64], out: &mut [f64]) {
        for (o, u) in out.iter_mut().zip(self.inducing.points().iter()) {
            *o = self.kernel.eval_unchecked(s, u);
        }
        self.factor.solve_lower_in_place(out);
    }

    pub fn whiten(&self, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        self.whiten_into(s, &mut out);
        out
    }

    /// Whitened inducing values `L⁻¹ G`.
    pub fn whiten_values(&self, values: &GPValues) -> Result<Vec<f64>> {
        if values.log_lambda.len() != self.k() {
            return Err(Error::input(format!(
                "{} GP values supplied for {} inducing points",
                values.log_lambda.len(),
                self.k()
            )));
        }
        let mut z = values.centered();
        self.factor.solve_lower_in_place(&mut z);
        Ok(z)
    }

    /// `h² - ‖b‖²` clamped at zero; materially negative values are errors.
    #[inline]
    pub fn clamp_variance(&self, raw: f64) -> Result<f64> {
        let h2 = self.kernel.variance();
        if raw < -NEGATIVE_VARIANCE_TOLERANCE * h2 {
            return Err(Error::conditioning(format!(
                "conditional variance {raw:.3e} is negative beyond roundoff (h² = {h2:.3e})"
            )));
        }
        Ok(raw.max(0.0))
    }

    pub fn conditional_mean(&self, query: &Points, values: &GPValues) -> Result<Vec<f64>> {
        self.kernel.check_points(query)?;
        let z = self.whiten_values(values)?;
        let mut b = vec![0.0; self.k()];
        Ok(query
            .iter()
            .map(|s| {
                self.whiten_into(s, &mut b);
                values.m_star + dot(&b, &z)
            })
            .collect())
    }

    pub fn conditional_cov_diag(&self, query: &Points) -> Result<Vec<f64>> {
        self.kernel.check_points(query)?;
        let h2 = self.kernel.variance();
        let mut b = vec![0.0; self.k()];
        query
            .iter()
            .map(|s| {
                self.whiten_into(s, &mut b);
                self.clamp_variance(h2 - dot(&b, &b))
            })
            .collect()
    }

    pub fn conditional_cov_full(&self, query: &Points) -> Result<DMatrix<f64>> {
        self.kernel.check_points(query)?;
        let q = query.len();
        let whitened: Vec<Vec<f64>> = query.iter().map(|s| self.whiten(s)).collect();
        let mut cov = DMatrix::zeros(q, q);
        for i in 0..q {
            for j in 0..=i {
                let mut v = self.kernel.eval_unchecked(query.get(i), query.get(j))
                    - dot(&whitened[i], &whitened[j]);
                if i == j {
                    v = self.clamp_variance(v)?;
                }
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok(cov)
    }

    /// `Tr(K_{DD'} K⁻¹ K_{D'D})` in O(n·k²) time and O(k) extra memory.
    pub fn trace_reduction(&self, data: &Points) -> Result<f64> {
        self.kernel.check_points(data)?;
        let mut b = vec![0.0; self.k()];
        Ok(data
            .iter()
            .map(|s| {
                self.whiten_into(s, &mut b);
                dot(&b, &b)
            })
            .sum())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nonempty(query: &Points) -> Result<()> {
    if query.is_empty() {
        return Err(Error::input("query point list is empty"));
    }
    Ok(())
}

pub fn conditional_mean(
    query: &Points,
    inducing: &InducingSet,
    values: &GPValues,
    params: &HyperParams,
) -> Result<Vec<f64>> {
    nonempty(query)?;
    ConditionalGp::new(inducing, params)?.conditional_mean(query, values)
}

pub fn conditional_cov_diag(
    query: &Points,
    inducing: &InducingSet,
    params: &HyperParams,
) -> Result<Vec<f64>> {
    nonempty(query)?;
    ConditionalGp::new(inducing, params)?.conditional_cov_diag(query)
}

pub fn conditional_cov_full(
    query: &Points,
    inducing: &InducingSet,
    params: &HyperParams,
) -> Result<DMatrix<f64>> {
    nonempty(query)?;
    ConditionalGp::new(inducing, params)?.conditional_cov_full(query)
}

pub fn trace_reduction(data: &Points, inducing: &InducingSet, params: &HyperParams) -> Result<f64> {
    if inducing.is_empty() {
        return Err(Error::input("trace reduction needs at least one inducing point"));
    }
    ConditionalGp::new(inducing, params)?.trace_reduction(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::gram;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(h: f64, l: f64) -> HyperParams {
        HyperParams::isotropic(h, l, 1).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Points {
        Points::from_scalars(&(0..n).map(|_| rng.random::<f64>() * scale).collect::<Vec<_>>())
    }

    /// Dense Σ*_{SS} - Σ*_{SD'} (Σ*_{D'D'} + jI)⁻¹ Σ*_{D'S} via an LU inverse,
    /// with the same initial jitter the factorization uses.
    fn dense_conditional_cov(query: &Points, inducing: &Points, p: &HyperParams) -> DMatrix<f64> {
        let kss = gram(query, query, p).unwrap();
        let ksu = gram(query, inducing, p).unwrap();
        let mut kuu = gram(inducing, inducing, p).unwrap();
        for i in 0..inducing.len() {
            kuu[(i, i)] += crate::linalg::INITIAL_RELATIVE_JITTER * p.variance();
        }
        kss - &ksu * kuu.try_inverse().unwrap() * ksu.transpose()
    }

    #[test]
    fn empty_conditioning_returns_prior_moments() {
        let inducing = InducingSet::empty(1);
        let q = Points::from_scalars(&[0.1, 2.0, 7.5]);
        let values = GPValues::new(vec![], 1.5).unwrap();
        let m = conditional_mean(&q, &inducing, &values, &params(2.0, 1.0)).unwrap();
        assert_eq!(m, vec![1.5; 3]);
        let v = conditional_cov_diag(&q, &inducing, &params(2.0, 1.0)).unwrap();
        assert_eq!(v, vec![4.0; 3]);
        let full = conditional_cov_full(&q, &inducing, &params(2.0, 1.0)).unwrap();
        assert_eq!(full, gram(&q, &q, &params(2.0, 1.0)).unwrap());
    }

    #[test]
    fn interpolates_at_the_inducing_point() {
        let inducing = InducingSet::new(Points::from_scalars(&[0.4])).unwrap();
        let values = GPValues::new(vec![0.9], 0.2).unwrap();
        let q = Points::from_scalars(&[0.4]);
        let p = params(1.3, 0.5);
        let m = conditional_mean(&q, &inducing, &values, &p).unwrap();
        assert!((m[0] - 0.9).abs() < 1e-6);
        let v = conditional_cov_diag(&q, &inducing, &p).unwrap();
        assert!(v[0] <= 1e-6 * p.variance());
    }

    #[test]
    fn mean_matches_explicit_two_by_two_solve() {
        let inducing = InducingSet::new(Points::from_scalars(&[0.0, 1.0])).unwrap();
        let values = GPValues::new(vec![0.3, -0.2], 0.0).unwrap();
        let p = params(1.0, 1.0);
        let m = conditional_mean(&Points::from_scalars(&[0.5]), &inducing, &values, &p).unwrap();
        // Cramer's rule on [[1, e], [e, 1]] w = G with e = exp(-1/2)
        let e = (-0.5f64).exp();
        let det = 1.0 - e * e;
        let w0 = (0.3 - e * -0.2) / det;
        let w1 = (-0.2 - e * 0.3) / det;
        let k = (-0.125f64).exp();
        assert_relative_eq!(m[0], k * w0 + k * w1, max_relative = 1e-7);
    }

    #[test]
    fn full_covariance_is_psd_and_matches_diag() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_points(&mut rng, 5, 4.0);
        let inducing = InducingSet::new(random_points(&mut rng, 2, 4.0)).unwrap();
        let p = params(1.2, 0.9);
        let full = conditional_cov_full(&q, &inducing, &p).unwrap();
        let diag = conditional_cov_diag(&q, &inducing, &p).unwrap();
        for i in 0..5 {
            assert_relative_eq!(full[(i, i)], diag[i], epsilon = 1e-14);
        }
        assert!(full.clone().symmetric_eigen().eigenvalues.min() >= -1e-8);
        let one = Points::from_scalars(&[1.7]);
        let f1 = conditional_cov_full(&one, &inducing, &p).unwrap();
        assert_eq!(f1[(0, 0)], conditional_cov_diag(&one, &inducing, &p).unwrap()[0]);
    }

    #[test]
    fn trace_reduction_single_point_is_variance() {
        let s = Points::from_scalars(&[2.5]);
        let inducing = InducingSet::new(s.clone()).unwrap();
        let p = params(1.7, 0.8);
        assert_relative_eq!(trace_reduction(&s, &inducing, &p).unwrap(), p.variance(), max_relative = 1e-7);
    }

    #[test]
    fn trace_reduction_matches_dense_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let n = rng.random_range(1..=50);
            let data = random_points(&mut rng, n, 10.0);
            let inducing_pts = random_points(&mut rng, 2, 10.0);
            let inducing = InducingSet::new(inducing_pts.clone()).unwrap();
            let p = params(rng.random_range(0.5..2.0), rng.random_range(0.5..3.0));
            let fast = trace_reduction(&data, &inducing, &p).unwrap();
            let dense = dense_conditional_cov(&data, &inducing_pts, &p);
            let dense_value = n as f64 * p.variance() - dense.trace();
            assert_relative_eq!(fast, dense_value, max_relative = 1e-8);
        }
    }

    #[test]
    fn variance_reduction_over_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let q = random_points(&mut rng, 6, 5.0);
            let k = rng.random_range(1..5);
            let inducing = InducingSet::new(random_points(&mut rng, k, 5.0)).unwrap();
            let p = params(rng.random_range(0.3..3.0), rng.random_range(0.2..2.0));
            for v in conditional_cov_diag(&q, &inducing, &p).unwrap() {
                assert!(v <= p.variance() && v >= 0.0);
            }
        }
    }

    #[test]
    fn adding_an_inducing_point_never_increases_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let q = random_points(&mut rng, 8, 5.0);
            let l = rng.random_range(0.3..2.0);
            // keep the dense inverse well conditioned: inducing points at least l/2 apart
            let (base, extra) = loop {
                let all = random_points(&mut rng, 4, 5.0);
                let ok = (0..4).all(|i| (0..i).all(|j| (all.get(i)[0] - all.get(j)[0]).abs() > 0.5 * l));
                if ok {
                    break (all.select(&[0, 1, 2]), all.select(&[3]));
                }
            };
            let p = params(1.0, l);
            let before = dense_conditional_cov(&q, &base, &p);
            let after = dense_conditional_cov(&q, &base.concat(&extra).unwrap(), &p);
            let fast_before = conditional_cov_diag(&q, &InducingSet::new(base.clone()).unwrap(), &p).unwrap();
            let fast_after = conditional_cov_diag(
                &q,
                &InducingSet::new(base.concat(&extra).unwrap()).unwrap(),
                &p,
            )
            .unwrap();
            for i in 0..8 {
                assert!(after[(i, i)] <= before[(i, i)] + 1e-9);
                assert!(fast_after[i] <= fast_before[i] + 1e-7);
            }
        }
    }

    #[test]
    fn rejects_duplicates_and_mismatched_values() {
        assert!(InducingSet::new(Points::from_scalars(&[1.0, 1.0])).is_err());
        let inducing = InducingSet::new(Points::from_scalars(&[1.0])).unwrap();
        let values = GPValues::new(vec![0.0, 1.0], 0.0).unwrap();
        assert!(conditional_mean(&Points::from_scalars(&[0.0]), &inducing, &values, &params(1.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn deterministic_and_bounded(x in 0.0f64..10.0, u in 0.0f64..10.0, l in 0.1f64..5.0) {
            let inducing = InducingSet::new(Points::from_scalars(&[u])).unwrap();
            let p = params(1.5, l);
            let q = Points::from_scalars(&[x]);
            let a = conditional_cov_diag(&q, &inducing, &p).unwrap();
            let b = conditional_cov_diag(&q, &inducing, &p).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a[0] >= 0.0 && a[0] <= p.variance());
        }
    }
}
