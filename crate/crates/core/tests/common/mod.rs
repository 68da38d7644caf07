//! Independent reference computations for integration and acceptance tests.
//! Nothing here calls into the library's likelihood or quadrature code.

#![allow(dead_code)]

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Composite trapezoid nodes and weights on `[a, b]`.
pub fn trapezoid(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / (n - 1) as f64;
    let x = (0..n).map(|i| a + h * i as f64).collect();
    let w = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect();
    (x, w)
}

/// One inducing point `u` on `[a, b]` with an SE kernel `h² exp(-(s-t)²/(2l²))`.
pub struct OnePointToy {
    pub a: f64,
    pub b: f64,
    pub u: f64,
    pub h: f64,
    pub l: f64,
    pub data: Vec<f64>,
}

impl OnePointToy {
    pub fn m_star(&self) -> f64 {
        (self.data.len() as f64 / (self.b - self.a)).ln()
    }

    fn k(&self, s: f64, t: f64) -> f64 {
        self.h * self.h * (-(s - t).powi(2) / (2.0 * self.l * self.l)).exp()
    }

    /// Conditional mean and variance of the log-intensity at `s` given `G`.
    pub fn conditional(&self, s: f64, g: f64) -> (f64, f64) {
        let h2 = self.h * self.h;
        let c = self.k(s, self.u);
        (self.m_star() + c / h2 * (g - self.m_star()), (h2 - c * c / h2).max(0.0))
    }

    fn cov(&self, s: f64, t: f64) -> f64 {
        self.k(s, t) - self.k(s, self.u) * self.k(t, self.u) / (self.h * self.h)
    }

    /// Log-likelihood: data term through the Gaussian MGF, integral term through
    /// a Gamma matched by dense trapezoid moments.
    pub fn log_likelihood(&self, g: f64) -> f64 {
        self.log_likelihood_with(g, &self.expm1_cov())
    }

    const NODES: usize = 601;

    fn expm1_cov(&self) -> Vec<f64> {
        let (x, _) = trapezoid(self.a, self.b, Self::NODES);
        x.iter().flat_map(|s| x.iter().map(move |t| (*s, *t))).map(|(s, t)| self.cov(s, t).exp_m1()).collect()
    }

    fn log_likelihood_with(&self, g: f64, expm1_cov: &[f64]) -> f64 {
        let data: f64 = self
            .data
            .iter()
            .map(|s| {
                let (m, v) = self.conditional(*s, g);
                m + 0.5 * v
            })
            .sum();
        let (x, w) = trapezoid(self.a, self.b, Self::NODES);
        let f: Vec<f64> = x
            .iter()
            .map(|s| {
                let (m, v) = self.conditional(*s, g);
                (m + 0.5 * v).exp()
            })
            .collect();
        let mu: f64 = w.iter().zip(&f).map(|(w, f)| w * f).sum();
        let mut sigma2 = 0.0;
        for i in 0..x.len() {
            for j in 0..x.len() {
                sigma2 += w[i] * w[j] * f[i] * f[j] * expm1_cov[i * x.len() + j];
            }
        }
        let alpha = mu * mu / sigma2;
        let beta = sigma2 / mu;
        data - alpha * beta.ln_1p()
    }

    /// Posterior mean and standard deviation of `G` under its `N(m*, h²)` prior,
    /// by dense 1-D quadrature.
    pub fn posterior_moments(&self) -> (f64, f64) {
        let (lo, hi) = (self.m_star() - 10.0 * self.h, self.m_star() + 10.0 * self.h);
        let (g, w) = trapezoid(lo, hi, 2001);
        let expm1_cov = self.expm1_cov();
        let log_post: Vec<f64> = g
            .iter()
            .map(|g| -0.5 * ((g - self.m_star()) / self.h).powi(2) + self.log_likelihood_with(*g, &expm1_cov))
            .collect();
        let max = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p: Vec<f64> = log_post.iter().zip(&w).map(|(l, w)| w * (l - max).exp()).collect();
        let z: f64 = p.iter().sum();
        let m = g.iter().zip(&p).map(|(g, p)| g * p).sum::<f64>() / z;
        let v = g.iter().zip(&p).map(|(g, p)| (g - m).powi(2) * p).sum::<f64>() / z;
        (m, v.sqrt())
    }
}
