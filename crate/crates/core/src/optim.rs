//! Derivative-free local minimization (Nelder–Mead).

pub struct NelderMead {
    pub max_iterations: usize,
    /// Stop once the spread of simplex values falls below this.
    pub tolerance: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iterations: 200,
            tolerance: 1e-12,
        }
    }
}

impl NelderMead {
    /// Minimize `f` starting from `start` with an axis-aligned initial simplex
    /// of size `step`. Returns the best vertex and its value.
    pub fn minimize(
        &self,
        mut f: impl FnMut(&[f64]) -> f64,
        start: &[f64],
        step: &[f64],
    ) -> (Vec<f64>, f64) {
        let n = start.len();
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((start.to_vec(), f(start)));
        for j in 0..n {
            let mut v = start.to_vec();
            v[j] += step[j];
            let fv = f(&v);
            simplex.push((v, fv));
        }

        for _ in 0..self.max_iterations {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            if (worst - best).abs() <= self.tolerance * (1.0 + best.abs()) {
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|v| v.0[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect()
            };

            let reflected = along(-1.0);
            let fr = f(&reflected);
            if fr < simplex[0].1 {
                let expanded = along(-2.0);
                let fe = f(&expanded);
                simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (reflected, fr);
                continue;
            }
            let (contracted, fc) = if fr < simplex[n].1 {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contracted, fc);
                continue;
            }
            // shrink toward the best vertex
            let best_x = simplex[0].0.clone();
            for v in simplex.iter_mut().skip(1) {
                for (x, b) in v.0.iter_mut().zip(&best_x) {
                    *x = b + 0.5 * (*x - b);
                }
                v.1 = f(&v.0);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        simplex.swap_remove(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let nm = NelderMead {
            max_iterations: 500,
            tolerance: 1e-16,
        };
        let (x, fx) = nm.minimize(
            |p| (p[0] - 1.5).powi(2) + 3.0 * (p[1] + 0.5).powi(2),
            &[0.0, 0.0],
            &[0.3, 0.3],
        );
        assert!((x[0] - 1.5).abs() < 1e-5 && (x[1] + 0.5).abs() < 1e-5, "{x:?}");
        assert!(fx < 1e-9);
    }

    #[test]
    fn one_dimensional_peak() {
        let (x, _) = NelderMead::default().minimize(|p| -(-(p[0] - 3.0).powi(2)).exp(), &[2.0], &[0.5]);
        assert!((x[0] - 3.0).abs() < 1e-4);
    }
}
