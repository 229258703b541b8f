//! Small numerical helpers shared across modules.

/// Pairwise (cascade) summation. The result depends only on the order of
/// `values`, never on how work was scheduled.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Poisson(`mean`) probabilities `P(N = 0..=K)` where `K` is the smallest
/// order whose tail mass `P(N > K)` is certified below `tol`.
///
/// The tail is bounded by the geometric majorant
/// `w[K+1] / (1 - mean / (K + 2))`, valid once `K + 2 > mean`.
/// Intended for `mean <= 700`; larger means underflow `exp(-mean)`.
pub fn poisson_weights(mean: f64, tol: f64) -> Vec<f64> {
    debug_assert!((0.0..=745.0).contains(&mean));
    let mut weights = vec![(-mean).exp()];
    if mean == 0.0 {
        return weights;
    }
    let mut k = 0usize;
    loop {
        let w_k = weights[k];
        let next = w_k * mean / (k as f64 + 1.0);
        let ratio = mean / (k as f64 + 2.0);
        if ratio < 1.0 && next / (1.0 - ratio) < tol {
            break;
        }
        weights.push(next);
        k += 1;
        // Hard stop far beyond any reasonable mean; avoids runaway loops on tol = 0.
        if k > 20 * (mean.ceil() as usize) + 1000 {
            break;
        }
    }
    weights
}
