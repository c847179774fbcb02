//! Pairwise correlation estimation, the log-distance transform D*, the
//! fixed-θ interval classifier, and the Hoeffding tail bound.

use crate::error::{Error, Result};
use crate::sample::SampleMatrix;

/// Symmetric empirical correlations c(u,v) over a leaf set, with the
/// sample count they came from.
#[derive(Debug, Clone)]
pub struct CorrelationTable {
    n: usize,
    pub k: usize,
    c: Vec<f64>,
}

impl CorrelationTable {
    /// Empirical products averaged per pair: c(u,v) = (1/k) Σ σ_u σ_v.
    pub fn from_samples(samples: &SampleMatrix) -> Result<CorrelationTable> {
        if samples.k() == 0 {
            return Err(Error::InvalidParameter("need k >= 1 samples".into()));
        }
        let n = samples.n_vertices();
        let mut c = vec![1.0f64; n * n];
        for u in 0..n {
            for v in (u + 1)..n {
                let x = samples.correlation(u, v);
                c[u * n + v] = x;
                c[v * n + u] = x;
            }
        }
        Ok(CorrelationTable {
            n,
            k: samples.k(),
            c,
        })
    }

    /// Build directly from a full table (exact-correlation oracles, tests).
    pub fn from_values(n: usize, f: impl Fn(usize, usize) -> f64) -> CorrelationTable {
        let mut c = vec![1.0f64; n * n];
        for u in 0..n {
            for v in 0..n {
                c[u * n + v] = if u == v { 1.0 } else { f(u, v) };
            }
        }
        CorrelationTable { n, k: 0, c }
    }

    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.c[u * self.n + v]
    }

    /// Upper-triangle CSV export: `u,v,c`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,v,c\n");
        for u in 0..self.n {
            for v in (u + 1)..self.n {
                s.push_str(&format!("{u},{v},{}\n", self.get(u, v)));
            }
        }
        s
    }
}

/// D* = −log c for c > 0, +∞ otherwise.
pub fn dstar(c: f64) -> f64 {
    if c > 0.0 {
        -c.ln()
    } else {
        f64::INFINITY
    }
}

/// The interval classifier for constant θ, η: maps a correlation to the
/// even capped distance in {2, …, 2ℓ} or FAR = 2ℓ+2.
///
/// The ideal correlation at distance 2r is α_r = η² θ^{2r}; interval
/// boundaries sit at midpoints of consecutive α. Values above the top
/// interval clamp to distance 2 (closer than 2 is impossible for
/// distinct leaves); values below the last midpoint are FAR.
pub fn classify_distance_fixed_theta(c: f64, theta: f64, eta: f64, ell: usize) -> usize {
    debug_assert!(theta > 0.0 && theta < 1.0 && eta > 0.0 && eta <= 1.0 && ell >= 1);
    let alpha = |r: usize| eta * eta * theta.powi(2 * r as i32);
    for r in 1..=ell {
        let lower = (alpha(r) + alpha(r + 1)) / 2.0;
        if c > lower {
            return 2 * r;
        }
    }
    2 * ell + 2
}

/// Hoeffding bound 2·exp(−a²/2k) for the deviation of a sum of k i.i.d.
/// ±1-bounded terms by `a` (in unnormalized-sum units).
pub fn hoeffding_tail(k: usize, a: f64) -> f64 {
    2.0 * (-a * a / (2.0 * k as f64)).exp()
}

/// The fixed-θ misclassification bound 2·exp(−k η⁴ θ^{4ℓ} (1−θ²)²/8).
pub fn fixed_theta_error_bound(k: usize, theta: f64, eta: f64, ell: usize) -> f64 {
    let e4 = eta.powi(4) * theta.powi(4 * ell as i32) * (1.0 - theta * theta).powi(2);
    2.0 * (-(k as f64) * e4 / 8.0).exp()
}
