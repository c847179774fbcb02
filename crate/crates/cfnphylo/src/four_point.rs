//! Quartet splits, minimal-split detection with margins, the proximity
//! relations R ⊇ R~ ⊇ R′, and recovery of the capped ℓ-topology from a
//! correlation table by the recursive split criterion.

use crate::distance::{dstar, CorrelationTable};
use crate::error::{Error, Result};
use crate::tree::PartialMetric;

/// A split of a 4-element leaf set into two pairs, stored canonically:
/// each pair sorted, pairs ordered by first element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Split {
    pub pairs: [[usize; 2]; 2],
}

impl Split {
    pub fn new(a: usize, b: usize, c: usize, d: usize) -> Result<Split> {
        let mut all = [a, b, c, d];
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("degenerate quartet".into()));
        }
        let mut p1 = [a.min(b), a.max(b)];
        let mut p2 = [c.min(d), c.max(d)];
        if p1[0] > p2[0] {
            std::mem::swap(&mut p1, &mut p2);
        }
        Ok(Split { pairs: [p1, p2] })
    }

    /// The three splits of a quartet.
    pub fn all_of(q: [usize; 4]) -> Result<[Split; 3]> {
        Ok([
            Split::new(q[0], q[1], q[2], q[3])?,
            Split::new(q[0], q[2], q[1], q[3])?,
            Split::new(q[0], q[3], q[1], q[2])?,
        ])
    }
}

/// Threshold θ* = θ_min^{2ℓ+2} η_min² / 2.
pub fn theta_star(theta_min: f64, eta_min: f64, ell: usize) -> f64 {
    theta_min.powi(2 * ell as i32 + 2) * eta_min * eta_min / 2.0
}

/// The three nested proximity relations on a leaf set: uRv iff
/// c(u,v) ≥ θ*, uR~v iff c ≥ (3/2)θ*, uR′v iff c ≥ (15/8)θ*.
#[derive(Debug, Clone)]
pub struct ProximityRelations {
    pub theta_star: f64,
    n: usize,
    r: Vec<bool>,
    r_tilde: Vec<bool>,
    r_prime: Vec<bool>,
}

impl ProximityRelations {
    pub fn build(ct: &CorrelationTable, theta_star: f64) -> ProximityRelations {
        let n = ct.len();
        let mut r = vec![false; n * n];
        let mut r_tilde = vec![false; n * n];
        let mut r_prime = vec![false; n * n];
        for u in 0..n {
            for v in 0..n {
                if u == v {
                    continue;
                }
                let c = ct.get(u, v);
                r[u * n + v] = c >= theta_star;
                r_tilde[u * n + v] = c >= 1.5 * theta_star;
                r_prime[u * n + v] = c >= 1.875 * theta_star;
            }
        }
        ProximityRelations {
            theta_star,
            n,
            r,
            r_tilde,
            r_prime,
        }
    }

    pub fn related(&self, u: usize, v: usize) -> bool {
        self.r[u * self.n + v]
    }
    pub fn tilde(&self, u: usize, v: usize) -> bool {
        self.r_tilde[u * self.n + v]
    }
    pub fn prime(&self, u: usize, v: usize) -> bool {
        self.r_prime[u * self.n + v]
    }
    /// R~ neighborhood of u, excluding u.
    pub fn tilde_neighbors(&self, u: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&v| v != u && self.tilde(u, v))
            .collect()
    }
}

/// Sum of the two within-pair D* values; ∞ propagates.
pub fn split_weight(d: &impl Fn(usize, usize) -> f64, s: Split) -> f64 {
    d(s.pairs[0][0], s.pairs[0][1]) + d(s.pairs[1][0], s.pairs[1][1])
}

/// Minimal splits of a quartet under the weight `d`, using the decision
/// threshold τ = 2(ε + ε′) (the midpoint of the guaranteed gap bounds
/// 4ε and 4ε′): Γ₁ is minimal iff D*(Γ₁) < D*(Γ₂) + τ for all Γ₂. The
/// second return flags a margin violation — some pairwise weight gap
/// landed strictly inside (4ε, 4ε′), where the decision is not certified.
pub fn minimal_splits(
    d: &impl Fn(usize, usize) -> f64,
    quartet: [usize; 4],
    eps: f64,
    eps_prime: f64,
) -> Result<(Vec<Split>, bool)> {
    if !(0.0 < eps && eps <= eps_prime) {
        return Err(Error::InvalidParameter("need 0 < eps <= eps_prime".into()));
    }
    let splits = Split::all_of(quartet)?;
    let w: Vec<f64> = splits.iter().map(|&s| split_weight(d, s)).collect();
    if w.iter().all(|x| x.is_infinite()) {
        // no information at all: treat as the star case
        return Ok((splits.to_vec(), false));
    }
    let tau = 2.0 * (eps + eps_prime);
    let mut margin_violation = false;
    for i in 0..3 {
        for j in (i + 1)..3 {
            let gap = (w[i] - w[j]).abs();
            if gap.is_finite() && gap > 4.0 * eps && gap < 4.0 * eps_prime {
                margin_violation = true;
            }
        }
    }
    let minimal: Vec<Split> = (0..3)
        .filter(|&i| (0..3).all(|j| j == i || w[i] < w[j] + tau))
        .map(|i| splits[i])
        .collect();
    Ok((minimal, margin_violation))
}

/// Diagnostics accumulated during ℓ-topology recovery.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct RecoveryDiagnostics {
    /// Quartet decisions whose weight gap fell in the uncertified band.
    pub margin_violations: usize,
    /// R~ neighborhoods truncated to the configured cap.
    pub capped_neighborhoods: usize,
}

/// Recover the capped ℓ-topology from a correlation table.
///
/// Thresholds: θ* from the parameter bounds, ε = (1−θ_max)/4 and
/// ε′ = −log(θ_max)/4. Distances 2r for r = 1..ℓ are assigned by the
/// recursive criterion: d(u,v) = 2r iff v is R~-related to u, outside
/// the radius-2(r−1) balls, and every split u v | w w′ over witnesses
/// w, w′ drawn from R~(u) minus both balls is minimal. Unresolved pairs
/// keep the cap 2ℓ+2.
///
/// `neighborhood_cap` bounds each R~ neighborhood (largest correlations
/// kept) to preserve the polynomial-time contract on pathological
/// tables; truncations are counted in the diagnostics.
pub fn recover_l_topology(
    ct: &CorrelationTable,
    theta_min: f64,
    theta_max: f64,
    eta_min: f64,
    ell: usize,
    neighborhood_cap: usize,
) -> Result<(PartialMetric, RecoveryDiagnostics)> {
    if !(theta_min > 0.0 && theta_min <= theta_max && theta_max < 1.0) {
        return Err(Error::InvalidParameter(
            "need 0 < theta_min <= theta_max < 1".into(),
        ));
    }
    let n = ct.len();
    let ts = theta_star(theta_min, eta_min, ell);
    let eps = (1.0 - theta_max) / 4.0;
    let eps_prime = -theta_max.ln() / 4.0;
    let rel = ProximityRelations::build(ct, ts);
    let mut diag = RecoveryDiagnostics::default();

    // D* table
    let mut ds = vec![0.0f64; n * n];
    for u in 0..n {
        for v in 0..n {
            if u != v {
                ds[u * n + v] = dstar(ct.get(u, v));
            }
        }
    }
    let d = |u: usize, v: usize| ds[u * n + v];

    // capped R~ neighborhoods, sorted by decreasing correlation
    let mut nbrs: Vec<Vec<usize>> = Vec::with_capacity(n);
    for u in 0..n {
        let mut nb = rel.tilde_neighbors(u);
        if nb.len() > neighborhood_cap {
            nb.sort_by(|&a, &b| ct.get(u, b).partial_cmp(&ct.get(u, a)).unwrap());
            nb.truncate(neighborhood_cap);
            diag.capped_neighborhoods += 1;
        }
        nbrs.push(nb);
    }

    let mut pm = PartialMetric::new_far(ell, n);
    // ball[u*n+v] = true once d(u,v) assigned at some r' < current r
    let mut ball = vec![false; n * n];
    for u in 0..n {
        ball[u * n + u] = true;
    }
    for r in 1..=ell {
        let mut assign: Vec<(usize, usize)> = Vec::new();
        for u in 0..n {
            'pair: for &v in &nbrs[u] {
                if v <= u || ball[u * n + v] {
                    continue;
                }
                // witnesses: R~(u) minus both balls and the pair itself
                let witnesses: Vec<usize> = nbrs[u]
                    .iter()
                    .copied()
                    .filter(|&w| w != v && !ball[u * n + w] && !ball[v * n + w])
                    .collect();
                for (i, &w) in witnesses.iter().enumerate() {
                    for &w2 in &witnesses[i + 1..] {
                        let (mins, viol) = minimal_splits(&d, [u, v, w, w2], eps, eps_prime)?;
                        if viol {
                            diag.margin_violations += 1;
                        }
                        let target = Split::new(u, v, w, w2)?;
                        if !mins.contains(&target) {
                            continue 'pair;
                        }
                    }
                }
                assign.push((u, v));
            }
        }
        for (u, v) in assign {
            pm.set(u, v, 2 * r);
            ball[u * n + v] = true;
            ball[v * n + u] = true;
        }
    }
    Ok((pm, diag))
}
