//! The majority root estimator and its gain analysis: the coefficient
//! a(d), exact and Monte Carlo evaluation of the majority gain, the
//! covariance identity and the signed-sum lower bound, the explicit
//! far-boundary bound, level selection and the operational gain floor.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::tree::BalancedTree;

/// Sign of the sum of ±1 values; exact ties broken by a fair coin.
pub fn maj<R: Rng>(values: &[i8], tie_rng: &mut R) -> Result<i8> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("maj of empty sequence".into()));
    }
    let s: i64 = values.iter().map(|&v| v as i64).sum();
    Ok(match s.signum() {
        1 => 1,
        -1 => -1,
        _ => {
            if tie_rng.gen_bool(0.5) {
                1
            } else {
                -1
            }
        }
    })
}

fn binomial(n: u64, k: u64) -> BigInt {
    let mut r = BigInt::one();
    for i in 0..k.min(n - k) {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// a(d) = 2^{1-d} ceil(d/2) C(d, ceil(d/2)), exactly.
pub fn a_coeff(d: u64) -> Result<BigRational> {
    if d == 0 {
        return Err(Error::InvalidParameter("a(d) requires d >= 1".into()));
    }
    let c = d.div_ceil(2);
    let numer = BigInt::from(c) * binomial(d, c);
    let denom = BigInt::one() << (d - 1);
    Ok(BigRational::new(numer, denom))
}

/// a(d)/d, exactly.
pub fn a_over_d(d: u64) -> Result<BigRational> {
    Ok(a_coeff(d)? / BigRational::from(BigInt::from(d)))
}

/// a(d) as a float, stable for huge d via log-gamma.
pub fn a_coeff_f64(d: u64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidParameter("a(d) requires d >= 1".into()));
    }
    if d <= 512 {
        return Ok(a_coeff(d)?.to_f64().unwrap());
    }
    use statrs::function::gamma::ln_gamma;
    let df = d as f64;
    let c = d.div_ceil(2) as f64;
    let ln = (1.0 - df) * std::f64::consts::LN_2
        + c.ln()
        + ln_gamma(df + 1.0)
        - ln_gamma(c + 1.0)
        - ln_gamma(df - c + 1.0);
    Ok(ln.exp())
}

/// Distribution of the boundary sum of a subtree conditioned on the
/// subtree root being +1. `probs[i]` is P[sum = i - m] where m = leaf
/// count of the subtree (index m is sum 0).
fn boundary_sum_dist(
    tree: &BalancedTree,
    theta: &[f64],
    eta: &[f64],
    v: usize,
    count: &mut dyn FnMut(usize) -> usize,
) -> Vec<f64> {
    if tree.is_leaf(v) {
        // the node's own value, attenuated by eta: equals the node color
        // with probability (1 + eta)/2
        let e = eta[tree.leaf_label(v).unwrap()];
        return vec![(1.0 - e) / 2.0, 0.0, (1.0 + e) / 2.0];
    }
    let mut acc = vec![1.0f64]; // sum distribution over 0 leaves
    for &c in tree.children(v) {
        let child_plus = boundary_sum_dist(tree, theta, eta, c, count);
        let m = count(c);
        // child conditioned on v = +1: flip with probability (1-theta)/2
        let p_same = (1.0 + theta[c]) / 2.0;
        let mut child = vec![0.0f64; 2 * m + 1];
        for (i, &p) in child_plus.iter().enumerate() {
            // mirror index for the child conditioned on -1
            child[i] += p_same * p;
            child[2 * m - i] += (1.0 - p_same) * p;
        }
        let mut next = vec![0.0f64; acc.len() + 2 * m];
        for (i, &pa) in acc.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (j, &pc) in child.iter().enumerate() {
                next[i + j] += pa * pc;
            }
        }
        acc = next;
    }
    acc
}

/// Exact majority gain E[Maj(σ_∂T) | σ_ρ = +1] for per-edge fidelities
/// `theta` (indexed by child node) and per-leaf attenuations `eta`
/// (indexed by leaf label, values allowed in [-1, 1]). A tied boundary
/// sum contributes 0 (the fair tie-break). By the ± symmetry of the model
/// this equals the conditional expectation from either root color.
pub fn exact_maj_gain(tree: &BalancedTree, theta: &[f64], eta: &[f64]) -> Result<f64> {
    let n = tree.n_leaves();
    if n > 24 {
        return Err(Error::TooLarge {
            leaves: n,
            limit: 24,
        });
    }
    for v in 1..tree.node_count() {
        if !(0.0..=1.0).contains(&theta[v]) {
            return Err(Error::InvalidParameter(format!(
                "theta on edge to node {v} outside [0,1]"
            )));
        }
    }
    for (l, &e) in eta.iter().enumerate() {
        if !(-1.0..=1.0).contains(&e) {
            return Err(Error::InvalidParameter(format!(
                "eta on leaf {l} outside [-1,1]"
            )));
        }
    }
    // leaf counts per subtree, memoized bottom-up
    let mut leaf_count = vec![0usize; tree.node_count()];
    for v in tree.topo_order().into_iter().rev() {
        leaf_count[v] = if tree.is_leaf(v) {
            1
        } else {
            tree.children(v).iter().map(|&c| leaf_count[c]).sum()
        };
    }
    let mut count = |v: usize| leaf_count[v];
    let dist = boundary_sum_dist(tree, theta, eta, tree.root(), &mut count);
    let m = n as i64;
    let mut gain = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        gain += p * ((i as i64 - m).signum() as f64);
    }
    Ok(gain)
}

/// Exact gain with constant theta and constant eta on the gadget tree.
pub fn exact_maj_gain_const(tree: &BalancedTree, theta: f64, eta: f64) -> Result<f64> {
    exact_maj_gain(
        tree,
        &vec![theta; tree.node_count()],
        &vec![eta; tree.n_leaves()],
    )
}

/// Monte Carlo estimate of the majority gain, with binomial standard
/// error. Unbiased for any tree size.
pub fn monte_carlo_maj_gain(
    tree: &BalancedTree,
    theta: &[f64],
    eta: &[f64],
    k: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let mut rng = rng_for(seed, 0x6d616a67, 0);
    let order = tree.topo_order();
    let mut color = vec![0i8; tree.node_count()];
    let mut leaves = vec![0i8; tree.n_leaves()];
    let mut total = 0i64;
    for _ in 0..k {
        for &v in &order {
            color[v] = if v == tree.root() {
                1
            } else {
                let p_same = (1.0 + theta[v]) / 2.0;
                let pc = color[tree.parent(v)];
                if rng.gen_bool(p_same) {
                    pc
                } else {
                    -pc
                }
            };
        }
        for (l, &node) in tree.leaf_nodes().iter().enumerate() {
            let keep = (1.0 + eta[l]) / 2.0;
            leaves[l] = if rng.gen_bool(keep) {
                color[node]
            } else {
                -color[node]
            };
        }
        total += maj(&leaves, &mut rng)? as i64;
    }
    let est = total as f64 / k as f64;
    let se = ((1.0 - est * est).max(0.0) / k as f64).sqrt();
    Ok((est, se))
}

/// Closed-form derivative of the gain in eta(v) at eta = 0:
/// a(n)/n times the product of theta along the root-to-leaf path.
pub fn maj_gain_derivative_at_zero(
    tree: &BalancedTree,
    theta: &[f64],
    leaf_label: usize,
) -> Result<f64> {
    if leaf_label >= tree.n_leaves() {
        return Err(Error::InvalidParameter(format!(
            "no leaf labeled {leaf_label}"
        )));
    }
    let n = tree.n_leaves() as u64;
    let prod: f64 = tree
        .path_edges(tree.root(), tree.leaf_node(leaf_label))
        .iter()
        .map(|&e| theta[e])
        .product();
    Ok(a_over_d(n)?.to_f64().unwrap() * prod)
}

/// The exact covariance gain θ·a(d)/d when one of d voters has
/// correlation θ with the target and the other d−1 are fair coins.
pub fn maj_covariance_formula(theta: f64, d: u64) -> Result<f64> {
    Ok(theta * a_over_d(d)?.to_f64().unwrap())
}

/// Brute-force E[X · Maj(Y_1..Y_d)] with Y_1 = X w.p. (1+θ)/2 and the
/// rest fair, by exhaustive enumeration. Oracle for the formula above.
pub fn maj_covariance_enumerate(theta: f64, d: u64) -> Result<f64> {
    if d == 0 || d > 20 {
        return Err(Error::InvalidParameter("d must be in 1..=20".into()));
    }
    let d = d as usize;
    let mut e = 0.0;
    // condition on X = +1 by symmetry; Y_1 = +1 w.p. (1+theta)/2
    for pat in 0u32..1 << d {
        let mut p = 1.0;
        let mut sum = 0i64;
        for i in 0..d {
            let y = if pat >> i & 1 == 1 { 1i64 } else { -1 };
            p *= if i == 0 {
                if y == 1 {
                    (1.0 + theta) / 2.0
                } else {
                    (1.0 - theta) / 2.0
                }
            } else {
                0.5
            };
            sum += y;
        }
        e += p * sum.signum() as f64;
    }
    Ok(e)
}

/// Exact E[sign(x + Σ ±y_i)] over independent fair signs, ties → 0, and
/// the verdict against a(d)/d where d = y.len() + 1.
pub fn signed_sum_lower_bound_check(x: f64, y: &[f64]) -> Result<(f64, f64, bool)> {
    if x < 0.0 {
        return Err(Error::InvalidParameter("x must be non-negative".into()));
    }
    if y.iter().any(|&v| v.abs() > x) {
        return Err(Error::InvalidParameter("requires max |y_i| <= x".into()));
    }
    if y.len() > 24 {
        return Err(Error::TooLarge {
            leaves: y.len(),
            limit: 24,
        });
    }
    let mut e = 0.0;
    let half = 0.5f64.powi(y.len() as i32);
    for pat in 0u64..1 << y.len() {
        let mut s = x;
        for (i, &v) in y.iter().enumerate() {
            s += if pat >> i & 1 == 1 { v } else { -v };
        }
        e += half * if s > 0.0 {
            1.0
        } else if s < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    let bound = a_over_d((y.len() + 1) as u64)?.to_f64().unwrap();
    Ok((e, bound, e >= bound - 1e-12))
}

/// h(x) = min{1, x/(1-x)}; h(x) = 1 for x >= 1/2.
pub fn h_factor(x: f64) -> f64 {
    if x >= 0.5 {
        1.0
    } else {
        x / (1.0 - x)
    }
}

/// Explicit lower bound on the majority gain of the ℓ-level b-ary gadget:
/// a(b^ℓ) / (2^ℓ b^{2ℓ+1}) · h(θ_min)^{ℓ-1} · h(θ_min η_max).
pub fn maj_far_lower_bound(b: u64, ell: u32, theta_min: f64, eta_max: f64) -> Result<f64> {
    if ell == 0 {
        return Err(Error::InvalidParameter("ell must be >= 1".into()));
    }
    let d = b.pow(ell);
    let lead = a_coeff_f64(d)? / (2.0f64.powi(ell as i32) * (b as f64).powi(2 * ell as i32 + 1));
    Ok(lead * h_factor(theta_min).powi(ell as i32 - 1) * h_factor(theta_min * eta_max))
}

/// Smallest ℓ ≥ 1 with a(b^ℓ) θ_min^ℓ > g^ℓ, searched up to `cutoff`.
pub fn choose_level(b: u64, theta_min: f64, g: f64, cutoff: u32) -> Result<u32> {
    if b < 2 || !(theta_min > 0.0 && theta_min <= 1.0) || g < 0.0 {
        return Err(Error::InvalidParameter(
            "need b >= 2, theta_min in (0,1], g >= 0".into(),
        ));
    }
    for ell in 1..=cutoff {
        if g == 0.0 {
            return Ok(1);
        }
        // log-space to survive huge b^ell
        let d = (b as f64).powi(ell as i32);
        let ln_a = if d <= 1e6 {
            a_coeff_f64(b.pow(ell))?.ln()
        } else {
            // a(d) ~ sqrt(2 d / pi); relative error O(1/d), far below the
            // cancellation noise of ln-gamma differences at this scale
            0.5 * ((2.0 * d / std::f64::consts::PI).ln())
        };
        if ln_a + ell as f64 * theta_min.ln() > ell as f64 * g.ln() {
            return Ok(ell);
        }
    }
    Err(Error::LevelCutoff {
        cutoff: cutoff as usize,
    })
}

/// Operational gain floor β for the ℓ-level b-ary gadget at θ ≡ θ_min:
/// the largest fixed point of η ↦ exact_maj_gain(θ_min, η ≡ η), found by
/// iterating from η = 1, then discounted by the safety factor 0.9 so the
/// recursion has slack. Errors if the limit is not clearly positive.
pub fn estimate_beta(b: u64, ell: u32, theta_min: f64, precision: f64) -> Result<f64> {
    let tree = BalancedTree::bary(b as usize, ell as usize)?;
    let mut eta = 1.0f64;
    for _ in 0..200 {
        let next = exact_maj_gain_const(&tree, theta_min, eta)?;
        if (next - eta).abs() < precision {
            eta = next;
            break;
        }
        eta = next;
    }
    let beta = 0.9 * eta;
    if beta <= precision {
        return Err(Error::NonPositiveGain {
            value: beta,
            ell: ell as usize,
        });
    }
    Ok(beta)
}
