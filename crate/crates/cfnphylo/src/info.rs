//! Exact information-theoretic toolkit: entropy, mutual information, the
//! root-boundary MI decay bound, Fano's inequality, topology counting and
//! the assembled sample-size lower bound.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::error::{Error, Result};
use crate::tree::{BalancedTree, EdgeParams};

/// A finite joint distribution over up to three coordinates, stored as a
/// dense table. Coordinate sizes are explicit; probabilities sum to 1.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub sizes: Vec<usize>,
    pub pmf: Vec<f64>,
}

impl ExactDistribution {
    pub fn new(sizes: Vec<usize>, pmf: Vec<f64>) -> Result<ExactDistribution> {
        let total: usize = sizes.iter().product();
        if pmf.len() != total {
            return Err(Error::InvalidParameter(
                "pmf length does not match outcome space".into(),
            ));
        }
        let s: f64 = pmf.iter().sum();
        if (s - 1.0).abs() > 1e-9 || pmf.iter().any(|&p| p < -1e-15) {
            return Err(Error::InvalidParameter(format!(
                "pmf not normalized (sum = {s})"
            )));
        }
        let pmf = pmf.iter().map(|&p| p.max(0.0) / s).collect();
        Ok(ExactDistribution { sizes, pmf })
    }

    fn index(&self, idx: &[usize]) -> usize {
        let mut i = 0;
        for (d, &x) in idx.iter().enumerate() {
            i = i * self.sizes[d] + x;
        }
        i
    }

    pub fn prob(&self, idx: &[usize]) -> f64 {
        self.pmf[self.index(idx)]
    }

    /// Marginal onto a subset of coordinates (in the given order).
    pub fn marginal(&self, coords: &[usize]) -> ExactDistribution {
        let sizes: Vec<usize> = coords.iter().map(|&c| self.sizes[c]).collect();
        let total: usize = sizes.iter().product();
        let mut pmf = vec![0.0; total];
        let mut idx = vec![0usize; self.sizes.len()];
        for (flat, &p) in self.pmf.iter().enumerate() {
            // unflatten
            let mut rem = flat;
            for d in (0..self.sizes.len()).rev() {
                idx[d] = rem % self.sizes[d];
                rem /= self.sizes[d];
            }
            let mut j = 0;
            for (dd, &c) in coords.iter().enumerate() {
                j = j * sizes[dd] + idx[c];
            }
            pmf[j] += p;
        }
        ExactDistribution { sizes, pmf }
    }
}

/// Shannon entropy in bits; 0 log 0 = 0.
pub fn entropy(dist: &ExactDistribution) -> f64 {
    dist.pmf
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Binary entropy H2(p) in bits.
pub fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// I(X;Y) = H(X) + H(Y) − H(X,Y) for a two-coordinate joint.
pub fn mutual_information(joint: &ExactDistribution) -> Result<f64> {
    if joint.sizes.len() != 2 {
        return Err(Error::InvalidParameter(
            "mutual_information expects a two-coordinate joint".into(),
        ));
    }
    let hx = entropy(&joint.marginal(&[0]));
    let hy = entropy(&joint.marginal(&[1]));
    let hxy = entropy(joint);
    Ok((hx + hy - hxy).max(0.0))
}

/// Exact joint of (root color, boundary coloring): coordinate 0 is the
/// root (0 ↦ −1, 1 ↦ +1), coordinate 1 indexes leaf colorings with bit i
/// set meaning leaf label i is +1. Downward DP: per-subtree boundary
/// distributions conditioned on the subtree-root color, combined by
/// independence across children.
pub fn exact_boundary_joint(tree: &BalancedTree, params: &EdgeParams) -> Result<ExactDistribution> {
    params.check_domains(tree)?;
    let n = tree.n_leaves();
    if n > 16 {
        return Err(Error::TooLarge {
            leaves: n,
            limit: 16,
        });
    }
    // dist[v] = boundary-pattern distribution of v's subtree given v = +1,
    // indexed by bits over the subtree's leaf labels packed in label order
    fn subtree(
        tree: &BalancedTree,
        params: &EdgeParams,
        v: usize,
        leaves_of: &mut Vec<Vec<usize>>,
    ) -> Vec<f64> {
        if tree.is_leaf(v) {
            let label = tree.leaf_label(v).unwrap();
            leaves_of[v] = vec![label];
            let e = params.eta[label];
            // given node +1 the observed value is +1 w.p. (1+eta)/2
            return vec![(1.0 - e) / 2.0, (1.0 + e) / 2.0];
        }
        let mut acc = vec![1.0f64];
        let mut labels: Vec<usize> = Vec::new();
        for &c in tree.children(v) {
            let plus = subtree(tree, params, c, leaves_of);
            let m = leaves_of[c].len();
            let p_same = (1.0 + params.theta[c]) / 2.0;
            // child distribution given v = +1; minus-conditioned table is
            // the bitwise complement by the ± symmetry
            let full = 1usize << m;
            let mut child = vec![0.0f64; full];
            for (i, &p) in plus.iter().enumerate() {
                child[i] += p_same * p;
                child[full - 1 - i] += (1.0 - p_same) * p;
            }
            let mut next = vec![0.0f64; acc.len() * full];
            for (i, &pa) in acc.iter().enumerate() {
                for (j, &pc) in child.iter().enumerate() {
                    // earlier children occupy the high-order bit positions
                    next[i * full + j] += pa * pc;
                }
            }
            acc = next;
            labels.extend(&leaves_of[c]);
        }
        leaves_of[v] = labels;
        acc
    }
    let mut leaves_of = vec![Vec::new(); tree.node_count()];
    let plus = subtree(tree, params, tree.root(), &mut leaves_of);
    // remap from construction order to label order bits
    let order = &leaves_of[tree.root()];
    let remap = |i: usize| -> usize {
        let mut out = 0usize;
        for (pos, &label) in order.iter().enumerate() {
            // construction packs first child's labels in the HIGH part:
            // acc index = i * full + j means earlier children are the
            // high-order digits; bit for order[pos] is at n-1-pos
            if i >> (order.len() - 1 - pos) & 1 == 1 {
                out |= 1 << label;
            }
        }
        out
    };
    let full = 1usize << n;
    let mut pmf = vec![0.0f64; 2 * full];
    let r = params.root_dist;
    for (i, &p) in plus.iter().enumerate() {
        let j = remap(i);
        // root = +1 (coordinate value 1)
        pmf[full + j] += r * p;
        // root = −1: complement pattern by symmetry
        pmf[full - 1 - j] += (1.0 - r) * p;
    }
    ExactDistribution::new(vec![2, full], pmf)
}

/// Exact root–boundary MI on the q-level b-ary tree at constant θ, versus
/// the decay bound b^q θ^{2q}. Pass iff MI ≤ bound + 1e−12.
pub fn mi_root_boundary_check(b: usize, q: usize, theta: f64) -> Result<(f64, f64, bool)> {
    let tree = BalancedTree::bary(b, q)?;
    if tree.n_leaves() > 16 {
        return Err(Error::TooLarge {
            leaves: tree.n_leaves(),
            limit: 16,
        });
    }
    let mi = if theta == 0.0 {
        0.0
    } else {
        let params = EdgeParams::constant(&tree, theta);
        mutual_information(&exact_boundary_joint(&tree, &params)?)?
    };
    let bound = (b as f64).powi(q as i32) * theta.powi(2 * q as i32);
    Ok((mi, bound, mi <= bound + 1e-12))
}

/// Largest Δ in [1/m, 1] with H(Δ) + (1−Δ) log₂(m−1) ≥ h_cond, by
/// bisection (the left side is decreasing on that interval).
pub fn fano_max_success(h_cond: f64, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidParameter("alphabet size m must be >= 2".into()));
    }
    let logm = (m as f64).log2();
    if !((-1e-12..=logm + 1e-12).contains(&h_cond)) {
        return Err(Error::InvalidParameter(format!(
            "H(X|Y) = {h_cond} outside [0, log2 m]"
        )));
    }
    let lhs = |d: f64| h2(d) + (1.0 - d) * ((m - 1) as f64).log2();
    let (mut lo, mut hi) = (1.0 / m as f64, 1.0);
    if lhs(hi) >= h_cond {
        return Ok(1.0);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if lhs(mid) >= h_cond {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact count of ℓ-level b-ary topologies: b^ℓ! / b!^{Σ_{j<ℓ} b^j}.
pub fn n_topologies(b: u32, ell: u32) -> Result<BigUint> {
    if b < 2 || ell < 1 {
        return Err(Error::InvalidParameter("need b >= 2, ell >= 1".into()));
    }
    fn factorial(n: u64) -> BigUint {
        (1..=n).map(BigUint::from).product::<BigUint>().max(BigUint::one())
    }
    let numer = factorial((b as u64).pow(ell));
    let internal: u64 = (0..ell).map(|j| (b as u64).pow(j)).sum();
    let denom = factorial(b as u64).pow(internal.try_into().unwrap());
    Ok(numer / denom)
}

/// The explicit reconstruction-success upper bound at a given gadget
/// level: Δ ≤ max{ e/√m, 2k(b+1) b^q θ^{2(q−ℓ)} / log₂ m } with
/// m = n_topologies(b, ℓ). Evaluated at the caller's ℓ and at the
/// analysis choice ℓ₀ = ⌊log_b q + log_b(−log(bθ²))⌋ (clamped to ≥ 1);
/// returns the smaller of the two, since the bound holds for each.
pub fn lower_bound_delta(b: u32, theta: f64, q: u32, k: u64, ell: u32) -> Result<f64> {
    let bf = b as f64;
    if bf * theta * theta >= 1.0 {
        return Err(Error::InvalidParameter(
            "bound requires subcritical parameters (b theta^2 < 1)".into(),
        ));
    }
    if ell < 1 || ell >= q {
        return Err(Error::InvalidParameter("need 1 <= ell < q".into()));
    }
    let eval = |l: u32| -> Result<f64> {
        let m = n_topologies(b, l)?;
        let mf = m.to_f64().unwrap_or(f64::MAX);
        let log2m = if mf.is_finite() {
            mf.log2()
        } else {
            // headroom: approximate via bit length
            m.bits() as f64
        };
        let t1 = std::f64::consts::E / mf.sqrt();
        let t2 = if log2m > 0.0 {
            2.0 * k as f64 * (bf + 1.0) * bf.powi(q as i32) * theta.powi(2 * (q - l) as i32)
                / log2m
        } else {
            f64::INFINITY
        };
        Ok(t1.max(t2))
    };
    let mut best = eval(ell)?;
    // the analysis-level choice, clamped to the valid range
    let l0 = ((q as f64).log(bf) + (-(bf * theta * theta).ln()).log(bf)).floor();
    let l0 = if l0.is_finite() && l0 >= 1.0 {
        (l0 as u32).min(q - 1)
    } else {
        1
    };
    if l0 != ell {
        best = best.min(eval(l0)?);
    }
    Ok(best)
}

/// Checks the data-processing relations on a three-coordinate joint with
/// the Markov structure X → Y → Z: I(X;Z) ≤ I(X;Y), I(X;Z) ≤ I(Y;Z),
/// and I(X;Y) = I(X; (Y,Z)). Rejects joints that do not factorize.
pub fn data_processing_check(joint: &ExactDistribution) -> Result<bool> {
    if joint.sizes.len() != 3 {
        return Err(Error::InvalidParameter("expected a joint over X,Y,Z".into()));
    }
    // factorization check: P(x,y,z) P(y) = P(x,y) P(y,z)
    let pxy = joint.marginal(&[0, 1]);
    let pyz = joint.marginal(&[1, 2]);
    let py = joint.marginal(&[1]);
    for x in 0..joint.sizes[0] {
        for y in 0..joint.sizes[1] {
            for z in 0..joint.sizes[2] {
                let lhs = joint.prob(&[x, y, z]) * py.prob(&[y]);
                let rhs = pxy.prob(&[x, y]) * pyz.prob(&[y, z]);
                if (lhs - rhs).abs() > 1e-10 {
                    return Err(Error::InvalidParameter(
                        "joint does not satisfy X -> Y -> Z".into(),
                    ));
                }
            }
        }
    }
    let ixy = mutual_information(&pxy)?;
    let iyz = mutual_information(&pyz)?;
    let ixz = mutual_information(&joint.marginal(&[0, 2]))?;
    // I(X;(Y,Z)) via a flattened pair coordinate
    let pair = ExactDistribution {
        sizes: vec![joint.sizes[0], joint.sizes[1] * joint.sizes[2]],
        pmf: joint.pmf.clone(),
    };
    let ix_yz = mutual_information(&pair)?;
    Ok(ixz <= ixy + 1e-10 && ixz <= iyz + 1e-10 && (ix_yz - ixy).abs() <= 1e-10)
}
