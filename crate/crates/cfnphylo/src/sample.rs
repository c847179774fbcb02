//! Sample matrices of ±1 colorings, CFN sampling (direct and via the
//! random-cluster representation), and small exact enumeration oracles.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::tree::{BalancedTree, EdgeParams};

const MAGIC: &[u8; 4] = b"CFNM";
const BIN_VERSION: u8 = 1;

/// `k` independent ±1 colorings of an ordered vertex set.
///
/// Stored column-major and bit-packed: one bit vector of length `k` per
/// vertex, bit set meaning +1. The logical contract is entries in {−1,+1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleMatrix {
    k: usize,
    n: usize,
    words_per_col: usize,
    /// n columns, each `words_per_col` u64 words; unused high bits are 0.
    bits: Vec<u64>,
}

impl SampleMatrix {
    pub fn zeros_minus(k: usize, n: usize) -> SampleMatrix {
        let wpc = k.div_ceil(64);
        SampleMatrix {
            k,
            n,
            words_per_col: wpc,
            bits: vec![0; wpc * n],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn n_vertices(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, sample: usize, vertex: usize) -> i8 {
        let w = self.bits[vertex * self.words_per_col + sample / 64];
        if (w >> (sample % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn set(&mut self, sample: usize, vertex: usize, value: i8) {
        debug_assert!(value == 1 || value == -1);
        let w = &mut self.bits[vertex * self.words_per_col + sample / 64];
        let mask = 1u64 << (sample % 64);
        if value == 1 {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    fn column(&self, vertex: usize) -> &[u64] {
        &self.bits[vertex * self.words_per_col..(vertex + 1) * self.words_per_col]
    }

    /// Empirical correlation (1/k) Σ_t σ^t_u σ^t_v via XOR + popcount.
    pub fn correlation(&self, u: usize, v: usize) -> f64 {
        let disagree: u32 = self
            .column(u)
            .iter()
            .zip(self.column(v))
            .map(|(a, b)| (a ^ b).count_ones())
            .sum();
        (self.k as f64 - 2.0 * disagree as f64) / self.k as f64
    }

    /// Number of +1 entries in a vertex's column.
    pub fn count_plus(&self, vertex: usize) -> usize {
        self.column(vertex)
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    /// Keep only the given vertices, in the given order.
    pub fn restrict(&self, vertices: &[usize]) -> SampleMatrix {
        let mut out = SampleMatrix::zeros_minus(self.k, vertices.len());
        for (j, &v) in vertices.iter().enumerate() {
            out.bits[j * out.words_per_col..(j + 1) * out.words_per_col]
                .copy_from_slice(self.column(v));
        }
        out
    }

    /// One sample as a ±1 row.
    pub fn row(&self, sample: usize) -> Vec<i8> {
        (0..self.n).map(|v| self.get(sample, v)).collect()
    }

    /// Text format: header line `k n`, then k lines of n entries in
    /// {−1, 1}, space separated.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.k, self.n)?;
        for t in 0..self.k {
            let line: Vec<String> = (0..self.n).map(|v| self.get(t, v).to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<SampleMatrix> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            col: 1,
            msg: "empty sample file".into(),
        })?;
        let header = header?;
        let mut it = header.split_whitespace();
        let parse_dim = |tok: Option<&str>, col: usize| -> Result<usize> {
            tok.ok_or(Error::Parse {
                line: 1,
                col,
                msg: "expected `k n` header".into(),
            })?
            .parse()
            .map_err(|_| Error::Parse {
                line: 1,
                col,
                msg: "header fields must be non-negative integers".into(),
            })
        };
        let k = parse_dim(it.next(), 1)?;
        let n = parse_dim(it.next(), 2)?;
        if it.next().is_some() {
            return Err(Error::Parse {
                line: 1,
                col: 3,
                msg: "trailing tokens after `k n` header".into(),
            });
        }
        let mut m = SampleMatrix::zeros_minus(k, n);
        for t in 0..k {
            let (idx, line) = lines.next().ok_or(Error::Parse {
                line: t + 2,
                col: 1,
                msg: format!("expected {k} sample rows, found {t}"),
            })?;
            let line = line?;
            let mut count = 0;
            for (col, tok) in line.split_whitespace().enumerate() {
                if col >= n {
                    return Err(Error::Parse {
                        line: idx + 1,
                        col: col + 1,
                        msg: format!("row has more than {n} entries"),
                    });
                }
                let v = match tok {
                    "1" | "+1" => 1,
                    "-1" => -1,
                    _ => {
                        return Err(Error::Parse {
                            line: idx + 1,
                            col: col + 1,
                            msg: format!("entry `{tok}` is not ±1"),
                        })
                    }
                };
                m.set(t, col, v);
                count += 1;
            }
            if count != n {
                return Err(Error::Parse {
                    line: idx + 1,
                    col: count + 1,
                    msg: format!("row has {count} entries, expected {n}"),
                });
            }
        }
        Ok(m)
    }

    /// Binary format: magic `CFNM`, version byte 1, k and n as u64 LE,
    /// then n columns of ceil(k/8) bytes each, LSB-first within a byte,
    /// bit set meaning +1; padding bits are zero.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[BIN_VERSION])?;
        w.write_all(&(self.k as u64).to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        let bytes_per_col = self.k.div_ceil(8);
        for v in 0..self.n {
            let col = self.column(v);
            let mut buf = vec![0u8; bytes_per_col];
            for (i, b) in buf.iter_mut().enumerate() {
                *b = (col[i / 8] >> (8 * (i % 8))) as u8;
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_binary<R: std::io::Read>(mut r: R) -> Result<SampleMatrix> {
        let bad = |col: usize, msg: &str| Error::Parse {
            line: 1,
            col,
            msg: msg.into(),
        };
        let mut head = [0u8; 21];
        r.read_exact(&mut head)
            .map_err(|_| bad(1, "truncated binary header"))?;
        if &head[0..4] != MAGIC {
            return Err(bad(1, "bad magic bytes (expected CFNM)"));
        }
        if head[4] != BIN_VERSION {
            return Err(bad(5, "unsupported binary version"));
        }
        let k = u64::from_le_bytes(head[5..13].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(head[13..21].try_into().unwrap()) as usize;
        let mut m = SampleMatrix::zeros_minus(k, n);
        let bytes_per_col = k.div_ceil(8);
        let mut buf = vec![0u8; bytes_per_col];
        for v in 0..n {
            r.read_exact(&mut buf)
                .map_err(|_| bad(22 + v * bytes_per_col, "truncated column data"))?;
            for (i, &b) in buf.iter().enumerate() {
                m.bits[v * m.words_per_col + i / 8] |= (b as u64) << (8 * (i % 8));
            }
        }
        // padding bits must be zero so equality is structural
        if k % 64 != 0 {
            let mask = !0u64 << (k % 64);
            for v in 0..n {
                if m.bits[(v + 1) * m.words_per_col - 1] & mask != 0 {
                    return Err(bad(22, "nonzero padding bits in column data"));
                }
            }
        }
        Ok(m)
    }
}

/// Draw `k` i.i.d. CFN colorings of every vertex of the tree. The root is
/// +1 with probability `root_dist`; each child copies its parent with
/// probability (1 + θ_eff)/2 where θ_eff includes the leaf η factor.
pub fn sample_cfn(
    tree: &BalancedTree,
    params: &EdgeParams,
    k: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    params.check_domains(tree)?;
    let mut rng = rng_for(seed, 0x63666e73, 0);
    let order = tree.topo_order();
    let mut m = SampleMatrix::zeros_minus(k, tree.node_count());
    for t in 0..k {
        for &v in &order {
            let c = if v == tree.root() {
                if rng.gen_bool(params.root_dist) {
                    1
                } else {
                    -1
                }
            } else {
                let p = tree.parent(v);
                let agree = (1.0 + params.effective_theta(tree, v)) / 2.0;
                let pc = m.get(t, p);
                if rng.gen_bool(agree) {
                    pc
                } else {
                    -pc
                }
            };
            if c == 1 {
                m.set(t, v, 1);
            }
        }
    }
    Ok(m)
}

/// Leaf restriction of [`sample_cfn`], columns in leaf-label order.
pub fn sample_cfn_leaves(
    tree: &BalancedTree,
    params: &EdgeParams,
    k: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    Ok(sample_cfn(tree, params, k, seed)?.restrict(tree.leaf_nodes()))
}

/// Random-cluster sampler: open each edge independently with probability
/// θ_eff, color the root's cluster with the root color and every other
/// cluster with an independent fair coin; return leaf colors. Same leaf
/// distribution as the CFN process.
pub fn sample_random_cluster(
    tree: &BalancedTree,
    params: &EdgeParams,
    k: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    params.check_domains(tree)?;
    let mut rng = rng_for(seed, 0x636c7573, 0);
    let order = tree.topo_order();
    let nn = tree.node_count();
    let mut m = SampleMatrix::zeros_minus(k, tree.n_leaves());
    let mut color = vec![0i8; nn];
    for t in 0..k {
        for &v in &order {
            let c = if v == tree.root() {
                if rng.gen_bool(params.root_dist) {
                    1
                } else {
                    -1
                }
            } else if rng.gen_bool(params.effective_theta(tree, v)) {
                // open edge: same cluster as the parent
                color[tree.parent(v)]
            } else if rng.gen_bool(0.5) {
                1
            } else {
                -1
            };
            color[v] = c;
        }
        for (label, &leaf) in tree.leaf_nodes().iter().enumerate() {
            if color[leaf] == 1 {
                m.set(t, label, 1);
            }
        }
    }
    Ok(m)
}

/// Exact leaf-coloring distribution of the random-cluster construction,
/// by enumerating all 2^|E| open/closed edge patterns. Index bit `i` set
/// means leaf label `i` colored +1. Leaf count ≤ 16, edge count ≤ 20.
pub fn exact_cluster_leaf_distribution(
    tree: &BalancedTree,
    params: &EdgeParams,
) -> Result<Vec<f64>> {
    params.check_domains(tree)?;
    let n = tree.n_leaves();
    let edges: Vec<usize> = (0..tree.node_count()).filter(|&v| v != tree.root()).collect();
    if n > 16 || edges.len() > 20 {
        return Err(Error::TooLarge {
            leaves: n.max(edges.len()),
            limit: 16,
        });
    }
    let mut dist = vec![0.0f64; 1 << n];
    let nn = tree.node_count();
    for pattern in 0u32..1 << edges.len() {
        let mut p_pattern = 1.0;
        // cluster id per node: root of its cluster in tree order
        let mut cluster = vec![0usize; nn];
        for v in tree.topo_order() {
            cluster[v] = v;
        }
        for (bit, &v) in edges.iter().enumerate() {
            let th = params.effective_theta(tree, v);
            if pattern >> bit & 1 == 1 {
                p_pattern *= th;
                cluster[v] = cluster[tree.parent(v)];
            } else {
                p_pattern *= 1.0 - th;
            }
        }
        if p_pattern == 0.0 {
            continue;
        }
        // distinct clusters containing leaves, root cluster first if present
        let mut leaf_clusters: Vec<usize> = tree.leaf_nodes().iter().map(|&l| cluster[l]).collect();
        let mut uniq = leaf_clusters.clone();
        uniq.sort_unstable();
        uniq.dedup();
        for (label, lc) in leaf_clusters.iter_mut().enumerate() {
            *lc = uniq.binary_search(lc).unwrap();
            debug_assert!(label < n);
        }
        let root_idx = uniq.binary_search(&cluster[tree.root()]).ok();
        for colors in 0u32..1 << uniq.len() {
            let mut p = p_pattern;
            for (ci, _) in uniq.iter().enumerate() {
                let plus = colors >> ci & 1 == 1;
                p *= if Some(ci) == root_idx {
                    if plus {
                        params.root_dist
                    } else {
                        1.0 - params.root_dist
                    }
                } else {
                    0.5
                };
            }
            let mut idx = 0usize;
            for (label, &ci) in leaf_clusters.iter().enumerate() {
                if colors >> ci & 1 == 1 {
                    idx |= 1 << label;
                }
            }
            dist[idx] += p;
        }
    }
    Ok(dist)
}

/// Exact CFN leaf-coloring distribution by brute force over all vertex
/// colorings. Same indexing as [`exact_cluster_leaf_distribution`].
pub fn exact_cfn_leaf_distribution(tree: &BalancedTree, params: &EdgeParams) -> Result<Vec<f64>> {
    params.check_domains(tree)?;
    let nn = tree.node_count();
    let n = tree.n_leaves();
    if nn > 20 {
        return Err(Error::TooLarge {
            leaves: nn,
            limit: 20,
        });
    }
    let mut dist = vec![0.0f64; 1 << n];
    for colors in 0u32..1 << nn {
        let sign = |v: usize| if colors >> v & 1 == 1 { 1.0 } else { -1.0 };
        let mut p = if colors & 1 == 1 {
            params.root_dist
        } else {
            1.0 - params.root_dist
        };
        for v in 1..nn {
            let th = params.effective_theta(tree, v);
            p *= if sign(v) == sign(tree.parent(v)) {
                (1.0 + th) / 2.0
            } else {
                (1.0 - th) / 2.0
            };
        }
        let mut idx = 0usize;
        for (label, &leaf) in tree.leaf_nodes().iter().enumerate() {
            if colors >> leaf & 1 == 1 {
                idx |= 1 << label;
            }
        }
        dist[idx] += p;
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::BalancedTree;

    #[test]
    fn perfect_channels_are_constant() {
        let t = BalancedTree::bary(2, 2).unwrap();
        let p = EdgeParams::constant(&t, 1.0);
        let m = sample_cfn(&t, &p, 50, 3).unwrap();
        for tr in 0..50 {
            let r = m.row(tr);
            assert!(r.iter().all(|&x| x == r[0]));
        }
    }

    #[test]
    fn single_edge_agreement_rate() {
        // root with two leaf children so the root has degree 2 children;
        // check the edge to leaf 0 with theta_eff = 0.8
        let t = BalancedTree::bary(2, 1).unwrap();
        let mut p = EdgeParams::constant(&t, 1.0);
        p.theta[t.leaf_node(0)] = 0.8;
        let k = 100_000;
        let m = sample_cfn(&t, &p, k, 11).unwrap();
        let mut agree = 0usize;
        for tr in 0..k {
            if m.get(tr, t.root()) == m.get(tr, t.leaf_node(0)) {
                agree += 1;
            }
        }
        let rate = agree as f64 / k as f64;
        // 3 sigma of a Bernoulli(0.9) at k=1e5
        assert!((rate - 0.9).abs() < 3.0 * (0.9f64 * 0.1 / k as f64).sqrt());
    }

    #[test]
    fn path_product_correlation() {
        let t = BalancedTree::bary(2, 1).unwrap();
        let p = EdgeParams::constant(&t, 0.9);
        let k = 100_000;
        let m = sample_cfn_leaves(&t, &p, k, 5).unwrap();
        let c = m.correlation(0, 1);
        let sd = ((1.0 - 0.81f64 * 0.81) / k as f64).sqrt();
        assert!((c - 0.81).abs() < 4.0 * sd, "c = {c}");
    }

    #[test]
    fn cluster_extremes() {
        let t = BalancedTree::bary(2, 2).unwrap();
        let p = EdgeParams::constant(&t, 1.0);
        let m = sample_random_cluster(&t, &p, 30, 9).unwrap();
        for tr in 0..30 {
            let r = m.row(tr);
            assert!(r.iter().all(|&x| x == r[0]));
        }
        // theta -> 0 not representable (theta > 0); use tiny theta and
        // check columns are near-fair instead
        let p = EdgeParams::constant(&t, 1e-12);
        let m = sample_random_cluster(&t, &p, 20_000, 9).unwrap();
        for v in 0..4 {
            let plus = m.count_plus(v) as f64 / 20_000.0;
            assert!((plus - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn cluster_matches_cfn_exactly() {
        let t = BalancedTree::bary(2, 2).unwrap();
        let mut p = EdgeParams::constant(&t, 0.7);
        // mixed thetas and a leaf eta
        for (i, v) in (1..t.node_count()).enumerate() {
            p.theta[v] = 0.35 + 0.1 * i as f64;
        }
        p.eta[2] = 0.6;
        let a = exact_cluster_leaf_distribution(&t, &p).unwrap();
        let b = exact_cfn_leaf_distribution(&t, &p).unwrap();
        let tv: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
        assert!(tv < 1e-12, "tv = {tv}");
    }

    #[test]
    fn determinism_and_text_roundtrip() {
        let t = BalancedTree::regular_star(2, 1).unwrap();
        let p = EdgeParams::constant(&t, 0.8);
        let a = sample_cfn_leaves(&t, &p, 123, 42).unwrap();
        let b = sample_cfn_leaves(&t, &p, 123, 42).unwrap();
        assert_eq!(a, b);

        let mut buf = Vec::new();
        a.write_text(&mut buf).unwrap();
        let back = SampleMatrix::read_text(&buf[..]).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn binary_roundtrip_and_errors() {
        let t = BalancedTree::bary(2, 2).unwrap();
        let p = EdgeParams::constant(&t, 0.75);
        let a = sample_cfn_leaves(&t, &p, 77, 8).unwrap();
        let mut buf = Vec::new();
        a.write_binary(&mut buf).unwrap();
        let back = SampleMatrix::read_binary(&buf[..]).unwrap();
        assert_eq!(a, back);

        buf[0] = b'X';
        assert!(matches!(
            SampleMatrix::read_binary(&buf[..]),
            Err(Error::Parse { line: 1, col: 1, .. })
        ));
    }

    #[test]
    fn text_parse_errors_carry_position() {
        let bad = "2 3\n1 -1 1\n1 2 -1\n";
        match SampleMatrix::read_text(bad.as_bytes()) {
            Err(Error::Parse { line, col, .. }) => {
                assert_eq!((line, col), (3, 2));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
