//! Balanced rooted trees, the CFN edge parameters, leaf metrics and the
//! capped "local topology" with its leaf-set labeling.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Recursive description of a rooted tree shape. All leaves must end up at
/// the same depth for [`BalancedTree::from_shape`] to accept it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shape {
    Leaf,
    Node(Vec<Shape>),
}

impl Shape {
    /// Shape of the `ell`-level `b`-ary tree.
    pub fn bary(b: usize, ell: usize) -> Shape {
        if ell == 0 {
            Shape::Leaf
        } else {
            Shape::Node(vec![Shape::bary(b, ell - 1); b])
        }
    }

    fn leaf_count(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Node(cs) => cs.iter().map(Shape::leaf_count).sum(),
        }
    }
}

/// A rooted tree in which every leaf sits at the same depth `q`.
///
/// Node 0 is the root; `parent[root] == root`. Leaves carry labels
/// `0..n-1` through `leaves` (label -> node id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedTree {
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    q: usize,
    leaves: Vec<usize>,
    leaf_label: Vec<Option<usize>>,
}

impl BalancedTree {
    /// Build a tree from a shape, labeling leaves `0..n-1` left to right.
    pub fn from_shape(shape: &Shape) -> Result<BalancedTree> {
        Self::from_shape_with_labels(shape, None)
    }

    /// Build from a shape with an explicit permutation assigning labels to
    /// the leaves in left-to-right order.
    pub fn from_shape_with_labels(
        shape: &Shape,
        labels: Option<&[usize]>,
    ) -> Result<BalancedTree> {
        let n = shape.leaf_count();
        if let Some(ls) = labels {
            let mut seen = vec![false; n];
            if ls.len() != n || ls.iter().any(|&l| l >= n || std::mem::replace(&mut seen[l], true))
            {
                return Err(Error::InvalidParameter(
                    "labels must be a permutation of 0..n-1".into(),
                ));
            }
        }
        let mut parent = Vec::new();
        let mut children: Vec<Vec<usize>> = Vec::new();
        let mut depth = Vec::new();
        let mut leaf_nodes = Vec::new();

        fn grow(
            shape: &Shape,
            par: usize,
            d: usize,
            parent: &mut Vec<usize>,
            children: &mut Vec<Vec<usize>>,
            depth: &mut Vec<usize>,
            leaf_nodes: &mut Vec<usize>,
        ) -> usize {
            let id = parent.len();
            parent.push(par);
            children.push(Vec::new());
            depth.push(d);
            match shape {
                Shape::Leaf => leaf_nodes.push(id),
                Shape::Node(cs) => {
                    for c in cs {
                        let cid = grow(c, id, d + 1, parent, children, depth, leaf_nodes);
                        children[id].push(cid);
                    }
                }
            }
            id
        }
        grow(
            shape,
            0,
            0,
            &mut parent,
            &mut children,
            &mut depth,
            &mut leaf_nodes,
        );

        let q = depth[leaf_nodes[0]];
        if leaf_nodes.iter().any(|&v| depth[v] != q) {
            return Err(Error::InvalidParameter(
                "shape is not balanced: leaves at differing depths".into(),
            ));
        }
        if children
            .iter()
            .any(|cs| cs.len() == 1)
        {
            return Err(Error::InvalidParameter(
                "internal nodes must have at least 2 children".into(),
            ));
        }

        let mut leaves = vec![0usize; n];
        let mut leaf_label = vec![None; parent.len()];
        for (pos, &node) in leaf_nodes.iter().enumerate() {
            let label = labels.map_or(pos, |ls| ls[pos]);
            leaves[label] = node;
            leaf_label[node] = Some(label);
        }
        Ok(BalancedTree {
            parent,
            children,
            depth,
            q,
            leaves,
            leaf_label,
        })
    }

    /// The `ell`-level `b`-ary tree: every internal node has exactly `b`
    /// children, `b^ell` leaves. This is the analysis gadget; its root has
    /// degree `b`, exempt from the root-degree >= 3 rule of the sampled
    /// tree families.
    pub fn bary(b: usize, ell: usize) -> Result<BalancedTree> {
        if b < 2 {
            return Err(Error::InvalidParameter(format!("branching b={b} < 2")));
        }
        Self::from_shape(&Shape::bary(b, ell))
    }

    /// The `(q+1)`-level `(b+1)`-regular tree: a root with `b+1` children,
    /// each the root of a `q`-level `b`-ary subtree; `(b+1) * b^q` leaves.
    pub fn regular_star(b: usize, q: usize) -> Result<BalancedTree> {
        if b < 2 {
            return Err(Error::InvalidParameter(format!("branching b={b} < 2")));
        }
        Self::from_shape(&Shape::Node(vec![Shape::bary(b, q); b + 1]))
    }

    /// The regular-star shape with leaf labels assigned by a uniformly
    /// random permutation. Every topology class corresponds to the same
    /// number of labelings (the automorphism count of the fixed shape), so
    /// this induces the uniform distribution on topologies.
    pub fn random_uniform_topology(b: usize, q: usize, seed: u64) -> Result<BalancedTree> {
        if b < 2 {
            return Err(Error::InvalidParameter(format!("branching b={b} < 2")));
        }
        let shape = Shape::Node(vec![Shape::bary(b, q); b + 1]);
        let n = shape.leaf_count();
        let mut labels: Vec<usize> = (0..n).collect();
        labels.shuffle(&mut rng_for(seed, 0x746f706f, 0));
        Self::from_shape_with_labels(&shape, Some(&labels))
    }

    pub fn root(&self) -> usize {
        0
    }
    pub fn node_count(&self) -> usize {
        self.parent.len()
    }
    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }
    /// Common depth of all leaves.
    pub fn levels(&self) -> usize {
        self.q
    }
    pub fn parent(&self, v: usize) -> usize {
        self.parent[v]
    }
    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }
    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }
    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }
    /// Node id of the leaf carrying `label`.
    pub fn leaf_node(&self, label: usize) -> usize {
        self.leaves[label]
    }
    /// Label of a leaf node, if `v` is a leaf.
    pub fn leaf_label(&self, v: usize) -> Option<usize> {
        self.leaf_label[v]
    }
    /// Node ids in leaf-label order.
    pub fn leaf_nodes(&self) -> &[usize] {
        &self.leaves
    }

    /// Nodes in a fixed top-down order (parents before children).
    pub fn topo_order(&self) -> Vec<usize> {
        // construction order is already top-down
        (0..self.node_count()).collect()
    }

    /// Edges on the path between two nodes, as child-node ids.
    pub fn path_edges(&self, u: usize, v: usize) -> Vec<usize> {
        let (mut a, mut b) = (u, v);
        let mut ea = Vec::new();
        let mut eb = Vec::new();
        while self.depth[a] > self.depth[b] {
            ea.push(a);
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            eb.push(b);
            b = self.parent[b];
        }
        while a != b {
            ea.push(a);
            eb.push(b);
            a = self.parent[a];
            b = self.parent[b];
        }
        ea.extend(eb.into_iter().rev());
        ea
    }

    /// Graph distance (edge count) between two nodes.
    pub fn node_distance(&self, u: usize, v: usize) -> usize {
        self.path_edges(u, v).len()
    }

    /// Full matrix of leaf-to-leaf path lengths, indexed by label.
    pub fn pairwise_leaf_distances(&self) -> Vec<Vec<usize>> {
        let n = self.n_leaves();
        let mut d = vec![vec![0usize; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let dist = self.node_distance(self.leaves[i], self.leaves[j]);
                d[i][j] = dist;
                d[j][i] = dist;
            }
        }
        d
    }

    /// The `ell`-topology: pairwise leaf distances capped at `2*ell + 2`.
    pub fn l_topology(&self, ell: usize) -> PartialMetric {
        let n = self.n_leaves();
        let cap = 2 * ell + 2;
        let mut pm = PartialMetric::new_far(ell, n);
        for i in 0..n {
            pm.set(i, i, 0);
            for j in (i + 1)..n {
                let d = self.node_distance(self.leaves[i], self.leaves[j]);
                pm.set(i, j, d.min(cap));
            }
        }
        pm
    }
}

/// Per-edge fidelities theta(e) in (0,1] and per-leaf attenuations eta(v).
///
/// theta is indexed by the child endpoint of each edge (the root entry is
/// unused); eta is indexed by leaf label. The effective fidelity of a leaf
/// edge (u,v) is `theta(e) * eta(v)`; theta(e) = 1 - 2*eps(e) in terms of
/// the flip probability.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeParams {
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
    pub root_dist: f64,
}

impl EdgeParams {
    /// Constant theta on every edge, eta = 1 on every leaf, fair root.
    pub fn constant(tree: &BalancedTree, theta: f64) -> EdgeParams {
        EdgeParams {
            theta: vec![theta; tree.node_count()],
            eta: vec![1.0; tree.n_leaves()],
            root_dist: 0.5,
        }
    }

    /// Constant theta with a constant leaf attenuation.
    pub fn with_eta(tree: &BalancedTree, theta: f64, eta: f64) -> EdgeParams {
        EdgeParams {
            theta: vec![theta; tree.node_count()],
            eta: vec![eta; tree.n_leaves()],
            root_dist: 0.5,
        }
    }

    /// Independent uniform theta(e) in [lo, hi] per edge, eta = 1.
    pub fn uniform_theta(tree: &BalancedTree, lo: f64, hi: f64, seed: u64) -> EdgeParams {
        use rand::Rng;
        let mut rng = rng_for(seed, 0x74686574, 1);
        let theta = (0..tree.node_count())
            .map(|_| rng.gen_range(lo..=hi))
            .collect();
        EdgeParams {
            theta,
            eta: vec![1.0; tree.n_leaves()],
            root_dist: 0.5,
        }
    }

    pub fn check_domains(&self, tree: &BalancedTree) -> Result<()> {
        if self.theta.len() != tree.node_count() || self.eta.len() != tree.n_leaves() {
            return Err(Error::InvalidParameter(
                "params do not cover the tree's edges and leaves".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.root_dist) {
            return Err(Error::InvalidParameter("root_dist outside [0,1]".into()));
        }
        for v in 0..tree.node_count() {
            if v != tree.root() && !(self.theta[v] > 0.0 && self.theta[v] <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "theta on edge to node {v} outside (0,1]"
                )));
            }
        }
        for (label, &e) in self.eta.iter().enumerate() {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "eta on leaf {label} outside (0,1]"
                )));
            }
        }
        Ok(())
    }

    /// Effective fidelity of the edge above `v`, including the leaf eta.
    pub fn effective_theta(&self, tree: &BalancedTree, v: usize) -> f64 {
        let t = self.theta[v];
        match tree.leaf_label(v) {
            Some(label) => t * self.eta[label],
            None => t,
        }
    }

    /// Exact model correlation between two leaves:
    /// eta(u) * eta(v) * product of theta over the path.
    pub fn leaf_correlation(&self, tree: &BalancedTree, u_label: usize, v_label: usize) -> f64 {
        if u_label == v_label {
            return 1.0;
        }
        tree.path_edges(tree.leaf_node(u_label), tree.leaf_node(v_label))
            .iter()
            .map(|&e| self.effective_theta(tree, e))
            .product()
    }
}

/// Pairwise leaf distances capped at `2*ell + 2` (the `ell`-topology).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialMetric {
    ell: usize,
    n: usize,
    d: Vec<u32>,
}

impl PartialMetric {
    /// All off-diagonal entries initialized to the cap.
    pub fn new_far(ell: usize, n: usize) -> PartialMetric {
        let cap = (2 * ell + 2) as u32;
        let mut d = vec![cap; n * n];
        for i in 0..n {
            d[i * n + i] = 0;
        }
        PartialMetric { ell, n, d }
    }

    pub fn ell(&self) -> usize {
        self.ell
    }
    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn cap(&self) -> usize {
        2 * self.ell + 2
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.d[i * self.n + j] as usize
    }

    pub fn set(&mut self, i: usize, j: usize, v: usize) {
        debug_assert!(v % 2 == 0 && v <= self.cap());
        self.d[i * self.n + j] = v as u32;
        self.d[j * self.n + i] = v as u32;
    }

    /// True if some off-diagonal entry still sits at the cap.
    pub fn has_far_entries(&self) -> bool {
        let cap = self.cap() as u32;
        (0..self.n).any(|i| (0..self.n).any(|j| i != j && self.d[i * self.n + j] == cap))
    }

    /// Reinterpret the same entries under a larger cap level. Only valid
    /// when no entry currently equals the old cap.
    pub fn with_ell(&self, ell: usize) -> PartialMetric {
        PartialMetric {
            ell,
            n: self.n,
            d: self.d.clone(),
        }
    }

    /// The distance matrix as plain integers.
    pub fn to_matrix(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// CSV of capped pairwise distances (full square, header row of labels).
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("leaf");
        for j in 0..self.n {
            s.push_str(&format!(",{j}"));
        }
        s.push('\n');
        for i in 0..self.n {
            s.push_str(&format!("{i}"));
            for j in 0..self.n {
                s.push_str(&format!(",{}", self.get(i, j)));
            }
            s.push('\n');
        }
        s
    }
}

/// The `ell`-labeling derived from a partial metric: for each height
/// `i <= ell`, the distinct leaf sets `{w' : d*(w,w') <= 2i}`, each the
/// boundary set of one pseudo-vertex at distance `i` from the leaves.
#[derive(Debug, Clone)]
pub struct LLabeling {
    /// `levels[i]` is sorted by smallest contained leaf label.
    pub levels: Vec<Vec<BTreeSet<usize>>>,
}

/// Extract the labeling from a partial metric, checking consistency: at
/// each level the candidate sets must be identical or disjoint, and each
/// leaf must land in exactly one set.
pub fn l_labeling(pm: &PartialMetric) -> Result<LLabeling> {
    l_labeling_up_to(pm, pm.ell())
}

/// Same as [`l_labeling`] but only up to height `max_i`.
pub fn l_labeling_up_to(pm: &PartialMetric, max_i: usize) -> Result<LLabeling> {
    let n = pm.len();
    let mut levels = Vec::with_capacity(max_i + 1);
    for i in 0..=max_i {
        let radius = 2 * i;
        let mut sets: Vec<BTreeSet<usize>> = Vec::new();
        let mut owner: Vec<Option<usize>> = vec![None; n];
        for w in 0..n {
            let ball: BTreeSet<usize> = (0..n).filter(|&x| pm.get(w, x) <= radius).collect();
            match owner[w] {
                Some(idx) => {
                    if sets[idx] != ball {
                        let other = *sets[idx].iter().next().unwrap();
                        return Err(Error::InconsistentMetric {
                            a: w,
                            b: other,
                            level: i,
                        });
                    }
                }
                None => {
                    // every member must be unowned and produce the same ball
                    for &m in &ball {
                        if owner[m].is_some() {
                            return Err(Error::InconsistentMetric { a: w, b: m, level: i });
                        }
                    }
                    let idx = sets.len();
                    for &m in &ball {
                        owner[m] = Some(idx);
                    }
                    sets.push(ball);
                }
            }
        }
        sets.sort_by_key(|s| *s.iter().next().unwrap());
        levels.push(sets);
    }
    Ok(LLabeling { levels })
}
