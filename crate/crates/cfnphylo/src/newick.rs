//! Newick serialization of balanced trees with edge fidelities.
//!
//! Leaf names are the integer labels. The branch length field carries
//! −ln θ(e) so that path lengths add; the leaf attenuation is written as
//! a comment tag `[&eta=...]` after the leaf's branch length.

use crate::error::{Error, Result};
use crate::tree::{BalancedTree, EdgeParams, Shape};

/// Emit a tree with parameters as a single-line Newick string.
pub fn emit(tree: &BalancedTree, params: &EdgeParams) -> String {
    fn rec(tree: &BalancedTree, params: &EdgeParams, v: usize, out: &mut String) {
        if tree.is_leaf(v) {
            out.push_str(&tree.leaf_label(v).unwrap().to_string());
        } else {
            out.push('(');
            for (i, &c) in tree.children(v).iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                rec(tree, params, c, out);
            }
            out.push(')');
        }
        if v != tree.root() {
            out.push_str(&format!(":{:.17}", -params.theta[v].ln()));
            if let Some(label) = tree.leaf_label(v) {
                out.push_str(&format!("[&eta={:.17}]", params.eta[label]));
            }
        }
    }
    let mut s = String::new();
    rec(tree, params, tree.root(), &mut s);
    s.push(';');
    s
}

/// Emit topology only, with unit branch lengths and no comments.
pub fn emit_topology(tree: &BalancedTree) -> String {
    fn rec(tree: &BalancedTree, v: usize, out: &mut String) {
        if tree.is_leaf(v) {
            out.push_str(&tree.leaf_label(v).unwrap().to_string());
        } else {
            out.push('(');
            for (i, &c) in tree.children(v).iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                rec(tree, c, out);
            }
            out.push(')');
        }
        if v != tree.root() {
            out.push_str(":1");
        }
    }
    let mut s = String::new();
    rec(tree, tree.root(), &mut s);
    s.push(';');
    s
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

/// Parsed node before tree assembly.
enum PNode {
    Leaf {
        label: usize,
        theta: f64,
        eta: f64,
    },
    Internal {
        children: Vec<PNode>,
        theta: f64,
    },
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: 1,
            col: self.pos + 1,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", c as char)))
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        while matches!(
            self.peek(),
            Some(b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E')
        ) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| {
                self.pos = start;
                self.err("expected a number")
            })
    }

    fn integer(&mut self) -> Result<usize> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| {
                self.pos = start;
                self.err("expected an integer leaf label")
            })
    }

    /// Branch suffix `:len[&eta=x]`; returns (theta, eta).
    fn branch(&mut self, is_leaf: bool) -> Result<(f64, f64)> {
        self.skip_ws();
        self.eat(b':')?;
        let len = self.number()?;
        if !len.is_finite() || len < 0.0 {
            return Err(self.err("branch length must be finite and non-negative"));
        }
        let theta = (-len).exp();
        let mut eta = 1.0;
        if self.peek() == Some(b'[') {
            if !is_leaf {
                return Err(self.err("comment tag allowed only on leaf branches"));
            }
            let tag = b"[&eta=";
            if self.src.len() < self.pos + tag.len()
                || &self.src[self.pos..self.pos + tag.len()] != tag
            {
                return Err(self.err("expected `[&eta=` comment tag"));
            }
            self.pos += tag.len();
            eta = self.number()?;
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(self.err("eta outside (0,1]"));
            }
            self.eat(b']')?;
        }
        Ok((theta, eta))
    }

    fn node(&mut self, is_root: bool) -> Result<PNode> {
        self.skip_ws();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut children = vec![self.node(false)?];
            loop {
                self.skip_ws();
                match self.peek() {
                    Some(b',') => {
                        self.pos += 1;
                        children.push(self.node(false)?);
                    }
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.err("expected `,` or `)`")),
                }
            }
            let theta = if is_root { 1.0 } else { self.branch(false)?.0 };
            Ok(PNode::Internal { children, theta })
        } else {
            let label = self.integer()?;
            if is_root {
                return Ok(PNode::Leaf {
                    label,
                    theta: 1.0,
                    eta: 1.0,
                });
            }
            let (theta, eta) = self.branch(true)?;
            Ok(PNode::Leaf { label, theta, eta })
        }
    }
}

/// Parse a Newick string back into a tree and its parameters.
pub fn parse(src: &str) -> Result<(BalancedTree, EdgeParams)> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let root = p.node(true)?;
    p.skip_ws();
    p.eat(b';')?;
    p.skip_ws();
    if p.peek().is_some() {
        return Err(p.err("trailing characters after `;`"));
    }

    fn shape_of(n: &PNode) -> Shape {
        match n {
            PNode::Leaf { .. } => Shape::Leaf,
            PNode::Internal { children, .. } => {
                Shape::Node(children.iter().map(shape_of).collect())
            }
        }
    }
    fn labels_of(n: &PNode, out: &mut Vec<usize>) {
        match n {
            PNode::Leaf { label, .. } => out.push(*label),
            PNode::Internal { children, .. } => {
                for c in children {
                    labels_of(c, out);
                }
            }
        }
    }
    let shape = shape_of(&root);
    let mut labels = Vec::new();
    labels_of(&root, &mut labels);
    let tree = BalancedTree::from_shape_with_labels(&shape, Some(&labels))?;

    // walk the parsed tree and the built tree in lockstep to place params
    let mut params = EdgeParams::constant(&tree, 1.0);
    fn fill(n: &PNode, v: usize, tree: &BalancedTree, params: &mut EdgeParams) -> Result<()> {
        match n {
            PNode::Leaf { label, theta, eta } => {
                params.theta[v] = *theta;
                params.eta[*label] = *eta;
            }
            PNode::Internal { children, theta } => {
                params.theta[v] = *theta;
                for (c, &cv) in children.iter().zip(tree.children(v)) {
                    fill(c, cv, tree, params)?;
                }
            }
        }
        Ok(())
    }
    fill(&root, tree.root(), &tree, &mut params)?;
    params.check_domains(&tree).map_err(|e| match e {
        Error::InvalidParameter(msg) => Error::Parse {
            line: 1,
            col: 1,
            msg,
        },
        other => other,
    })?;
    Ok((tree, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_bary23() {
        let t = BalancedTree::bary(2, 3).unwrap();
        let mut p = EdgeParams::with_eta(&t, 0.9, 0.7);
        for v in 1..t.node_count() {
            p.theta[v] = 0.5 + 0.03 * (v as f64);
        }
        let s = emit(&t, &p);
        let (t2, p2) = parse(&s).unwrap();
        assert_eq!(t.pairwise_leaf_distances(), t2.pairwise_leaf_distances());
        for v in 1..t.node_count() {
            assert!((p.theta[v] - p2.theta[v]).abs() < 1e-12);
        }
        for l in 0..t.n_leaves() {
            assert!((p.eta[l] - p2.eta[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_star() {
        let t = BalancedTree::regular_star(2, 2).unwrap();
        let p = EdgeParams::with_eta(&t, 0.85, 0.95);
        let s = emit(&t, &p);
        let (t2, p2) = parse(&s).unwrap();
        assert_eq!(t, t2);
        for v in 1..t.node_count() {
            assert!((p.theta[v] - p2.theta[v]).abs() < 1e-12);
        }
    }

    #[test]
    fn parse_errors_have_position() {
        match parse("(0:0.1,1:0.2;") {
            Err(Error::Parse { col, .. }) => assert_eq!(col, 13),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse("(0:0.1,1:bad);").is_err());
        assert!(parse("(0:0.1[&eta=2.0],1:0.1);").is_err());
    }

    #[test]
    fn topology_emit_parses() {
        let t = BalancedTree::regular_star(2, 1).unwrap();
        let s = emit_topology(&t);
        let (t2, _) = parse(&s).unwrap();
        assert_eq!(t.pairwise_leaf_distances(), t2.pairwise_leaf_distances());
    }
}
