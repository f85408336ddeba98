//! Canonical rooted tree of an ultrametric, and Newick text.

use std::fmt::Write as _;

use super::matrix::DistMatrix;
use super::ultrametric::{check_ultrametric, default_tol};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    /// Coalescence depth in original time: half the distance between leaves
    /// that meet here. Leaves sit at height 0.
    pub height: f64,
    pub children: Vec<usize>,
    /// Leaf index into the source matrix.
    pub leaf: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenealogyTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
}

impl GenealogyTree {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.leaf.is_some()).count()
    }

    fn leaves_below(&self, node: usize, out: &mut Vec<usize>) {
        let nd = &self.nodes[node];
        if let Some(l) = nd.leaf {
            out.push(l);
        }
        for &c in &nd.children {
            self.leaves_below(c, out);
        }
    }

    /// Leaf-to-leaf distances: twice the height of the lowest common ancestor.
    pub fn to_matrix(&self) -> DistMatrix {
        let k = self.n_leaves();
        let mut d = DistMatrix::zeros(k);
        for node in &self.nodes {
            if node.children.len() < 2 {
                continue;
            }
            let groups: Vec<Vec<usize>> = node
                .children
                .iter()
                .map(|&c| {
                    let mut v = Vec::new();
                    self.leaves_below(c, &mut v);
                    v
                })
                .collect();
            for (a, ga) in groups.iter().enumerate() {
                for gb in &groups[a + 1..] {
                    for &x in ga {
                        for &y in gb {
                            d.set(x, y, 2.0 * node.height);
                        }
                    }
                }
            }
        }
        d
    }

    /// Newick text with branch lengths in original-time units. Leaves are
    /// labelled by `label(leaf_index)`.
    pub fn to_newick_with<F: Fn(usize) -> String>(&self, label: F) -> String {
        let mut out = String::new();
        self.write_node(self.root, None, &label, &mut out);
        out.push(';');
        out
    }

    /// Newick text with 1-based leaf labels.
    pub fn to_newick(&self) -> String {
        self.to_newick_with(|i| (i + 1).to_string())
    }

    fn write_node<F: Fn(usize) -> String>(&self, node: usize, parent_height: Option<f64>, label: &F, out: &mut String) {
        let nd = &self.nodes[node];
        if !nd.children.is_empty() {
            out.push('(');
            for (idx, &c) in nd.children.iter().enumerate() {
                if idx > 0 {
                    out.push(',');
                }
                self.write_node(c, Some(nd.height), label, out);
            }
            out.push(')');
        }
        if let Some(l) = nd.leaf {
            out.push_str(&label(l));
        }
        if let Some(ph) = parent_height {
            let _ = write!(out, ":{}", (ph - nd.height).max(0.0));
        }
    }

    /// Rebuilds a tree from Newick text whose leaves are labelled `1..=k`.
    pub fn from_newick(text: &str) -> Result<Self> {
        let parsed = parse_newick(text)?;
        let mut nodes = Vec::new();
        let mut depths = Vec::new();
        let root = flatten(&parsed, 0.0, &mut nodes, &mut depths)?;
        let max_depth = depths.iter().copied().fold(0.0, f64::max);
        for (node, depth) in nodes.iter_mut().zip(&depths) {
            node.height = (max_depth - depth).max(0.0);
        }
        let k = nodes.iter().filter(|n| n.leaf.is_some()).count();
        let mut seen = vec![false; k];
        for n in &nodes {
            if let Some(l) = n.leaf {
                if l >= k || seen[l] {
                    return Err(Error::Newick { pos: 0, msg: format!("leaf labels must be 1..={k} without repeats") });
                }
                seen[l] = true;
            }
        }
        Ok(Self { nodes, root })
    }
}

fn flatten(node: &NewickNode, depth: f64, nodes: &mut Vec<TreeNode>, depths: &mut Vec<f64>) -> Result<usize> {
    let here = depth + node.length.unwrap_or(0.0);
    let idx = nodes.len();
    let leaf = if node.children.is_empty() {
        let label = node.label.as_deref().unwrap_or("");
        let v: usize = label
            .parse()
            .map_err(|_| Error::Newick { pos: 0, msg: format!("leaf label {label:?} is not a positive integer") })?;
        if v == 0 {
            return Err(Error::Newick { pos: 0, msg: "leaf labels start at 1".into() });
        }
        Some(v - 1)
    } else {
        None
    };
    nodes.push(TreeNode { height: 0.0, children: Vec::new(), leaf });
    depths.push(here);
    let mut kids = Vec::with_capacity(node.children.len());
    for c in &node.children {
        kids.push(flatten(c, here, nodes, depths)?);
    }
    nodes[idx].children = kids;
    Ok(idx)
}

/// Single-linkage agglomeration, exact for ultrametric input. Merges at the
/// same height are collapsed into one multifurcating node.
pub fn ultrametric_to_tree(d: &DistMatrix) -> Result<GenealogyTree> {
    let tol = default_tol(d);
    let report = check_ultrametric(d, tol)?;
    if let Some(v) = report.worst {
        return Err(v.into_error());
    }
    let k = d.n();
    let mut nodes: Vec<TreeNode> =
        (0..k).map(|i| TreeNode { height: 0.0, children: Vec::new(), leaf: Some(i) }).collect();
    if k == 0 {
        return Err(crate::error::invalid("cannot build a tree on zero leaves"));
    }
    // Prim's minimum spanning tree.
    let mut in_tree = vec![false; k];
    let mut best = vec![f64::INFINITY; k];
    let mut link = vec![0usize; k];
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(k.saturating_sub(1));
    in_tree[0] = true;
    for j in 1..k {
        best[j] = d.get(0, j);
    }
    for _ in 1..k {
        let (mut pick, mut w) = (usize::MAX, f64::INFINITY);
        for j in 0..k {
            if !in_tree[j] && (best[j] < w || pick == usize::MAX) {
                pick = j;
                w = best[j];
            }
        }
        in_tree[pick] = true;
        edges.push((w, link[pick].min(pick), link[pick].max(pick)));
        for j in 0..k {
            if !in_tree[j] && d.get(pick, j) < best[j] {
                best[j] = d.get(pick, j);
                link[j] = pick;
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut parent: Vec<usize> = (0..k).collect();
    let mut top: Vec<usize> = (0..k).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let height_tol = 0.5 * tol;
    for (w, a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        let h = 0.5 * w;
        let mut children = Vec::new();
        for r in [ra, rb] {
            let node = top[r];
            if nodes[node].leaf.is_none() && (nodes[node].height - h).abs() <= height_tol {
                children.extend(std::mem::take(&mut nodes[node].children));
            } else {
                children.push(node);
            }
        }
        let id = nodes.len();
        nodes.push(TreeNode { height: h, children, leaf: None });
        parent[rb] = ra;
        top[ra] = id;
    }
    let root = top[find(&mut parent, 0)];
    Ok(compact(nodes, root))
}

/// Drops nodes emptied by collapsing and renumbers.
fn compact(nodes: Vec<TreeNode>, root: usize) -> GenealogyTree {
    let mut out = Vec::with_capacity(nodes.len());
    fn walk(nodes: &[TreeNode], node: usize, out: &mut Vec<TreeNode>) -> usize {
        let idx = out.len();
        out.push(TreeNode { height: nodes[node].height, children: Vec::new(), leaf: nodes[node].leaf });
        let kids: Vec<usize> = nodes[node].children.iter().map(|&c| walk(nodes, c, out)).collect();
        out[idx].children = kids;
        idx
    }
    let root = walk(&nodes, root, &mut out);
    GenealogyTree { nodes: out, root }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewickNode {
    pub label: Option<String>,
    pub length: Option<f64>,
    pub children: Vec<NewickNode>,
}

/// Parses one Newick tree: `tree := subtree ';'`,
/// `subtree := '(' subtree (',' subtree)* ')' label? (':' length)? | label (':' length)?`.
/// Whitespace and `[...]` comments are skipped.
pub fn parse_newick(text: &str) -> Result<NewickNode> {
    let mut p = Parser { s: text.as_bytes(), pos: 0 };
    let node = p.subtree()?;
    p.skip();
    p.expect(b';')?;
    p.skip();
    if p.pos != p.s.len() {
        return Err(p.err("trailing input after ';'"));
    }
    Ok(node)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Newick { pos: self.pos, msg: msg.to_string() }
    }

    fn skip(&mut self) {
        loop {
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.s.len() && self.s[self.pos] == b'[' {
                while self.pos < self.s.len() && self.s[self.pos] != b']' {
                    self.pos += 1;
                }
                self.pos = (self.pos + 1).min(self.s.len());
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn subtree(&mut self) -> Result<NewickNode> {
        let mut children = Vec::new();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                children.push(self.subtree()?);
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.err("expected ',' or ')'")),
                }
            }
        }
        let label = self.label();
        let length = if self.peek() == Some(b':') {
            self.pos += 1;
            self.skip();
            let start = self.pos;
            while self.pos < self.s.len() && matches!(self.s[self.pos], b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E') {
                self.pos += 1;
            }
            let lit = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
            Some(lit.parse::<f64>().map_err(|_| Error::Newick { pos: start, msg: format!("bad branch length {lit:?}") })?)
        } else {
            None
        };
        if children.is_empty() && label.is_none() {
            return Err(self.err("leaf without a label"));
        }
        Ok(NewickNode { label, length, children })
    }

    fn label(&mut self) -> Option<String> {
        self.skip();
        let start = self.pos;
        while self.pos < self.s.len()
            && !matches!(self.s[self.pos], b'(' | b')' | b',' | b':' | b';' | b'[' | b']' | b'\'')
            && !self.s[self.pos].is_ascii_whitespace()
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m3(d12: f64, d13: f64, d23: f64) -> DistMatrix {
        DistMatrix::from_rows(&[vec![0.0, d12, d13], vec![d12, 0.0, d23], vec![d13, d23, 0.0]]).unwrap()
    }

    #[test]
    fn cherry() {
        let d = DistMatrix::from_rows(&[vec![0.0, 4.0], vec![4.0, 0.0]]).unwrap();
        let t = ultrametric_to_tree(&d).unwrap();
        assert_eq!(t.nodes[t.root].height, 2.0);
        assert_eq!(t.nodes[t.root].children.len(), 2);
        assert_eq!(t.to_newick(), "(1:2,2:2);");
    }

    #[test]
    fn two_merges() {
        let t = ultrametric_to_tree(&m3(2.0, 6.0, 6.0)).unwrap();
        let root = &t.nodes[t.root];
        assert_eq!(root.height, 3.0);
        let inner = root.children.iter().find(|&&c| t.nodes[c].leaf.is_none()).unwrap();
        assert_eq!(t.nodes[*inner].height, 1.0);
        assert_eq!(t.to_newick(), "((1:1,2:1):2,3:3);");
        assert_eq!(t.to_matrix(), m3(2.0, 6.0, 6.0));
    }

    #[test]
    fn single_leaf() {
        let t = ultrametric_to_tree(&DistMatrix::zeros(1)).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.to_newick(), "1;");
        assert_eq!(GenealogyTree::from_newick("1;").unwrap().n_leaves(), 1);
    }

    #[test]
    fn equal_heights_collapse_to_multifurcation() {
        let d = m3(4.0, 4.0, 4.0);
        let t = ultrametric_to_tree(&d).unwrap();
        assert_eq!(t.nodes[t.root].children.len(), 3);
        assert_eq!(t.to_matrix(), d);
    }

    #[test]
    fn rejects_non_ultrametric() {
        match ultrametric_to_tree(&m3(2.0, 5.0, 3.0)) {
            Err(Error::NotUltrametric { i, j, k, .. }) => assert_eq!((i, j, k), (0, 2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn newick_round_trip() {
        let d = m3(2.0, 6.0, 6.0);
        let text = ultrametric_to_tree(&d).unwrap().to_newick();
        let back = GenealogyTree::from_newick(&text).unwrap();
        assert!(back.to_matrix().max_abs_diff(&d) < 1e-12);
    }

    #[test]
    fn parser_handles_whitespace_comments_and_errors() {
        let n = parse_newick(" ( 1:0.5 , [c] 2:0.5 ) root : 0 ;").unwrap();
        assert_eq!(n.children.len(), 2);
        assert_eq!(n.label.as_deref(), Some("root"));
        assert!(parse_newick("(1,2)").is_err());
        assert!(parse_newick("(1,2;").is_err());
        assert!(parse_newick("(1:x,2);").is_err());
        assert!(GenealogyTree::from_newick("(1:1,1:1);").is_err());
        assert!(GenealogyTree::from_newick("(a:1,b:1);").is_err());
    }
}
