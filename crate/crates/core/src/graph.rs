//! Hierarchy data model.
//!
//! Edges are always stored child → parent. A graph is immutable once built;
//! tree validation runs at construction and its outcome is cached, so
//! ancestry queries are available whenever the edge set forms a rooted tree.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TreeError};

/// Dense node index, assigned in first-appearance order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Parent/depth index of a validated tree.
#[derive(Debug, Clone)]
pub struct TreeIndex {
    root: NodeId,
    parent: Vec<Option<NodeId>>,
    depth: Vec<u32>,
}

impl TreeIndex {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.parent[node.index()]
    }

    pub fn depth(&self, node: NodeId) -> u32 {
        self.depth[node.index()]
    }

    /// Strict ancestors of `node`, nearest first.
    pub fn ancestors(&self, node: NodeId) -> Ancestors<'_> {
        Ancestors {
            index: self,
            next: self.parent(node),
        }
    }

    /// True when `anc` is a strict ancestor of `node`.
    pub fn is_ancestor(&self, anc: NodeId, node: NodeId) -> bool {
        let target = self.depth(anc);
        if target >= self.depth(node) {
            return false;
        }
        self.ancestors(node)
            .find(|a| self.depth(*a) == target)
            .is_some_and(|a| a == anc)
    }

    /// Deepest common ancestor-or-self of `a` and `b`.
    pub fn nca(&self, mut a: NodeId, mut b: NodeId) -> NodeId {
        while self.depth(a) > self.depth(b) {
            a = self.parent(a).expect("non-root has a parent");
        }
        while self.depth(b) > self.depth(a) {
            b = self.parent(b).expect("non-root has a parent");
        }
        while a != b {
            a = self.parent(a).expect("non-root has a parent");
            b = self.parent(b).expect("non-root has a parent");
        }
        a
    }

    fn build(n: usize, edges: &[(NodeId, NodeId)], labels: &[String]) -> Result<Self, TreeError> {
        let label = |id: NodeId| labels[id.index()].clone();
        let mut parent: Vec<Option<NodeId>> = vec![None; n];
        for &(child, par) in edges {
            if parent[child.index()].replace(par).is_some() {
                return Err(TreeError::MultipleParents(label(child)));
            }
        }
        let mut roots = (0..n).filter(|&i| parent[i].is_none()).map(NodeId::from);
        let root = roots.next().ok_or(TreeError::NoRoot)?;
        if let Some(second) = roots.next() {
            return Err(TreeError::MultipleRoots {
                first: label(root),
                second: label(second),
            });
        }

        // 0 = unvisited, 1 = on the current walk, 2 = resolved.
        let mut state = vec![0u8; n];
        let mut depth = vec![0u32; n];
        state[root.index()] = 2;
        let mut path = Vec::new();
        for start in 0..n {
            let mut cur = start;
            while state[cur] == 0 {
                state[cur] = 1;
                path.push(cur);
                match parent[cur] {
                    Some(p) => cur = p.index(),
                    None => return Err(TreeError::Disconnected(label(NodeId::from(cur)))),
                }
            }
            if state[cur] == 1 {
                return Err(TreeError::Cycle(label(NodeId::from(cur))));
            }
            let mut d = depth[cur];
            while let Some(node) = path.pop() {
                d += 1;
                depth[node] = d;
                state[node] = 2;
            }
        }
        Ok(TreeIndex {
            root,
            parent,
            depth,
        })
    }
}

pub struct Ancestors<'a> {
    index: &'a TreeIndex,
    next: Option<NodeId>,
}

impl Iterator for Ancestors<'_> {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        let cur = self.next?;
        self.next = self.index.parent(cur);
        Some(cur)
    }
}

/// Node set, child → parent edge set, optional transitive-closure edges.
#[derive(Debug, Clone)]
pub struct HierarchyGraph {
    labels: Vec<String>,
    ids: HashMap<String, NodeId>,
    edges: Vec<(NodeId, NodeId)>,
    closure_edges: Option<Vec<(NodeId, NodeId)>>,
    adjacency: Vec<Vec<NodeId>>,
    tree: Result<TreeIndex, TreeError>,
}

/// Accumulates labelled edges; duplicates collapse.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    labels: Vec<String>,
    ids: HashMap<String, NodeId>,
    edges: Vec<(NodeId, NodeId)>,
    seen: HashSet<(NodeId, NodeId)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, label: &str) -> NodeId {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = NodeId::from(self.labels.len());
        self.labels.push(label.to_owned());
        self.ids.insert(label.to_owned(), id);
        id
    }

    /// Adds `child → parent`. Returns `false` when the edge was already present.
    pub fn add_edge(&mut self, child: &str, parent: &str) -> Result<bool> {
        if child == parent {
            return Err(Error::invalid(format!("self-loop on `{child}`")));
        }
        let c = self.node(child);
        let p = self.node(parent);
        if self.seen.insert((c, p)) {
            self.edges.push((c, p));
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn build(self) -> HierarchyGraph {
        HierarchyGraph::assemble(self.labels, self.ids, self.edges)
    }
}

impl HierarchyGraph {
    fn assemble(
        labels: Vec<String>,
        ids: HashMap<String, NodeId>,
        edges: Vec<(NodeId, NodeId)>,
    ) -> Self {
        let n = labels.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(c, p) in &edges {
            adjacency[c.index()].push(p);
            adjacency[p.index()].push(c);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let tree = TreeIndex::build(n, &edges, &labels);
        HierarchyGraph {
            labels,
            ids,
            edges,
            closure_edges: None,
            adjacency,
            tree,
        }
    }

    /// Builds a graph from labelled `(child, parent)` pairs.
    pub fn from_labeled_edges<'a, I>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut b = GraphBuilder::new();
        for (c, p) in edges {
            b.add_edge(c, p)?;
        }
        Ok(b.build())
    }

    /// Builds a graph on nodes `0..n` (labelled by their index) from `(child, parent)` index pairs.
    pub fn from_index_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            b.node(&i.to_string());
        }
        for &(c, p) in edges {
            if c >= n || p >= n {
                return Err(Error::invalid(format!("edge ({c}, {p}) outside 0..{n}")));
            }
            b.add_edge(&c.to_string(), &p.to_string())?;
        }
        Ok(b.build())
    }

    /// Reads a UTF-8 `child<TAB>parent` edge list. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse_edge_list(&text, path)
    }

    pub fn parse_edge_list(text: &str, origin: &Path) -> Result<Self> {
        let mut b = GraphBuilder::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(parse_err(format!(
                    "expected `child<TAB>parent`, found {} field(s)",
                    fields.len()
                )));
            }
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(parse_err("empty node label".into()));
            }
            if fields[0] == fields[1] {
                return Err(parse_err(format!("self-loop on `{}`", fields[0])));
            }
            b.add_edge(fields[0], fields[1])?;
        }
        Ok(b.build())
    }

    /// Writes the tree edges as `child<TAB>parent` lines.
    pub fn write_edge_list<W: Write>(&self, out: W) -> std::io::Result<()> {
        self.write_pairs(out, &self.edges)
    }

    pub fn write_pairs<W: Write>(&self, mut out: W, pairs: &[(NodeId, NodeId)]) -> std::io::Result<()> {
        for &(c, p) in pairs {
            writeln!(out, "{}\t{}", self.label(c), self.label(p))?;
        }
        Ok(())
    }

    /// Complete balanced tree with `levels` levels below the root.
    ///
    /// The root is labelled `0`; the `k`-th child of node `x` is `x.k`.
    pub fn balanced_tree(branching: usize, levels: usize) -> Result<Self> {
        if branching == 0 || levels == 0 {
            return Err(Error::invalid("branching and levels must both be ≥ 1"));
        }
        let mut b = GraphBuilder::new();
        b.node("0");
        let mut frontier = vec!["0".to_string()];
        for _ in 0..levels {
            let mut next = Vec::with_capacity(frontier.len() * branching);
            for parent in &frontier {
                for k in 1..=branching {
                    let child = format!("{parent}.{k}");
                    b.add_edge(&child, parent)?;
                    next.push(child);
                }
            }
            frontier = next;
        }
        Ok(b.build())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.labels.len()).map(NodeId::from)
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.labels[id.index()]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, label: &str) -> Option<NodeId> {
        self.ids.get(label).copied()
    }

    /// `(child, parent)` pairs in insertion order.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn closure_edges(&self) -> Option<&[(NodeId, NodeId)]> {
        self.closure_edges.as_deref()
    }

    /// Undirected neighbours in the edge set (closure edges excluded), ascending.
    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id.index()]
    }

    /// Undirected degree in the edge set.
    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency[id.index()].len()
    }

    pub fn check_node(&self, id: NodeId) -> Result<()> {
        if id.index() < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(id))
        }
    }

    /// Root of the tree, or the reason the edge set is not a tree.
    pub fn validate_tree(&self) -> Result<NodeId, TreeError> {
        self.tree.as_ref().map(TreeIndex::root).map_err(Clone::clone)
    }

    pub fn tree(&self) -> Option<&TreeIndex> {
        self.tree.as_ref().ok()
    }

    /// Tree index, or [`Error::NotATree`].
    pub fn require_tree(&self) -> Result<&TreeIndex> {
        self.tree.as_ref().map_err(|e| Error::NotATree(e.clone()))
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.tree().and_then(|t| t.parent(id))
    }

    /// Deepest node that is an ancestor-or-self of both inputs.
    pub fn nearest_common_ancestor(&self, b: NodeId, b2: NodeId) -> Result<NodeId> {
        self.check_node(b)?;
        self.check_node(b2)?;
        Ok(self.require_tree()?.nca(b, b2))
    }

    /// All `(node, ancestor)` pairs where the ancestor is strict and not the parent.
    pub fn transitive_closure(&self) -> Result<Vec<(NodeId, NodeId)>> {
        let tree = self.require_tree()?;
        let mut out = Vec::new();
        for u in self.nodes() {
            out.extend(tree.ancestors(u).skip(1).map(|w| (u, w)));
        }
        Ok(out)
    }

    /// Attaches the transitive-closure edge set.
    pub fn with_closure(mut self) -> Result<Self> {
        self.closure_edges = Some(self.transitive_closure()?);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain() -> HierarchyGraph {
        HierarchyGraph::from_labeled_edges([("a", "b"), ("b", "c"), ("c", "d")]).unwrap()
    }

    fn id(g: &HierarchyGraph, s: &str) -> NodeId {
        g.id(s).unwrap()
    }

    #[test]
    fn parse_examples() {
        let p = Path::new("mem");
        let g = HierarchyGraph::parse_edge_list("a\tb\n", p).unwrap();
        assert_eq!((g.len(), g.edges().len()), (2, 1));
        assert_eq!(g.edges()[0], (id(&g, "a"), id(&g, "b")));

        let g = HierarchyGraph::parse_edge_list("a\tb\na\tb\n", p).unwrap();
        assert_eq!(g.edges().len(), 1);

        let g = HierarchyGraph::parse_edge_list("# comment\n\nx\ty\r\n", p).unwrap();
        assert_eq!(g.labels(), ["x", "y"]);

        match HierarchyGraph::parse_edge_list("a\ta\n", p) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match HierarchyGraph::parse_edge_list("a\tb\nc d\n", p) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match HierarchyGraph::parse_edge_list("a\tb\tc\n", p) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_input_error() {
        let err = HierarchyGraph::load_edge_list("/nonexistent/edges.tsv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert_eq!(err.kind(), crate::ErrorKind::Input);
    }

    #[test]
    fn balanced_tree_sizes() {
        let g = HierarchyGraph::balanced_tree(5, 3).unwrap();
        assert_eq!((g.len(), g.edges().len()), (156, 155));
        assert_eq!(g.label(g.validate_tree().unwrap()), "0");

        let path = HierarchyGraph::balanced_tree(1, 3).unwrap();
        assert_eq!(path.len(), 4);
        assert!(path.nodes().all(|v| path.degree(v) <= 2));

        let g = HierarchyGraph::balanced_tree(2, 1).unwrap();
        assert_eq!((g.len(), g.edges().len()), (3, 2));
        assert!(HierarchyGraph::balanced_tree(0, 2).is_err());
    }

    #[test]
    fn closure_examples() {
        let g = chain();
        let mut tc = g.transitive_closure().unwrap();
        tc.sort();
        let want = vec![
            (id(&g, "a"), id(&g, "c")),
            (id(&g, "a"), id(&g, "d")),
            (id(&g, "b"), id(&g, "d")),
        ];
        assert_eq!(tc, want);

        let g = HierarchyGraph::balanced_tree(5, 3).unwrap();
        assert_eq!(g.transitive_closure().unwrap().len(), 25 + 125 * 2);

        let star = HierarchyGraph::from_labeled_edges([("x", "r"), ("y", "r"), ("z", "r")]).unwrap();
        assert!(star.transitive_closure().unwrap().is_empty());

        let dag = HierarchyGraph::from_labeled_edges([("a", "b"), ("a", "c")]).unwrap();
        assert!(matches!(dag.transitive_closure(), Err(Error::NotATree(_))));
    }

    #[test]
    fn nca_examples() {
        let g = HierarchyGraph::from_labeled_edges([
            ("a", "r"),
            ("b", "r"),
            ("a1", "a"),
            ("a2", "a"),
        ])
        .unwrap();
        let (r, a, a1, a2, b) = (id(&g, "r"), id(&g, "a"), id(&g, "a1"), id(&g, "a2"), id(&g, "b"));
        assert_eq!(g.nearest_common_ancestor(a1, a1).unwrap(), a1);
        assert_eq!(g.nearest_common_ancestor(a1, a2).unwrap(), a);
        assert_eq!(g.nearest_common_ancestor(a1, r).unwrap(), r);
        assert_eq!(g.nearest_common_ancestor(a1, b).unwrap(), r);
        assert!(matches!(
            g.nearest_common_ancestor(a1, NodeId(99)),
            Err(Error::UnknownNode(NodeId(99)))
        ));
        let t = g.tree().unwrap();
        assert!(t.is_ancestor(r, a1));
        assert!(!t.is_ancestor(a1, a1));
        assert!(!t.is_ancestor(b, a1));
    }

    #[test]
    fn validation_errors() {
        let two_parents = HierarchyGraph::from_labeled_edges([("a", "b"), ("a", "c")]).unwrap();
        assert_eq!(
            two_parents.validate_tree(),
            Err(TreeError::MultipleParents("a".into()))
        );
        let cycle = HierarchyGraph::from_labeled_edges([("a", "b"), ("b", "a")]).unwrap();
        assert_eq!(cycle.validate_tree(), Err(TreeError::NoRoot));
        let cycle_beside_root =
            HierarchyGraph::from_labeled_edges([("x", "r"), ("a", "b"), ("b", "a")]).unwrap();
        assert!(matches!(cycle_beside_root.validate_tree(), Err(TreeError::Cycle(_))));
        let forest = HierarchyGraph::from_labeled_edges([("a", "b"), ("c", "d")]).unwrap();
        assert!(matches!(forest.validate_tree(), Err(TreeError::MultipleRoots { .. })));
    }

    fn random_tree() -> impl Strategy<Value = HierarchyGraph> {
        (2usize..40)
            .prop_flat_map(|n| proptest::collection::vec(any::<u64>(), n - 1))
            .prop_map(|picks| {
                let edges: Vec<(usize, usize)> = picks
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i + 1, (*p as usize) % (i + 1)))
                    .collect();
                HierarchyGraph::from_index_edges(edges.len() + 1, &edges).unwrap()
            })
    }

    proptest! {
        #[test]
        fn closure_size_matches_depths(g in random_tree()) {
            let t = g.tree().unwrap();
            let expected: usize = g.nodes().map(|u| t.depth(u).saturating_sub(1) as usize).sum();
            let tc = g.transitive_closure().unwrap();
            prop_assert_eq!(tc.len(), expected);
            for (u, w) in tc {
                prop_assert!(t.is_ancestor(w, u));
                prop_assert_ne!(Some(w), t.parent(u));
            }
        }

        #[test]
        fn nca_symmetric_idempotent(g in random_tree(), a in any::<u64>(), b in any::<u64>()) {
            let n = g.len() as u64;
            let (a, b) = (NodeId((a % n) as u32), NodeId((b % n) as u32));
            let c = g.nearest_common_ancestor(a, b).unwrap();
            prop_assert_eq!(c, g.nearest_common_ancestor(b, a).unwrap());
            prop_assert_eq!(g.nearest_common_ancestor(a, a).unwrap(), a);
            let t = g.tree().unwrap();
            prop_assert!(t.depth(c) <= t.depth(a).min(t.depth(b)));
        }

        #[test]
        fn balanced_trees_validate(b in 1usize..5, l in 1usize..4) {
            let g = HierarchyGraph::balanced_tree(b, l).unwrap();
            prop_assert!(g.validate_tree().is_ok());
            let expected: usize = (0..=l as u32).map(|i| b.pow(i)).sum();
            prop_assert_eq!(g.len(), expected);
        }
    }
}
