//! Graph data model: nodes with optional text attributes and class labels,
//! canonicalized edge storage, neighborhoods, the edge homophily metric, and
//! a planted synthetic generator used as a fixture by the rest of the crate.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type NodeId = u64;

/// A node together with its optional text attribute and class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub text: Option<String>,
    pub label: Option<String>,
}

impl NodeRecord {
    pub fn bare(id: NodeId) -> Self {
        Self { id, text: None, label: None }
    }

    pub fn with_text(id: NodeId, text: impl Into<String>) -> Self {
        Self { id, text: Some(text.into()), label: None }
    }

    pub fn labeled(id: NodeId, text: impl Into<String>, label: impl Into<String>) -> Self {
        Self { id, text: Some(text.into()), label: Some(label.into()) }
    }
}

/// Immutable graph with optional node text, optional labels, and optional
/// relation triples.
///
/// Construction canonicalizes storage: nodes are sorted by id, undirected
/// edges are normalized to `(min, max)` and sorted, duplicate edges are
/// dropped (counted in [`TextGraph::dedup_count`]), and self-loops are
/// rejected. The canonical order is what the identity serialization
/// ordering refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct TextGraph {
    nodes: Vec<NodeRecord>,
    edges: Vec<(NodeId, NodeId)>,
    triples: Vec<(String, String, String)>,
    directed: bool,
    dedup_count: usize,
    index: BTreeMap<NodeId, usize>,
    adjacency: BTreeMap<NodeId, Vec<NodeId>>,
}

impl TextGraph {
    /// Build an undirected graph.
    pub fn new(nodes: Vec<NodeRecord>, edges: Vec<(NodeId, NodeId)>) -> Result<Self> {
        Self::build(nodes, edges, Vec::new(), false)
    }

    /// Build a directed graph (edge endpoints are kept as given).
    pub fn directed(nodes: Vec<NodeRecord>, edges: Vec<(NodeId, NodeId)>) -> Result<Self> {
        Self::build(nodes, edges, Vec::new(), true)
    }

    /// Build a graph that also carries (subject, relation, object) triples.
    pub fn with_triples(
        nodes: Vec<NodeRecord>,
        edges: Vec<(NodeId, NodeId)>,
        triples: Vec<(String, String, String)>,
        directed: bool,
    ) -> Result<Self> {
        Self::build(nodes, edges, triples, directed)
    }

    fn build(
        mut nodes: Vec<NodeRecord>,
        edges: Vec<(NodeId, NodeId)>,
        mut triples: Vec<(String, String, String)>,
        directed: bool,
    ) -> Result<Self> {
        nodes.sort_by_key(|n| n.id);
        let mut index = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id, i).is_some() {
                return Err(Error::DuplicateNodeId(node.id));
            }
        }
        let with_text = nodes.iter().filter(|n| n.text.is_some()).count();
        if with_text != 0 && with_text != nodes.len() {
            return Err(Error::MixedNodeText);
        }

        let mut seen = BTreeSet::new();
        let mut dedup_count = 0;
        for &(u, v) in &edges {
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            for endpoint in [u, v] {
                if !index.contains_key(&endpoint) {
                    return Err(Error::UnknownNode(endpoint));
                }
            }
            let key = if directed { (u, v) } else { (u.min(v), u.max(v)) };
            if !seen.insert(key) {
                dedup_count += 1;
            }
        }
        let edges: Vec<(NodeId, NodeId)> = seen.into_iter().collect();

        let mut adjacency: BTreeMap<NodeId, Vec<NodeId>> =
            nodes.iter().map(|n| (n.id, Vec::new())).collect();
        for &(u, v) in &edges {
            adjacency.get_mut(&u).expect("endpoint checked").push(v);
            if !directed {
                adjacency.get_mut(&v).expect("endpoint checked").push(u);
            }
        }
        for list in adjacency.values_mut() {
            list.sort_unstable();
        }

        triples.sort();

        Ok(Self { nodes, edges, triples, directed, dedup_count, index, adjacency })
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn triples(&self) -> &[(String, String, String)] {
        &self.triples
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of duplicate edges silently dropped at construction.
    pub fn dedup_count(&self) -> usize {
        self.dedup_count
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeRecord> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    /// Sorted adjacency list of `id` (out-neighbors for directed graphs).
    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        self.adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// True when every node carries a text attribute. Vacuously true for an
    /// empty node set.
    pub fn has_node_text(&self) -> bool {
        self.nodes.iter().all(|n| n.text.is_some())
    }

    /// Node text, with missing text read as the empty string.
    pub fn node_text(&self, id: NodeId) -> &str {
        self.node(id).and_then(|n| n.text.as_deref()).unwrap_or("")
    }

    /// Label assignment over every node; errors on the first unlabeled node.
    pub fn label_assignment(&self) -> Result<LabelAssignment> {
        let mut map = BTreeMap::new();
        for node in &self.nodes {
            match &node.label {
                Some(label) => {
                    map.insert(node.id, label.clone());
                }
                None => return Err(Error::UnlabeledNode(node.id)),
            }
        }
        Ok(LabelAssignment { map })
    }

    /// Label assignment over whichever nodes are labeled.
    pub fn partial_labels(&self) -> LabelAssignment {
        let map = self
            .nodes
            .iter()
            .filter_map(|n| n.label.clone().map(|l| (n.id, l)))
            .collect();
        LabelAssignment { map }
    }
}

/// Total mapping from node ids to class strings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelAssignment {
    map: BTreeMap<NodeId, String>,
}

impl LabelAssignment {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (NodeId, String)>) -> Self {
        Self { map: pairs.into_iter().collect() }
    }

    pub fn get(&self, id: NodeId) -> Option<&str> {
        self.map.get(&id).map(String::as_str)
    }

    pub fn insert(&mut self, id: NodeId, label: impl Into<String>) {
        self.map.insert(id, label.into());
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &str)> {
        self.map.iter().map(|(&id, label)| (id, label.as_str()))
    }
}

/// Fraction of edges whose endpoints share a class label.
///
/// Errors on an empty edge set (the metric is a ratio over the edge count)
/// and on any unlabeled endpoint.
pub fn edge_homophily(graph: &TextGraph, labels: &LabelAssignment) -> Result<f64> {
    if graph.edge_count() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    let mut same = 0usize;
    for &(u, v) in graph.edges() {
        let lu = labels.get(u).ok_or(Error::UnlabeledNode(u))?;
        let lv = labels.get(v).ok_or(Error::UnlabeledNode(v))?;
        if lu == lv {
            same += 1;
        }
    }
    Ok(same as f64 / graph.edge_count() as f64)
}

/// Nodes at shortest-path distance 1..=k from `v`, excluding `v` itself.
pub fn k_hop_neighborhood(graph: &TextGraph, v: NodeId, k: usize) -> Result<BTreeSet<NodeId>> {
    if !graph.contains_node(v) {
        return Err(Error::UnknownNode(v));
    }
    let mut out = BTreeSet::new();
    let mut frontier = vec![v];
    let mut seen: BTreeSet<NodeId> = BTreeSet::from([v]);
    for _ in 0..k {
        let mut next = Vec::new();
        for &node in &frontier {
            for &nb in graph.neighbors(node) {
                if seen.insert(nb) {
                    out.insert(nb);
                    next.push(nb);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(out)
}

/// Subgraph induced on `keep`: the kept nodes (records preserved) plus every
/// original edge with both endpoints kept. Ids outside the graph are ignored.
pub fn induced_subgraph(graph: &TextGraph, keep: &BTreeSet<NodeId>) -> TextGraph {
    let nodes: Vec<NodeRecord> = graph
        .nodes()
        .iter()
        .filter(|n| keep.contains(&n.id))
        .cloned()
        .collect();
    let edges: Vec<(NodeId, NodeId)> = graph
        .edges()
        .iter()
        .copied()
        .filter(|&(u, v)| keep.contains(&u) && keep.contains(&v))
        .collect();
    TextGraph::build(nodes, edges, Vec::new(), graph.is_directed())
        .expect("induced subgraph preserves construction invariants")
}

/// Planted labeled graph whose measured edge homophily lands within 0.05 of
/// `target_h`. Node text is a deterministic function of (label, id) so that
/// same-label nodes share vocabulary; the whole construction is
/// bit-reproducible per seed.
pub fn synth_planted_graph(
    n: usize,
    classes: usize,
    target_h: f64,
    seed: u64,
) -> Result<TextGraph> {
    if classes < 2 || n < classes {
        return Err(Error::InfeasibleSynthesis(format!(
            "need n >= classes >= 2, got n={n} classes={classes}"
        )));
    }
    if !(0.0..=1.0).contains(&target_h) {
        return Err(Error::InfeasibleSynthesis(format!(
            "target homophily {target_h} outside [0, 1]"
        )));
    }

    let class_of = |id: usize| id % classes;
    let mut members: Vec<Vec<NodeId>> = vec![Vec::new(); classes];
    let mut nodes = Vec::with_capacity(n);
    for id in 0..n {
        let c = class_of(id);
        members[c].push(id as NodeId);
        nodes.push(NodeRecord::labeled(id as NodeId, synth_node_text(c, id), format!("c{c}")));
    }

    let pairs = |s: usize| s * s.saturating_sub(1) / 2;
    let intra_cap: usize = members.iter().map(|m| pairs(m.len())).sum();
    let inter_cap = pairs(n) - intra_cap;

    let edge_target = (2 * n).min(intra_cap + inter_cap);
    if edge_target == 0 {
        return Err(Error::InfeasibleSynthesis("no feasible edges".into()));
    }
    let intra_want = (target_h * edge_target as f64).round() as usize;
    let intra_want = intra_want.min(edge_target);
    let inter_want = edge_target - intra_want;
    if intra_want > intra_cap || inter_want > inter_cap {
        return Err(Error::InfeasibleSynthesis(format!(
            "n={n} too small for target_h={target_h}: need {intra_want} intra / {inter_want} inter, \
             capacity {intra_cap} / {inter_cap}"
        )));
    }
    let achieved = intra_want as f64 / edge_target as f64;
    if (achieved - target_h).abs() > 0.05 {
        return Err(Error::InfeasibleSynthesis(format!(
            "closest achievable homophily {achieved} misses target {target_h} by more than 0.05"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut edges = Vec::with_capacity(edge_target);

    let eligible: Vec<usize> = (0..classes).filter(|&c| members[c].len() >= 2).collect();
    draw_edges(&mut rng, &mut used, &mut edges, intra_want, |rng| {
        let c = eligible[rng.gen_range(0..eligible.len())];
        let m = &members[c];
        let a = m[rng.gen_range(0..m.len())];
        let b = m[rng.gen_range(0..m.len())];
        (a, b)
    });
    if edges.len() < intra_want {
        fill_from_enumeration(&mut rng, &mut used, &mut edges, intra_want, || {
            intra_pairs(&members)
        });
    }

    let before_inter = edges.len();
    draw_edges(&mut rng, &mut used, &mut edges, before_inter + inter_want, |rng| {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if class_of(a) == class_of(b) {
            (a as NodeId, a as NodeId) // rejected as a degenerate pair below
        } else {
            (a as NodeId, b as NodeId)
        }
    });
    if edges.len() < before_inter + inter_want {
        fill_from_enumeration(&mut rng, &mut used, &mut edges, before_inter + inter_want, || {
            inter_pairs(n, classes)
        });
    }

    TextGraph::new(nodes, edges)
}

fn synth_node_text(class: usize, id: usize) -> String {
    // Three tokens shared by the whole class plus two id-dependent tokens
    // from the class pool; same-label nodes overlap heavily in vocabulary,
    // cross-label nodes only through hash collisions.
    let pool = 6;
    let a = id % pool;
    let b = (id + 1) % pool;
    format!("base{class} core{class} tag{class} w{class}x{a} w{class}x{b}")
}

fn draw_edges<R: Rng>(
    rng: &mut R,
    used: &mut BTreeSet<(NodeId, NodeId)>,
    edges: &mut Vec<(NodeId, NodeId)>,
    want_total: usize,
    mut propose: impl FnMut(&mut R) -> (NodeId, NodeId),
) {
    let mut misses = 0;
    while edges.len() < want_total && misses < 200 {
        let (a, b) = propose(rng);
        if a == b {
            misses += 1;
            continue;
        }
        let key = (a.min(b), a.max(b));
        if used.insert(key) {
            edges.push(key);
            misses = 0;
        } else {
            misses += 1;
        }
    }
}

fn fill_from_enumeration<R: Rng>(
    rng: &mut R,
    used: &mut BTreeSet<(NodeId, NodeId)>,
    edges: &mut Vec<(NodeId, NodeId)>,
    want_total: usize,
    enumerate: impl FnOnce() -> Vec<(NodeId, NodeId)>,
) {
    let mut free: Vec<(NodeId, NodeId)> = enumerate()
        .into_iter()
        .filter(|pair| !used.contains(pair))
        .collect();
    while edges.len() < want_total && !free.is_empty() {
        let i = rng.gen_range(0..free.len());
        let pair = free.swap_remove(i);
        used.insert(pair);
        edges.push(pair);
    }
}

fn intra_pairs(members: &[Vec<NodeId>]) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for m in members {
        for i in 0..m.len() {
            for j in i + 1..m.len() {
                out.push((m[i].min(m[j]), m[i].max(m[j])));
            }
        }
    }
    out
}

fn inter_pairs(n: usize, classes: usize) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if a % classes != b % classes {
                out.push((a as NodeId, b as NodeId));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(labels: [&str; 3]) -> TextGraph {
        let nodes = (0..3)
            .map(|i| NodeRecord::labeled(i as NodeId, format!("node {i}"), labels[i]))
            .collect();
        TextGraph::new(nodes, vec![(0, 1), (0, 2), (1, 2)]).unwrap()
    }

    #[test]
    fn homophily_all_same_label_is_one() {
        let g = triangle(["a", "a", "a"]);
        let labels = g.label_assignment().unwrap();
        assert_eq!(edge_homophily(&g, &labels).unwrap(), 1.0);
    }

    #[test]
    fn homophily_single_cross_edge_is_zero() {
        let g = TextGraph::new(
            vec![
                NodeRecord::labeled(0, "x", "a"),
                NodeRecord::labeled(1, "y", "b"),
            ],
            vec![(0, 1)],
        )
        .unwrap();
        let labels = g.label_assignment().unwrap();
        assert_eq!(edge_homophily(&g, &labels).unwrap(), 0.0);
    }

    #[test]
    fn homophily_hand_counted_five_edge_fixture() {
        // Same-class: (0,1), (1,2), (3,4); cross-class: (2,3), (0,3).
        let nodes = vec![
            NodeRecord::labeled(0, "n0", "a"),
            NodeRecord::labeled(1, "n1", "a"),
            NodeRecord::labeled(2, "n2", "a"),
            NodeRecord::labeled(3, "n3", "b"),
            NodeRecord::labeled(4, "n4", "b"),
        ];
        let g = TextGraph::new(nodes, vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 3)]).unwrap();
        let labels = g.label_assignment().unwrap();
        assert_eq!(edge_homophily(&g, &labels).unwrap(), 0.6);
    }

    #[test]
    fn homophily_requires_edges() {
        let g = TextGraph::new(vec![NodeRecord::labeled(0, "x", "a")], vec![]).unwrap();
        let labels = g.label_assignment().unwrap();
        assert!(matches!(edge_homophily(&g, &labels), Err(Error::EmptyEdgeSet)));
    }

    #[test]
    fn homophily_requires_labeled_endpoints() {
        let g = TextGraph::new(
            vec![NodeRecord::with_text(0, "x"), NodeRecord::with_text(1, "y")],
            vec![(0, 1)],
        )
        .unwrap();
        let labels = LabelAssignment::from_pairs([(0, "a".to_string())]);
        assert!(matches!(edge_homophily(&g, &labels), Err(Error::UnlabeledNode(1))));
    }

    #[test]
    fn homophily_invariant_under_class_renaming() {
        let g = triangle(["a", "a", "b"]);
        let h1 = edge_homophily(&g, &g.label_assignment().unwrap()).unwrap();
        let swapped = LabelAssignment::from_pairs(
            g.label_assignment()
                .unwrap()
                .iter()
                .map(|(id, l)| (id, if l == "a" { "b".into() } else { "a".into() })),
        );
        assert_eq!(h1, edge_homophily(&g, &swapped).unwrap());
    }

    #[test]
    fn k_hop_zero_is_empty() {
        let g = triangle(["a", "a", "a"]);
        assert!(k_hop_neighborhood(&g, 0, 0).unwrap().is_empty());
    }

    #[test]
    fn k_hop_on_path() {
        // v(0) - a(1) - b(2) - c(3)
        let nodes = (0..4).map(NodeRecord::bare).collect();
        let g = TextGraph::new(nodes, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        let hop2 = k_hop_neighborhood(&g, 0, 2).unwrap();
        assert_eq!(hop2, BTreeSet::from([1, 2]));
    }

    #[test]
    fn k_hop_star_saturates_at_one_hop() {
        let nodes = (0..6).map(NodeRecord::bare).collect();
        let g = TextGraph::new(nodes, (1..6).map(|i| (0, i)).collect()).unwrap();
        let hop2 = k_hop_neighborhood(&g, 0, 2).unwrap();
        assert_eq!(hop2, BTreeSet::from([1, 2, 3, 4, 5]));
    }

    #[test]
    fn k_hop_unknown_node_errors() {
        let g = triangle(["a", "a", "a"]);
        assert!(matches!(k_hop_neighborhood(&g, 9, 1), Err(Error::UnknownNode(9))));
    }

    #[test]
    fn k_hop_monotone_in_k() {
        let g = synth_planted_graph(40, 2, 0.5, 3).unwrap();
        for v in [0, 7, 13] {
            for k in 0..4 {
                let smaller = k_hop_neighborhood(&g, v, k).unwrap();
                let larger = k_hop_neighborhood(&g, v, k + 1).unwrap();
                assert!(smaller.is_subset(&larger));
            }
        }
    }

    #[test]
    fn induced_full_set_is_identity() {
        let g = triangle(["a", "b", "c"]);
        let keep: BTreeSet<NodeId> = g.nodes().iter().map(|n| n.id).collect();
        assert_eq!(induced_subgraph(&g, &keep), g);
    }

    #[test]
    fn induced_singleton_has_no_edges() {
        let g = triangle(["a", "b", "c"]);
        let sub = induced_subgraph(&g, &BTreeSet::from([1]));
        assert_eq!(sub.node_count(), 1);
        assert_eq!(sub.edge_count(), 0);
        assert_eq!(sub.node(1).unwrap().label.as_deref(), Some("b"));
    }

    #[test]
    fn induced_pair_of_triangle_keeps_single_edge() {
        let g = triangle(["a", "b", "c"]);
        let sub = induced_subgraph(&g, &BTreeSet::from([0, 2]));
        assert_eq!(sub.edges(), &[(0, 2)]);
    }

    #[test]
    fn induced_is_idempotent() {
        let g = synth_planted_graph(30, 3, 0.4, 9).unwrap();
        let keep: BTreeSet<NodeId> = [0, 3, 6, 9, 12, 15].into();
        let once = induced_subgraph(&g, &keep);
        let twice = induced_subgraph(&once, &keep);
        assert_eq!(once, twice);
    }

    #[test]
    fn construction_rejects_self_loop() {
        let nodes = vec![NodeRecord::bare(0), NodeRecord::bare(1)];
        assert!(matches!(
            TextGraph::new(nodes, vec![(0, 0)]),
            Err(Error::SelfLoop(0))
        ));
    }

    #[test]
    fn construction_rejects_duplicate_ids() {
        let nodes = vec![NodeRecord::bare(0), NodeRecord::bare(0)];
        assert!(matches!(TextGraph::new(nodes, vec![]), Err(Error::DuplicateNodeId(0))));
    }

    #[test]
    fn construction_rejects_unknown_endpoint() {
        let nodes = vec![NodeRecord::bare(0)];
        assert!(matches!(
            TextGraph::new(nodes, vec![(0, 5)]),
            Err(Error::UnknownNode(5))
        ));
    }

    #[test]
    fn construction_rejects_mixed_text() {
        let nodes = vec![NodeRecord::with_text(0, "x"), NodeRecord::bare(1)];
        assert!(matches!(TextGraph::new(nodes, vec![]), Err(Error::MixedNodeText)));
    }

    #[test]
    fn construction_dedupes_undirected_equivalent_edges() {
        let nodes = (0..3).map(NodeRecord::bare).collect();
        let g = TextGraph::new(nodes, vec![(0, 1), (1, 0), (2, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.dedup_count(), 1);
    }

    #[test]
    fn synth_extreme_targets_hit_exactly() {
        for (target, expect) in [(1.0, 1.0), (0.0, 0.0)] {
            let g = synth_planted_graph(100, 2, target, 11).unwrap();
            let labels = g.label_assignment().unwrap();
            assert_eq!(edge_homophily(&g, &labels).unwrap(), expect);
        }
    }

    #[test]
    fn synth_measured_homophily_near_target() {
        let g = synth_planted_graph(200, 4, 0.30, 7).unwrap();
        let labels = g.label_assignment().unwrap();
        let h = edge_homophily(&g, &labels).unwrap();
        assert!((0.25..=0.35).contains(&h), "h={h}");
    }

    #[test]
    fn synth_is_bit_reproducible() {
        let a = synth_planted_graph(80, 3, 0.45, 42).unwrap();
        let b = synth_planted_graph(80, 3, 0.45, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synth_infeasible_when_too_small() {
        // One node per class: no intra-class pair exists.
        assert!(matches!(
            synth_planted_graph(3, 3, 1.0, 0),
            Err(Error::InfeasibleSynthesis(_))
        ));
    }
}
