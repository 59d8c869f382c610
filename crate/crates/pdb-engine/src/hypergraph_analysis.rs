//! Structural analysis of the conflict hypergraph: connected components and
//! recognition of the tractable shapes (hypertree, ring, clique, complete
//! multipartite), plus a brute-force acyclicity check used as a test oracle.

use std::collections::{BTreeMap, BTreeSet};

use crate::grounding::ConflictHypergraph;
use crate::model::TupleId;

/// A connected component of the conflict hypergraph. `edges` holds the
/// deduplicated edge node-sets that fall inside the component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub nodes: BTreeSet<TupleId>,
    pub edges: Vec<BTreeSet<TupleId>>,
}

/// Structural classification of a component, in dispatch precedence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComponentStructure {
    /// A single node (possibly carrying a unary edge).
    Singleton,
    /// Binary edges forming a complete graph on >= 2 nodes.
    Clique,
    /// Connected and gamma-acyclic; payload: an ear-elimination order
    /// (indices into `Component::edges`).
    Hypertree(Vec<usize>),
    /// >= 3 edges in a cyclic sequence where exactly the neighboring edges
    /// intersect; payload: the cyclic edge order.
    Ring(Vec<usize>),
    /// Binary edges forming a complete multipartite graph; payload: the
    /// parts.
    CompleteMultipartite(Vec<BTreeSet<TupleId>>),
    General,
}

/// Split the hypergraph into maximal connected components. Nodes that occur
/// in no edge become singleton components. Identical edge node-sets are
/// deduplicated. Components are ordered by their smallest node.
pub fn components(h: &ConflictHypergraph) -> Vec<Component> {
    // Union-find over nodes.
    let ids: Vec<TupleId> = h.nodes.clone();
    let index: BTreeMap<TupleId, usize> = ids.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    let edge_sets: Vec<&BTreeSet<TupleId>> = h.edges.iter().map(|e| &e.nodes).collect();
    for e in &edge_sets {
        let mut iter = e.iter();
        if let Some(&first) = iter.next() {
            let fi = index[&first];
            for &t in iter {
                let (a, b) = (find(&mut parent, fi), find(&mut parent, index[&t]));
                parent[a] = b;
            }
        }
    }
    let mut by_root: BTreeMap<usize, Component> = BTreeMap::new();
    for (i, &t) in ids.iter().enumerate() {
        let root = find(&mut parent, i);
        by_root.entry(root).or_insert_with(|| Component {
            nodes: BTreeSet::new(),
            edges: Vec::new(),
        });
        by_root.get_mut(&root).unwrap().nodes.insert(t);
    }
    for e in &edge_sets {
        if let Some(&first) = e.iter().next() {
            let root = find(&mut parent, index[&first]);
            let comp = by_root.get_mut(&root).unwrap();
            if !comp.edges.contains(*e) {
                comp.edges.push((*e).clone());
            }
        }
    }
    let mut comps: Vec<Component> = by_root.into_values().collect();
    for c in &mut comps {
        c.edges.sort();
    }
    comps.sort_by_key(|c| c.nodes.iter().next().copied());
    comps
}

/// The distinct nonempty intersections of `edges[i]` with the other edges.
pub fn int_sets(i: usize, edges: &[BTreeSet<TupleId>]) -> BTreeSet<BTreeSet<TupleId>> {
    edges
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, e)| edges[i].intersection(e).copied().collect::<BTreeSet<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

/// A family of sets is a matryoshka when it is totally ordered by inclusion.
pub fn is_matryoshka(sets: &BTreeSet<BTreeSet<TupleId>>) -> bool {
    let mut sorted: Vec<&BTreeSet<TupleId>> = sets.iter().collect();
    sorted.sort_by_key(|s| s.len());
    sorted.windows(2).all(|w| w[0].is_subset(w[1]))
}

/// Is the hypergraph made of these edges connected? (Vacuously true without
/// edges.) Connectivity is between edges sharing at least one node.
fn edges_connected(edges: &[&BTreeSet<TupleId>]) -> bool {
    if edges.len() <= 1 {
        return true;
    }
    let mut visited = vec![false; edges.len()];
    let mut stack = vec![0usize];
    visited[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..edges.len() {
            if !visited[j] && !edges[i].is_disjoint(edges[j]) {
                visited[j] = true;
                stack.push(j);
            }
        }
    }
    visited.into_iter().all(|v| v)
}

/// Hypertree (gamma-acyclicity) recognition. Decides by the pairwise
/// residue-connectivity property, then derives an ear-elimination order:
/// repeatedly remove an edge whose intersections with the remaining edges
/// form a matryoshka, keeping the remaining edges connected. On a
/// gamma-acyclic component such an edge always exists (and edge removal
/// preserves gamma-acyclicity, so the greedy choice never gets stuck); the
/// matryoshka property alone would be too weak as a decision criterion
/// (e.g. `{a,b}, {a,c}, {a,b,c}` admits an elimination order but contains
/// a cycle).
pub fn is_hypertree(comp: &Component) -> Option<Vec<usize>> {
    if comp.edges.is_empty() {
        return if comp.nodes.len() == 1 {
            Some(Vec::new())
        } else {
            None
        };
    }
    if !is_gamma_acyclic_definitional(&comp.edges) {
        return None;
    }
    let mut remaining: Vec<usize> = (0..comp.edges.len()).collect();
    let mut order = Vec::new();
    while remaining.len() > 1 {
        let sets: Vec<BTreeSet<TupleId>> =
            remaining.iter().map(|&i| comp.edges[i].clone()).collect();
        let pick = (0..remaining.len()).find(|&k| {
            let ints = int_sets(k, &sets);
            if !is_matryoshka(&ints) {
                return false;
            }
            let rest: Vec<&BTreeSet<TupleId>> = sets
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, e)| e)
                .collect();
            edges_connected(&rest)
        })?;
        order.push(remaining.remove(pick));
    }
    order.push(remaining[0]);
    Some(order)
}

/// Definitional gamma-acyclicity: a hypergraph is acyclic iff there is no
/// pair of edges `e1`, `e2` such that, after removing the nodes of
/// `e1 ∩ e2` from every edge, some remaining node of `e1` is still
/// connected to some remaining node of `e2`. Quadratic in the number of
/// edges times a connectivity sweep.
pub fn is_gamma_acyclic_definitional(edges: &[BTreeSet<TupleId>]) -> bool {
    for i in 0..edges.len() {
        for j in (i + 1)..edges.len() {
            let shared: BTreeSet<TupleId> = edges[i].intersection(&edges[j]).copied().collect();
            let residues: Vec<BTreeSet<TupleId>> = edges
                .iter()
                .map(|e| e.difference(&shared).copied().collect::<BTreeSet<_>>())
                .filter(|e: &BTreeSet<TupleId>| !e.is_empty())
                .collect();
            // Only intersecting pairs constrain acyclicity: for disjoint
            // edges the removal is vacuous and connectivity through the
            // rest of the hypergraph is expected (a chain of edges is
            // acyclic).
            if shared.is_empty() {
                continue;
            }
            let left: BTreeSet<TupleId> = edges[i].difference(&shared).copied().collect();
            let right: BTreeSet<TupleId> = edges[j].difference(&shared).copied().collect();
            if left.is_empty() || right.is_empty() {
                continue;
            }
            // Connectivity in the residue hypergraph from any node of `left`
            // to any node of `right`.
            let mut reach: BTreeSet<TupleId> = left.clone();
            loop {
                let mut grew = false;
                for e in &residues {
                    if !e.is_disjoint(&reach) {
                        for &t in e {
                            grew |= reach.insert(t);
                        }
                    }
                }
                if !grew {
                    break;
                }
            }
            if !reach.is_disjoint(&right) {
                return false;
            }
        }
    }
    true
}

/// Ring recognition: at least 3 edges whose edge-intersection graph is a
/// single simple cycle (exactly the neighbors in the cyclic order
/// intersect). Returns the cyclic edge order.
pub fn is_ring(comp: &Component) -> Option<Vec<usize>> {
    let m = comp.edges.len();
    if m < 3 {
        return None;
    }
    let neighbors: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| j != i && !comp.edges[i].is_disjoint(&comp.edges[j]))
                .collect()
        })
        .collect();
    if neighbors.iter().any(|n| n.len() != 2) {
        return None;
    }
    // Walk the cycle from edge 0; it must visit all edges.
    let mut order = vec![0usize];
    let mut prev = 0usize;
    let mut cur = neighbors[0][0];
    while cur != 0 {
        order.push(cur);
        let next = if neighbors[cur][0] == prev {
            neighbors[cur][1]
        } else {
            neighbors[cur][0]
        };
        prev = cur;
        cur = next;
    }
    if order.len() == m {
        Some(order)
    } else {
        None
    }
}

/// Clique: >= 2 nodes, all edges binary, and every pair of nodes is an edge.
pub fn is_clique(comp: &Component) -> bool {
    let n = comp.nodes.len();
    if n < 2 || !comp.edges.iter().all(|e| e.len() == 2) {
        return false;
    }
    comp.edges.len() == n * (n - 1) / 2
}

/// Complete multipartite recognition for binary components: nodes with equal
/// neighborhoods form the parts; verified by checking that edges exist
/// exactly between distinct parts. Requires >= 2 parts.
pub fn multipartite_partition(comp: &Component) -> Option<Vec<BTreeSet<TupleId>>> {
    if !comp.edges.iter().all(|e| e.len() == 2) {
        return None;
    }
    let mut adjacency: BTreeMap<TupleId, BTreeSet<TupleId>> = comp
        .nodes
        .iter()
        .map(|&t| (t, BTreeSet::new()))
        .collect();
    for e in &comp.edges {
        let mut it = e.iter();
        let (&a, &b) = (it.next().unwrap(), it.next().unwrap());
        adjacency.get_mut(&a).unwrap().insert(b);
        adjacency.get_mut(&b).unwrap().insert(a);
    }
    let mut parts: BTreeMap<&BTreeSet<TupleId>, BTreeSet<TupleId>> = BTreeMap::new();
    for (&t, n) in &adjacency {
        parts.entry(n).or_default().insert(t);
    }
    let mut parts: Vec<BTreeSet<TupleId>> = parts.into_values().collect();
    parts.sort_by_key(|p| p.iter().next().copied());
    if parts.len() < 2 {
        return None;
    }
    // Nodes in one part are never adjacent (equal neighborhoods cannot
    // contain each other without a self-loop); verify the converse: every
    // cross-part pair must be an edge.
    for (i, p) in parts.iter().enumerate() {
        for q in parts.iter().skip(i + 1) {
            for &a in p {
                for &b in q {
                    if !adjacency[&a].contains(&b) {
                        return None;
                    }
                }
            }
        }
    }
    Some(parts)
}

/// Classify a component, most specific shape first:
/// Singleton > Clique > Hypertree > Ring > CompleteMultipartite > General.
pub fn classify_component(comp: &Component) -> ComponentStructure {
    if comp.nodes.len() == 1 {
        return ComponentStructure::Singleton;
    }
    if is_clique(comp) {
        return ComponentStructure::Clique;
    }
    if let Some(order) = is_hypertree(comp) {
        return ComponentStructure::Hypertree(order);
    }
    if let Some(order) = is_ring(comp) {
        return ComponentStructure::Ring(order);
    }
    if let Some(parts) = multipartite_partition(comp) {
        return ComponentStructure::CompleteMultipartite(parts);
    }
    ComponentStructure::General
}
