//! Graph layouts for attention over category nodes.
//!
//! Every layout is a star (or two): the diagnosis node of a modality is the
//! hub, the seven checklist nodes are spokes, and edges run both ways
//! between hub and spoke. All nodes carry a self-loop. The two-modality
//! layouts differ only in which direction category-to-category bridges run
//! between the dermoscopic and clinical stars.
//!
//! Edges are directed sender to receiver. For sixteen-node layouts, nodes
//! 0..8 are the dermoscopic categories in schema order and nodes 8..16 the
//! clinical ones; eight-node layouts use 0..8 in schema order.

use crate::data::schema::{Category, NUM_CATEGORIES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphVariant {
    /// Two stars, no bridges.
    Separate,
    /// Bridges from each dermoscopic node to its clinical counterpart.
    DermToClin,
    /// Bridges from clinical to dermoscopic.
    ClinToDerm,
    /// Bridges both ways.
    Inv,
    /// One star over fused per-category inputs.
    Fused,
    /// One star, dermoscopic modality only.
    Single,
}

impl GraphVariant {
    pub const ALL: [GraphVariant; 6] = [
        GraphVariant::Separate,
        GraphVariant::DermToClin,
        GraphVariant::ClinToDerm,
        GraphVariant::Inv,
        GraphVariant::Fused,
        GraphVariant::Single,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GraphVariant::Separate => "separate",
            GraphVariant::DermToClin => "dc",
            GraphVariant::ClinToDerm => "cd",
            GraphVariant::Inv => "inv",
            GraphVariant::Fused => "fused",
            GraphVariant::Single => "single",
        }
    }

    pub fn from_name(s: &str) -> Result<GraphVariant> {
        GraphVariant::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown graph variant '{s}'")))
    }

    pub fn num_nodes(self) -> usize {
        match self {
            GraphVariant::Fused | GraphVariant::Single => NUM_CATEGORIES,
            _ => 2 * NUM_CATEGORIES,
        }
    }

    /// Whether node inputs are per-modality embeddings (sixteen nodes) or
    /// fused pairs / a lone modality (eight nodes).
    pub fn is_two_star(self) -> bool {
        self.num_nodes() == 2 * NUM_CATEGORIES
    }
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub variant: GraphVariant,
    pub num_nodes: usize,
    /// (sender, receiver) pairs sorted by receiver then sender.
    edges: Vec<(usize, usize)>,
    /// Ascending sender lists per receiver. Never empty: self-loops
    /// guarantee at least one entry.
    in_neighbors: Vec<Vec<usize>>,
}

fn star(offset: usize, edges: &mut Vec<(usize, usize)>) {
    for j in 0..NUM_CATEGORIES {
        edges.push((offset + j, offset + j));
    }
    for j in 1..NUM_CATEGORIES {
        edges.push((offset + j, offset));
        edges.push((offset, offset + j));
    }
}

impl Topology {
    pub fn new(variant: GraphVariant) -> Topology {
        let mut edges = Vec::new();
        star(0, &mut edges);
        if variant.is_two_star() {
            star(NUM_CATEGORIES, &mut edges);
        }
        match variant {
            GraphVariant::DermToClin => {
                for j in 0..NUM_CATEGORIES {
                    edges.push((j, NUM_CATEGORIES + j));
                }
            }
            GraphVariant::ClinToDerm => {
                for j in 0..NUM_CATEGORIES {
                    edges.push((NUM_CATEGORIES + j, j));
                }
            }
            GraphVariant::Inv => {
                for j in 0..NUM_CATEGORIES {
                    edges.push((j, NUM_CATEGORIES + j));
                    edges.push((NUM_CATEGORIES + j, j));
                }
            }
            _ => {}
        }
        edges.sort_by_key(|&(s, r)| (r, s));
        let num_nodes = variant.num_nodes();
        let mut in_neighbors = vec![Vec::new(); num_nodes];
        for &(s, r) in &edges {
            in_neighbors[r].push(s);
        }
        Topology {
            variant,
            num_nodes,
            edges,
            in_neighbors,
        }
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn in_neighbors(&self, receiver: usize) -> &[usize] {
        &self.in_neighbors[receiver]
    }

    /// Human-readable node name, e.g. `D:PN`, `C:DIAG`, or `PN` for
    /// single-star layouts.
    pub fn node_label(&self, node: usize) -> String {
        let cat = Category::ALL[node % NUM_CATEGORIES].name();
        if !self.variant.is_two_star() {
            cat.to_string()
        } else if node < NUM_CATEGORIES {
            format!("D:{cat}")
        } else {
            format!("C:{cat}")
        }
    }

    /// Nodes reachable from `start` in at most `hops` directed steps
    /// (including `start` itself).
    pub fn reachable_within(&self, start: usize, hops: usize) -> Vec<bool> {
        let mut reached = vec![false; self.num_nodes];
        reached[start] = true;
        let mut frontier = vec![start];
        for _ in 0..hops {
            let mut next = Vec::new();
            for &u in &frontier {
                for &(s, r) in &self.edges {
                    if s == u && !reached[r] {
                        reached[r] = true;
                        next.push(r);
                    }
                }
            }
            frontier = next;
        }
        reached
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_counts_per_variant() {
        let counts: Vec<usize> = GraphVariant::ALL
            .iter()
            .map(|&v| Topology::new(v).num_edges())
            .collect();
        assert_eq!(counts, [44, 52, 52, 60, 22, 22]);
    }

    #[test]
    fn every_node_has_a_self_loop() {
        for v in GraphVariant::ALL {
            let t = Topology::new(v);
            for u in 0..t.num_nodes {
                assert!(t.in_neighbors(u).contains(&u), "{v:?} node {u}");
            }
        }
    }

    #[test]
    fn in_neighbors_are_sorted_ascending() {
        for v in GraphVariant::ALL {
            let t = Topology::new(v);
            for u in 0..t.num_nodes {
                let n = t.in_neighbors(u);
                assert!(n.windows(2).all(|w| w[0] < w[1]), "{v:?} node {u}: {n:?}");
            }
        }
    }

    #[test]
    fn separate_star_neighborhoods() {
        let t = Topology::new(GraphVariant::Separate);
        // Hub receives itself and each spoke.
        assert_eq!(t.in_neighbors(0), &[0, 1, 2, 3, 4, 5, 6, 7]);
        // Spokes receive the hub and themselves.
        assert_eq!(t.in_neighbors(3), &[0, 3]);
        assert_eq!(t.in_neighbors(8), &[8, 9, 10, 11, 12, 13, 14, 15]);
        assert_eq!(t.in_neighbors(12), &[8, 12]);
    }

    #[test]
    fn bridge_directions() {
        let dc = Topology::new(GraphVariant::DermToClin);
        assert!(dc.edges().contains(&(2, 10)));
        assert!(!dc.edges().contains(&(10, 2)));
        let cd = Topology::new(GraphVariant::ClinToDerm);
        assert!(cd.edges().contains(&(10, 2)));
        assert!(!cd.edges().contains(&(2, 10)));
        let inv = Topology::new(GraphVariant::Inv);
        assert!(inv.edges().contains(&(2, 10)));
        assert!(inv.edges().contains(&(10, 2)));
    }

    #[test]
    fn two_hops_span_everything_on_bridged_layouts() {
        // From the dermoscopic hub: spokes and the bridged clinical hub in
        // one hop, every clinical node in two.
        let t = Topology::new(GraphVariant::DermToClin);
        let reach = t.reachable_within(0, 2);
        assert!(reach.iter().all(|&r| r));

        let sep = Topology::new(GraphVariant::Separate);
        let reach = sep.reachable_within(0, 2);
        assert_eq!(reach.iter().filter(|&&r| r).count(), 8);
        assert!(reach[..8].iter().all(|&r| r));
    }

    #[test]
    fn spoke_to_spoke_needs_two_hops() {
        let t = Topology::new(GraphVariant::Single);
        let one = t.reachable_within(3, 1);
        assert!(!one[5]);
        let two = t.reachable_within(3, 2);
        assert!(two[5]);
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in GraphVariant::ALL {
            assert_eq!(GraphVariant::from_name(v.name()).unwrap(), v);
        }
        assert!(GraphVariant::from_name("ring").is_err());
    }
}
