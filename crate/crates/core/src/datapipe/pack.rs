use serde::{Deserialize, Serialize};

use crate::featurize::FeaturizedGraph;

/// Per-batch capacities; every pack is padded to exactly these sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capacity {
    pub max_nodes: usize,
    /// Directed edges.
    pub max_edges: usize,
    pub max_graphs: usize,
}

impl Default for Capacity {
    fn default() -> Self {
        Capacity {
            max_nodes: 512,
            max_edges: 1024,
            max_graphs: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphSize {
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PackError {
    #[error("capacities must be positive")]
    ZeroCapacity,
    #[error("graph {index} ({nodes} nodes, {edges} edges) exceeds batch capacity")]
    TooLarge { index: usize, nodes: usize, edges: usize },
}

fn check(sizes: &[GraphSize], cap: Capacity) -> Result<(), PackError> {
    if cap.max_nodes == 0 || cap.max_edges == 0 || cap.max_graphs == 0 {
        return Err(PackError::ZeroCapacity);
    }
    match sizes
        .iter()
        .enumerate()
        .find(|(_, s)| s.nodes > cap.max_nodes || s.edges > cap.max_edges)
    {
        Some((index, s)) => Err(PackError::TooLarge {
            index,
            nodes: s.nodes,
            edges: s.edges,
        }),
        None => Ok(()),
    }
}

#[derive(Default, Clone, Copy)]
struct Load {
    nodes: usize,
    edges: usize,
    graphs: usize,
}

impl Load {
    fn fits(&self, s: GraphSize, cap: Capacity) -> bool {
        self.nodes + s.nodes <= cap.max_nodes && self.edges + s.edges <= cap.max_edges && self.graphs < cap.max_graphs
    }

    fn add(&mut self, s: GraphSize) {
        self.nodes += s.nodes;
        self.edges += s.edges;
        self.graphs += 1;
    }
}

/// First-fit-decreasing by node count (ties by input index). Returns the
/// input indices of each pack in insertion order.
pub fn pack_ffd(sizes: &[GraphSize], cap: Capacity) -> Result<Vec<Vec<usize>>, PackError> {
    check(sizes, cap)?;
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].nodes.cmp(&sizes[a].nodes));
    let mut loads: Vec<Load> = Vec::new();
    let mut packs: Vec<Vec<usize>> = Vec::new();
    for i in order {
        let s = sizes[i];
        match loads.iter().position(|l| l.fits(s, cap)) {
            Some(p) => {
                loads[p].add(s);
                packs[p].push(i);
            }
            None => {
                let mut l = Load::default();
                l.add(s);
                loads.push(l);
                packs.push(vec![i]);
            }
        }
    }
    Ok(packs)
}

/// Sequential packing in input order, opening a new pack whenever the next
/// graph does not fit the current one.
pub fn pack_in_order(sizes: &[GraphSize], cap: Capacity) -> Result<Vec<Vec<usize>>, PackError> {
    check(sizes, cap)?;
    let mut packs: Vec<Vec<usize>> = Vec::new();
    let mut load = Load::default();
    for (i, &s) in sizes.iter().enumerate() {
        if packs.is_empty() || !load.fits(s, cap) {
            packs.push(Vec::new());
            load = Load::default();
        }
        load.add(s);
        packs.last_mut().expect("pack opened above").push(i);
    }
    Ok(packs)
}

/// Total padding node slots over all packs.
pub fn node_padding(sizes: &[GraphSize], packs: &[Vec<usize>], cap: Capacity) -> usize {
    packs
        .iter()
        .map(|p| cap.max_nodes - p.iter().map(|&i| sizes[i].nodes).sum::<usize>())
        .sum()
}

/// A fixed-shape batch of graphs. Real graphs occupy the leading graph
/// slots, nodes and edges; the remainder is zero padding with mask 0.
/// Padding nodes are isolated and point at the last graph slot; padding
/// edges are self-loops on node 0 with mask 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedBatch {
    pub capacity: Capacity,
    pub num_graphs: usize,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub d_node: usize,
    pub d_edge: usize,
    pub lap_k: usize,
    pub rwse_dim: usize,
    /// `[max_nodes × d_node]`.
    pub node_features: Vec<f64>,
    /// `[max_edges × d_edge]`.
    pub edge_features: Vec<f64>,
    pub edge_src: Vec<usize>,
    pub edge_dst: Vec<usize>,
    pub edge_mask: Vec<f64>,
    pub node_graph: Vec<usize>,
    pub node_mask: Vec<f64>,
    pub graph_mask: Vec<f64>,
    /// `[max_nodes × lap_k]` eigenvector rows.
    pub lap_vecs: Vec<f64>,
    /// `[max_nodes × lap_k]`: each node carries its graph's eigenvalues.
    pub lap_vals: Vec<f64>,
    /// `[max_nodes × rwse_dim]`.
    pub rwse: Vec<f64>,
    /// Caller-defined identifier of each real graph (molecule index).
    pub graph_ids: Vec<usize>,
    /// First node of each real graph.
    pub node_offsets: Vec<usize>,
}

impl PackedBatch {
    /// Lays out the given graphs; they must fit `cap` together.
    pub fn assemble(graphs: &[(&FeaturizedGraph, usize)], cap: Capacity) -> Result<PackedBatch, PackError> {
        let sizes: Vec<GraphSize> = graphs
            .iter()
            .map(|(g, _)| GraphSize {
                nodes: g.num_atoms,
                edges: g.num_edges(),
            })
            .collect();
        check(&sizes, cap)?;
        let mut load = Load::default();
        for (i, &s) in sizes.iter().enumerate() {
            if !load.fits(s, cap) {
                return Err(PackError::TooLarge {
                    index: i,
                    nodes: s.nodes,
                    edges: s.edges,
                });
            }
            load.add(s);
        }
        let first = graphs.first().map(|(g, _)| *g);
        let d_node = first.map_or(0, |g| g.d_node);
        let d_edge = first.map_or(0, |g| g.d_edge);
        let lap_k = first.map_or(0, |g| g.lap_k);
        let rwse_dim = first.map_or(0, |g| g.rwse_dim);
        let (mn, me, mg) = (cap.max_nodes, cap.max_edges, cap.max_graphs);
        let mut b = PackedBatch {
            capacity: cap,
            num_graphs: graphs.len(),
            num_nodes: load.nodes,
            num_edges: load.edges,
            d_node,
            d_edge,
            lap_k,
            rwse_dim,
            node_features: Vec::with_capacity(mn * d_node),
            edge_features: Vec::with_capacity(me * d_edge),
            edge_src: Vec::with_capacity(me),
            edge_dst: Vec::with_capacity(me),
            edge_mask: Vec::with_capacity(me),
            node_graph: Vec::with_capacity(mn),
            node_mask: Vec::with_capacity(mn),
            graph_mask: vec![0.0; mg],
            lap_vecs: Vec::with_capacity(mn * lap_k),
            lap_vals: Vec::with_capacity(mn * lap_k),
            rwse: Vec::with_capacity(mn * rwse_dim),
            graph_ids: Vec::with_capacity(graphs.len()),
            node_offsets: Vec::with_capacity(graphs.len()),
        };
        for (slot, (g, id)) in graphs.iter().enumerate() {
            assert!(
                g.d_node == d_node && g.d_edge == d_edge && g.lap_k == lap_k && g.rwse_dim == rwse_dim,
                "all graphs in a batch share one featurization"
            );
            let offset = b.node_mask.len();
            b.node_offsets.push(offset);
            b.graph_ids.push(*id);
            b.graph_mask[slot] = 1.0;
            b.node_features.extend_from_slice(&g.node_features);
            b.edge_features.extend_from_slice(&g.edge_features);
            for &(s, t) in &g.edge_index {
                b.edge_src.push(offset + s);
                b.edge_dst.push(offset + t);
                b.edge_mask.push(1.0);
            }
            b.node_graph.extend(std::iter::repeat_n(slot, g.num_atoms));
            b.node_mask.extend(std::iter::repeat_n(1.0, g.num_atoms));
            b.lap_vecs.extend_from_slice(&g.lap_vecs);
            for _ in 0..g.num_atoms {
                b.lap_vals.extend_from_slice(&g.lap_vals);
            }
            b.rwse.extend_from_slice(&g.rwse);
        }
        b.node_features.resize(mn * d_node, 0.0);
        b.edge_features.resize(me * d_edge, 0.0);
        b.edge_src.resize(me, 0);
        b.edge_dst.resize(me, 0);
        b.edge_mask.resize(me, 0.0);
        b.node_graph.resize(mn, mg - 1);
        b.node_mask.resize(mn, 0.0);
        b.lap_vecs.resize(mn * lap_k, 0.0);
        b.lap_vals.resize(mn * lap_k, 0.0);
        b.rwse.resize(mn * rwse_dim, 0.0);
        Ok(b)
    }

    pub fn node_padding(&self) -> usize {
        self.capacity.max_nodes - self.num_nodes
    }

    /// Fraction of node slots that are padding.
    pub fn padding_fraction(&self) -> f64 {
        self.node_padding() as f64 / self.capacity.max_nodes as f64
    }
}
