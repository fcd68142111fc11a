//! Atom/bond feature matrices, cheap descriptors, and label normalization.

mod descriptors;
mod norm;

pub use descriptors::{descriptors, DESCRIPTOR_NAMES};
pub use norm::{apply_norm, fit_norm, invert_norm, LabelNorm, NormError, NormKind, NormStats};

use serde::{Deserialize, Serialize};

use crate::molparse::{BondOrder, Element, MolGraph};
use crate::posenc::{LapPe, Rwse};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeaturizeError {
    #[error("unknown atom feature `{0}`")]
    UnknownAtomFeature(String),
    #[error("unknown bond feature `{0}`")]
    UnknownBondFeature(String),
}

/// Element one-hot vocabulary; anything else lands in a trailing "other" slot.
pub const ELEMENT_VOCAB: [&str; 11] = ["B", "C", "N", "O", "F", "Si", "P", "S", "Cl", "Br", "I"];
const MAX_DEGREE: usize = 6;
const MAX_H: usize = 4;
const CHARGE_SCALE: f64 = 0.5;

pub const ATOM_FEATURES: [&str; 6] = ["element", "degree", "formal_charge", "implicit_h", "aromatic", "in_ring"];
pub const BOND_FEATURES: [&str; 2] = ["bond_order", "in_ring"];

/// Enabled features, concatenated in the order listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub atom: Vec<String>,
    pub bond: Vec<String>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            atom: ATOM_FEATURES.iter().map(|s| s.to_string()).collect(),
            bond: BOND_FEATURES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn atom_feature_width(name: &str) -> Option<usize> {
    Some(match name {
        "element" => ELEMENT_VOCAB.len() + 1,
        "degree" => MAX_DEGREE + 1,
        "formal_charge" => 1,
        "implicit_h" => MAX_H + 1,
        "aromatic" | "in_ring" => 1,
        _ => return None,
    })
}

fn bond_feature_width(name: &str) -> Option<usize> {
    Some(match name {
        "bond_order" => BondOrder::ALL.len(),
        "in_ring" => 1,
        _ => return None,
    })
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeaturizeError> {
        self.node_dim()?;
        self.edge_dim()?;
        Ok(())
    }

    pub fn node_dim(&self) -> Result<usize, FeaturizeError> {
        self.atom
            .iter()
            .map(|n| atom_feature_width(n).ok_or_else(|| FeaturizeError::UnknownAtomFeature(n.clone())))
            .sum()
    }

    pub fn edge_dim(&self) -> Result<usize, FeaturizeError> {
        self.bond
            .iter()
            .map(|n| bond_feature_width(n).ok_or_else(|| FeaturizeError::UnknownBondFeature(n.clone())))
            .sum()
    }
}

/// Numeric view of one molecule. Bond `i` yields directed edges `2i`
/// (begin → end) and `2i + 1` (end → begin) with identical features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizedGraph {
    pub num_atoms: usize,
    pub d_node: usize,
    pub d_edge: usize,
    /// Row-major `[num_atoms × d_node]`.
    pub node_features: Vec<f64>,
    /// Row-major `[2·num_bonds × d_edge]`.
    pub edge_features: Vec<f64>,
    /// `(source, target)` per directed edge.
    pub edge_index: Vec<(usize, usize)>,
    pub descriptors: Vec<(String, f64)>,
    /// Row-major `[num_atoms × lap_k]` eigenvectors followed by the shared
    /// eigenvalues; empty until PEs are attached.
    pub lap_vecs: Vec<f64>,
    pub lap_vals: Vec<f64>,
    pub lap_k: usize,
    /// Row-major `[num_atoms × rwse_dim]`.
    pub rwse: Vec<f64>,
    pub rwse_dim: usize,
}

impl FeaturizedGraph {
    pub fn num_edges(&self) -> usize {
        self.edge_index.len()
    }

    pub fn with_pe(mut self, lap: &LapPe, rw: &Rwse) -> Self {
        debug_assert_eq!(lap.num_atoms, self.num_atoms);
        debug_assert_eq!(rw.num_atoms, self.num_atoms);
        self.lap_k = lap.k;
        self.lap_vecs = lap.eigvecs.clone();
        self.lap_vals = lap.eigvals.clone();
        self.rwse_dim = rw.steps.len();
        self.rwse = rw.probs.clone();
        self
    }

    pub fn node_row(&self, i: usize) -> &[f64] {
        &self.node_features[i * self.d_node..(i + 1) * self.d_node]
    }
}

fn one_hot(out: &mut Vec<f64>, width: usize, hot: usize) {
    let start = out.len();
    out.resize(start + width, 0.0);
    out[start + hot.min(width - 1)] = 1.0;
}

fn element_slot(el: Element) -> usize {
    ELEMENT_VOCAB
        .iter()
        .position(|&s| s == el.symbol())
        .unwrap_or(ELEMENT_VOCAB.len())
}

pub fn featurize(g: &MolGraph, config: &FeatureConfig) -> Result<FeaturizedGraph, FeaturizeError> {
    let d_node = config.node_dim()?;
    let d_edge = config.edge_dim()?;
    let mut node_features = Vec::with_capacity(g.num_atoms() * d_node);
    for atom in &g.atoms {
        for name in &config.atom {
            match name.as_str() {
                "element" => one_hot(&mut node_features, ELEMENT_VOCAB.len() + 1, element_slot(atom.element)),
                "degree" => one_hot(&mut node_features, MAX_DEGREE + 1, atom.degree),
                "formal_charge" => node_features.push(atom.formal_charge as f64 * CHARGE_SCALE),
                "implicit_h" => one_hot(&mut node_features, MAX_H + 1, atom.implicit_h as usize),
                "aromatic" => node_features.push(atom.aromatic as u8 as f64),
                "in_ring" => node_features.push(atom.in_ring as u8 as f64),
                other => return Err(FeaturizeError::UnknownAtomFeature(other.to_string())),
            }
        }
    }
    let mut edge_features = Vec::with_capacity(2 * g.num_bonds() * d_edge);
    let mut edge_index = Vec::with_capacity(2 * g.num_bonds());
    for bond in &g.bonds {
        let start = edge_features.len();
        for name in &config.bond {
            match name.as_str() {
                "bond_order" => one_hot(&mut edge_features, BondOrder::ALL.len(), bond.order.index()),
                "in_ring" => edge_features.push(bond.in_ring as u8 as f64),
                other => return Err(FeaturizeError::UnknownBondFeature(other.to_string())),
            }
        }
        edge_features.extend_from_within(start..);
        edge_index.push((bond.begin, bond.end));
        edge_index.push((bond.end, bond.begin));
    }
    Ok(FeaturizedGraph {
        num_atoms: g.num_atoms(),
        d_node,
        d_edge,
        node_features,
        edge_features,
        edge_index,
        descriptors: descriptors(g),
        lap_vecs: Vec::new(),
        lap_vals: Vec::new(),
        lap_k: 0,
        rwse: Vec::new(),
        rwse_dim: 0,
    })
}
