use std::collections::BTreeMap;

use crate::molparse::{BondOrder, Element, MolGraph};

pub const DESCRIPTOR_NAMES: [&str; 8] = [
    "mw",
    "n_heavy_atoms",
    "n_hetero_atoms",
    "n_rings",
    "n_rotatable_bonds",
    "n_lipinski_hba",
    "n_lipinski_hbd",
    "fsp3",
];

/// Cheap 2D descriptors, in [`DESCRIPTOR_NAMES`] order.
///
/// Hydrogen donors count hydrogens on N and O; rotatable bonds are non-ring
/// single bonds whose endpoints both have heavy-atom degree ≥ 2.
pub fn descriptors(g: &MolGraph) -> Vec<(String, f64)> {
    // Element counts first so the mass sum is independent of atom order.
    let mut counts: BTreeMap<Element, usize> = BTreeMap::new();
    let (mut heavy, mut hetero, mut hba, mut hbd) = (0usize, 0usize, 0usize, 0usize);
    let (mut carbons, mut sp3) = (0usize, 0usize);
    let adjacency = g.adjacency();
    for (i, atom) in g.atoms.iter().enumerate() {
        *counts.entry(atom.element).or_default() += 1;
        *counts.entry(Element::H).or_default() += atom.implicit_h as usize;
        if atom.element != Element::H {
            heavy += 1;
        }
        if atom.element != Element::H && atom.element != Element::C {
            hetero += 1;
        }
        if atom.element == Element::N || atom.element == Element::O {
            hba += 1;
            hbd += atom.implicit_h as usize;
        }
        if atom.element == Element::C {
            carbons += 1;
            let all_single = adjacency[i].iter().all(|&(_, b)| g.bonds[b].order == BondOrder::Single);
            if all_single && atom.degree + atom.implicit_h as usize == 4 {
                sp3 += 1;
            }
        }
    }
    let mw: f64 = counts.iter().map(|(el, &c)| el.mass() * c as f64).sum();
    let rotatable = g
        .bonds
        .iter()
        .filter(|b| {
            b.order == BondOrder::Single && !b.in_ring && g.atoms[b.begin].degree >= 2 && g.atoms[b.end].degree >= 2
        })
        .count();
    let fsp3 = if carbons == 0 { 0.0 } else { sp3 as f64 / carbons as f64 };
    let values = [
        mw,
        heavy as f64,
        hetero as f64,
        g.cycle_rank() as f64,
        rotatable as f64,
        hba as f64,
        hbd as f64,
        fsp3,
    ];
    DESCRIPTOR_NAMES
        .iter()
        .zip(values)
        .map(|(n, v)| (n.to_string(), v))
        .collect()
}
